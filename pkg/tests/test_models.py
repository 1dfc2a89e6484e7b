"""
Pytest tests for our data models.
"""

import numpy as np
import pytest

from src.zeroscatter.core.errors import (
    AssumptionViolationError,
    BudgetError,
    DriftError,
    InvalidArgumentError,
    NoConvergenceError,
    NonHyperbolicError,
    OutOfBandError,
)
from src.zeroscatter.core.models import PairingReport, ScatteringDataVector, section_modes


def test_section_modes():
    """Test the circle mode range."""
    assert list(section_modes(2)) == [-2, -1, 0, 1, 2]
    assert len(section_modes(0)) == 0
    with pytest.raises(InvalidArgumentError):
        section_modes(-1)


def test_data_vector_creation():
    """Test creating a data vector with default cycle ids."""
    vec = ScatteringDataVector(np.ones((2, 3)), 1, [0.5, 1.0])

    assert vec.circles == 2
    assert list(vec.modes) == [-1, 0, 1]
    assert vec.cycle_ids == ("0", "1")
    assert vec.coeffs.dtype == complex


def test_data_vector_validation():
    """Test shape and exponent checks."""
    with pytest.raises(InvalidArgumentError):
        ScatteringDataVector(np.ones((2, 4)), 1, [0.5, 1.0])
    with pytest.raises(InvalidArgumentError):
        ScatteringDataVector(np.ones((2, 3)), 1, [0.5])
    with pytest.raises(InvalidArgumentError):
        ScatteringDataVector(np.ones((1, 3)), 1, [0.0])


def test_basis_vector():
    """Test the unit vector on one circle and mode."""
    vec = ScatteringDataVector.basis([0.5, 0.5], 2, 1, -2, ("a", "b"))

    assert vec.coeffs[1, 0] == 1.0
    assert np.sum(np.abs(vec.coeffs)) == 1.0
    assert vec.stacked()[5] == 1.0
    with pytest.raises(InvalidArgumentError):
        ScatteringDataVector.basis([0.5], 2, 0, 3)


def test_norms():
    """Test the plain and density-weighted norms."""
    vec = ScatteringDataVector(np.array([[0.0, 1.0, 0.0]]), 1, [0.25])

    assert vec.l2_norm() == pytest.approx(np.sqrt(2 * np.pi))
    assert vec.weighted_norm() == pytest.approx(np.sqrt(8 * np.pi))


def test_stacking_and_arithmetic():
    """Test circle-major stacking, addition and scaling."""
    vec = ScatteringDataVector(np.arange(6).reshape(2, 3), 1, [1.0, 2.0])

    again = vec.with_stacked(vec.stacked())
    total = vec + vec.scaled(2.0)

    assert np.array_equal(again.coeffs, vec.coeffs)
    assert np.array_equal(total.coeffs, 3 * vec.coeffs)
    assert list(vec.stacked()) == [0, 1, 2, 3, 4, 5]


def test_pairing_report_mismatch():
    """Test the relative mismatch and its zero case."""
    assert PairingReport(1.0 + 0j, 1.0 + 0j).mismatch == 0.0
    assert PairingReport(2.0 + 0j, 1.0 + 0j).mismatch == pytest.approx(0.5)
    assert PairingReport(0j, 0j).mismatch == 0.0


def test_exit_codes():
    """Test the exit code attached to each error family."""
    assert InvalidArgumentError("x").exit_code == 1
    assert OutOfBandError("x").exit_code == 1
    assert AssumptionViolationError("x").exit_code == 2
    assert NonHyperbolicError("x").exit_code == 2
    assert DriftError("x", residual=1e-3).exit_code == 3
    assert DriftError("x", residual=1e-3).residual == 1e-3


def test_error_payloads():
    """Test the report and point carried by numerical errors."""
    error = NoConvergenceError("stalled", report={"increments": []})
    budget = BudgetError("lost", point=(0.0, 1.0, 2.0))

    assert error.report == {"increments": []}
    assert error.exit_code == 3
    assert budget.point == (0.0, 1.0, 2.0)
