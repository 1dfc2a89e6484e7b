"""
Pytest tests for the explicit radial-cycle model.
"""

import numpy as np
import pytest

from src.zeroscatter.core.errors import InvalidArgumentError, OverflowGuardError
from src.zeroscatter.core.models import ScatteringDataVector
from src.zeroscatter.normalform import (
    SINK,
    SOURCE,
    CylinderGrid,
    ModelSolutionSpec,
    alpha,
    annihilator_residual,
    boundary_power,
    CylinderSolution,
    effective_lambda,
    evaluate_model,
    extrapolate_symbol,
    model_boundary_pairing,
    model_trace,
    r_multiplier,
    section_to_symbol,
    t_multiplier,
    theta_asymptotic_check,
    trace_weight,
)


@pytest.mark.parametrize("x", [-20.0, -5.0, -1.0, -0.5, 0.5, 1.0, 5.0, 20.0])
def test_alpha_magnitude(x):
    """Test |alpha(x)|^2 against the closed form."""
    expected = np.exp(np.pi * x) * (np.pi * x / np.sinh(np.pi * x)) / (4 * np.pi**2)

    assert alpha(x).magnitude ** 2 == pytest.approx(expected, rel=1e-12)


def test_alpha_at_zero():
    """Test alpha(0) = i / (2 pi)."""
    assert alpha(0.0).value == pytest.approx(1j / (2 * np.pi), abs=1e-15)


def test_alpha_overflow_guard():
    """Test that arguments beyond 700 are refused."""
    with pytest.raises(OverflowGuardError):
        alpha(701.0)


def test_theta_asymptotics():
    """Test that the large-x defect decays like 1 / (12 x)."""
    x = np.array([5.0, 50.0, 500.0])
    defect = theta_asymptotic_check(x)

    assert np.all(defect * x <= 1.0)
    assert defect[1] * x[1] == pytest.approx(1.0 / 12, abs=1e-3)


def test_t_multiplier_is_unitary():
    """Test that T preserves magnitudes and T^* undoes it."""
    rng = np.random.default_rng(0)
    coeffs = rng.standard_normal((2, 9)) + 1j * rng.standard_normal((2, 9))
    f = ScatteringDataVector(coeffs, 4, [0.7, 1.3])

    tf = t_multiplier(f)
    back = t_multiplier(tf, adjoint=True)

    assert np.allclose(np.abs(tf.coeffs), np.abs(coeffs), rtol=0, atol=1e-15)
    assert np.allclose(back.coeffs, coeffs, atol=1e-14)


def test_r_multiplier_inverse():
    """Test the reference map and its inverse."""
    f = ScatteringDataVector(np.ones((1, 5)), 2, [1.0])

    rf = r_multiplier(f)
    back = r_multiplier(rf, inverse=True)

    assert np.allclose(np.abs(rf.coeffs[0]), alpha(np.arange(-2, 3)).magnitude)
    assert np.allclose(back.coeffs, f.coeffs)


def test_effective_lambda():
    """Test the sign convention for sinks and sources."""
    assert effective_lambda(0.7, SINK) == 0.7
    assert effective_lambda(0.7, SOURCE) == -0.7
    with pytest.raises(InvalidArgumentError):
        effective_lambda(0.7, "saddle")


def test_boundary_power_branch():
    """Test (x1 + i0)^z on both sides of zero."""
    z = np.array([-1.0 + 0.5j])

    assert boundary_power(2.0, z)[0] == pytest.approx(2.0**z[0])
    assert boundary_power(-1.0, z)[0] == pytest.approx(np.exp(1j * np.pi * z[0]))
    with pytest.raises(InvalidArgumentError):
        boundary_power(0.0, z)


@pytest.mark.parametrize("kind", [SINK, SOURCE])
def test_model_annihilator_converges_at_fourth_order(kind):
    """Test that Lu of the model solution shrinks like h^4."""
    spec = ModelSolutionSpec.from_modes(1.0, {1: 1.0, -2: 0.5, 0: 0.25}, kind=kind)
    residuals = []
    for n1 in (81, 161, 321):
        grid = CylinderGrid(n1, 16)
        values = evaluate_model(spec, grid)
        residuals.append(annihilator_residual(spec, values, grid).max_norm(0.2 - 1e-9, 2.0))
    order = np.log2(residuals[1] / residuals[2])

    assert residuals[2] < residuals[1] < residuals[0]
    assert abs(order - 4.0) < 0.5


def test_section_to_symbol_inverts_the_trace():
    """Test recovery of a(k) from one exact trace on either side."""
    spec = ModelSolutionSpec.from_modes(0.7, {-3: 1.0, 1: 2.0 - 1j, 3: 0.5j})
    for side in (1, -1):
        trace = model_trace(spec, side * 0.4)
        recovered = section_to_symbol(trace, 0.7, side, 0.4)

        assert np.allclose(recovered.coeffs, spec.coeffs, atol=1e-10)
        assert recovered.dropped == []


def test_delta_ladder_removes_smooth_contamination():
    """Test that a smooth additive trace is eliminated by the ladder."""
    lam = 1.0
    spec = ModelSolutionSpec.from_modes(lam, {-2: 1.0, 0: 0.5, 2: -1j})
    smooth = np.array([0.3, -0.2j, 0.1, 0.05, 0.4])
    deltas = [0.8, 0.4, 0.2]
    traces = [model_trace(spec, d) + smooth for d in deltas]

    single = section_to_symbol(traces[-1], lam, 1, deltas[-1])
    ladder = extrapolate_symbol(traces, deltas, lam, 1)

    assert not np.allclose(single.coeffs, spec.coeffs, atol=1e-3)
    assert np.allclose(ladder.coeffs, spec.coeffs, atol=1e-9)


def test_trace_weight_rejects_bad_delta():
    """Test the admissible distances."""
    with pytest.raises(InvalidArgumentError):
        trace_weight([0, 1], 1.0, 1, 1.5)
    with pytest.raises(InvalidArgumentError):
        trace_weight([0, 1], 1.0, 0, 0.5)


@pytest.mark.parametrize("lam", [0.7, 1.3])
def test_model_boundary_pairing_sides_agree_on_a_sink(lam):
    """Test the quadrature side against the section-data side for outgoing solutions."""
    u1 = CylinderSolution(sink=ModelSolutionSpec.from_modes(lam, {-1: 1.0, 2: 0.5j}, ks=2))
    u2 = CylinderSolution(sink=ModelSolutionSpec.from_modes(lam, {-1: 0.3, 1: 1.0, 2: 1.0}, ks=2))

    report = model_boundary_pairing(u1, u2)

    assert report.right == pytest.approx(-1j * lam * (0.3 + 0.5j))
    assert report.mismatch < 0.02


def test_model_boundary_pairing_of_a_source_has_the_opposite_sign():
    """Test that an incoming branch contributes +i lambda |a|^2."""
    source = ModelSolutionSpec.from_modes(0.7, {1: 1.0, -2: 2.0}, kind=SOURCE, ks=2)
    u = CylinderSolution(source=source)

    report = model_boundary_pairing(u, u)

    assert report.right == pytest.approx(1j * 0.7 * 5.0)
    assert report.mismatch < 0.02


def test_model_boundary_pairing_balances_equal_fluxes():
    """Test that a sink/source pair with equal data norms has vanishing pairing."""
    sink = ModelSolutionSpec.from_modes(0.9, {1: 1.0, 2: 1.0j}, ks=2)
    source = ModelSolutionSpec.from_modes(0.9, {-1: 1.0j, 2: -1.0}, kind=SOURCE, ks=2)
    u = CylinderSolution(sink=sink, source=source)
    outgoing = model_boundary_pairing(CylinderSolution(sink=sink), CylinderSolution(sink=sink))

    report = model_boundary_pairing(u, u)
    cross = model_boundary_pairing(CylinderSolution(sink=sink), CylinderSolution(source=source))

    assert abs(report.right) < 1e-12
    assert abs(report.left) < 0.02 * abs(outgoing.left)
    assert abs(cross.left) < 0.02 * abs(outgoing.left)


def test_model_pairing_validation():
    """Test that mismatched cycles, wrong kinds and k = 0 content are refused."""
    u1 = CylinderSolution(sink=ModelSolutionSpec.from_modes(0.7, {1: 1.0}))
    u2 = CylinderSolution(sink=ModelSolutionSpec.from_modes(0.9, {1: 1.0}))
    flat = CylinderSolution(sink=ModelSolutionSpec.from_modes(0.7, {0: 1.0, 1: 1.0}))

    with pytest.raises(InvalidArgumentError):
        model_boundary_pairing(u1, u2)
    with pytest.raises(InvalidArgumentError):
        model_boundary_pairing(flat, flat)
    with pytest.raises(InvalidArgumentError):
        CylinderSolution(sink=ModelSolutionSpec.from_modes(0.7, {1: 1.0}, kind=SOURCE))
    with pytest.raises(InvalidArgumentError):
        CylinderSolution()


def test_cylinder_grid_validation():
    """Test the cylinder window checks."""
    grid = CylinderGrid(11, 8)

    assert grid.x1.shape == (22,)
    assert grid.spacing == pytest.approx(0.2)
    with pytest.raises(InvalidArgumentError):
        CylinderGrid(11, 8, inner=0.5, outer=0.2)
