"""
Pytest tests for the symbol families.
"""

import numpy as np
import pytest

from src.zeroscatter.core.errors import (
    DomainError,
    InvalidArgumentError,
    UnsupportedFamilyError,
)
from src.zeroscatter.fields import TorusGrid
from src.zeroscatter.psido import assemble
from src.zeroscatter.symbols import (
    HOMOGENEOUS,
    SymbolDescriptor,
    chi_profiles,
    smooth_step,
    zero_set_gradient_floor,
)


def test_from_config_round_trip():
    """Test building a symbol from its JSON form."""
    config = {"family": "normal-form", "lambda": 0.7, "cone": 0.5, "glued": False}
    spec = SymbolDescriptor.from_config(config)

    assert spec.lam == 0.7
    assert spec.to_config() == config


def test_unknown_parameters_rejected():
    """Test that foreign keys are refused."""
    with pytest.raises(InvalidArgumentError):
        SymbolDescriptor.from_config({"family": "tao", "beta": 1.0})
    with pytest.raises(InvalidArgumentError):
        SymbolDescriptor.from_config({"family": "elastic"})


def test_internal_wave_values():
    """Test the internal-wave symbol at a few points."""
    spec = SymbolDescriptor.from_config({"family": "internal-wave", "beta": 2.0})

    assert spec.evaluate(0.0, 0.0, 0.0, 0.0) == pytest.approx(-2.0)
    assert spec.evaluate(np.pi / 2, 0.0, 3.0, 4.0) == pytest.approx(4.0 / np.sqrt(26.0))


def test_homogeneous_symbol_excludes_zero_frequency():
    """Test the domain of the homogeneous family."""
    spec = SymbolDescriptor(HOMOGENEOUS)

    with pytest.raises(DomainError):
        spec.evaluate(0.0, 0.0, 0.0, 0.0)
    assert spec.quantization_value(np.pi / 2, 0.0, 0.0) == pytest.approx(0.0)


def test_normal_form_cone():
    """Test that the normal form is only defined on its cone."""
    spec = SymbolDescriptor.from_config({"family": "normal-form", "lambda": 1.0})

    assert spec.evaluate(0.25, 0.0, 1.0, 0.25) == pytest.approx(0.0)
    with pytest.raises(DomainError):
        spec.evaluate(0.0, 0.0, 1.0, 1.0)
    with pytest.raises(UnsupportedFamilyError):
        spec.quantization_value(0.0, 1.0, 0.0)


@pytest.mark.parametrize(
    "config",
    [
        {"family": "internal-wave", "beta": 1.5},
        {"family": "internal-wave-homogeneous", "beta": 2.0},
        {"family": "normal-form", "lambda": 0.7, "glued": True},
        {"family": "tao", "alpha": 2.0, "k": 5},
    ],
)
def test_gradient_matches_finite_differences(config):
    """Test the exact gradient against central differences."""
    spec = SymbolDescriptor.from_config(config)
    point = np.array([0.4, 0.3, 4.6, 0.2])
    exact = np.array(spec.gradient(*point))
    h = 1e-6
    numeric = np.zeros(4)
    for i in range(4):
        step = np.zeros(4)
        step[i] = h
        numeric[i] = (spec.evaluate(*(point + step)) - spec.evaluate(*(point - step))) / (2 * h)

    assert np.allclose(exact, numeric, atol=1e-7)


def test_principal_parts():
    """Test that the inhomogeneous families reduce to the homogeneous one."""
    wave = SymbolDescriptor.from_config({"family": "internal-wave", "beta": 1.5})
    tao = SymbolDescriptor.from_config({"family": "tao", "alpha": 2.0, "k": 5})

    assert wave.principal() == SymbolDescriptor(HOMOGENEOUS, beta=1.5)
    assert tao.principal() == SymbolDescriptor(HOMOGENEOUS, beta=2.0)
    assert wave.principal().homogeneous


def test_tao_bump_removes_forcing_near_mode():
    """Test that the tao cutoff switches the forcing off around (k, 0)."""
    profiles = chi_profiles(5)
    spec = SymbolDescriptor.from_config({"family": "tao", "alpha": 2.0, "k": 5})

    assert profiles.chi(5.0) == pytest.approx(1.0)
    assert profiles.chi(8.0) == pytest.approx(0.0)
    assert profiles.psi(0.0) == pytest.approx(1.0)
    assert profiles.psi(1.0) == 0.0
    assert spec.quantization_value(0.3, 5.0, 0.0) == pytest.approx(0.0)


def test_smooth_step_limits():
    """Test the C-infinity step at and beyond its ends."""
    assert smooth_step(-0.5) == 0.0
    assert smooth_step(0.5) == pytest.approx(0.5)
    assert smooth_step(1.5) == 1.0


def test_gradient_floor_is_positive_for_internal_waves():
    """Test that the zero set of the homogeneous family is regular at omega = 0."""
    spec = SymbolDescriptor(HOMOGENEOUS, beta=2.0)

    assert zero_set_gradient_floor(spec, 0.0, samples=64) > 0.1


class TiltedWave(SymbolDescriptor):
    """Internal-wave symbol with a small x2 modulation added."""

    def evaluate(self, x1, x2, xi1, xi2):
        return super().evaluate(x1, x2, xi1, xi2) + 0.1 * np.sin(np.asarray(x2))


@pytest.mark.parametrize(
    "config",
    [
        {"family": "internal-wave", "beta": 1.5},
        {"family": "normal-form", "lambda": 0.7, "glued": True},
        {"family": "tao", "alpha": 2.0, "k": 5},
    ],
)
def test_supported_families_do_not_depend_on_x2(config):
    """Test the sampled x2-independence check on the built-in families."""
    assert SymbolDescriptor.from_config(config).x2_independent


def test_x2_modulated_symbol_is_refused():
    """Test that an x2-dependent symbol fails the check and is not quantized."""
    spec = TiltedWave("internal-wave", beta=1.5)

    assert not spec.x2_independent
    with pytest.raises(UnsupportedFamilyError):
        assemble(spec, TorusGrid(8, 8))
