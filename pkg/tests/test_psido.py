"""
Pytest tests for quantized operators, resolvents and eigenvalue clearance.
"""

import numpy as np
import pytest

from src.zeroscatter.core.errors import (
    InvalidArgumentError,
    NoConvergenceError,
    UnsupportedFamilyError,
)
from src.zeroscatter.fields import SpectralField, TorusGrid
from src.zeroscatter.psido import (
    OperatorMatrix,
    Projector,
    ShiftedSolver,
    apply,
    assemble,
    eigencheck,
    estimate_level_spacing,
    limiting_absorption,
    project_out,
    projected_resolvent_solve,
    regularized_boundary_form,
    resolvent_solve,
    stable_eigenvalues,
)
from src.zeroscatter.symbols import SymbolDescriptor


def random_field(grid, seed=0):
    rng = np.random.default_rng(seed)
    shape = grid.coeff_shape
    return SpectralField(grid, rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def homogeneous(beta=2.0):
    return SymbolDescriptor.from_config({"family": "internal-wave-homogeneous", "beta": beta})


def tao():
    return SymbolDescriptor.from_config({"family": "tao", "alpha": 2.0, "k": 5})


def test_assembled_operator_on_a_mode():
    """Test that cos x1 shifts k1 by one and the fiber part is diagonal."""
    grid = TorusGrid(16, 16)
    operator = assemble(homogeneous(), grid)
    u = SpectralField.from_modes(grid, {(1, 2): 1.0})

    au = apply(operator, u)

    assert operator.hermitian
    assert au.coefficient(1, 2) == pytest.approx(2 / np.sqrt(5))
    assert au.coefficient(2, 2) == pytest.approx(-1.0)
    assert au.coefficient(0, 2) == pytest.approx(-1.0)
    assert au.coefficient(1, 3) == pytest.approx(0.0)


def test_matrix_free_apply_matches_matrix():
    """Test the symbol-driven apply against the assembled matrix."""
    grid = TorusGrid(16, 8)
    spec = SymbolDescriptor.from_config({"family": "internal-wave", "beta": 1.5})
    operator = assemble(spec, grid)
    u = random_field(grid)

    assert np.allclose(apply(spec, u).coeffs, apply(operator, u).coeffs, atol=1e-12)


def test_normal_form_is_not_quantized():
    """Test that the cylinder model cannot be assembled on the torus."""
    spec = SymbolDescriptor.from_config({"family": "normal-form", "lambda": 1.0})

    with pytest.raises(UnsupportedFamilyError):
        assemble(spec, TorusGrid(8, 8))


def test_tao_mode_is_an_exact_kernel_vector():
    """Test that e^{i5x1} is annihilated by the truncated tao operator."""
    grid = TorusGrid(32, 32)
    operator = assemble(tao(), grid)
    u = SpectralField.from_modes(grid, {(5, 0): 1.0 / (2 * np.pi)})

    assert apply(operator, u).l2_norm() <= 1e-13


def test_eigencheck_finds_the_tao_eigenvalue():
    """Test eigencheck on a small dense tao matrix."""
    grid = TorusGrid(16, 16)
    operator = assemble(tao(), grid)

    pairs = eigencheck(operator, (-1e-10, 1e-10), count=4)

    assert pairs
    for pair in pairs:
        assert abs(pair.value) <= 1e-10
        assert pair.field.l2_norm() == pytest.approx(1.0)


def test_eigencheck_refuses_non_hermitian_matrices():
    """Test that eigencheck needs a Hermitian operator."""
    grid = TorusGrid(8, 8)
    matrix = np.zeros((grid.size, grid.size), dtype=complex)
    matrix[0, 1] = 1.0
    operator = OperatorMatrix.from_matrix(grid, matrix)

    assert not operator.hermitian
    with pytest.raises(InvalidArgumentError):
        eigencheck(operator, (-1.0, 1.0))


def test_shifted_solver_reuses_factorizations():
    """Test that one shift is factorized once and solves accurately."""
    grid = TorusGrid(16, 16)
    operator = assemble(homogeneous(), grid)
    solver = ShiftedSolver(operator)
    f = random_field(grid, seed=1)

    u = resolvent_solve(operator, 0.1, 0.05, f, solver=solver)
    resolvent_solve(operator, 0.1, 0.05, f, solver=solver)
    residual = apply(operator, u) - u * complex(0.1, 0.05) - f

    assert len(solver._factors) == 1
    assert residual.l2_norm() <= 1e-10 * f.l2_norm()


def test_absorption_requires_negative_sobolev_index():
    """Test the norm restriction s < -1/2."""
    grid = TorusGrid(8, 8)
    operator = assemble(homogeneous(), grid)
    f = SpectralField.from_modes(grid, {(1, 1): 1.0})

    with pytest.raises(InvalidArgumentError):
        limiting_absorption(operator, 0.0, f, [0.1, 0.05], s=0.0, level_spacing=0.0)


def test_absorption_of_zero_data_is_zero():
    """Test that f = 0 gives the zero field."""
    grid = TorusGrid(8, 8)
    operator = assemble(homogeneous(), grid)

    result = limiting_absorption(operator, 0.0, SpectralField.zeros(grid), [0.1, 0.05])

    assert not np.any(result.solution.coeffs)


def test_absorption_below_level_spacing_does_not_converge():
    """Test that entries under ten level spacings are dropped."""
    grid = TorusGrid(8, 8)
    operator = assemble(homogeneous(), grid)
    f = SpectralField.from_modes(grid, {(1, 1): 1.0})

    with pytest.raises(NoConvergenceError) as info:
        limiting_absorption(operator, 0.0, f, [0.1, 0.01], level_spacing=0.005)

    assert info.value.report.dropped == [0.01]


def test_absorption_extrapolates_between_last_two_entries():
    """Test the Richardson step on an elliptic right-hand side."""
    grid = TorusGrid(16, 16)
    operator = assemble(homogeneous(), grid)
    f = SpectralField.from_modes(grid, {(1, 1): 1.0})
    ladder = [0.5, 0.25]

    result = limiting_absorption(
        operator, 5.0, f, ladder, level_spacing=0.0, require_monotone=False
    )
    u_a, u_b = result.iterates
    expected = (0.5 * u_b.coeffs - 0.25 * u_a.coeffs) / 0.25

    assert np.allclose(result.solution.coeffs, expected)
    assert len(result.report.increments) == 1


def test_projection_removes_the_eigenvector():
    """Test project_out and the Projector on the tao kernel vector."""
    grid = TorusGrid(16, 16)
    e5 = SpectralField.from_modes(grid, {(5, 0): 1.0 / (2 * np.pi)})
    f = random_field(grid, seed=2)

    once = project_out(e5, f)
    projector = Projector([e5])

    assert abs(once.inner(e5)) <= 1e-12
    assert np.allclose(projector.apply(f).coeffs, once.coeffs)
    assert projector.rank == 1
    with pytest.raises(InvalidArgumentError):
        project_out(e5 * 2.0, f)


def test_tao_absorption_with_projection_is_orthogonal():
    """Test that the projected ladder output has no e^{i5x1} component."""
    grid = TorusGrid(16, 16)
    operator = assemble(tao(), grid)
    e5 = SpectralField.from_modes(grid, {(5, 0): 1.0 / (2 * np.pi)})
    f = SpectralField.from_modes(grid, {(5, 0): 1.0, (3, 1): 1.0})

    result = limiting_absorption(
        operator,
        0.0,
        f,
        [0.5, 0.25, 0.125],
        level_spacing=0.0,
        require_monotone=False,
        projector=Projector([e5]),
    )

    assert abs(result.solution.inner(e5)) <= 1e-10


def test_boundary_form_vanishes_for_smooth_field():
    """Test that the regularized boundary form is zero when u1 is low frequency."""
    grid = TorusGrid(32, 32)
    operator = assemble(homogeneous(), grid)
    u1 = SpectralField.from_modes(grid, {(1, 1): 1.0, (-2, 0): 0.5})
    u2 = random_field(grid, seed=3)

    value = regularized_boundary_form(operator, 0.2, u1, u2, radius=8.0)

    assert abs(value) <= 1e-10


def test_level_spacing_is_positive():
    """Test the dense level spacing estimate on a small grid."""
    operator = assemble(homogeneous(), TorusGrid(8, 8))

    assert estimate_level_spacing(operator, 0.3) > 0


def test_projected_resolvent_stays_in_the_complement():
    """Test that a single projected solve is orthogonal to the eigenvector."""
    grid = TorusGrid(16, 16)
    operator = assemble(tao(), grid)
    e5 = SpectralField.from_modes(grid, {(5, 0): 1.0 / (2 * np.pi)})
    g = random_field(grid, seed=5)

    u = projected_resolvent_solve(operator, 0.0, 0.1, g, Projector([e5]))

    assert abs(u.inner(e5)) <= 1e-12
    assert u.l2_norm() > 0


def test_resolvent_identity():
    """Test R(z1) - R(z2) = (z1 - z2) R(z1) R(z2) on a random right-hand side."""
    grid = TorusGrid(16, 16)
    operator = assemble(homogeneous(), grid)
    solver = ShiftedSolver(operator)
    f = random_field(grid, seed=2)
    z1, z2 = complex(0.1, 0.05), complex(0.3, 0.2)

    u1 = resolvent_solve(operator, z1.real, z1.imag, f, solver=solver)
    u2 = resolvent_solve(operator, z2.real, z2.imag, f, solver=solver)
    both = resolvent_solve(operator, z1.real, z1.imag, u2, solver=solver)
    defect = (u1 - u2) - both * (z1 - z2)

    assert defect.l2_norm() <= 1e-8 * u1.l2_norm()


def test_genuine_eigenvalue_survives_refinement():
    """Test that the tao kernel is found again on the finer grid."""
    kept = stable_eigenvalues(tao(), (-1e-10, 1e-10), sizes=[32, 16], count=2)

    assert kept
    assert all(abs(value) <= 1e-10 for value in kept)


def test_stable_eigenvalues_need_two_resolutions():
    with pytest.raises(InvalidArgumentError):
        stable_eigenvalues(tao(), (-1.0, 1.0), sizes=[16])


@pytest.mark.slow
def test_internal_wave_absorption_increments_decrease():
    """Test the absorption ladder for xi2/<xi> - 2 cos x1 at omega = 0.05 with f = e^{ix2}."""
    grid = TorusGrid(128, 128)
    spec = SymbolDescriptor.from_config({"family": "internal-wave", "beta": 2.0})
    operator = assemble(spec, grid)
    f = SpectralField.from_modes(grid, {(0, 1): 1.0})

    result = limiting_absorption(
        operator, 0.05, f, [1e-2, 5e-3, 2.5e-3, 1e-3, 1e-4], require_monotone=False
    )

    assert len(result.report.increments) >= 1
    assert result.report.monotone
    assert all(eps >= 10 * result.report.level_spacing for eps in result.epsilons)
