"""
Quantized operators on the torus and their resolvents.

Symbols are quantized left (p(x, D)) in the truncated Fourier basis and then
symmetrized, A <- (A + A^*) / 2. Resolvents (A - omega - i eps)^{-1} are taken
by sparse LU; factorizations are cached per shift so the same one serves every
right-hand side.
"""

import threading
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy import fft, linalg, sparse
from scipy.sparse.linalg import ArpackNoConvergence, eigsh, splu

from .core.errors import (
    InvalidArgumentError,
    NoConvergenceError,
    NumericalError,
    UnsupportedFamilyError,
)
from .core.logging_config import get_logger
from .data.field_dump import coo_frame, grid_mode_labels
from .fields import (
    SpectralField,
    TorusGrid,
    off_lagrangian_fraction,
    sobolev_norm,
)
from .symbols import NORMAL_FORM, SymbolDescriptor, smooth_step

logger = get_logger(__name__)

HERMITIAN_TOLERANCE = 1e-12
RESIDUAL_TOLERANCE = 1e-10
NORMALIZATION_TOLERANCE = 1e-10
DENSE_LIMIT = 1500
SPACING_FACTOR = 10.0


@dataclass
class OperatorMatrix:
    """A sparse operator in the truncated Fourier basis of a grid."""

    grid: TorusGrid
    matrix: sparse.csr_matrix
    hermitian: bool
    asymmetry: float = 0.0
    symbol: Optional[SymbolDescriptor] = None

    @classmethod
    def from_matrix(
        cls, grid: TorusGrid, matrix, symbol: Optional[SymbolDescriptor] = None
    ) -> "OperatorMatrix":
        """Wrap an explicit matrix; the hermitian flag is measured, not imposed."""
        matrix = sparse.csr_matrix(matrix, dtype=complex)
        if matrix.shape != (grid.size, grid.size):
            raise InvalidArgumentError(
                f"matrix of shape {matrix.shape} does not act on {grid.size} modes"
            )
        defect = hermitian_defect(matrix)
        return cls(grid, matrix, defect <= HERMITIAN_TOLERANCE, defect, symbol)

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    def dot(self, field: SpectralField) -> SpectralField:
        if field.grid != self.grid:
            raise InvalidArgumentError("field and operator live on different grids")
        return SpectralField.from_vector(self.grid, self.matrix @ field.vector())

    def to_frame(self) -> pd.DataFrame:
        """Coordinate listing (k1', k2', k1, k2, re, im)."""
        return coo_frame(self.matrix, grid_mode_labels(self.grid))


def hermitian_defect(matrix) -> float:
    diff = (matrix - matrix.conj().T).tocoo()
    return float(np.max(np.abs(diff.data))) if diff.nnz else 0.0


def symbol_harmonics(spec: SymbolDescriptor, grid: TorusGrid) -> Dict[int, np.ndarray]:
    """
    x1-Fourier coefficients c_m(k) of x1 -> p(x1, k) for |m| <= bandwidth.

    Returns:
        Mapping m -> array over the grid's coefficient shape
    """
    if spec.family == NORMAL_FORM:
        raise UnsupportedFamilyError(
            "the normal-form symbol lives on the model cylinder, not the torus"
        )
    b1, b2 = spec.x_bandwidth
    if b2 != 0 or not spec.x2_independent:
        raise UnsupportedFamilyError("only x2-independent symbols are quantized")
    samples = max(4, 2 * b1 + 2)
    k1, k2 = grid.wavenumbers()
    x1 = 2 * np.pi * np.arange(samples) / samples
    values = np.stack([spec.quantization_value(x, k1, k2) for x in x1])
    coefficients = fft.fft(values, axis=0) / samples
    return {m: coefficients[m % samples] for m in range(-b1, b1 + 1)}


def assemble(spec: SymbolDescriptor, grid: TorusGrid) -> OperatorMatrix:
    """
    Matrix of the symmetrized left quantization of a symbol.

    Args:
        spec: Symbol of family internal-wave, internal-wave-homogeneous or tao
        grid: Grid fixing the truncated basis

    Returns:
        OperatorMatrix with A[k + m e1, k] = c_m(k), then (A + A^*) / 2
    """
    harmonics = symbol_harmonics(spec, grid)
    k1max, _ = grid.band
    k1, k2 = grid.wavenumbers()

    rows, cols, data = [], [], []
    for m, c in harmonics.items():
        target = k1 + m
        mask = np.abs(target) <= k1max
        rows.append(grid.flat_index(target[mask], k2[mask]))
        cols.append(grid.flat_index(k1[mask], k2[mask]))
        data.append(c[mask])

    raw = sparse.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(grid.size, grid.size),
        dtype=complex,
    ).tocsr()
    asymmetry = hermitian_defect(raw)
    matrix = ((raw + raw.conj().T) / 2).tocsr()
    matrix.eliminate_zeros()
    defect = hermitian_defect(matrix)

    logger.info(
        f"Assembled {spec.family} operator on {grid.n1}x{grid.n2}: "
        f"N={grid.size}, nnz={matrix.nnz}, asymmetry before symmetrization {asymmetry:.2e}"
    )
    return OperatorMatrix(grid, matrix, defect <= HERMITIAN_TOLERANCE, asymmetry, spec)


def _shift_k1(values: np.ndarray, m: int) -> np.ndarray:
    """out[k1] = values[k1 - m] inside the band, zero elsewhere."""
    out = np.zeros_like(values)
    if m > 0:
        out[m:] = values[:-m]
    elif m < 0:
        out[:m] = values[-m:]
    else:
        out[:] = values
    return out


def apply(
    target: Union[OperatorMatrix, SymbolDescriptor], field: SpectralField
) -> SpectralField:
    """
    Apply an operator to a field.

    With an assembled matrix this is a sparse product. With a symbol the
    symmetrized quantization is applied without building the matrix: the
    harmonics c_m act by shifting coefficients along k1.
    """
    if isinstance(target, OperatorMatrix):
        return target.dot(field)

    u = field.coeffs
    forward = np.zeros_like(u)
    adjoint = np.zeros_like(u)
    for m, c in symbol_harmonics(target, field.grid).items():
        forward += _shift_k1(c * u, m)
        adjoint += np.conj(c) * _shift_k1(u, -m)
    return SpectralField(field.grid, (forward + adjoint) / 2)


class ShiftedSolver:
    """Sparse LU factorizations of A - z I, one per shift z, shared across solves."""

    def __init__(self, operator: OperatorMatrix):
        self.operator = operator
        self._factors = {}
        self._lock = threading.Lock()

    def _shifted(self, z: complex):
        identity = sparse.identity(self.operator.dimension, dtype=complex, format="csr")
        return (self.operator.matrix - z * identity).tocsc()

    def factor(self, z: complex):
        key = (float(z.real), float(z.imag))
        with self._lock:
            if key not in self._factors:
                logger.debug(f"Factorizing A - ({z.real:.6g}{z.imag:+.6g}i)")
                self._factors[key] = splu(self._shifted(z))
            return self._factors[key]

    def solve(self, rhs: np.ndarray, z: complex) -> np.ndarray:
        """Solve (A - z) x = rhs with one step of iterative refinement."""
        rhs = np.asarray(rhs, dtype=complex)
        norm = np.linalg.norm(rhs)
        if norm == 0:
            return np.zeros_like(rhs)
        lu = self.factor(z)
        x = lu.solve(rhs)
        residual = rhs - (self.operator.matrix @ x - z * x)
        if np.linalg.norm(residual) > RESIDUAL_TOLERANCE * norm:
            x = x + lu.solve(residual)
            residual = rhs - (self.operator.matrix @ x - z * x)
        achieved = float(np.linalg.norm(residual) / norm)
        if achieved > RESIDUAL_TOLERANCE:
            raise NumericalError(
                f"resolvent solve at z={z} stalled at relative residual {achieved:.2e}",
                residual=achieved,
            )
        return x


def resolvent_solve(
    operator: OperatorMatrix,
    omega: float,
    eps: float,
    f: SpectralField,
    sign: int = 1,
    solver: Optional[ShiftedSolver] = None,
) -> SpectralField:
    """
    Solve (A - omega - i sign eps) u = f.

    Args:
        operator: Assembled operator
        omega: Real spectral parameter
        eps: Positive absorption
        f: Right-hand side
        sign: +1 for A - omega - i eps, -1 for A - omega + i eps
        solver: Factorization cache to reuse

    Returns:
        The solution field
    """
    if eps <= 0:
        raise InvalidArgumentError(f"absorption must be positive, got {eps}")
    if sign not in (1, -1):
        raise InvalidArgumentError(f"sign must be +1 or -1, got {sign}")
    solver = solver or ShiftedSolver(operator)
    z = complex(omega, sign * eps)
    return SpectralField.from_vector(f.grid, solver.solve(f.vector(), z))


def _dense(operator: OperatorMatrix) -> np.ndarray:
    return operator.matrix.toarray()


def _eigsh(operator: OperatorMatrix, count: int, sigma: float, vectors: bool):
    count = min(count, operator.dimension - 2)
    try:
        return eigsh(
            operator.matrix, k=count, sigma=sigma, which="LM", return_eigenvectors=vectors
        )
    except ArpackNoConvergence as e:
        raise NoConvergenceError(f"shift-invert iteration near {sigma} did not converge") from e
    except RuntimeError:
        # sigma sitting exactly on an eigenvalue makes the shifted factor singular
        return eigsh(
            operator.matrix,
            k=count,
            sigma=sigma + 1e-9,
            which="LM",
            return_eigenvectors=vectors,
        )


def estimate_level_spacing(
    operator: OperatorMatrix, omega: float, count: int = 8
) -> float:
    """Mean gap between the count eigenvalues nearest omega."""
    if operator.dimension <= DENSE_LIMIT:
        values = linalg.eigvalsh(_dense(operator))
        nearest = np.sort(values[np.argsort(np.abs(values - omega))[:count]])
    else:
        nearest = np.sort(_eigsh(operator, count, omega, vectors=False))
    spacing = float((nearest[-1] - nearest[0]) / (len(nearest) - 1))
    logger.info(f"Level spacing near omega={omega}: {spacing:.3e}")
    return spacing


@dataclass
class ConvergenceReport:
    """What the absorption ladder did."""

    epsilons: List[float]
    increments: List[float]
    dropped: List[float]
    level_spacing: float
    sobolev: float
    monotone: bool
    order: Optional[float] = None

    def to_frame(self) -> pd.DataFrame:
        eps = self.epsilons
        return pd.DataFrame(
            {
                "eps_coarse": eps[:-1],
                "eps_fine": eps[1:],
                "increment": self.increments,
            }
        )


@dataclass
class ResolventSolution:
    omega: float
    epsilons: List[float]
    iterates: List[SpectralField]
    solution: SpectralField
    report: ConvergenceReport
    off_lagrangian: Optional[float] = None


def limiting_absorption(
    operator: OperatorMatrix,
    omega: float,
    f: SpectralField,
    epsilons: Sequence[float],
    s: float = -1.0,
    level_spacing: Optional[float] = None,
    require_monotone: bool = True,
    sign: int = 1,
    solver: Optional[ShiftedSolver] = None,
    projector: Optional["Projector"] = None,
    anchors: Optional[Sequence[Tuple[float, float]]] = None,
    diagnostic_scale: Optional[float] = None,
) -> ResolventSolution:
    """
    Run the absorption ladder and extrapolate to eps = 0.

    Entries below ten times the level spacing near omega are dropped: the
    truncated matrix has pure point spectrum and cannot be probed finer than
    that.

    Args:
        operator: Assembled Hermitian operator
        omega: Real spectral parameter
        f: Right-hand side
        epsilons: Absorption ladder (any order; sorted decreasing)
        s: Sobolev index of the increment norm, below -1/2
        level_spacing: Known spacing; estimated from the spectrum when None
        require_monotone: Raise unless the increments decrease
        sign: +1 for (A - omega - i0)^{-1}, -1 for the mirrored limit
        solver: Factorization cache to reuse
        projector: Project the data and iterates off an eigenspace
        anchors: (x1*, theta*) conormal lines of the expected wavefront set
        diagnostic_scale: Packet scale h for the off-wavefront diagnostic

    Returns:
        ResolventSolution holding iterates, the extrapolated field and the report
    """
    if s >= -0.5:
        raise InvalidArgumentError(f"increment norm needs s < -1/2, got {s}")
    ladder = sorted((float(e) for e in epsilons), reverse=True)
    if projector is not None:
        f = projector.apply(f)

    if not np.any(f.coeffs):
        zero = SpectralField.zeros(f.grid)
        report = ConvergenceReport(ladder, [0.0] * (len(ladder) - 1), [], 0.0, s, True)
        return ResolventSolution(omega, ladder, [zero] * len(ladder), zero, report, 0.0)

    if level_spacing is None:
        level_spacing = estimate_level_spacing(operator, omega)
    accepted = [e for e in ladder if e >= SPACING_FACTOR * level_spacing]
    dropped = [e for e in ladder if e < SPACING_FACTOR * level_spacing]
    if dropped:
        logger.warning(
            f"Dropping {len(dropped)} ladder entries below {SPACING_FACTOR:g} x "
            f"level spacing {level_spacing:.3e}"
        )
    if len(accepted) < 2:
        report = ConvergenceReport(accepted, [], dropped, level_spacing, s, False)
        raise NoConvergenceError(
            f"fewer than two absorption values clear the level spacing {level_spacing:.3e}",
            report=report,
        )

    solver = solver or ShiftedSolver(operator)
    iterates = []
    for eps in accepted:
        u = resolvent_solve(operator, omega, eps, f, sign=sign, solver=solver)
        if projector is not None:
            u = projector.apply(u)
        iterates.append(u)

    increments = [
        sobolev_norm(b - a, s) for a, b in zip(iterates[:-1], iterates[1:])
    ]
    monotone = all(b <= a for a, b in zip(increments[:-1], increments[1:]))
    order = None
    positive = [i for i in increments if i > 0]
    if len(positive) == len(increments) and len(increments) >= 2:
        order = float(np.polyfit(np.log(accepted[1:]), np.log(increments), 1)[0])
    report = ConvergenceReport(
        accepted, increments, dropped, level_spacing, s, monotone, order
    )
    for eps, inc in zip(accepted[1:], increments):
        logger.debug(f"eps={eps:.3e}: H^{s:g} increment {inc:.3e}")
    if require_monotone and not monotone:
        raise NoConvergenceError(
            "absorption ladder increments are not decreasing", report=report
        )

    eps_a, eps_b = accepted[-2], accepted[-1]
    u_a, u_b = iterates[-2], iterates[-1]
    extrapolated = (eps_a * u_b - eps_b * u_a) * (1.0 / (eps_a - eps_b))

    fraction = None
    if anchors:
        h = diagnostic_scale or _finest_scale(f.grid)
        fraction = off_lagrangian_fraction(extrapolated, anchors, h)
        logger.info(f"Off-wavefront packet mass fraction at h={h:.4g}: {fraction:.3f}")

    return ResolventSolution(omega, accepted, iterates, extrapolated, report, fraction)


def _finest_scale(grid: TorusGrid) -> float:
    """Smallest dyadic h whose packets stay inside the band."""
    limit = min(grid.band)
    m = 1
    while 2.0 ** (m + 1) + 5.0 * 2.0 ** ((m + 1) / 2) <= limit:
        m += 1
    return 2.0 ** (-m)


@dataclass
class EigenPair:
    value: float
    field: SpectralField


def _normalized(grid: TorusGrid, vector: np.ndarray) -> SpectralField:
    """Unit L^2 norm, phase fixed so the largest coefficient is real positive."""
    peak = vector[np.argmax(np.abs(vector))]
    vector = vector * (abs(peak) / peak) / (2 * np.pi * np.linalg.norm(vector))
    return SpectralField.from_vector(grid, vector)


def eigencheck(
    operator: OperatorMatrix, window: Sequence[float], count: int = 6
) -> List[EigenPair]:
    """
    Eigenpairs of the truncated matrix inside [a, b].

    Small matrices are diagonalized densely; larger ones by shift-invert
    Lanczos about the window center.
    """
    if not operator.hermitian:
        raise InvalidArgumentError("eigencheck needs a Hermitian operator")
    a, b = float(window[0]), float(window[1])
    if a > b:
        raise InvalidArgumentError(f"empty eigen window [{a}, {b}]")

    if operator.dimension <= DENSE_LIMIT:
        pad = 1e-14 * max(1.0, abs(a))
        values, vectors = linalg.eigh(_dense(operator), subset_by_value=(a - pad, b))
    else:
        values, vectors = _eigsh(operator, count, (a + b) / 2, vectors=True)
        inside = (values >= a) & (values <= b)
        values, vectors = values[inside], vectors[:, inside]

    center = (a + b) / 2
    order = np.argsort(np.abs(values - center), kind="stable")[:count]
    order = order[np.argsort(values[order], kind="stable")]
    pairs = [
        EigenPair(float(values[i]), _normalized(operator.grid, vectors[:, i]))
        for i in order
    ]
    logger.info(f"Found {len(pairs)} eigenvalues in [{a:g}, {b:g}]")
    return pairs


def stable_eigenvalues(
    spec: SymbolDescriptor,
    window: Sequence[float],
    sizes: Sequence[int],
    tolerance: float = 1e-3,
    count: int = 6,
) -> List[float]:
    """
    Eigenvalues in the window that persist under grid refinement.

    The coarsest square grid is scanned first; a value is kept only if every
    finer grid reports an eigenvalue within ``tolerance`` of it.
    """
    sizes = sorted(int(n) for n in sizes)
    if len(sizes) < 2:
        raise InvalidArgumentError(f"need at least two resolutions, got {sizes}")
    scans = []
    for n in sizes:
        operator = assemble(spec, TorusGrid(n, n))
        scans.append(np.array([pair.value for pair in eigencheck(operator, window, count)]))
        logger.debug(f"n={n}: {len(scans[-1])} eigenvalues in window")

    kept = [
        float(value)
        for value in scans[0]
        if all(finer.size and np.min(np.abs(finer - value)) <= tolerance for finer in scans[1:])
    ]
    logger.info(f"{len(kept)} of {len(scans[0])} eigenvalues stable across n={sizes}")
    return kept


def project_out(u0: SpectralField, field: SpectralField) -> SpectralField:
    """field - u0 <field, u0> for a unit vector u0."""
    norm = u0.l2_norm()
    if abs(norm - 1.0) > NORMALIZATION_TOLERANCE:
        raise InvalidArgumentError(f"projection vector must have unit norm, got {norm}")
    return field - u0 * field.inner(u0)


class Projector:
    """Orthogonal projection off the span of a set of fields."""

    def __init__(self, basis: Sequence[SpectralField]):
        if not basis:
            raise InvalidArgumentError("projector needs at least one basis field")
        self.grid = basis[0].grid
        columns = np.column_stack([2 * np.pi * f.vector() for f in basis])
        q, r = linalg.qr(columns, mode="economic")
        rank = int(np.sum(np.abs(np.diag(r)) > 1e-12 * np.abs(r[0, 0])))
        self._q = q[:, :rank]
        logger.debug(f"Projector of rank {rank} from {len(basis)} fields")

    @classmethod
    def from_eigenpairs(cls, pairs: Sequence[EigenPair]) -> "Projector":
        return cls([p.field for p in pairs])

    @property
    def rank(self) -> int:
        return self._q.shape[1]

    def apply(self, field: SpectralField) -> SpectralField:
        v = field.vector()
        return SpectralField.from_vector(
            field.grid, v - self._q @ (self._q.conj().T @ v)
        )


def projected_resolvent_solve(
    operator: OperatorMatrix,
    omega: float,
    eps: float,
    g: SpectralField,
    projector: Projector,
    sign: int = 1,
    solver: Optional[ShiftedSolver] = None,
) -> SpectralField:
    """Pi (A - omega - i sign eps)^{-1} Pi g."""
    u = resolvent_solve(operator, omega, eps, projector.apply(g), sign, solver)
    return projector.apply(u)


def radial_lowpass(grid: TorusGrid, radius: float) -> np.ndarray:
    """Smooth multiplier equal to 1 for |k| <= radius and 0 for |k| >= 2 radius."""
    k1, k2 = grid.wavenumbers()
    return smooth_step(2.0 - np.hypot(k1, k2) / radius)


def regularized_boundary_form(
    operator: OperatorMatrix,
    omega: float,
    u1: SpectralField,
    u2: SpectralField,
    radius: float,
) -> complex:
    """
    <(A - omega) u1, rho u2> - <rho u1, (A - omega) u2> with a radial low-pass rho.

    The plain difference vanishes for a Hermitian matrix; the low-pass turns
    it into the commutator form that sees outgoing and incoming mass.
    """
    rho = radial_lowpass(u1.grid, radius)
    r1 = apply(operator, u1) - u1 * omega
    r2 = apply(operator, u2) - u2 * omega
    cut1 = SpectralField(u1.grid, rho * u1.coeffs)
    cut2 = SpectralField(u2.grid, rho * u2.coeffs)
    return r1.inner(cut2) - cut1.inner(r2)
