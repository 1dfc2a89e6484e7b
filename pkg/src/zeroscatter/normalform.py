"""
Explicit model of a radial cycle on the cylinder R x S^1.

Near a sink the operator reduces to D_{x2} / D_{x1} - lambda x1, whose
microlocal solutions are the series

    u = sum_k alpha(k / lambda) a(k) (x1 + i0)^{-1 + i k / lambda} e^{i k x2}

with alpha(x) = i Gamma(1 - i x) e^{pi x / 2} / (2 pi). Sources use the same
formulas with lambda replaced by -lambda. This module evaluates alpha, the
phase multipliers built from it, the model solutions, and the inversion from
traces on x1 = +-delta back to the coefficients a(k).
"""

from dataclasses import dataclass
from typing import List, Mapping, Optional, Sequence

import numpy as np
from scipy import fft, integrate, linalg
from scipy.special import loggamma

from .core.errors import (
    InvalidArgumentError,
    OutOfBandError,
    OverflowGuardError,
)
from .core.logging_config import get_logger
from .core.models import PairingReport, ScatteringDataVector
from .symbols import smooth_step_prime

logger = get_logger(__name__)

OVERFLOW_GUARD = 700.0
WEIGHT_FLOOR = 1e-12
SINK = "sink"
SOURCE = "source"


@dataclass(frozen=True)
class AlphaValue:
    """alpha(x) split into magnitude and phase; arrays for array input."""

    x: np.ndarray
    value: np.ndarray
    magnitude: np.ndarray
    phase: np.ndarray
    log_magnitude: np.ndarray
    lift: np.ndarray


def alpha(x) -> AlphaValue:
    """
    Evaluate alpha(x) = i Gamma(1 - i x) e^{pi x / 2} / (2 pi) through log-Gamma.

    Args:
        x: Real scalar or array with |x| <= 700

    Returns:
        AlphaValue; ``phase`` is reduced to [0, 2 pi) and ``lift`` is the
        continuous branch pi/2 + Im log Gamma(1 - i x)
    """
    x = np.asarray(x, dtype=float)
    if np.any(np.abs(x) > OVERFLOW_GUARD):
        raise OverflowGuardError(
            f"alpha argument beyond |x| <= {OVERFLOW_GUARD:g}: max {np.max(np.abs(x)):.4g}"
        )
    log_gamma = loggamma(1.0 - 1j * x)
    log_magnitude = log_gamma.real + np.pi * x / 2 - np.log(2 * np.pi)
    lift = np.pi / 2 + log_gamma.imag
    magnitude = np.exp(log_magnitude)
    value = magnitude * np.exp(1j * lift)
    return AlphaValue(x, value, magnitude, np.mod(lift, 2 * np.pi), log_magnitude, lift)


def theta_asymptotic_check(x):
    """
    Circular distance between theta(x) and its large-x expansion.

    theta(x) = -(x ln x - x) + pi/4 + O(1/x); the leading remainder is
    1/(12 x), so defect * x stays near 1/12.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x < 5):
        raise InvalidArgumentError("theta asymptotics are checked for x >= 5 only")
    reference = -(x * np.log(x) - x) + np.pi / 4
    return np.abs(np.angle(np.exp(1j * (alpha(x).lift - reference))))


def _multiplier_lambdas(f: ScatteringDataVector, lambdas) -> np.ndarray:
    lambdas = f.lambdas if lambdas is None else np.asarray(lambdas, dtype=float)
    if lambdas.shape != (f.circles,):
        raise InvalidArgumentError(
            f"{len(lambdas)} exponents for {f.circles} circles"
        )
    if np.any(lambdas <= 0):
        raise InvalidArgumentError("Lyapunov exponents must be positive")
    return lambdas


def t_multiplier(
    f: ScatteringDataVector,
    lambdas: Optional[Sequence[float]] = None,
    adjoint: bool = False,
) -> ScatteringDataVector:
    """
    Apply T (or T^*) circle by circle: f_j(k) -> e^{-i theta(k / lambda_j)} f_j(k).

    The same formula serves sinks and sources; which exponents it uses is
    carried by the data vector unless ``lambdas`` overrides them.
    """
    lambdas = _multiplier_lambdas(f, lambdas)
    phase = alpha(f.modes[None, :] / lambdas[:, None]).lift
    sign = 1.0 if adjoint else -1.0
    return ScatteringDataVector(
        f.coeffs * np.exp(sign * 1j * phase), f.ks, lambdas, f.cycle_ids
    )


def r_multiplier(
    f: ScatteringDataVector,
    lambdas: Optional[Sequence[float]] = None,
    inverse: bool = False,
) -> ScatteringDataVector:
    """Multiply by |alpha(k / lambda_j)|, the reference map without its phase."""
    lambdas = _multiplier_lambdas(f, lambdas)
    log_mag = alpha(f.modes[None, :] / lambdas[:, None]).log_magnitude
    factor = np.exp(-log_mag if inverse else log_mag)
    return ScatteringDataVector(f.coeffs * factor, f.ks, lambdas, f.cycle_ids)


def effective_lambda(lam: float, kind: str) -> float:
    """+lambda for a sink, -lambda for a source."""
    if kind not in (SINK, SOURCE):
        raise InvalidArgumentError(f"cycle kind must be '{SINK}' or '{SOURCE}', got {kind!r}")
    if lam <= 0:
        raise InvalidArgumentError(f"lambda must be positive, got {lam}")
    return lam if kind == SINK else -lam


def boundary_power(x1, z):
    """(x1 + i0)^z = exp(z (ln|x1| + i pi [x1 < 0]))."""
    x1 = np.asarray(x1, dtype=float)
    if np.any(x1 == 0):
        raise InvalidArgumentError("model solutions are not evaluated on x1 = 0")
    log = np.log(np.abs(x1)) + 1j * np.pi * (x1 < 0)
    return np.exp(np.multiply.outer(log, np.asarray(z)))


@dataclass
class ModelSolutionSpec:
    """Coefficients a(k), |k| <= ks, of one model microlocal solution."""

    lam: float
    coeffs: np.ndarray
    kind: str = SINK

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=complex)
        if self.coeffs.ndim != 1 or len(self.coeffs) % 2 == 0:
            raise InvalidArgumentError("coefficients must cover modes -K..K")
        effective_lambda(self.lam, self.kind)

    @classmethod
    def from_modes(
        cls, lam: float, modes: Mapping[int, complex], kind: str = SINK, ks: Optional[int] = None
    ) -> "ModelSolutionSpec":
        ks = max(abs(k) for k in modes) if ks is None else ks
        coeffs = np.zeros(2 * ks + 1, dtype=complex)
        for k, value in modes.items():
            coeffs[k + ks] = value
        return cls(lam, coeffs, kind)

    @property
    def ks(self) -> int:
        return (len(self.coeffs) - 1) // 2

    @property
    def modes(self) -> np.ndarray:
        return np.arange(-self.ks, self.ks + 1)

    @property
    def lam_eff(self) -> float:
        return effective_lambda(self.lam, self.kind)


@dataclass(frozen=True)
class CylinderGrid:
    """
    Two uniform x1 segments [-outer, -inner] and [inner, outer] times n2 points on S^1.
    """

    n1: int
    n2: int
    inner: float = 0.1
    outer: float = 2.1

    def __post_init__(self):
        if not 0 < self.inner < self.outer:
            raise InvalidArgumentError(
                f"cylinder window needs 0 < inner < outer, got {self.inner}, {self.outer}"
            )
        if self.n1 < 5 or self.n2 < 2:
            raise InvalidArgumentError(f"cylinder grid too small: {self.n1}x{self.n2}")

    @property
    def spacing(self) -> float:
        return (self.outer - self.inner) / (self.n1 - 1)

    @property
    def x1(self) -> np.ndarray:
        positive = np.linspace(self.inner, self.outer, self.n1)
        return np.concatenate([-positive[::-1], positive])

    @property
    def x2(self) -> np.ndarray:
        return 2 * np.pi * np.arange(self.n2) / self.n2


def model_trace(spec: ModelSolutionSpec, x1) -> np.ndarray:
    """Exact circle coefficients of the model solution at the given x1 values."""
    lam_eff = spec.lam_eff
    z = -1.0 + 1j * spec.modes / lam_eff
    weight = alpha(spec.modes / lam_eff).value
    return boundary_power(x1, z) * (weight * spec.coeffs)


def model_rows(spec: ModelSolutionSpec, x1, n2: int) -> np.ndarray:
    """Model solution sampled on the rows x1 times n2 equispaced x2 points."""
    if spec.ks >= n2 / 2:
        raise OutOfBandError(f"mode {spec.ks} not resolved by {n2} circle points")
    x2 = 2 * np.pi * np.arange(n2) / n2
    waves = np.exp(1j * np.outer(spec.modes, x2))
    return np.atleast_2d(model_trace(spec, x1)) @ waves


def evaluate_model(spec: ModelSolutionSpec, grid: CylinderGrid) -> np.ndarray:
    """
    Values of the model solution on a cylinder grid.

    Returns:
        Array of shape (2 n1, n2), rows ordered by increasing x1
    """
    return model_rows(spec, grid.x1, grid.n2)


@dataclass
class ResidualField:
    """Lu on the interior rows of each x1 segment."""

    x1: np.ndarray
    values: np.ndarray

    def max_norm(self, low: float = 0.0, high: float = np.inf) -> float:
        rows = (np.abs(self.x1) >= low) & (np.abs(self.x1) <= high)
        if not np.any(rows):
            return 0.0
        return float(np.max(np.abs(self.values[rows])))


def _d_x1(segment: np.ndarray, h: float) -> np.ndarray:
    """-i d/dx1 by the fourth-order central stencil on interior rows."""
    derivative = (
        segment[:-4] - 8 * segment[1:-3] + 8 * segment[3:-1] - segment[4:]
    ) / (12 * h)
    return -1j * derivative


def annihilator_residual(
    spec: ModelSolutionSpec, values: np.ndarray, grid: CylinderGrid
) -> ResidualField:
    """
    Apply L = D_{x2} - lambda x1 D_{x1} + i lambda to sampled values.

    D_{x2} is spectral; D_{x1} is a fourth-order finite difference inside each
    segment, so the two outermost rows at both ends of a segment are skipped.
    """
    values = np.asarray(values, dtype=complex)
    if values.shape != (2 * grid.n1, grid.n2):
        raise InvalidArgumentError(
            f"values of shape {values.shape} do not match grid {(2 * grid.n1, grid.n2)}"
        )
    lam_eff = spec.lam_eff
    k = fft.fftfreq(grid.n2, d=1.0 / grid.n2)
    d_x2 = fft.ifft(k * fft.fft(values, axis=1), axis=1)
    x1 = grid.x1

    pieces, rows = [], []
    for segment in (slice(0, grid.n1), slice(grid.n1, 2 * grid.n1)):
        u = values[segment]
        inner = slice(segment.start + 2, segment.stop - 2)
        lu = (
            d_x2[inner]
            - lam_eff * x1[inner, None] * _d_x1(u, grid.spacing)
            + 1j * lam_eff * values[inner]
        )
        pieces.append(lu)
        rows.append(x1[inner])
    return ResidualField(np.concatenate(rows), np.concatenate(pieces))


def trace_weight(modes, lam_eff: float, side: int, delta: float) -> np.ndarray:
    """alpha(k / lambda) (s delta + i0)^{-1 + i k / lambda}, the trace of one unit coefficient."""
    if side not in (1, -1):
        raise InvalidArgumentError(f"side must be +1 or -1, got {side}")
    if not 0 < delta <= 1:
        raise InvalidArgumentError(f"delta must lie in (0, 1], got {delta}")
    modes = np.asarray(modes, dtype=float)
    z = -1.0 + 1j * modes / lam_eff
    return alpha(modes / lam_eff).value * boundary_power(side * delta, z)


@dataclass
class SymbolRecovery:
    """Recovered a(k) with the modes whose trace weight underflowed."""

    coeffs: np.ndarray
    dropped: List[int]


def section_to_symbol(
    trace: np.ndarray,
    lam: float,
    side: int,
    delta: float,
    kind: str = SINK,
) -> SymbolRecovery:
    """
    Invert the trace map at x1 = side * delta.

    Args:
        trace: Circle coefficients c(k), k = -K..K
        lam: Lyapunov exponent of the cycle
        side: +1 or -1, the side of the cycle the trace was taken on
        delta: Distance to the cycle in (0, 1]
        kind: 'sink' or 'source'

    Returns:
        SymbolRecovery; modes whose weight is below 1e-12 come back as 0
    """
    trace = np.asarray(trace, dtype=complex)
    if trace.ndim != 1 or len(trace) % 2 == 0:
        raise InvalidArgumentError("trace must cover modes -K..K")
    modes = np.arange(len(trace)) - (len(trace) - 1) // 2
    weight = trace_weight(modes, effective_lambda(lam, kind), side, delta)
    small = np.abs(weight) < WEIGHT_FLOOR
    coeffs = np.where(small, 0.0, trace / np.where(small, 1.0, weight))
    dropped = [int(k) for k in modes[small]]
    if dropped:
        logger.warning(f"Dropped modes {dropped}: trace weight below {WEIGHT_FLOOR:g}")
    return SymbolRecovery(coeffs, dropped)


def extrapolate_symbol(
    traces: Sequence[np.ndarray],
    deltas: Sequence[float],
    lam: float,
    side: int,
    kind: str = SINK,
) -> SymbolRecovery:
    """
    Recover a(k) from traces on a delta ladder.

    Smooth contamination turns the single-delta estimate into
    a + sum_j b_j delta^{j - i k / lambda}; with m deltas the first m - 1
    correction terms are eliminated per mode by least squares.
    """
    if len(traces) != len(deltas) or not deltas:
        raise InvalidArgumentError("one trace per ladder entry is required")
    lam_eff = effective_lambda(lam, kind)
    estimates = [section_to_symbol(t, lam, side, d, kind) for t, d in zip(traces, deltas)]
    dropped = sorted({k for e in estimates for k in e.dropped})
    stacked = np.stack([e.coeffs for e in estimates])
    if len(deltas) == 1:
        return SymbolRecovery(stacked[0], dropped)

    n_modes = stacked.shape[1]
    modes = np.arange(n_modes) - (n_modes - 1) // 2
    deltas = np.asarray(deltas, dtype=float)
    coeffs = np.zeros(n_modes, dtype=complex)
    for col, k in enumerate(modes):
        if k in dropped:
            continue
        exponents = np.arange(1, len(deltas)) - 1j * k / lam_eff
        design = np.column_stack(
            [np.ones(len(deltas), dtype=complex), deltas[:, None] ** exponents[None, :]]
        )
        solution, *_ = linalg.lstsq(design, stacked[:, col])
        coeffs[col] = solution[0]
    return SymbolRecovery(coeffs, dropped)


@dataclass
class CylinderSolution:
    """
    A radial cycle's model solution on the cylinder: outgoing (sink) branch plus
    incoming (source) branch.

    Both branches solve L = D_{x2} - lambda x1 D_{x1} + i lambda. The source
    branch is the source-kind model reflected through (x1, x2) -> (-x1, -x2),
    which carries it onto the negative x1-frequencies of the same operator.
    """

    sink: Optional[ModelSolutionSpec] = None
    source: Optional[ModelSolutionSpec] = None

    def __post_init__(self):
        branches = self.branches
        if not branches:
            raise InvalidArgumentError("a cylinder solution needs at least one branch")
        for kind, spec in ((SINK, self.sink), (SOURCE, self.source)):
            if spec is not None and spec.kind != kind:
                raise InvalidArgumentError(f"the {kind} branch has kind '{spec.kind}'")
        if len({(s.lam, s.ks) for s in branches}) != 1:
            raise InvalidArgumentError("both branches need the same lambda and ks")

    @property
    def branches(self) -> List[ModelSolutionSpec]:
        return [s for s in (self.sink, self.source) if s is not None]

    @property
    def lam(self) -> float:
        return self.branches[0].lam

    def values(self, grid: CylinderGrid) -> np.ndarray:
        total = np.zeros((2 * grid.n1, grid.n2), dtype=complex)
        if self.sink is not None:
            total += evaluate_model(self.sink, grid)
        if self.source is not None:
            mirrored = evaluate_model(self.source, grid)[::-1, ::-1]
            total += np.roll(mirrored, 1, axis=1)
        return total

    def data(self, kind: str, delta: float) -> np.ndarray:
        """Section data f = lambda a of one branch, read off its trace at x1 = delta."""
        spec = self.sink if kind == SINK else self.source
        if spec is None:
            return np.zeros(2 * self.branches[0].ks + 1, dtype=complex)
        trace = model_trace(spec, delta)
        return spec.lam * section_to_symbol(trace, spec.lam, 1, delta, kind).coeffs


def _flux_cutoff(grid: CylinderGrid) -> np.ndarray:
    """chi'(x1) for chi = 1 near x1 = 0, switching off over the middle half of each segment."""
    span = grid.outer - grid.inner
    start, stop = grid.inner + span / 4, grid.outer - span / 4
    distance = np.abs(grid.x1)
    return -np.sign(grid.x1) * smooth_step_prime((stop - distance) / (stop - start)) / (
        stop - start
    )


def model_boundary_pairing(
    u1: CylinderSolution,
    u2: CylinderSolution,
    grid: Optional[CylinderGrid] = None,
    delta: float = 1.0,
) -> PairingReport:
    """
    Boundary pairing of two model solutions of the same cycle.

    Left: B = <[P, chi] u1, u2> for a cutoff chi(x1) equal to 1 near the cycle,
    computed from sampled values. With P u = 0 this is, per x2-mode k != 0,

        (2 pi i lambda^2 / k) int chi'(x1) x1^2 u1_k(x1) conj(u2_k(x1)) dx1,

    integrated by Simpson's rule over both segments of the grid. Right:
    -i (<f1+, f2+> - <f1-, f2->) / lambda with f = lambda a read off the traces
    of each branch at x1 = delta.

    Mode k = 0 has no x1-flux on the cylinder, so both solutions must vanish there.
    """
    if u1.lam != u2.lam or u1.branches[0].ks != u2.branches[0].ks:
        raise InvalidArgumentError("model pairing needs two solutions of the same cycle")
    lam = u1.lam
    ks = u1.branches[0].ks
    if any(spec.coeffs[ks] != 0 for u in (u1, u2) for spec in u.branches):
        raise InvalidArgumentError("mode k = 0 carries no cylinder flux; set a(0) = 0")
    grid = grid or CylinderGrid(201, max(16, 4 * ks + 4))

    k = fft.fftfreq(grid.n2, d=1.0 / grid.n2)
    c1 = fft.fft(u1.values(grid), axis=1) / grid.n2
    c2 = fft.fft(u2.values(grid), axis=1) / grid.n2
    density = (grid.x1**2 * _flux_cutoff(grid))[:, None] * c1 * np.conj(c2)
    flux = sum(
        integrate.simpson(density[segment], x=grid.x1[segment], axis=0)
        for segment in (slice(0, grid.n1), slice(grid.n1, 2 * grid.n1))
    )
    nonzero = k != 0
    left = 2j * np.pi * lam**2 * np.sum(flux[nonzero] / k[nonzero])

    outgoing = np.sum(u1.data(SINK, delta) * np.conj(u2.data(SINK, delta)))
    incoming = np.sum(u1.data(SOURCE, delta) * np.conj(u2.data(SOURCE, delta)))
    right = -1j * (outgoing - incoming) / lam
    report = PairingReport(complex(left), complex(right))
    logger.debug(f"Model pairing: left {report.left:.6g}, right {report.right:.6g}")
    return report
