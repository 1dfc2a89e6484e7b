"""
Microlocal solutions, the Poisson operator and the scattering matrix.

Incoming data f on the source circles is turned into an approximate solution
u0 concentrated on the sources' Lagrangians, corrected by the limiting
absorption resolvent, and read back as outgoing data on the sink circles.
Section phases follow the dynamics module: z = x2 + ln|x1loc| / lambda_eff.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import fft

from .core.config import RunConfig
from .core.errors import (
    GeometryError,
    InvalidArgumentError,
    OutOfBandError,
    ZeroScatterError,
)
from .core.logging_config import get_logger
from .core.models import PairingReport, ScatteringDataVector, section_modes
from .data.field_dump import coo_frame
from .dynamics import (
    SINK,
    SOURCE,
    LimitCycle,
    ScatteringRelationTable,
    find_cycles,
    section_point,
    CosphereFlow,
    transport_phase,
    wrap_angle,
)
from .fields import SpectralField, TorusGrid, high_frequency_fraction
from .normalform import t_multiplier
from .psido import (
    ConvergenceReport,
    OperatorMatrix,
    Projector,
    ShiftedSolver,
    assemble,
    apply,
    eigencheck,
    estimate_level_spacing,
    limiting_absorption,
    regularized_boundary_form,
)
from .symbols import SymbolDescriptor, smooth_step

logger = get_logger(__name__)

SMOOTH_EIGENVECTOR = 1e-6
PLATEAU_SHARE = 0.25
SERIES_SHARE = 0.9
READ_SHARE = 0.3
INCONCLUSIVE_MASS = 1e-3
PACKET_SAMPLES = 256


@dataclass
class ScatteringProblem:
    """Everything a scattering run shares across its columns."""

    config: RunConfig
    spec: SymbolDescriptor
    operator: OperatorMatrix
    sources: List[LimitCycle]
    sinks: List[LimitCycle]
    solver: ShiftedSolver
    projector: Optional[Projector] = None
    level_spacing: Optional[float] = None
    require_monotone: bool = True

    @classmethod
    def build(cls, config: RunConfig, require_monotone: bool = True) -> "ScatteringProblem":
        """
        Assemble the operator, locate the cycles and clear embedded eigenvalues.

        Eigenvectors found in ``omega + eigen_window`` count as embedded when
        they are smooth (negligible mass above half the band); the others
        discretize continuous spectrum and are left alone.
        """
        spec = SymbolDescriptor.from_config(config.symbol)
        grid = TorusGrid(config.n1, config.n2)
        operator = assemble(spec, grid)
        cycles = find_cycles(spec.principal(), config.omega, seeds=config.seeds)
        sinks = [c for c in cycles if c.kind == SINK]
        sources = [c for c in cycles if c.kind == SOURCE]

        low, high = config.eigen_window
        pairs = eigencheck(operator, (config.omega + low, config.omega + high), config.eigen_count)
        embedded = [p for p in pairs if high_frequency_fraction(p.field) < SMOOTH_EIGENVECTOR]
        projector = None
        if embedded:
            projector = Projector.from_eigenpairs(embedded)
            values = ", ".join(f"{p.value:.3e}" for p in embedded)
            logger.info(f"Projecting off {projector.rank} embedded eigenvector(s) at {values}")

        spacing = config.level_spacing
        if spacing is None:
            spacing = estimate_level_spacing(operator, config.omega)
        return cls(
            config,
            spec,
            operator,
            sources,
            sinks,
            ShiftedSolver(operator),
            projector,
            spacing,
            require_monotone,
        )

    @property
    def grid(self) -> TorusGrid:
        return self.operator.grid

    @property
    def omega(self) -> float:
        return self.config.omega

    @property
    def ks(self) -> int:
        return self.config.ks

    def lambdas(self, cycles: Sequence[LimitCycle]) -> np.ndarray:
        return np.array([c.lam for c in cycles])

    def ids(self, cycles: Sequence[LimitCycle]) -> Tuple[str, ...]:
        return tuple(c.id for c in cycles)


@dataclass
class MicrolocalSolution:
    """A field together with its defect g = (A - omega) u."""

    field: SpectralField
    defect: SpectralField
    cycle_ids: Tuple[str, ...]
    report: Optional[ConvergenceReport] = None

    @property
    def smoothness(self) -> float:
        """High-frequency share of the defect."""
        return high_frequency_fraction(self.defect)


def _fiber_sign(cycle: LimitCycle) -> int:
    sign = int(np.sign(np.cos(cycle.anchor.theta)))
    if sign == 0:
        raise GeometryError(f"{cycle.id} has a vertical fiber direction")
    return sign


def _lambda_eff(cycle: LimitCycle) -> float:
    return cycle.lam if cycle.kind == SINK else -cycle.lam


def _taper(t):
    """1 on [0, 1/2], 0 from 1 on."""
    return smooth_step(2.0 - 2.0 * np.asarray(t, dtype=float))


def _check_windows(cycles: Sequence[LimitCycle], window: float) -> None:
    for i, a in enumerate(cycles):
        for b in cycles[i + 1:]:
            if _fiber_sign(a) != _fiber_sign(b):
                continue
            if abs(wrap_angle(a.anchor.x1 - b.anchor.x1)) < 2 * window:
                raise GeometryError(
                    f"windows of {a.id} and {b.id} overlap with the same fiber direction"
                )


def _circle_values(coeffs: np.ndarray, samples: int = PACKET_SAMPLES) -> np.ndarray:
    """Samples on z_j = 2 pi j / samples of sum_k c(k) e^{ikz}, k = -K..K."""
    ks = (coeffs.shape[-1] - 1) // 2
    spectrum = np.zeros(coeffs.shape[:-1] + (samples,), dtype=complex)
    spectrum[..., np.arange(-ks, ks + 1) % samples] = coeffs
    return fft.ifft(spectrum, axis=-1) * samples


def _circle_coeffs(values: np.ndarray, ks: int) -> np.ndarray:
    samples = values.shape[-1]
    return (fft.fft(values, axis=-1) / samples)[..., np.arange(-ks, ks + 1) % samples]


def _apply_potential(
    problem: ScatteringProblem,
    cycle: LimitCycle,
    coeffs: np.ndarray,
    potential: Callable[[float, float, float], float],
) -> np.ndarray:
    """Multiply the circle data by e^{-i W} with W integrated over one period."""
    flow = CosphereFlow(problem.spec.principal(), problem.omega, time_sign=cycle.time_sign)
    start = section_point(flow, cycle, problem.config.offset, 1)
    samples = max(64, 4 * len(coeffs))
    z = 2 * np.pi * np.arange(samples) / samples
    phase = np.array(
        [
            transport_phase(
                problem.spec.principal(),
                problem.omega,
                flow.project(start[0], zj, start[2]),
                cycle.period,
                potential,
            )
            for zj in z
        ]
    )
    values = _circle_values(coeffs, samples) * np.exp(-1j * phase)
    return _circle_coeffs(values, (len(coeffs) - 1) // 2)


def incoming_ansatz(
    problem: ScatteringProblem,
    data: ScatteringDataVector,
    cycles: Optional[Sequence[LimitCycle]] = None,
    potential: Optional[Callable[[float, float, float], float]] = None,
) -> MicrolocalSolution:
    """
    Leading-order solution carrying the given data on a set of cycles.

    Near each cycle the field is

        (1/2 pi) sum_k a(k) e^{i k x2} sum_{m >= 1} tau(m / M) m^{-i k / lambda_eff} e^{i m x1loc}

    with a = f / lambda, x1loc = sign(cos theta*) (x1 - x1*) and a smooth
    taper tau, cut off in x1 by a window of half-width ``config.window``.

    Args:
        problem: Built scattering problem
        data: One row of coefficients per cycle, |k| <= Ks
        cycles: Cycles carrying the data (default: the sources)
        potential: Optional V(x1, x2, theta) whose flow integral multiplies the
            data by e^{-i W}

    Returns:
        MicrolocalSolution with the defect (A - omega) u0
    """
    cycles = problem.sources if cycles is None else list(cycles)
    if data.circles != len(cycles):
        raise InvalidArgumentError(f"{data.circles} data circles for {len(cycles)} cycles")
    grid = problem.grid
    k1max, k2max = grid.band
    if data.ks > k2max:
        raise OutOfBandError(f"section modes up to {data.ks} exceed the grid band {k2max}")
    window = problem.config.window
    _check_windows(cycles, window)

    x1, _ = grid.axes()
    top = max(2, int(SERIES_SHARE * k1max))
    m = np.arange(1, top + 1)
    taper = _taper(m / top)
    total = np.zeros(grid.shape, dtype=complex)
    for j, cycle in enumerate(cycles):
        coeffs = data.coeffs[j]
        if not np.any(coeffs):
            continue
        if potential is not None:
            coeffs = _apply_potential(problem, cycle, coeffs, potential)
        lam_eff = _lambda_eff(cycle)
        sigma = _fiber_sign(cycle)
        a = coeffs / cycle.lam
        x1loc = sigma * wrap_angle(x1 - cycle.anchor.x1)
        waves = np.exp(1j * np.outer(x1loc, m))
        profile = np.zeros((grid.n1, grid.n2), dtype=complex)
        for k, ak in zip(section_modes(data.ks), a):
            if ak == 0:
                continue
            series = waves @ (taper * m ** (-1j * k / lam_eff)) / (2 * np.pi)
            profile += np.outer(ak * series, np.exp(1j * k * grid.axes()[1]))
        cutoff = smooth_step((window - np.abs(x1loc)) / ((1 - PLATEAU_SHARE) * window))
        total += cutoff[:, None] * profile

    u0 = SpectralField.from_values(grid, total)
    defect = apply(problem.operator, u0) - u0 * problem.omega
    return MicrolocalSolution(u0, defect, tuple(c.id for c in cycles))


def poisson(
    problem: ScatteringProblem,
    data: ScatteringDataVector,
    outgoing: bool = False,
    potential: Optional[Callable[[float, float, float], float]] = None,
) -> MicrolocalSolution:
    """
    Poisson operator: u = u0 - (A - omega -+ i0)^{-1} (A - omega) u0.

    The incoming construction puts the ansatz on the sources and uses
    (A - omega - i0)^{-1}; ``outgoing`` mirrors it onto the sinks with
    (A - omega + i0)^{-1}. When embedded eigenvectors were detected the data
    and the solution are projected off them.
    """
    cycles = problem.sinks if outgoing else problem.sources
    ansatz = incoming_ansatz(problem, data, cycles, potential)
    if not np.any(ansatz.field.coeffs):
        zero = SpectralField.zeros(problem.grid)
        return MicrolocalSolution(zero, zero, ansatz.cycle_ids)

    correction = limiting_absorption(
        problem.operator,
        problem.omega,
        ansatz.defect,
        problem.config.epsilons,
        s=problem.config.sobolev,
        level_spacing=problem.level_spacing,
        require_monotone=problem.require_monotone,
        sign=-1 if outgoing else 1,
        solver=problem.solver,
        projector=problem.projector,
    )
    u0 = ansatz.field
    if problem.projector is not None:
        u0 = problem.projector.apply(u0)
    u = u0 - correction.solution
    defect = apply(problem.operator, u) - u * problem.omega
    return MicrolocalSolution(u, defect, ansatz.cycle_ids, correction.report)


def reading_frequencies(grid: TorusGrid, deltas: Sequence[float]) -> np.ndarray:
    """
    Frequencies m at which each rung of the delta ladder reads the symbol.

    The finest delta is read at READ_SHARE of the x1 band and the others scale
    as 1 / delta; mode k then sits at distance |k| / (lambda m) from the cycle.
    """
    top = max(1, int(READ_SHARE * grid.band[0]))
    finest = min(deltas)
    return np.array([max(1, int(round(top * finest / d))) for d in deltas])


def _localizer(problem: ScatteringProblem, cycle: LimitCycle) -> np.ndarray:
    """x1 profile that keeps the cycle and drops every other cycle of its fiber sign."""
    plateau = PLATEAU_SHARE * problem.config.window
    sigma = _fiber_sign(cycle)
    reach = np.pi
    for other in problem.sources + problem.sinks:
        if other.id == cycle.id or _fiber_sign(other) != sigma:
            continue
        reach = min(reach, abs(wrap_angle(other.anchor.x1 - cycle.anchor.x1)) - plateau)
    if reach <= plateau:
        raise GeometryError(
            f"{cycle.id} is within {2 * plateau:.3f} of a cycle with the same fiber direction"
        )
    x1, _ = problem.grid.axes()
    return smooth_step((reach - np.abs(wrap_angle(x1 - cycle.anchor.x1))) / (reach - plateau))


def _fit_symbol(readings: np.ndarray, m: np.ndarray) -> np.ndarray:
    """Least-squares a + b / m over the ladder, per mode; returns a."""
    m, first = np.unique(m, return_index=True)
    readings = readings[first]
    if len(m) == 1:
        return readings[0]
    design = np.stack([np.ones(len(m)), 1.0 / m], axis=1)
    solution, *_ = np.linalg.lstsq(design, readings, rcond=None)
    return solution[0]


def extract_data(
    problem: ScatteringProblem,
    u: SpectralField,
    cycles: Optional[Sequence[LimitCycle]] = None,
    deltas: Optional[Sequence[float]] = None,
) -> ScatteringDataVector:
    """
    Read circle data f_j(k) = lambda_j a_j(k) off a field near each cycle.

    The field is localized in x1 around the cycle and its principal symbol is
    read on the cycle's frequency half-line,

        a(k) ~ 2 pi u^(sigma m, k) e^{i sigma m x1*} m^{i k / lambda_eff},

    at the ladder frequencies m of ``reading_frequencies``; a fit in 1 / m
    removes the lower-order remainder.

    Args:
        problem: Built scattering problem
        u: Field on the problem grid
        cycles: Cycles to read (default: the sinks)
        deltas: Ladder (default: ``config.deltas``)

    Returns:
        ScatteringDataVector over the cycles
    """
    cycles = problem.sinks if cycles is None else list(cycles)
    deltas = list(problem.config.deltas if deltas is None else deltas)
    ks = problem.ks
    lambdas = problem.lambdas(cycles)
    if not cycles:
        return ScatteringDataVector(np.zeros((0, len(section_modes(ks)))), ks, lambdas)
    grid = problem.grid
    k1max, k2max = grid.band
    if ks > k2max:
        raise OutOfBandError(f"section modes up to {ks} exceed the grid band {k2max}")

    modes = section_modes(ks)
    coeffs = np.zeros((len(cycles), len(modes)), dtype=complex)
    if ks == 0:
        return ScatteringDataVector(coeffs, ks, lambdas, problem.ids(cycles))

    m = reading_frequencies(grid, deltas)
    plateau = PLATEAU_SHARE * problem.config.window
    values = u.values()
    for j, cycle in enumerate(cycles):
        reach = ks / (cycle.lam * m.min())
        if reach > plateau:
            raise GeometryError(
                f"mode {ks} read at m = {m.min()} sits {reach:.3f} from {cycle.id}, "
                f"beyond the window plateau {plateau:.3f}"
            )
        sigma = _fiber_sign(cycle)
        local = SpectralField.from_values(grid, _localizer(problem, cycle)[:, None] * values)
        rows = local.coeffs[sigma * m + k1max][:, modes + k2max]
        kappa = modes[None, :] / _lambda_eff(cycle)
        phase = np.exp(1j * sigma * m * cycle.anchor.x1)[:, None]
        readings = 2 * np.pi * rows * phase * m[:, None] ** (1j * kappa)
        coeffs[j] = cycle.lam * _fit_symbol(readings, m)
        logger.debug(f"{cycle.id}: symbol read at m = {m.tolist()}")
    return ScatteringDataVector(coeffs, ks, lambdas, problem.ids(cycles))


def boundary_pairing(
    problem: ScatteringProblem,
    u1: MicrolocalSolution,
    u2: MicrolocalSolution,
    data1: Optional[Tuple[ScatteringDataVector, ScatteringDataVector]] = None,
    data2: Optional[Tuple[ScatteringDataVector, ScatteringDataVector]] = None,
    radius: Optional[float] = None,
) -> PairingReport:
    """
    Both sides of the boundary pairing identity.

    Left: <(A - omega) u1, rho u2> - <rho u1, (A - omega) u2> with a radial
    low-pass rho equal to 1 up to ``radius`` (default half the band). Right:
    -i (sum over sinks of <f1, f2> / lambda minus the same over sources), the
    data being (outgoing, incoming) pairs read off the fields when not given.
    """
    if radius is None:
        radius = min(problem.grid.band) / 2
    left = regularized_boundary_form(problem.operator, problem.omega, u1.field, u2.field, radius)

    def section_data(u, given):
        if given is not None:
            return given
        return (
            extract_data(problem, u.field, problem.sinks),
            extract_data(problem, u.field, problem.sources),
        )

    out1, in1 = section_data(u1, data1)
    out2, in2 = section_data(u2, data2)

    def flux(a: ScatteringDataVector, b: ScatteringDataVector) -> complex:
        if a.circles == 0:
            return 0.0
        return complex(np.sum(a.coeffs * np.conj(b.coeffs) / a.lambdas[:, None]))

    right = -1j * (flux(out1, out2) - flux(in1, in2))
    return PairingReport(complex(left), complex(right))


@dataclass
class ScatteringMatrixNumeric:
    """Matrix acting on circle-major stacked coefficients."""

    matrix: np.ndarray
    tag: str
    omega: float
    ks: int
    source_lambdas: np.ndarray
    sink_lambdas: np.ndarray
    source_ids: Tuple[str, ...]
    sink_ids: Tuple[str, ...]
    n1: int
    n2: int

    @property
    def dimension(self) -> int:
        return self.matrix.shape[1]

    def unitarity_defect(self) -> float:
        """Spectral norm of S^* S - I (0 for the empty matrix)."""
        if self.matrix.size == 0:
            return 0.0
        gram = self.matrix.conj().T @ self.matrix
        return float(np.linalg.norm(gram - np.eye(gram.shape[0]), 2))

    def weighted_defect(self) -> float:
        """Unitarity defect between the section-density weighted L^2 spaces."""
        if self.matrix.size == 0:
            return 0.0
        n_modes = len(section_modes(self.ks))
        w_out = np.repeat(np.sqrt(2 * np.pi / self.sink_lambdas), n_modes)
        w_in = np.repeat(np.sqrt(2 * np.pi / self.source_lambdas), n_modes)
        weighted = w_out[:, None] * self.matrix / w_in[None, :]
        gram = weighted.conj().T @ weighted
        return float(np.linalg.norm(gram - np.eye(gram.shape[0]), 2))

    def column_norms(self) -> np.ndarray:
        return np.linalg.norm(self.matrix, axis=0)

    def apply(self, f: ScatteringDataVector) -> ScatteringDataVector:
        out = ScatteringDataVector.zeros(self.sink_lambdas, self.ks, self.sink_ids)
        return out.with_stacked(self.matrix @ f.stacked())

    def labels(self, count: int) -> List[Tuple[int, int]]:
        return [(j, int(k)) for j in range(count) for k in section_modes(self.ks)]

    def to_frame(self) -> pd.DataFrame:
        """Coordinate listing with (circle, mode) labels on rows and columns."""
        return coo_frame(
            self.matrix, self.labels(len(self.sink_ids)), self.labels(len(self.source_ids))
        )

    def to_report(self) -> Dict[str, Any]:
        return {
            "omega": self.omega,
            "n": [self.n1, self.n2],
            "Ks": self.ks,
            "tag": self.tag,
            "defect": self.unitarity_defect(),
            "weighted_defect": self.weighted_defect(),
            "sources": list(self.source_ids),
            "sinks": list(self.sink_ids),
            "source_lambdas": [float(v) for v in self.source_lambdas],
            "sink_lambdas": [float(v) for v in self.sink_lambdas],
            "column_norms": [float(v) for v in self.column_norms()],
        }


def scattering_matrix(problem: ScatteringProblem, workers: Optional[int] = None) -> ScatteringMatrixNumeric:
    """
    Column m of S is the sink data of poisson(e_m), e_m one mode on one source circle.

    Columns run on a thread pool sharing the cached factorizations and are
    stored by index, so the result does not depend on the worker count.
    """
    workers = workers or problem.config.workers
    source_lambdas = problem.lambdas(problem.sources)
    sink_lambdas = problem.lambdas(problem.sinks)
    modes = section_modes(problem.ks)
    basis = [(j, int(k)) for j in range(len(problem.sources)) for k in modes]
    rows = len(problem.sinks) * len(modes)
    matrix = np.zeros((rows, len(basis)), dtype=complex)

    def column(index: int) -> np.ndarray:
        circle, mode = basis[index]
        column_id = f"{problem.sources[circle].id}:k={mode}"
        try:
            e = ScatteringDataVector.basis(
                source_lambdas, problem.ks, circle, mode, problem.ids(problem.sources)
            )
            solution = poisson(problem, e)
            values = extract_data(problem, solution.field, problem.sinks).stacked()
        except ZeroScatterError as exc:
            logger.error(f"Column {column_id} failed: {exc}")
            exc.column = column_id
            raise
        logger.info(f"Column {index + 1}/{len(basis)} ({column_id}) done")
        return values

    if basis:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for index, values in enumerate(pool.map(column, range(len(basis)))):
                matrix[:, index] = values

    result = ScatteringMatrixNumeric(
        matrix,
        "raw",
        problem.omega,
        problem.ks,
        source_lambdas,
        sink_lambdas,
        problem.ids(problem.sources),
        problem.ids(problem.sinks),
        problem.grid.n1,
        problem.grid.n2,
    )
    logger.info(f"Scattering matrix {matrix.shape}: unitarity defect {result.unitarity_defect():.3e}")
    return result


def _phase_vector(lambdas: np.ndarray, ks: int, ids: Tuple[str, ...]) -> np.ndarray:
    """Diagonal of T on stacked coefficients."""
    ones = ScatteringDataVector(np.ones((len(lambdas), len(section_modes(ks)))), ks, lambdas, ids)
    return t_multiplier(ones).stacked()


def conjugate(s: ScatteringMatrixNumeric) -> ScatteringMatrixNumeric:
    """S_rel = (T+)^* S T-."""
    if s.tag != "raw":
        raise InvalidArgumentError(f"conjugate expects a raw matrix, got '{s.tag}'")
    if s.matrix.size == 0:
        relative = s.matrix.copy()
    else:
        t_out = _phase_vector(s.sink_lambdas, s.ks, s.sink_ids)
        t_in = _phase_vector(s.source_lambdas, s.ks, s.source_ids)
        relative = np.conj(t_out)[:, None] * s.matrix * t_in[None, :]
    return ScatteringMatrixNumeric(
        relative,
        "relative",
        s.omega,
        s.ks,
        s.source_lambdas,
        s.sink_lambdas,
        s.source_ids,
        s.sink_ids,
        s.n1,
        s.n2,
    )


def gauge_shift(
    s: ScatteringMatrixNumeric, circle: int, phi: float, side: str = SOURCE
) -> ScatteringMatrixNumeric:
    """Move the phase origin of one section circle by phi."""
    modes = section_modes(s.ks)
    n_modes = len(modes)
    if side == SOURCE:
        count = len(s.source_ids)
    elif side == SINK:
        count = len(s.sink_ids)
    else:
        raise InvalidArgumentError(f"side must be '{SOURCE}' or '{SINK}', got {side!r}")
    if not 0 <= circle < count:
        raise InvalidArgumentError(f"circle {circle} outside 0..{count - 1}")
    phases = np.ones(count * n_modes, dtype=complex)
    phases[circle * n_modes:(circle + 1) * n_modes] = np.exp(1j * modes * phi)
    if side == SOURCE:
        matrix = s.matrix * phases[None, :]
    else:
        matrix = phases[:, None] * s.matrix
    return ScatteringMatrixNumeric(
        matrix, s.tag, s.omega, s.ks, s.source_lambdas, s.sink_lambdas,
        s.source_ids, s.sink_ids, s.n1, s.n2,
    )


@dataclass
class FioReport:
    per_packet: List[Dict[str, Any]] = field(default_factory=list)
    position_fraction: float = 0.0
    branch_fraction: float = 0.0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "per_packet": self.per_packet,
            "position_fraction": self.position_fraction,
            "branch_fraction": self.branch_fraction,
        }


def coherent_state(ks: int, y0: float, eta0: int, width: float) -> np.ndarray:
    """Coefficients |k| <= ks of a periodized Gaussian at y0 oscillating at eta0."""
    z = 2 * np.pi * np.arange(PACKET_SAMPLES) / PACKET_SAMPLES
    values = np.zeros(PACKET_SAMPLES, dtype=complex)
    for n in (-1, 0, 1):
        offset = z - y0 + 2 * np.pi * n
        values += np.exp(-(offset**2) / (2 * width**2))
    values *= np.exp(1j * eta0 * z)
    return _circle_coeffs(values, ks)


def fio_check(
    s_rel: ScatteringMatrixNumeric,
    relation: ScatteringRelationTable,
    eta0: Optional[int] = None,
    centers: int = 8,
    width: float = 0.6,
) -> FioReport:
    """
    Transport coherent states through S_rel and compare with the flow.

    For every source circle, center y0 and frequency +-eta0 the output's
    dominant sink circle, circular center of mass y* and dominant frequency
    are compared with the relation row predicted for the branch
    sign(eta0 * lambda_eff). Outputs carrying less than 1e-3 of the input
    mass are flagged inconclusive.
    """
    ks = s_rel.ks
    if s_rel.matrix.size == 0:
        return FioReport()
    eta0 = eta0 if eta0 is not None else max(1, ks // 2)
    if eta0 == 0 or abs(eta0) > ks:
        raise InvalidArgumentError(f"packet frequency must satisfy 0 < |eta0| <= {ks}")
    modes = section_modes(ks)
    n_modes = len(modes)
    tolerance = 2 * np.pi / ks
    z = 2 * np.pi * np.arange(PACKET_SAMPLES) / PACKET_SAMPLES

    packets = []
    for circle, source in enumerate(s_rel.source_ids):
        for y0 in 2 * np.pi * np.arange(centers) / centers:
            for eta in (eta0, -eta0):
                coeffs = coherent_state(ks, y0, eta, width)
                f = np.zeros(len(s_rel.source_ids) * n_modes, dtype=complex)
                f[circle * n_modes:(circle + 1) * n_modes] = coeffs
                out = (s_rel.matrix @ f).reshape(len(s_rel.sink_ids), n_modes)
                masses = np.sum(np.abs(out) ** 2, axis=1)
                entry = {
                    "source": source,
                    "y0": float(y0),
                    "eta0": int(eta),
                    "conclusive": bool(masses.max() >= INCONCLUSIVE_MASS * np.sum(np.abs(coeffs) ** 2)),
                }
                # source lambda_eff is negative
                side = int(np.sign(-eta))
                row = relation.lookup(source, side)
                if entry["conclusive"]:
                    target = int(np.argmax(masses))
                    values = np.abs(_circle_values(out[target])) ** 2
                    ystar = float(np.angle(np.sum(values * np.exp(1j * z))))
                    etastar = int(modes[np.argmax(np.abs(out[target]))])
                    predicted = float(row.image(y0))
                    err = float(abs(wrap_angle(ystar - predicted)))
                    entry.update(
                        {
                            "sink": s_rel.sink_ids[target],
                            "ystar": ystar,
                            "predicted": float(wrap_angle(predicted)),
                            "err": err,
                            "position_ok": err <= tolerance,
                            "branch_ok": s_rel.sink_ids[target] == row.sink
                            and int(np.sign(etastar)) == row.sink_side,
                        }
                    )
                else:
                    logger.warning(f"Packet ({source}, y0={y0:.3f}, eta0={eta}) is inconclusive")
                packets.append(entry)

    conclusive = [p for p in packets if p["conclusive"]]
    report = FioReport(packets)
    if conclusive:
        report.position_fraction = float(np.mean([p["position_ok"] for p in conclusive]))
        report.branch_fraction = float(np.mean([p["branch_ok"] for p in conclusive]))
    logger.info(
        f"FIO check: {len(conclusive)}/{len(packets)} conclusive, "
        f"position {report.position_fraction:.2%}, branch {report.branch_fraction:.2%}"
    )
    return report
