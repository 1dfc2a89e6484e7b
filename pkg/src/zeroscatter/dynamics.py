"""
Rescaled Hamiltonian flow on the cosphere bundle of the torus.

Points are (x1, x2, theta) with xi = (cos theta, sin theta). For a degree-0
homogeneous symbol p the flow X has components

    dx/dt     = d_xi p(x, xi)
    dtheta/dt = sin(theta) d_x1 p - cos(theta) d_x2 p

and preserves the energy surface {p = omega}. Limit cycles are located as
fixed points of the return map to the section x2 = const, integrated in the
direction in which the cycle attracts.
"""

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import integrate as ode

from .core.errors import (
    AssumptionViolationError,
    BudgetError,
    DomainError,
    DriftError,
    GeometryError,
    InvalidArgumentError,
    NoConvergenceError,
    NonHyperbolicError,
    StepSizeError,
    UnsupportedFamilyError,
)
from .core.logging_config import get_logger
from .symbols import SymbolDescriptor

logger = get_logger(__name__)

SINK = "sink"
SOURCE = "source"
START_TOLERANCE = 1e-8
DRIFT_LIMIT = 1e-6
REGULAR_FLOOR = 1e-8
CLUSTER_RADIUS = 1e-2
DEDUPE_RADIUS = 1e-6
NEWTON_TOLERANCE = 1e-10
NEWTON_ITERATIONS = 30
RETURN_TIME_LIMIT = 200.0
TWO_PI = 2 * np.pi


def wrap_angle(a):
    """Reduce to (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(a, dtype=float), TWO_PI)


def angle_distance(a1, t1, a2, t2) -> float:
    """Circular distance between (x1, theta) pairs."""
    return float(np.hypot(wrap_angle(a1 - a2), wrap_angle(t1 - t2)))


@dataclass(frozen=True)
class CospherePoint:
    x1: float
    x2: float
    theta: float

    def __post_init__(self):
        for name in ("x1", "x2", "theta"):
            object.__setattr__(self, name, float(wrap_angle(getattr(self, name))))

    @classmethod
    def from_state(cls, y: Sequence[float]) -> "CospherePoint":
        return cls(y[0], y[1], y[2])

    def state(self) -> np.ndarray:
        return np.array([self.x1, self.x2, self.theta])


def _as_state(point) -> np.ndarray:
    if isinstance(point, CospherePoint):
        return point.state()
    y = np.asarray(point, dtype=float)
    if y.shape != (3,):
        raise InvalidArgumentError(f"cosphere points have 3 coordinates, got {y.shape}")
    return y


def rescaled_field(spec: SymbolDescriptor, point) -> np.ndarray:
    """
    The rescaled Hamiltonian vector field at a cosphere point.

    Args:
        spec: Degree-0 homogeneous symbol
        point: CospherePoint or (x1, x2, theta)

    Returns:
        Array (dx1/dt, dx2/dt, dtheta/dt)
    """
    if not spec.homogeneous:
        raise UnsupportedFamilyError(
            f"family '{spec.family}' is not homogeneous; use its principal() symbol"
        )
    x1, x2, theta = _as_state(point)
    c, s = np.cos(theta), np.sin(theta)
    g = spec.gradient(x1, x2, c, s)
    return np.array([g.dxi1, g.dxi2, s * g.dx1 - c * g.dx2])


@dataclass
class Trajectory:
    t: np.ndarray
    states: np.ndarray
    drift: float

    @property
    def final(self) -> CospherePoint:
        return CospherePoint.from_state(self.states[-1])


@dataclass
class Return:
    """One passage from a section x2 = c back to x2 = c +- 2 pi."""

    state: np.ndarray
    time: float
    variation: Optional[np.ndarray] = None


class CosphereFlow:
    """
    The flow of a homogeneous symbol on one energy surface.

    ``time_sign = -1`` runs the reversed flow, which swaps sinks and sources.
    """

    def __init__(
        self,
        spec: SymbolDescriptor,
        omega: float = 0.0,
        time_sign: int = 1,
        rtol: float = 1e-12,
        atol: float = 1e-12,
    ):
        if not spec.homogeneous:
            raise UnsupportedFamilyError(
                f"family '{spec.family}' is not homogeneous; use its principal() symbol"
            )
        if time_sign not in (1, -1):
            raise InvalidArgumentError(f"time_sign must be +1 or -1, got {time_sign}")
        self.spec = spec
        self.omega = float(omega)
        self.time_sign = time_sign
        self.rtol = rtol
        self.atol = atol

    def level(self, y) -> float:
        x1, x2, theta = y[0], y[1], y[2]
        return float(self.spec.evaluate(x1, x2, np.cos(theta), np.sin(theta))) - self.omega

    def gradient(self, y) -> np.ndarray:
        """(d/dx1, d/dx2, d/dtheta) of p on the unit cosphere."""
        x1, x2, theta = y[0], y[1], y[2]
        c, s = np.cos(theta), np.sin(theta)
        g = self.spec.gradient(x1, x2, c, s)
        return np.array([g.dx1, g.dx2, -s * g.dxi1 + c * g.dxi2])

    def field(self, t, y) -> np.ndarray:
        return self.time_sign * rescaled_field(self.spec, y[:3])

    def jacobian(self, y, h: float = 1e-5) -> np.ndarray:
        """Central-difference Jacobian of the field."""
        y = np.asarray(y[:3], dtype=float)
        columns = []
        for i in range(3):
            step = np.zeros(3)
            step[i] = h
            columns.append((self.field(0.0, y + step) - self.field(0.0, y - step)) / (2 * h))
        return np.column_stack(columns)

    def _variational(self, t, z) -> np.ndarray:
        return np.concatenate([self.field(t, z), self.jacobian(z) @ z[3:]])

    def tangent(self, y) -> np.ndarray:
        """Unit tangent (dx1, dtheta) of the level curve in the slice x2 = const."""
        g = self.gradient(y)
        t = np.array([-g[2], g[0]])
        norm = np.linalg.norm(t)
        if norm < REGULAR_FLOOR:
            raise AssumptionViolationError(
                f"omega={self.omega} is not a regular value near {CospherePoint.from_state(y)}"
            )
        return t / norm

    def check_regular(self, y) -> None:
        if np.linalg.norm(self.gradient(y)) < REGULAR_FLOOR:
            raise AssumptionViolationError(
                f"critical point of p on the energy surface at {CospherePoint.from_state(y)}: "
                "the flow has a fixed point"
            )

    def project(self, x1: float, x2: float, theta: float, iterations: int = 20) -> np.ndarray:
        """Move (x1, theta) onto {p = omega} along the gradient, x2 fixed."""
        y = np.array([x1, x2, theta], dtype=float)
        for _ in range(iterations):
            value = self.level(y)
            if abs(value) <= 1e-14:
                return y
            g = self.gradient(y)
            weight = g[0] ** 2 + g[2] ** 2
            if weight < REGULAR_FLOOR**2:
                break
            y[0] -= value * g[0] / weight
            y[2] -= value * g[2] / weight
        if abs(self.level(y)) > 1e-12:
            raise NoConvergenceError(
                f"projection onto p = {self.omega} stalled at residual {self.level(y):.2e}"
            )
        return y

    def solve_theta(self, x1: float, x2: float, theta0: float) -> Optional[float]:
        """Newton in theta for p = omega at fixed x; None when it fails."""
        theta = theta0
        for _ in range(50):
            y = np.array([x1, x2, theta])
            try:
                value = self.level(y)
                if abs(value) <= 1e-13:
                    return theta
                slope = self.gradient(y)[2]
            except DomainError:
                return None
            if abs(slope) < REGULAR_FLOOR:
                return None
            theta -= value / slope
        return None

    def return_map(
        self, y, direction: int, variation: Optional[np.ndarray] = None, rtol: Optional[float] = None
    ) -> Return:
        """
        Integrate until x2 has advanced by 2 pi in either sense.

        Args:
            y: Start state (x1, x2, theta)
            direction: +1 forward, -1 backward in the flow's time
            variation: Optional tangent vector carried by the linearized flow
            rtol: Override the relative tolerance

        Returns:
            Return with the landing state, the elapsed |t| and the transported
            variation with its flow component removed
        """
        y = np.asarray(y[:3], dtype=float)
        x2_start = y[1]

        def crossed(t, z):
            return abs(z[1] - x2_start) - TWO_PI

        crossed.terminal = True
        crossed.direction = 1

        if variation is None:
            rhs, z0 = self.field, y
        else:
            rhs, z0 = self._variational, np.concatenate([y, variation])
        tol = rtol or self.rtol
        sol = ode.solve_ivp(
            rhs,
            (0.0, direction * RETURN_TIME_LIMIT),
            z0,
            method="DOP853",
            rtol=tol,
            atol=min(self.atol, tol),
            events=crossed,
        )
        if sol.status == -1:
            raise NoConvergenceError(f"return-map integration failed: {sol.message}")
        if not len(sol.t_events[0]):
            raise NoConvergenceError(
                f"no return to the section within t = {RETURN_TIME_LIMIT:g}"
            )
        landing = sol.y_events[0][0]
        tau = abs(float(sol.t_events[0][0]))
        if variation is None:
            return Return(landing[:3], tau)
        v = landing[3:]
        x_dot = self.field(0.0, landing[:3])
        v = v - x_dot * (v[1] / x_dot[1])
        return Return(landing[:3], tau, v)


def integrate(
    spec: SymbolDescriptor,
    omega: float,
    start,
    t_span: Tuple[float, float],
    rtol: float = 1e-10,
    atol: float = 1e-12,
    max_drift: float = DRIFT_LIMIT,
) -> Trajectory:
    """
    Integrate the rescaled flow with an embedded 8(5,3) Runge-Kutta pair.

    The energy drift |p - omega| is checked after every accepted step; there
    is no re-projection onto the energy surface.

    Args:
        spec: Homogeneous symbol
        omega: Energy level
        start: Start point on {p = omega}
        t_span: (t0, t1); t1 < t0 integrates backward
        rtol: Relative tolerance
        atol: Absolute tolerance
        max_drift: Abort threshold for the energy drift

    Returns:
        Trajectory with every accepted step (coordinates not wrapped)
    """
    flow = CosphereFlow(spec, omega)
    y0 = _as_state(start)
    if abs(flow.level(y0)) > START_TOLERANCE:
        raise InvalidArgumentError(
            f"start point is off the energy surface: |p - omega| = {abs(flow.level(y0)):.2e}"
        )
    stepper = ode.DOP853(flow.field, t_span[0], y0, t_span[1], rtol=rtol, atol=atol)
    times, states = [t_span[0]], [y0.copy()]
    drift = 0.0
    while stepper.status == "running":
        message = stepper.step()
        if stepper.status == "failed":
            raise StepSizeError(f"integration stopped at t={stepper.t:.6g}: {message}")
        value = abs(flow.level(stepper.y))
        drift = max(drift, value)
        if value > max_drift:
            raise DriftError(
                f"energy drift {value:.2e} at t={stepper.t:.6g} exceeds {max_drift:g}",
                residual=value,
            )
        times.append(stepper.t)
        states.append(stepper.y.copy())
    return Trajectory(np.array(times), np.array(states), drift)


@dataclass
class LyapunovEstimate:
    """Transverse exponent of a cycle from two independent estimators."""

    value: float
    variational: float
    multiplier: float
    period: float


@dataclass
class LimitCycle:
    """A hyperbolic periodic orbit, anchored where it meets x2 = 0."""

    id: str
    kind: str
    anchor: CospherePoint
    period: float
    multiplier: float
    time_sign: int = 1
    lyapunov: Optional[LyapunovEstimate] = None
    samples: List[CospherePoint] = field(default_factory=list)

    @property
    def lam(self) -> float:
        if self.lyapunov is None:
            return abs(np.log(self.multiplier)) / self.period
        return self.lyapunov.value

    @property
    def contracting_direction(self) -> int:
        return 1 if self.kind == SINK else -1

    def local_offset(self, x1) -> np.ndarray:
        """Signed distance to the cycle along x1, oriented by the fiber direction."""
        return np.sign(np.cos(self.anchor.theta)) * wrap_angle(np.asarray(x1) - self.anchor.x1)


def _refine_cycle(flow: CosphereFlow, y, direction: int) -> Tuple[np.ndarray, float, float]:
    """Newton on the return map; returns (state, period, contracting multiplier)."""
    y = flow.project(*y)
    for iteration in range(NEWTON_ITERATIONS):
        ret = flow.return_map(y, direction)
        gap = np.array([wrap_angle(ret.state[0] - y[0]), wrap_angle(ret.state[2] - y[2])])
        residual = float(np.linalg.norm(gap))
        t = flow.tangent(y)
        h = 1e-6
        plus = flow.project(y[0] + h * t[0], y[1], y[2] + h * t[1])
        minus = flow.project(y[0] - h * t[0], y[1], y[2] - h * t[1])
        r_plus = flow.return_map(plus, direction).state
        r_minus = flow.return_map(minus, direction).state
        spread = t @ np.array([plus[0] - minus[0], plus[2] - minus[2]])
        derivative = t @ np.array([r_plus[0] - r_minus[0], r_plus[2] - r_minus[2]]) / spread
        logger.debug(f"Newton {iteration}: return residual {residual:.2e}, slope {derivative:.3e}")
        if residual <= NEWTON_TOLERANCE:
            return y, ret.time, derivative
        step = (t @ gap) / (1.0 - derivative)
        y = flow.project(y[0] + step * t[0], y[1], y[2] + step * t[1])
    raise NoConvergenceError(
        f"return-map Newton did not reach {NEWTON_TOLERANCE:g} in {NEWTON_ITERATIONS} steps",
        residual=residual,
    )


def _to_section(flow: CosphereFlow, y: np.ndarray, direction: int) -> np.ndarray:
    """Follow the flow to the next x2 = 0 mod 2 pi."""
    motion = np.sign(flow.field(0.0, y)[1]) * direction
    if motion == 0:
        raise GeometryError("trajectory does not cross x2 = const")
    target = (np.floor(y[1] / TWO_PI) + (1 if motion > 0 else 0)) * TWO_PI
    if abs(target - y[1]) < 1e-12:
        return y

    def hit(t, z):
        return z[1] - target

    hit.terminal = True
    sol = ode.solve_ivp(
        flow.field,
        (0.0, direction * RETURN_TIME_LIMIT),
        y,
        method="DOP853",
        rtol=1e-10,
        atol=1e-12,
        events=hit,
    )
    if not len(sol.t_events[0]):
        raise NoConvergenceError("trajectory never reached the section x2 = 0")
    landing = sol.y_events[0][0].copy()
    landing[1] = 0.0
    return landing


def _cluster(points: List[np.ndarray], radius: float) -> List[np.ndarray]:
    clusters: List[List[np.ndarray]] = []
    for p in points:
        for members in clusters:
            ref = members[0]
            if angle_distance(p[0], p[2], ref[0], ref[2]) < radius:
                members.append(p)
                break
        else:
            clusters.append([p])
    return [members[0] for members in clusters]


def _seed_points(flow: CosphereFlow, seeds: int, width: float) -> List[np.ndarray]:
    """Seed lattice in (x1, theta) at x2 = 0, projected onto the energy surface."""
    lattice = -np.pi + TWO_PI * np.arange(seeds) / seeds
    found = []
    for x1 in lattice:
        for theta in lattice:
            y = np.array([x1, 0.0, theta])
            try:
                if abs(flow.level(y)) > width:
                    continue
            except DomainError:
                continue
            theta_star = flow.solve_theta(x1, 0.0, theta)
            if theta_star is None:
                continue
            point = np.array([x1, 0.0, theta_star])
            flow.check_regular(point)
            if all(angle_distance(x1, theta_star, q[0], q[2]) > 1e-9 for q in found):
                found.append(point)
    return found


def _cycle_samples(flow: CosphereFlow, y: np.ndarray, period: float, count: int = 64):
    sol = ode.solve_ivp(
        flow.field,
        (0.0, period),
        y,
        method="DOP853",
        rtol=1e-10,
        atol=1e-12,
        t_eval=np.linspace(0.0, period, count, endpoint=False),
    )
    return [CospherePoint.from_state(s) for s in sol.y.T]


def find_cycles(
    spec: SymbolDescriptor,
    omega: float = 0.0,
    seeds: int = 8,
    t_long: float = 40.0,
    reverse_time: bool = False,
    width: float = 0.2,
) -> List[LimitCycle]:
    """
    Locate the attracting and repelling limit cycles on {p = omega}.

    Seeds on a lattice are pushed forward and backward for a long time; the
    endpoints are clustered and each cluster is refined by Newton iteration on
    the return map, run in the direction in which the cycle attracts.

    Args:
        spec: Homogeneous symbol (use ``principal()`` for the others)
        omega: Energy level
        seeds: Lattice points per axis in (x1, theta)
        t_long: Integration time for each seed and direction
        reverse_time: Work with the reversed flow (sinks and sources swap)
        width: Seeds with |p - omega| above this are discarded

    Returns:
        Sinks followed by sources, each sorted by (x1, theta)
    """
    flow = CosphereFlow(spec, omega, time_sign=-1 if reverse_time else 1)
    starts = _seed_points(flow, seeds, width)
    logger.info(f"Seeding cycle search with {len(starts)} points on p = {omega}")

    cycles = {SINK: [], SOURCE: []}
    for direction, kind in ((1, SINK), (-1, SOURCE)):
        endpoints = []
        for y in starts:
            try:
                sol = ode.solve_ivp(
                    flow.field,
                    (0.0, direction * t_long),
                    y,
                    method="DOP853",
                    rtol=1e-10,
                    atol=1e-12,
                )
                if sol.status == -1:
                    continue
                endpoints.append(_to_section(flow, sol.y[:, -1], direction))
            except (DomainError, NoConvergenceError, GeometryError) as e:
                logger.debug(f"Seed {y} dropped ({direction:+d}): {e}")
        for candidate in _cluster(endpoints, CLUSTER_RADIUS):
            try:
                y, period, mu = _refine_cycle(flow, candidate, direction)
            except (DomainError, NoConvergenceError) as e:
                logger.warning(f"Cluster near {candidate} not refined: {e}")
                continue
            if abs(mu) >= 1.0:
                logger.warning(f"Cluster near {candidate} is not attracting in its direction")
                continue
            if any(
                angle_distance(y[0], y[2], c[0][0], c[0][2]) < DEDUPE_RADIUS
                for c in cycles[kind]
            ):
                continue
            cycles[kind].append((y, period, mu))

    if len(cycles[SINK]) != len(cycles[SOURCE]):
        raise AssumptionViolationError(
            f"found {len(cycles[SINK])} attracting but {len(cycles[SOURCE])} repelling cycles"
        )

    result = []
    for kind in (SINK, SOURCE):
        ordered = sorted(
            cycles[kind], key=lambda c: (round(float(wrap_angle(c[0][0])), 9), round(float(wrap_angle(c[0][2])), 9))
        )
        for index, (y, period, mu) in enumerate(ordered):
            multiplier = mu if kind == SINK else 1.0 / mu
            cycle = LimitCycle(
                id=f"{kind}-{index}",
                kind=kind,
                anchor=CospherePoint.from_state(y),
                period=period,
                multiplier=multiplier,
                time_sign=flow.time_sign,
            )
            cycle.lyapunov = lyapunov(spec, omega, cycle)
            cycle.samples = _cycle_samples(flow, y, period)
            result.append(cycle)
            logger.info(
                f"{cycle.id}: x1={cycle.anchor.x1:.6f}, theta={cycle.anchor.theta:.6f}, "
                f"T={period:.6f}, lambda={cycle.lam:.6f}"
            )
    return result


def _return_slope(flow: CosphereFlow, y: np.ndarray, t: np.ndarray, direction: int, h: float) -> float:
    plus = flow.project(y[0] + h * t[0], y[1], y[2] + h * t[1])
    minus = flow.project(y[0] - h * t[0], y[1], y[2] - h * t[1])
    r_plus = flow.return_map(plus, direction, rtol=1e-13).state
    r_minus = flow.return_map(minus, direction, rtol=1e-13).state
    spread = t @ np.array([plus[0] - minus[0], plus[2] - minus[2]])
    return float(t @ np.array([r_plus[0] - r_minus[0], r_plus[2] - r_minus[2]]) / spread)


def lyapunov(
    spec: SymbolDescriptor, omega: float, cycle: LimitCycle, h: float = 1e-2
) -> LyapunovEstimate:
    """
    Transverse Lyapunov exponent |ln mu| / T of a refined cycle.

    The multiplier mu is the derivative of the return map along the level
    curve, taken by central differences at h and h/2 combined by Richardson
    extrapolation, in the direction where the cycle attracts. A second value
    comes from transporting a tangent vector with the linearized flow.
    """
    flow = CosphereFlow(spec, omega, time_sign=cycle.time_sign)
    direction = cycle.contracting_direction
    y = cycle.anchor.state()
    t = flow.tangent(y)

    coarse = _return_slope(flow, y, t, direction, h)
    fine = _return_slope(flow, y, t, direction, h / 2)
    mu = (4 * fine - coarse) / 3
    multiplier = mu if direction == 1 else 1.0 / mu
    if abs(multiplier - 1.0) < 1e-6:
        raise NonHyperbolicError(f"{cycle.id} has multiplier {multiplier:.8f}")

    variation = np.array([t[0], 0.0, t[1]])
    ret = flow.return_map(y, direction, variation=variation)
    mu_variational = float(t @ np.array([ret.variation[0], ret.variation[2]]))
    period = ret.time

    value = abs(np.log(abs(mu))) / period
    variational = abs(np.log(abs(mu_variational))) / period
    logger.debug(f"{cycle.id}: lambda {value:.8f} (return map), {variational:.8f} (variational)")
    return LyapunovEstimate(value, variational, float(multiplier), period)


@dataclass
class CrossSection:
    """
    The circle {distance offset from a cycle on one side}, x2 its parameter.

    ``density`` is the flow-invariant density of the section in units of
    |dz|; for a hyperbolic cycle it equals 1 / lambda.
    """

    cycle_id: str
    kind: str
    side: int
    offset: float
    x1: float
    theta: float
    x2: np.ndarray
    density: np.ndarray
    defect: float
    angle: float
    phase_shift: float

    @property
    def points(self) -> List[CospherePoint]:
        return [CospherePoint(self.x1, x2, self.theta) for x2 in self.x2]

    @property
    def phase(self) -> np.ndarray:
        """Section phase z = x2 + ln|x1loc| / lambda_eff."""
        return self.x2 + self.phase_shift


def _effective(cycle: LimitCycle) -> float:
    return cycle.lam if cycle.kind == SINK else -cycle.lam


def section_point(flow: CosphereFlow, cycle: LimitCycle, offset: float, side: int) -> np.ndarray:
    """Point at distance ``offset`` from the cycle along the level curve, on ``side``."""
    y = cycle.anchor.state()
    t = flow.tangent(y)
    orient = np.sign(np.cos(cycle.anchor.theta) * t[0])
    if orient == 0:
        raise GeometryError(f"level curve of {cycle.id} is tangent to x1 = const")
    sigma = side * orient
    point = flow.project(y[0] + sigma * offset * t[0], y[1], y[2] + sigma * offset * t[1])
    if np.sign(cycle.local_offset(point[0])) != side:
        raise GeometryError(f"section of {cycle.id} at offset {offset} crossed the cycle")
    return point


def _single_return_density(
    flow: CosphereFlow, point: np.ndarray, direction: int
) -> Tuple[float, np.ndarray]:
    """Return time over |log growth| of the section tangent after one return."""
    t0 = flow.tangent(point)
    variation = np.array([t0[0], 0.0, t0[1]])
    ret = flow.return_map(point, direction, variation=variation)
    growth = np.linalg.norm(ret.variation[[0, 2]]) / np.linalg.norm(variation[[0, 2]])
    return ret.time / abs(np.log(growth)), ret.state


def build_section(
    spec: SymbolDescriptor,
    omega: float,
    cycle: LimitCycle,
    offset: float = 0.3,
    side: int = 1,
    m: int = 64,
    min_angle: float = 10.0,
    tolerance: float = 1e-6,
    levels: int = 12,
) -> CrossSection:
    """
    Build the cross-section on one side of a cycle with its invariant density.

    The density is the zero-offset limit of single-return estimates taken from
    fresh section points at offset, offset / 2, offset / 4, ..., extrapolated

    Args:
        spec: Homogeneous, x2-independent symbol
        omega: Energy level
        cycle: Refined cycle
        offset: Distance from the cycle along the level curve
        side: +1 or -1, the sign of the local offset x1loc
        m: Number of x2 samples
        min_angle: Smallest admissible angle (degrees) between flow and section
        tolerance: Relative change of the extrapolated density that ends the table
        levels: Most offset halvings tried

    Returns:
        CrossSection sampled at x2 = 2 pi j / m
    """
    if side not in (1, -1):
        raise InvalidArgumentError(f"side must be +1 or -1, got {side}")
    if levels < 2:
        raise InvalidArgumentError(f"need at least 2 offset levels, got {levels}")
    if not spec.x2_independent:
        raise UnsupportedFamilyError("sections are built for x2-independent symbols")
    flow = CosphereFlow(spec, omega, time_sign=cycle.time_sign)
    direction = cycle.contracting_direction
    point = section_point(flow, cycle, offset, side)

    x_dot = flow.field(0.0, point)
    angle = float(np.degrees(np.arccos(min(1.0, abs(x_dot[1]) / np.linalg.norm(x_dot)))))
    if angle < min_angle:
        raise GeometryError(
            f"flow meets the section of {cycle.id} at {angle:.2f} deg < {min_angle:g} deg"
        )

    anchor = cycle.anchor
    first, landing = _single_return_density(flow, point, direction)
    start_distance = angle_distance(point[0], point[2], anchor.x1, anchor.theta)
    if angle_distance(landing[0], landing[2], anchor.x1, anchor.theta) >= start_distance:
        raise GeometryError(f"section of {cycle.id} at offset {offset} is outside its basin")

    # table[j] holds the j-th Neville column at the current level
    table = [first]
    density, defect = first, np.inf
    for level in range(1, levels):
        delta = offset / 2**level
        estimate, _ = _single_return_density(
            flow, section_point(flow, cycle, delta, side), direction
        )
        row = [estimate]
        for j in range(1, level + 1):
            row.append(row[j - 1] + (row[j - 1] - table[j - 1]) / (2**j - 1))
        previous, table = table[-1], row
        density = row[-1]
        defect = abs(density - previous) / abs(density)
        logger.debug(
            f"{cycle.id} side {side:+d}: offset {delta:.3e} density {estimate:.10f}, "
            f"extrapolated {density:.10f}"
        )
        if defect <= tolerance:
            break
    else:
        raise NoConvergenceError(
            f"section density of {cycle.id} did not settle in {levels} offset levels "
            f"(last change {defect:.2e})"
        )

    x1loc = float(cycle.local_offset(point[0]))
    shift = np.log(abs(x1loc)) / _effective(cycle)
    logger.debug(
        f"Section of {cycle.id} side {side:+d}: density {density:.8f}, angle {angle:.1f} deg"
    )
    return CrossSection(
        cycle_id=cycle.id,
        kind=cycle.kind,
        side=side,
        offset=offset,
        x1=float(point[0]),
        theta=float(point[2]),
        x2=TWO_PI * np.arange(m) / m,
        density=np.full(m, density),
        defect=float(defect),
        angle=angle,
        phase_shift=float(shift),
    )


@dataclass
class RelationRow:
    """One branch of the relation: (start cycle, side) -> (target cycle, side)."""

    source: str
    side: int
    sink: str
    sink_side: int
    z: np.ndarray
    y: np.ndarray
    dydz: np.ndarray

    @property
    def winding(self) -> int:
        lift = np.unwrap(self.y)
        m = len(self.z)
        return int(round((lift[-1] - lift[0]) * m / (m - 1) / TWO_PI))

    def image(self, z) -> np.ndarray:
        """Interpolated y(z) on the circle."""
        lift = np.unwrap(self.y)
        zz = np.concatenate([self.z, [self.z[0] + TWO_PI]])
        yy = np.concatenate([lift, [lift[0] + self.winding * TWO_PI]])
        return np.interp(np.mod(np.asarray(z) - self.z[0], TWO_PI) + self.z[0], zz, yy)


@dataclass
class ScatteringRelationTable:
    rows: List[RelationRow]
    reverse: bool = False

    def lookup(self, source: str, side: int) -> RelationRow:
        for row in self.rows:
            if row.source == source and row.side == side:
                return row
        raise InvalidArgumentError(f"no relation row for ({source}, {side:+d})")

    def to_frame(self) -> pd.DataFrame:
        frames = [
            pd.DataFrame(
                {
                    "j": row.source,
                    "sigma": row.side,
                    "z": row.z,
                    "j_prime": row.sink,
                    "sigma_prime": row.sink_side,
                    "y": row.y,
                    "dydz": row.dydz,
                }
            )
            for row in self.rows
        ]
        if not frames:
            return pd.DataFrame(columns=["j", "sigma", "z", "j_prime", "sigma_prime", "y", "dydz"])
        return pd.concat(frames, ignore_index=True)


def _follow(flow: CosphereFlow, start: np.ndarray, events, direction: int, budget: float):
    return ode.solve_ivp(
        flow.field,
        (0.0, direction * budget),
        start,
        method="DOP853",
        rtol=1e-10,
        atol=1e-12,
        events=events,
    )


def _capture(
    flow: CosphereFlow,
    start: np.ndarray,
    targets: Sequence[LimitCycle],
    radius: float,
    direction: int,
    budget: float,
) -> Tuple[LimitCycle, np.ndarray]:
    """Integrate until the trajectory first comes within ``radius`` of a target cycle."""
    events = []
    for cycle in targets:

        def reached(t, z, cycle=cycle):
            return angle_distance(z[0], z[2], cycle.anchor.x1, cycle.anchor.theta) - radius

        reached.terminal = True
        reached.direction = -1
        events.append(reached)

    sol = _follow(flow, start, events, direction, budget)
    hits = [(abs(ts[0]), i) for i, ts in enumerate(sol.t_events) if len(ts)]
    if not hits:
        raise BudgetError(
            f"trajectory from {CospherePoint.from_state(start)} was not captured "
            f"within t = {budget:g}",
            point=CospherePoint.from_state(sol.y[:, -1]),
        )
    _, index = min(hits)
    return targets[index], sol.y_events[index][0]


def _land(
    flow: CosphereFlow,
    state: np.ndarray,
    target: LimitCycle,
    offset: float,
    direction: int,
    budget: float,
) -> np.ndarray:
    """Continue a captured trajectory onto the target's cross-section at ``offset``."""
    side = int(np.sign(target.local_offset(state[0])))
    if side == 0:
        raise GeometryError(f"trajectory was captured on the cycle {target.id}")
    x1loc = abs(float(target.local_offset(section_point(flow, target, offset, side)[0])))
    if side * float(target.local_offset(state[0])) <= x1loc:
        raise GeometryError(
            f"trajectory entered the section of {target.id} before it was captured"
        )

    def crossed(t, z):
        return side * target.local_offset(z[0]) - x1loc

    crossed.terminal = True
    crossed.direction = -1
    sol = _follow(flow, state, [crossed], direction, budget)
    if not len(sol.t_events[0]):
        raise BudgetError(
            f"captured trajectory did not reach the section of {target.id}",
            point=CospherePoint.from_state(sol.y[:, -1]),
        )
    landing = sol.y_events[0][0]
    distance = angle_distance(landing[0], landing[2], target.anchor.x1, target.anchor.theta)
    if not offset / 2 <= distance <= 2 * offset:
        raise GeometryError(
            f"landing on {target.id} at distance {distance:.4f}, outside "
            f"[{offset / 2:g}, {2 * offset:g}]"
        )
    return landing


def _periodic_slope(z: np.ndarray, y: np.ndarray) -> np.ndarray:
    lift = np.unwrap(y)
    period = TWO_PI
    winding = np.round((lift[-1] - lift[0] + (lift[1] - lift[0])) / period)
    ahead = np.concatenate([lift[1:], [lift[0] + winding * period]])
    behind = np.concatenate([[lift[-1] - winding * period], lift[:-1]])
    z_ahead = np.concatenate([z[1:], [z[0] + period]])
    z_behind = np.concatenate([[z[-1] - period], z[:-1]])
    return (ahead - behind) / (z_ahead - z_behind)


def scattering_relation(
    spec: SymbolDescriptor,
    omega: float,
    sources: Sequence[LimitCycle],
    sinks: Sequence[LimitCycle],
    offset: float = 0.3,
    m: int = 64,
    budget: float = 400.0,
    reverse: bool = False,
) -> ScatteringRelationTable:
    """
    Map source-section phases to sink-section phases along the flow.

    Every one of the ``m`` samples on each (source, side) section is integrated
    until it comes within 2 * offset of a sink, then carried on to that sink's
    section at ``offset``; the landing must lie within [offset / 2, 2 * offset]
    of the sink. Phases on both ends are z = x2 + ln|x1loc| / lambda_eff at the
    actual points and dy/dz is a centred difference of the landing phases.
    With ``reverse`` the roles swap: sinks are followed backward to sources.

    Returns:
        ScatteringRelationTable, one row per (start cycle, side)
    """
    if not spec.x2_independent:
        raise UnsupportedFamilyError("the relation table is built for x2-independent symbols")
    starts, targets = (sinks, sources) if reverse else (sources, sinks)
    if not starts:
        return ScatteringRelationTable([], reverse)
    time_sign = starts[0].time_sign
    flow = CosphereFlow(spec, omega, time_sign=time_sign)
    direction = -1 if reverse else 1

    rows = []
    for cycle in starts:
        for side in (1, -1):
            base = section_point(flow, cycle, offset, side)
            shift = np.log(abs(float(cycle.local_offset(base[0])))) / _effective(cycle)
            z = base[1] + TWO_PI * np.arange(m) / m + shift
            y = np.empty(m)
            reached = set()
            for i in range(m):
                start = base + np.array([0.0, TWO_PI * i / m, 0.0])
                target, state = _capture(flow, start, targets, 2 * offset, direction, budget)
                landing = _land(flow, state, target, offset, direction, budget)
                x1loc = float(target.local_offset(landing[0]))
                reached.add((target.id, int(np.sign(x1loc))))
                y[i] = landing[1] + np.log(abs(x1loc)) / _effective(target)
            if len(reached) != 1:
                raise GeometryError(
                    f"branch ({cycle.id}, {side:+d}) splits between {sorted(reached)}"
                )
            target_id, target_side = reached.pop()
            y = wrap_angle(y)
            dydz = _periodic_slope(z, y)
            row = RelationRow(cycle.id, side, target_id, target_side, z, y, dydz)
            if not (np.all(dydz > 0) or np.all(dydz < 0)) or abs(row.winding) != 1:
                raise GeometryError(
                    f"branch ({cycle.id}, {side:+d}) is not a circle diffeomorphism"
                )
            rows.append(row)
            logger.debug(
                f"Branch ({cycle.id}, {side:+d}) -> ({target_id}, {target_side:+d}), "
                f"dy/dz in [{dydz.min():.6f}, {dydz.max():.6f}]"
            )
    return ScatteringRelationTable(rows, reverse)


def transport_phase(
    spec: SymbolDescriptor,
    omega: float,
    start,
    t: float,
    potential: Callable[[float, float, float], float],
) -> float:
    """
    Integral of a potential V(x1, x2, theta) along the flow line from ``start``.

    The subprincipal term vanishes for every built-in family, so this is only
    needed when a potential is supplied.
    """
    flow = CosphereFlow(spec, omega)
    y0 = _as_state(start)
    sol = ode.solve_ivp(
        flow.field, (0.0, t), y0, method="DOP853", rtol=1e-10, atol=1e-12, dense_output=True
    )

    def integrand(s):
        x1, x2, theta = sol.sol(s)
        return potential(x1, x2, theta)

    value, _ = ode.quad(integrand, 0.0, t, limit=200)
    return float(value)
