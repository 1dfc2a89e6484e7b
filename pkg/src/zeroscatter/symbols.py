"""
Parametric symbols p(x, xi) on T*T^2 with exact first derivatives.

Four families are supported:

- ``internal-wave``: xi2 / <xi> - beta cos x1
- ``internal-wave-homogeneous``: xi2 / |xi| - beta cos x1
- ``normal-form``: xi2 / xi1 - lambda x1 on the cone |xi2| < c |xi1|
  (``glued``: xi2 / xi1 - lambda sin x1, periodic in x1)
- ``tao``: xi2 / <xi> - alpha (1 - chi_k(xi1) psi(xi2)) cos x1
"""

from dataclasses import dataclass
from typing import Any, Callable, Dict, NamedTuple, Tuple

import numpy as np
from scipy import optimize

from .core.errors import DomainError, InvalidArgumentError, UnsupportedFamilyError
from .core.logging_config import get_logger

logger = get_logger(__name__)

INTERNAL_WAVE = "internal-wave"
HOMOGENEOUS = "internal-wave-homogeneous"
NORMAL_FORM = "normal-form"
TAO = "tao"
FAMILIES = (INTERNAL_WAVE, HOMOGENEOUS, NORMAL_FORM, TAO)

CONFIG_KEYS = {
    INTERNAL_WAVE: {"beta"},
    HOMOGENEOUS: {"beta"},
    NORMAL_FORM: {"lambda", "cone", "glued"},
    TAO: {"alpha", "k"},
}


def _flat(t):
    """exp(-1/t) for t > 0, 0 otherwise."""
    t = np.asarray(t, dtype=float)
    positive = t > 0
    safe = np.where(positive, t, 1.0)
    return np.where(positive, np.exp(-1.0 / safe), 0.0)


def smooth_step(t):
    """C-infinity step: 0 for t <= 0, 1 for t >= 1."""
    a = _flat(t)
    b = _flat(1.0 - np.asarray(t, dtype=float))
    return a / (a + b)


def smooth_step_prime(t):
    t = np.asarray(t, dtype=float)
    a = _flat(t)
    b = _flat(1.0 - t)
    safe_t = np.where(t > 0, t, 1.0)
    safe_s = np.where(t < 1, 1.0 - t, 1.0)
    da = np.where(t > 0, a / safe_t**2, 0.0)
    db = np.where(t < 1, b / safe_s**2, 0.0)
    return (da * b + a * db) / (a + b) ** 2


class BumpProfiles(NamedTuple):
    """Cutoffs used by the tao family, with their derivatives."""

    chi: Callable
    psi: Callable
    chi_prime: Callable
    psi_prime: Callable


def chi_profiles(k: int) -> BumpProfiles:
    """
    Bumps for the tao family.

    chi_k equals 1 on [k - 1, k + 1] and vanishes outside [k - 2, k + 2];
    psi(s) = exp(1 - 1/(1 - s^2)) on (-1, 1), so psi(0) = 1 and psi vanishes
    at every nonzero integer.
    """
    if int(k) != k or k < 2:
        raise InvalidArgumentError(f"chi_k needs an integer k >= 2, got {k}")

    def chi(s):
        return smooth_step(2.0 - np.abs(np.asarray(s, dtype=float) - k))

    def chi_prime(s):
        d = np.asarray(s, dtype=float) - k
        return -np.sign(d) * smooth_step_prime(2.0 - np.abs(d))

    def psi(s):
        s = np.asarray(s, dtype=float)
        inside = np.abs(s) < 1
        q = np.where(inside, 1.0 - s**2, 1.0)
        return np.where(inside, np.exp(1.0 - 1.0 / q), 0.0)

    def psi_prime(s):
        s = np.asarray(s, dtype=float)
        inside = np.abs(s) < 1
        q = np.where(inside, 1.0 - s**2, 1.0)
        return np.where(inside, psi(s) * (-2.0 * s / q**2), 0.0)

    return BumpProfiles(chi, psi, chi_prime, psi_prime)


class SymbolGradient(NamedTuple):
    dx1: Any
    dx2: Any
    dxi1: Any
    dxi2: Any


def _scalar(value):
    value = np.asarray(value, dtype=float)
    return float(value) if value.ndim == 0 else value


@dataclass(frozen=True)
class SymbolDescriptor:
    """Immutable description of one symbol from the supported families."""

    family: str
    beta: float = 2.0
    lam: float = 1.0
    cone: float = 0.5
    glued: bool = False
    alpha: float = 2.0
    k: int = 5

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidArgumentError(
                f"unknown symbol family '{self.family}', expected one of {FAMILIES}"
            )
        if self.family == NORMAL_FORM:
            if self.lam <= 0:
                raise InvalidArgumentError(f"lambda must be positive, got {self.lam}")
            if not 0 < self.cone < 1:
                raise InvalidArgumentError(
                    f"cone constant must lie in (0, 1), got {self.cone}"
                )
        if self.family == TAO:
            chi_profiles(self.k)

    @classmethod
    def from_config(cls, config: Dict[str, Any]) -> "SymbolDescriptor":
        """Build from the JSON form, e.g. {"family": "tao", "alpha": 2.0, "k": 5}."""
        family = config.get("family")
        if family not in FAMILIES:
            raise InvalidArgumentError(f"unknown symbol family '{family}'")
        extra = set(config) - {"family"} - CONFIG_KEYS[family]
        if extra:
            raise InvalidArgumentError(
                f"keys {sorted(extra)} are not parameters of family '{family}'"
            )
        kwargs = {k: v for k, v in config.items() if k != "family"}
        if "lambda" in kwargs:
            kwargs["lam"] = float(kwargs.pop("lambda"))
        if "k" in kwargs:
            kwargs["k"] = int(kwargs["k"])
        return cls(family=family, **kwargs)

    def to_config(self) -> Dict[str, Any]:
        if self.family in (INTERNAL_WAVE, HOMOGENEOUS):
            return {"family": self.family, "beta": self.beta}
        if self.family == NORMAL_FORM:
            return {
                "family": self.family,
                "lambda": self.lam,
                "cone": self.cone,
                "glued": self.glued,
            }
        return {"family": self.family, "alpha": self.alpha, "k": self.k}

    @property
    def homogeneous(self) -> bool:
        """True for the degree-0 homogeneous families."""
        return self.family in (HOMOGENEOUS, NORMAL_FORM)

    @property
    def x2_independent(self) -> bool:
        """True when p does not change under x2 shifts on a sample lattice."""
        x1 = np.linspace(-np.pi, np.pi, 7, endpoint=False)[:, None, None]
        theta = np.linspace(-np.pi, np.pi, 9, endpoint=False)[None, :, None]
        if self.family == NORMAL_FORM:
            theta = 0.5 * np.arctan(self.cone) * np.sin(theta)
        shifts = np.array([0.0, 0.7, 2.3, 4.1])[None, None, :]
        values = self.evaluate(x1, shifts, np.cos(theta), np.sin(theta))
        return bool(np.ptp(values, axis=-1).max() <= 1e-12)

    @property
    def x_bandwidth(self) -> Tuple[int, int]:
        """Highest x-Fourier harmonic of p per axis."""
        if self.family == NORMAL_FORM:
            raise UnsupportedFamilyError("the normal-form symbol is not quantized")
        return 1, 0

    def principal(self) -> "SymbolDescriptor":
        """The degree-0 homogeneous principal part driving the dynamics."""
        if self.family == INTERNAL_WAVE:
            return SymbolDescriptor(HOMOGENEOUS, beta=self.beta)
        if self.family == TAO:
            return SymbolDescriptor(HOMOGENEOUS, beta=self.alpha)
        return self

    def _check_domain(self, xi1, xi2):
        if self.family == HOMOGENEOUS and np.any(np.hypot(xi1, xi2) == 0):
            raise DomainError("xi = 0 is outside the homogeneous symbol's domain")
        if self.family == NORMAL_FORM and np.any(
            np.abs(xi2) >= self.cone * np.abs(xi1)
        ):
            raise DomainError(
                f"xi outside the cone |xi2| < {self.cone} |xi1| of the normal form"
            )

    def _x_term(self, x1):
        """The x-dependent part q(x1) with its derivative."""
        if self.family == NORMAL_FORM:
            if self.glued:
                return -self.lam * np.sin(x1), -self.lam * np.cos(x1)
            return -self.lam * x1, -self.lam * np.ones_like(x1)
        return -self.beta * np.cos(x1), self.beta * np.sin(x1)

    def evaluate(self, x1, x2, xi1, xi2):
        """p(x, xi); broadcasts over array arguments."""
        x1, x2, xi1, xi2 = (np.asarray(v, dtype=float) for v in (x1, x2, xi1, xi2))
        self._check_domain(xi1, xi2)
        if self.family == INTERNAL_WAVE:
            value = xi2 / np.sqrt(1 + xi1**2 + xi2**2) - self.beta * np.cos(x1)
        elif self.family == HOMOGENEOUS:
            value = xi2 / np.hypot(xi1, xi2) - self.beta * np.cos(x1)
        elif self.family == NORMAL_FORM:
            value = xi2 / xi1 + self._x_term(x1)[0]
        else:
            profiles = chi_profiles(self.k)
            cut = 1 - profiles.chi(xi1) * profiles.psi(xi2)
            value = xi2 / np.sqrt(1 + xi1**2 + xi2**2) - self.alpha * cut * np.cos(x1)
        return _scalar(value + 0 * x2)

    def gradient(self, x1, x2, xi1, xi2) -> SymbolGradient:
        """The four first partials (d/dx1, d/dx2, d/dxi1, d/dxi2)."""
        x1, x2, xi1, xi2 = (np.asarray(v, dtype=float) for v in (x1, x2, xi1, xi2))
        self._check_domain(xi1, xi2)
        zero = np.zeros(np.broadcast(x1, x2, xi1, xi2).shape)
        if self.family in (INTERNAL_WAVE, TAO):
            bracket = np.sqrt(1 + xi1**2 + xi2**2)
            dxi1 = -xi1 * xi2 / bracket**3
            dxi2 = (1 + xi1**2) / bracket**3
            if self.family == INTERNAL_WAVE:
                dx1 = self.beta * np.sin(x1)
            else:
                profiles = chi_profiles(self.k)
                chi, psi = profiles.chi(xi1), profiles.psi(xi2)
                dx1 = self.alpha * (1 - chi * psi) * np.sin(x1)
                dxi1 = dxi1 + self.alpha * profiles.chi_prime(xi1) * psi * np.cos(x1)
                dxi2 = dxi2 + self.alpha * chi * profiles.psi_prime(xi2) * np.cos(x1)
        elif self.family == HOMOGENEOUS:
            r = np.hypot(xi1, xi2)
            dxi1 = -xi1 * xi2 / r**3
            dxi2 = xi1**2 / r**3
            dx1 = self.beta * np.sin(x1)
        else:
            dxi1 = -xi2 / xi1**2
            dxi2 = 1.0 / xi1
            dx1 = self._x_term(x1)[1]
        return SymbolGradient(
            _scalar(dx1 + zero),
            _scalar(zero),
            _scalar(dxi1 + zero),
            _scalar(dxi2 + zero),
        )

    def quantization_value(self, x1, k1, k2):
        """
        p(x1, k) on integer frequencies, as used to build the operator matrix.

        The homogeneous family has no value at k = 0; its xi-part is set to 0
        there.
        """
        x1, k1, k2 = (np.asarray(v, dtype=float) for v in (x1, k1, k2))
        if self.family == NORMAL_FORM:
            raise UnsupportedFamilyError("the normal-form symbol is not quantized")
        if self.family == HOMOGENEOUS:
            r = np.hypot(k1, k2)
            ratio = np.where(r > 0, k2 / np.where(r > 0, r, 1.0), 0.0)
            return ratio - self.beta * np.cos(x1)
        return self.evaluate(x1, 0.0, k1, k2)


def zero_set_gradient_floor(
    spec: SymbolDescriptor, omega: float = 0.0, samples: int = 256
) -> float:
    """
    Smallest |dp| over a sample of {p = omega} on the unit cosphere.

    Args:
        spec: Homogeneous symbol
        omega: Energy level
        samples: Number of x1 and theta sample points

    Returns:
        Minimum gradient norm over the located zero set (inf if it is empty)
    """
    if not spec.homogeneous:
        raise UnsupportedFamilyError("the cosphere zero set needs a homogeneous symbol")

    def level(x1, theta):
        return spec.evaluate(x1, 0.0, np.cos(theta), np.sin(theta)) - omega

    def level_row(x1, thetas):
        try:
            return level(x1, thetas)
        except DomainError:
            row = np.full(len(thetas), np.nan)
            for i, theta in enumerate(thetas):
                try:
                    row[i] = level(x1, theta)
                except DomainError:
                    pass
            return row

    floor = np.inf
    thetas = np.linspace(-np.pi, np.pi, samples + 1)
    for x1 in np.linspace(-np.pi, np.pi, samples, endpoint=False):
        values = level_row(x1, thetas)
        for i in np.nonzero(np.sign(values[:-1]) * np.sign(values[1:]) < 0)[0]:
            try:
                theta = optimize.brentq(
                    lambda t: level(x1, t), thetas[i], thetas[i + 1], xtol=1e-14
                )
            except DomainError:
                continue
            g = spec.gradient(x1, 0.0, np.cos(theta), np.sin(theta))
            floor = min(floor, float(np.sqrt(sum(np.square(c) for c in g))))
    logger.debug(f"Gradient floor on p = {omega}: {floor:.4f}")
    return floor
