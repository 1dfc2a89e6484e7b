"""
Spectral fields on the 2-torus and the wave-packet transform.

Fourier convention: u(x) = sum_k u_hat(k) e^{i k.x}, with the band
|k_i| <= n_i/2 - 1 (the Nyquist row and column are dropped). Coefficients are
stored k1-major in an array of shape (n1 - 1, n2 - 1), index [k1 + K1, k2 + K2].
"""

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import fft

from .core.errors import InvalidArgumentError, OutOfBandError
from .core.logging_config import get_logger

logger = get_logger(__name__)

# Radius, in units of h^{-1/2}, of the frequency ball an atom must fit in
PACKET_BALL = 5.0
NYQUIST_TOLERANCE = 1e-12


@dataclass(frozen=True)
class TorusGrid:
    """Uniform n1 x n2 grid on [0, 2 pi)^2."""

    n1: int
    n2: int

    def __post_init__(self):
        for n in (self.n1, self.n2):
            if int(n) != n or n < 8 or n % 2:
                raise InvalidArgumentError(
                    f"grid sizes must be even integers >= 8, got {self.n1}x{self.n2}"
                )

    @property
    def band(self) -> Tuple[int, int]:
        """Largest resolved frequency (K1, K2) per axis."""
        return self.n1 // 2 - 1, self.n2 // 2 - 1

    @property
    def shape(self) -> Tuple[int, int]:
        return self.n1, self.n2

    @property
    def coeff_shape(self) -> Tuple[int, int]:
        return self.n1 - 1, self.n2 - 1

    @property
    def size(self) -> int:
        """Number of truncated Fourier modes."""
        return (self.n1 - 1) * (self.n2 - 1)

    def frequencies(self) -> Tuple[np.ndarray, np.ndarray]:
        """Integer frequencies along each axis, ascending."""
        k1max, k2max = self.band
        return np.arange(-k1max, k1max + 1), np.arange(-k2max, k2max + 1)

    def wavenumbers(self) -> Tuple[np.ndarray, np.ndarray]:
        """Meshgrid of (k1, k2) over the coefficient array."""
        k1, k2 = self.frequencies()
        return np.meshgrid(k1, k2, indexing="ij")

    def axes(self) -> Tuple[np.ndarray, np.ndarray]:
        i = np.arange(self.n1)
        j = np.arange(self.n2)
        return 2 * np.pi * i / self.n1, 2 * np.pi * j / self.n2

    def points(self) -> Tuple[np.ndarray, np.ndarray]:
        """Grid point (i, j) sits at (2 pi i / n1, 2 pi j / n2)."""
        x1, x2 = self.axes()
        return np.meshgrid(x1, x2, indexing="ij")

    def index(self, k1: int, k2: int) -> Tuple[int, int]:
        k1max, k2max = self.band
        if abs(k1) > k1max or abs(k2) > k2max:
            raise OutOfBandError(f"mode ({k1}, {k2}) outside band {self.band}")
        return k1 + k1max, k2 + k2max

    def flat_index(self, k1, k2):
        """Row of mode (k1, k2) in the flattened, k1-major coefficient vector."""
        k1max, k2max = self.band
        return (np.asarray(k1) + k1max) * (2 * k2max + 1) + (np.asarray(k2) + k2max)


def synthesize(grid: TorusGrid, coeffs: np.ndarray) -> np.ndarray:
    """Grid values of sum_k coeffs(k) e^{i k.x}."""
    coeffs = np.asarray(coeffs)
    if coeffs.shape != grid.coeff_shape:
        raise InvalidArgumentError(
            f"coefficients of shape {coeffs.shape} do not match grid {grid.coeff_shape}"
        )
    k1, k2 = grid.frequencies()
    spectrum = np.zeros(grid.shape, dtype=complex)
    spectrum[np.ix_(k1 % grid.n1, k2 % grid.n2)] = coeffs
    return fft.ifft2(spectrum) * (grid.n1 * grid.n2)


def analyze(grid: TorusGrid, values: np.ndarray, strict: bool = False) -> np.ndarray:
    """
    Truncated Fourier coefficients of grid values.

    Args:
        grid: Grid the values live on
        values: Complex array of shape (n1, n2)
        strict: Reject values whose Nyquist row or column carries mass

    Returns:
        Coefficient array of shape (n1 - 1, n2 - 1)
    """
    values = np.asarray(values)
    if values.shape != grid.shape:
        raise InvalidArgumentError(
            f"values of shape {values.shape} do not match grid {grid.shape}"
        )
    spectrum = fft.fft2(values) / (grid.n1 * grid.n2)
    if strict:
        nyquist = np.concatenate(
            [spectrum[grid.n1 // 2, :], spectrum[:, grid.n2 // 2]]
        )
        scale = max(float(np.max(np.abs(spectrum))), 1.0)
        if np.max(np.abs(nyquist)) > NYQUIST_TOLERANCE * scale:
            raise OutOfBandError("input carries mass on the Nyquist row or column")
    k1, k2 = grid.frequencies()
    return spectrum[np.ix_(k1 % grid.n1, k2 % grid.n2)]


@dataclass
class SpectralField:
    """A band-limited function on the torus, held by its Fourier coefficients."""

    grid: TorusGrid
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=complex)
        if self.coeffs.shape != self.grid.coeff_shape:
            raise InvalidArgumentError(
                f"coefficients of shape {self.coeffs.shape} do not match "
                f"grid {self.grid.coeff_shape}"
            )

    @classmethod
    def zeros(cls, grid: TorusGrid) -> "SpectralField":
        return cls(grid, np.zeros(grid.coeff_shape, dtype=complex))

    @classmethod
    def from_modes(
        cls, grid: TorusGrid, modes: Dict[Tuple[int, int], complex]
    ) -> "SpectralField":
        """Field with the given coefficients and zeros elsewhere."""
        field = cls.zeros(grid)
        for (k1, k2), value in modes.items():
            field.coeffs[grid.index(k1, k2)] = value
        return field

    @classmethod
    def from_values(
        cls, grid: TorusGrid, values: np.ndarray, strict: bool = False
    ) -> "SpectralField":
        return cls(grid, analyze(grid, values, strict=strict))

    @classmethod
    def from_vector(cls, grid: TorusGrid, vector: np.ndarray) -> "SpectralField":
        return cls(grid, np.asarray(vector).reshape(grid.coeff_shape))

    def values(self) -> np.ndarray:
        return synthesize(self.grid, self.coeffs)

    def vector(self) -> np.ndarray:
        """Flattened k1-major coefficient vector."""
        return self.coeffs.reshape(-1)

    def coefficient(self, k1: int, k2: int) -> complex:
        return complex(self.coeffs[self.grid.index(k1, k2)])

    def inner(self, other: "SpectralField") -> complex:
        """L^2 inner product (2 pi)^2 sum u_hat conj(v_hat), linear in self."""
        self._check_grid(other)
        return complex((2 * np.pi) ** 2 * np.vdot(other.coeffs, self.coeffs))

    def l2_norm(self) -> float:
        return float(2 * np.pi * np.linalg.norm(self.coeffs))

    def translated(self, shift: Tuple[float, float]) -> "SpectralField":
        """u(x - shift)."""
        k1, k2 = self.grid.wavenumbers()
        phase = np.exp(-1j * (k1 * shift[0] + k2 * shift[1]))
        return SpectralField(self.grid, self.coeffs * phase)

    def _check_grid(self, other: "SpectralField"):
        if other.grid != self.grid:
            raise InvalidArgumentError(
                f"fields live on different grids: {self.grid} vs {other.grid}"
            )

    def __add__(self, other: "SpectralField") -> "SpectralField":
        self._check_grid(other)
        return SpectralField(self.grid, self.coeffs + other.coeffs)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        self._check_grid(other)
        return SpectralField(self.grid, self.coeffs - other.coeffs)

    def __mul__(self, factor: complex) -> "SpectralField":
        return SpectralField(self.grid, factor * self.coeffs)

    __rmul__ = __mul__

    def __neg__(self) -> "SpectralField":
        return SpectralField(self.grid, -self.coeffs)


@dataclass(frozen=True)
class SobolevWeight:
    """The multiplier (1 + |k|^2)^{s/2}."""

    s: float

    def __call__(self, k1, k2) -> np.ndarray:
        return (1.0 + np.asarray(k1) ** 2 + np.asarray(k2) ** 2) ** (self.s / 2)


def sobolev_norm(field: SpectralField, s: float) -> float:
    """2 pi (sum_k (1 + |k|^2)^s |u_hat(k)|^2)^{1/2}."""
    k1, k2 = field.grid.wavenumbers()
    weight = SobolevWeight(s)(k1, k2)
    return float(2 * np.pi * np.linalg.norm(weight * field.coeffs))


def quadrature_norm(grid: TorusGrid, values: np.ndarray) -> float:
    """L^2 norm of grid values by the trapezoidal rule."""
    cell = (2 * np.pi) ** 2 / (grid.n1 * grid.n2)
    return float(np.sqrt(cell * np.sum(np.abs(values) ** 2)))


def quadrature_inner(grid: TorusGrid, u: np.ndarray, v: np.ndarray) -> complex:
    cell = (2 * np.pi) ** 2 / (grid.n1 * grid.n2)
    return complex(cell * np.sum(u * np.conj(v)))


@dataclass(frozen=True)
class WavePacketAtom:
    """
    Gaussian packet of width h^{1/2} at x0, oscillating at (cos t0, sin t0) / h.

    The packet is periodized over the 3 x 3 nearest lattice translates and
    normalized to unit L^2 norm on the grid it is sampled on.
    """

    x0: Tuple[float, float]
    theta0: float
    h: float

    def __post_init__(self):
        if self.h <= 0:
            raise InvalidArgumentError(f"packet scale must be positive, got {self.h}")

    @property
    def frequency(self) -> Tuple[float, float]:
        return np.cos(self.theta0) / self.h, np.sin(self.theta0) / self.h

    def check_band(self, grid: TorusGrid):
        reach = PACKET_BALL / np.sqrt(self.h)
        xi = self.frequency
        for axis, limit in enumerate(grid.band):
            if abs(xi[axis]) + reach > limit:
                raise OutOfBandError(
                    f"packet at theta={self.theta0:.4f}, h={self.h:.4g} reaches "
                    f"|k{axis + 1}| = {abs(xi[axis]) + reach:.1f} > {limit}"
                )

    def sample(self, grid: TorusGrid) -> np.ndarray:
        x1, x2 = grid.points()
        xi1, xi2 = self.frequency
        y1 = np.mod(x1 - self.x0[0] + np.pi, 2 * np.pi) - np.pi
        y2 = np.mod(x2 - self.x0[1] + np.pi, 2 * np.pi) - np.pi
        values = np.zeros(grid.shape, dtype=complex)
        for m1 in (-1, 0, 1):
            for m2 in (-1, 0, 1):
                z1 = y1 + 2 * np.pi * m1
                z2 = y2 + 2 * np.pi * m2
                values += np.exp(-(z1**2 + z2**2) / (2 * self.h)) * np.exp(
                    1j * (xi1 * z1 + xi2 * z2)
                )
        return values / quadrature_norm(grid, values)


def packet_intensity(field_values: np.ndarray, grid: TorusGrid, atom: WavePacketAtom):
    """|<u, phi>| scaled so a unit plane wave at the packet frequency reads 1."""
    overlap = quadrature_inner(grid, field_values, atom.sample(grid))
    return abs(overlap) / (2 * np.sqrt(np.pi * atom.h))


def wavepacket_transform(
    field: SpectralField, atoms: Sequence[WavePacketAtom]
) -> np.ndarray:
    """
    Intensities of a field against a list of wave-packet atoms.

    Args:
        field: Field to probe
        atoms: Atoms; each must fit inside the grid's resolved band

    Returns:
        Array of intensities, one per atom
    """
    for atom in atoms:
        atom.check_band(field.grid)
    values = field.values()
    return np.array([packet_intensity(values, field.grid, atom) for atom in atoms])


@dataclass
class SlopeFit:
    """Least-squares slope of log intensity against log h for one direction."""

    theta: float
    scales: np.ndarray
    intensities: np.ndarray
    slope: float


def dyadic_slopes(
    field: SpectralField,
    x0: Tuple[float, float],
    thetas: Sequence[float],
    levels: Sequence[int],
) -> List[SlopeFit]:
    """Fit log intensity against log h over h = 2^-m, one fit per direction."""
    scales = np.array([2.0 ** (-m) for m in levels])
    fits = []
    for theta in thetas:
        atoms = [WavePacketAtom(x0, theta, h) for h in scales]
        intensities = wavepacket_transform(field, atoms)
        floor = np.finfo(float).tiny
        slope = np.polyfit(np.log(scales), np.log(np.maximum(intensities, floor)), 1)[0]
        logger.debug(f"Direction {theta:.4f}: slope {slope:.4f}")
        fits.append(SlopeFit(float(theta), scales, intensities, float(slope)))
    return fits


def off_lagrangian_fraction(
    field: SpectralField,
    anchors: Sequence[Tuple[float, float]],
    h: float,
    directions: int = 16,
    centers: int = 16,
    spread: float = 3.0,
) -> float:
    """
    Share of wave-packet mass lying away from a set of conormal lines.

    Each anchor (x1*, theta*) stands for the half-conormal
    {x1 = x1*, xi parallel to (cos theta*, sin theta*)}. Atoms are laid out on
    a centers x centers lattice with the given number of directions; an atom
    counts as on the set when both its position and its direction lie within
    spread * h^{1/2} of some anchor.

    Returns:
        Fraction in [0, 1]; 0 for the zero field
    """
    values = field.values()
    total = 0.0
    on_set = 0.0
    window = spread * np.sqrt(h)
    positions = 2 * np.pi * np.arange(centers) / centers
    for theta in 2 * np.pi * np.arange(directions) / directions:
        for c1 in positions:
            for c2 in positions:
                atom = WavePacketAtom((c1, c2), theta, h)
                atom.check_band(field.grid)
                mass = packet_intensity(values, field.grid, atom) ** 2
                total += mass
                for anchor_x1, anchor_theta in anchors:
                    dx = abs(np.angle(np.exp(1j * (c1 - anchor_x1))))
                    dtheta = abs(np.angle(np.exp(1j * (theta - anchor_theta))))
                    if dx <= window and dtheta <= window:
                        on_set += mass
                        break
    if total == 0.0:
        return 0.0
    return float(1.0 - on_set / total)


def high_frequency_fraction(field: SpectralField, cutoff: Optional[float] = None) -> float:
    """
    Share of sum |u_hat|^2 carried by modes with |k| > cutoff.

    The default cutoff is half the smaller band limit. Returns 0 for the zero
    field.
    """
    if cutoff is None:
        cutoff = min(field.grid.band) / 2
    k1, k2 = field.grid.wavenumbers()
    power = np.abs(field.coeffs) ** 2
    total = float(np.sum(power))
    if total == 0.0:
        return 0.0
    return float(np.sum(power[np.hypot(k1, k2) > cutoff]) / total)
