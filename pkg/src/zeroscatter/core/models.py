"""
Value types shared across the numerical modules.
"""

from dataclasses import dataclass, field
from typing import Sequence, Tuple

import numpy as np

from .errors import InvalidArgumentError


def section_modes(ks: int) -> np.ndarray:
    """Circle Fourier modes -ks..ks; ks = 0 requests no modes at all."""
    if ks < 0:
        raise InvalidArgumentError(f"ks must be non-negative, got {ks}")
    if ks == 0:
        return np.zeros(0, dtype=int)
    return np.arange(-ks, ks + 1)


@dataclass
class ScatteringDataVector:
    """Fourier data on d section circles, one row per circle."""

    coeffs: np.ndarray
    ks: int
    lambdas: np.ndarray
    cycle_ids: Tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=complex)
        self.lambdas = np.asarray(self.lambdas, dtype=float)
        n_modes = len(section_modes(self.ks))
        if self.coeffs.ndim != 2 or self.coeffs.shape[1] != n_modes:
            raise InvalidArgumentError(
                f"coefficients must have shape (d, {n_modes}), got {self.coeffs.shape}"
            )
        if self.lambdas.shape != (self.coeffs.shape[0],):
            raise InvalidArgumentError("one Lyapunov exponent per circle is required")
        if np.any(self.lambdas <= 0):
            raise InvalidArgumentError("Lyapunov exponents must be positive")
        if not self.cycle_ids:
            self.cycle_ids = tuple(str(j) for j in range(self.coeffs.shape[0]))

    @property
    def circles(self) -> int:
        return self.coeffs.shape[0]

    @property
    def modes(self) -> np.ndarray:
        return section_modes(self.ks)

    @property
    def size(self) -> int:
        return self.coeffs.size

    @classmethod
    def zeros(
        cls, lambdas: Sequence[float], ks: int, cycle_ids: Tuple[str, ...] = ()
    ) -> "ScatteringDataVector":
        lambdas = np.asarray(lambdas, dtype=float)
        coeffs = np.zeros((len(lambdas), len(section_modes(ks))), dtype=complex)
        return cls(coeffs, ks, lambdas, tuple(cycle_ids))

    @classmethod
    def basis(
        cls,
        lambdas: Sequence[float],
        ks: int,
        circle: int,
        mode: int,
        cycle_ids: Tuple[str, ...] = (),
    ) -> "ScatteringDataVector":
        """Unit coefficient on one circle and one mode."""
        vec = cls.zeros(lambdas, ks, cycle_ids)
        index = int(np.searchsorted(vec.modes, mode))
        if index >= len(vec.modes) or vec.modes[index] != mode:
            raise InvalidArgumentError(f"mode {mode} outside |k| <= {ks}")
        vec.coeffs[circle, index] = 1.0
        return vec

    def stacked(self) -> np.ndarray:
        """Circle-major flattening used by the scattering matrix."""
        return self.coeffs.reshape(-1).copy()

    def with_stacked(self, values: np.ndarray) -> "ScatteringDataVector":
        return ScatteringDataVector(
            np.asarray(values, dtype=complex).reshape(self.coeffs.shape),
            self.ks,
            self.lambdas.copy(),
            self.cycle_ids,
        )

    def l2_norm(self) -> float:
        """(2 pi sum_j sum_k |f_j(k)|^2)^(1/2)."""
        return float(np.sqrt(2 * np.pi * np.sum(np.abs(self.coeffs) ** 2)))

    def weighted_norm(self) -> float:
        """Norm in L^2 of the section densities mu_j = |dz| / lambda_j."""
        weights = 2 * np.pi / self.lambdas
        return float(np.sqrt(np.sum(weights[:, None] * np.abs(self.coeffs) ** 2)))

    def __add__(self, other: "ScatteringDataVector") -> "ScatteringDataVector":
        return ScatteringDataVector(
            self.coeffs + other.coeffs, self.ks, self.lambdas, self.cycle_ids
        )

    def scaled(self, factor: complex) -> "ScatteringDataVector":
        return ScatteringDataVector(
            factor * self.coeffs, self.ks, self.lambdas, self.cycle_ids
        )


@dataclass
class PairingReport:
    """Both sides of a boundary-pairing identity."""

    left: complex
    right: complex

    @property
    def mismatch(self) -> float:
        """|left - right| relative to the larger side (absolute when both vanish)."""
        scale = max(abs(self.left), abs(self.right))
        gap = abs(self.left - self.right)
        return float(gap / scale) if scale > 0 else float(gap)
