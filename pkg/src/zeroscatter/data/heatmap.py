"""
Binary PPM (P6) heatmaps of fields on the torus.
"""

import hashlib
from pathlib import Path
from typing import Tuple

import numpy as np

from ..core.errors import InvalidArgumentError
from ..core.logging_config import get_logger
from ..fields import SpectralField

logger = get_logger(__name__)

QUANTITIES = ("abs", "real", "imag", "log-abs")

# piecewise linear "hot" colormap, knots per channel
_HOT = (
    ((0.0, 0.365, 1.0), (0.0, 1.0, 1.0)),
    ((0.0, 0.365, 0.746, 1.0), (0.0, 0.0, 1.0, 1.0)),
    ((0.0, 0.746, 1.0), (0.0, 0.0, 1.0)),
)


def colorize(values: np.ndarray) -> np.ndarray:
    """Map a real array to uint8 RGB, scaled to its own range; constant input maps to black."""
    values = np.asarray(values, dtype=float)
    if values.ndim != 2:
        raise InvalidArgumentError(f"heatmaps need a 2-d array, got shape {values.shape}")
    if not np.all(np.isfinite(values)):
        raise InvalidArgumentError("cannot render non-finite values")
    low, high = float(values.min()), float(values.max())
    span = high - low
    t = (values - low) / span if span > 0 else np.zeros_like(values)
    channels = [np.interp(t, knots, levels) for knots, levels in _HOT]
    return np.round(255 * np.stack(channels, axis=-1)).astype(np.uint8)


def encode_ppm(rgb: np.ndarray) -> bytes:
    height, width, _ = rgb.shape
    return b"P6\n%d %d\n255\n" % (width, height) + np.ascontiguousarray(rgb).tobytes()


def field_image(field: SpectralField, quantity: str = "abs", scale: int = 1) -> np.ndarray:
    """
    RGB image of a field: x1 runs left to right, x2 bottom to top.

    Args:
        field: Field to render
        quantity: One of abs, real, imag, log-abs
        scale: Integer pixel replication factor
    """
    if quantity not in QUANTITIES:
        raise InvalidArgumentError(f"quantity must be one of {QUANTITIES}, got {quantity!r}")
    if scale < 1:
        raise InvalidArgumentError(f"scale must be >= 1, got {scale}")
    u = field.values()
    if quantity == "abs":
        data = np.abs(u)
    elif quantity == "real":
        data = u.real
    elif quantity == "imag":
        data = u.imag
    else:
        data = np.log10(np.abs(u) + 1e-16)
    image = colorize(data.T[::-1])
    if scale > 1:
        image = np.repeat(np.repeat(image, scale, axis=0), scale, axis=1)
    return image


def write_heatmap(
    path: Path, field: SpectralField, quantity: str = "abs", scale: int = 1
) -> Tuple[str, Tuple[int, int]]:
    """Write the image and return its SHA-256 and (width, height)."""
    image = field_image(field, quantity, scale)
    payload = encode_ppm(image)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(payload)
    digest = hashlib.sha256(payload).hexdigest()
    logger.info(f"Rendered {quantity} heatmap {image.shape[1]}x{image.shape[0]} to {path}")
    return digest, (image.shape[1], image.shape[0])
