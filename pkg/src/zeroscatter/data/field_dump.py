"""
Binary field dumps and coordinate-format matrix exports.

Dump layout: b"ZSFD", then little-endian u32 version, n1, n2, then the
(n1 - 1)(n2 - 1) coefficients as little-endian complex128, k1-major from
-n1/2 + 1 to n1/2 - 1.
"""

from pathlib import Path
from typing import Iterable, Optional, Tuple

import numpy as np
import pandas as pd
from scipy import sparse

from ..core.errors import InvalidArgumentError
from ..core.logging_config import get_logger
from ..fields import SpectralField, TorusGrid

logger = get_logger(__name__)

MAGIC = b"ZSFD"
DUMP_VERSION = 1
HEADER_DTYPE = np.dtype("<u4")
DATA_DTYPE = np.dtype("<c16")
COO_COLUMNS = ["row_a", "row_b", "col_a", "col_b", "re", "im"]


def write_field(path: Path, field: SpectralField) -> None:
    """Write a field as a ZSFD dump."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = np.array([DUMP_VERSION, field.grid.n1, field.grid.n2], dtype=HEADER_DTYPE)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(header.tobytes())
        f.write(field.coeffs.astype(DATA_DTYPE).tobytes(order="C"))
    logger.debug(f"Wrote {field.grid.n1}x{field.grid.n2} field to {path}")


def read_field(path: Path) -> SpectralField:
    """Read a ZSFD dump back into a field."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise InvalidArgumentError(f"cannot read field dump {path}: {e}") from e

    if raw[:4] != MAGIC:
        raise InvalidArgumentError(f"{path} is not a field dump (bad magic)")
    header = np.frombuffer(raw[4:16], dtype=HEADER_DTYPE)
    if len(header) != 3:
        raise InvalidArgumentError(f"{path} has a truncated header")
    version, n1, n2 = (int(v) for v in header)
    if version != DUMP_VERSION:
        raise InvalidArgumentError(f"{path} has unsupported dump version {version}")

    grid = TorusGrid(n1, n2)
    data = np.frombuffer(raw[16:], dtype=DATA_DTYPE)
    if data.size != grid.size:
        raise InvalidArgumentError(
            f"{path} holds {data.size} coefficients, expected {grid.size}"
        )
    return SpectralField(grid, data.reshape(grid.coeff_shape).astype(complex))


def coo_frame(
    matrix: sparse.spmatrix,
    labels: Iterable[Tuple[int, int]],
    col_labels: Optional[Iterable[Tuple[int, int]]] = None,
) -> pd.DataFrame:
    """
    Coordinate listing of a matrix whose rows and columns carry integer pairs.

    Args:
        matrix: Sparse (or dense) matrix
        labels: Pair attached to each row index, e.g. (k1, k2) or (circle, mode)
        col_labels: Pairs for the columns when they differ from the rows

    Returns:
        DataFrame with columns row_a, row_b, col_a, col_b, re, im
    """
    labels = np.asarray(list(labels), dtype=int).reshape(-1, 2)
    col_labels = labels if col_labels is None else np.asarray(list(col_labels), dtype=int).reshape(-1, 2)
    coo = sparse.coo_matrix(matrix)
    if coo.shape != (len(labels), len(col_labels)):
        raise InvalidArgumentError(
            f"{len(labels)}x{len(col_labels)} labels for a matrix of shape {coo.shape}"
        )
    order = np.lexsort((coo.col, coo.row))
    rows, cols, vals = coo.row[order], coo.col[order], coo.data[order]
    return pd.DataFrame(
        {
            "row_a": labels[rows, 0],
            "row_b": labels[rows, 1],
            "col_a": col_labels[cols, 0],
            "col_b": col_labels[cols, 1],
            "re": np.real(vals),
            "im": np.imag(vals),
        },
        columns=COO_COLUMNS,
    )


def grid_mode_labels(grid: TorusGrid):
    """(k1, k2) of every flattened coefficient index."""
    k1, k2 = grid.wavenumbers()
    return np.stack([k1.reshape(-1), k2.reshape(-1)], axis=1)
