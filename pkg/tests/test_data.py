"""
Pytest tests for field dumps, provenance tables and heatmaps.
"""

import json

import numpy as np
import pandas as pd
import pytest

from src.zeroscatter.core.config import RunConfig
from src.zeroscatter.core.errors import InvalidArgumentError
from src.zeroscatter.data.field_dump import coo_frame, grid_mode_labels, read_field, write_field
from src.zeroscatter.data.heatmap import colorize, encode_ppm, field_image, write_heatmap
from src.zeroscatter.data.tables import (
    content_hash,
    cycles_frame,
    parse_header,
    read_table,
    write_report,
    write_table,
)
from src.zeroscatter.dynamics import SINK, CospherePoint, LimitCycle
from src.zeroscatter.fields import SpectralField, TorusGrid
from src.zeroscatter.psido import assemble
from src.zeroscatter.symbols import SymbolDescriptor


def test_field_dump_layout(tmp_path):
    """Test the dump header and that reading gives the field back."""
    grid = TorusGrid(8, 16)
    field = SpectralField.from_modes(grid, {(1, -2): 1.0 + 2.0j, (-3, 7): 0.5})
    path = tmp_path / "u.zsf"

    write_field(path, field)
    raw = path.read_bytes()
    back = read_field(path)

    assert raw[:4] == b"ZSFD"
    assert np.frombuffer(raw[4:16], dtype="<u4").tolist() == [1, 8, 16]
    assert len(raw) == 16 + 16 * grid.size
    assert back.grid == grid
    assert np.array_equal(back.coeffs, field.coeffs)


def test_field_dump_rejects_bad_files(tmp_path):
    """Test bad magic, truncated data and missing files."""
    bad = tmp_path / "bad.zsf"
    bad.write_bytes(b"NOPE" + bytes(12))
    with pytest.raises(InvalidArgumentError):
        read_field(bad)

    short = tmp_path / "short.zsf"
    write_field(short, SpectralField.zeros(TorusGrid(8, 8)))
    short.write_bytes(short.read_bytes()[:-16])
    with pytest.raises(InvalidArgumentError):
        read_field(short)

    with pytest.raises(InvalidArgumentError):
        read_field(tmp_path / "missing.zsf")


def test_operator_coo_listing():
    """Test the (k1, k2) labelled listing of an assembled operator."""
    grid = TorusGrid(8, 8)
    operator = assemble(SymbolDescriptor.from_config({"family": "internal-wave-homogeneous"}), grid)

    frame = coo_frame(operator.matrix, grid_mode_labels(grid))
    diagonal = frame[(frame.row_a == 1) & (frame.row_b == 2) & (frame.col_a == 1) & (frame.col_b == 2)]

    assert list(frame.columns) == ["row_a", "row_b", "col_a", "col_b", "re", "im"]
    assert diagonal.re.iloc[0] == pytest.approx(2 / np.sqrt(5))


def test_coo_frame_label_check():
    """Test that label counts must match the matrix shape."""
    with pytest.raises(InvalidArgumentError):
        coo_frame(np.eye(3), [(0, 0), (0, 1)])


def test_table_header_and_hash(tmp_path):
    """Test the provenance header of a CSV table."""
    config = RunConfig(omega=0.1)
    frame = pd.DataFrame({"a": [1, 2], "b": [0.1, 1.0 / 3]})
    path = tmp_path / "t.csv"

    digest = write_table(path, frame, config)
    header, back = read_table(path)
    body = path.read_bytes().split(b"\n", 1)[1]

    assert header["config"] == config.config_hash()
    assert header["content"] == digest == content_hash(body)
    assert back.b.iloc[1] == pytest.approx(1.0 / 3, rel=1e-15)


def test_identical_configs_write_identical_bytes(tmp_path):
    """Test byte-for-byte reproducibility of a table."""
    frame = pd.DataFrame({"x": np.linspace(0, 1, 5)})
    write_table(tmp_path / "a.csv", frame, RunConfig())
    write_table(tmp_path / "b.csv", frame, RunConfig())

    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_content_hash_is_git_blob_hash():
    """Test the hash against the empty git blob."""
    assert content_hash(b"") == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391"


def test_parse_header_rejects_foreign_lines():
    """Test that other CSV files are refused."""
    with pytest.raises(InvalidArgumentError):
        parse_header("a,b,c\n")


def test_report_provenance(tmp_path):
    """Test the provenance entry of a JSON report."""
    path = tmp_path / "r.json"

    write_report(path, {"defect": 0.5}, RunConfig())
    document = json.loads(path.read_text())

    assert document["defect"] == 0.5
    assert document["provenance"]["config"] == RunConfig().config_hash()


def test_cycles_frame():
    """Test one row per cycle with the exponent columns."""
    cycle = LimitCycle("sink-0", SINK, CospherePoint(0.0, 0.0, 0.0), 2 * np.pi, np.exp(-np.pi))

    frame = cycles_frame([cycle])

    assert frame["lambda"].iloc[0] == pytest.approx(0.5)
    assert np.isnan(frame["lambda_variational"].iloc[0])


def test_colorize_constant_is_black():
    """Test the constant-input convention."""
    rgb = colorize(np.full((3, 4), 7.0))

    assert rgb.shape == (3, 4, 3)
    assert not rgb.any()


def test_colorize_range_ends():
    """Test that the colormap runs from black to white."""
    rgb = colorize(np.array([[0.0, 1.0]]))

    assert rgb[0, 0].tolist() == [0, 0, 0]
    assert rgb[0, 1].tolist() == [255, 255, 255]


def test_field_image_orientation():
    """Test that x1 runs left to right and x2 bottom to top."""
    grid = TorusGrid(8, 16)
    image = field_image(SpectralField.zeros(grid), scale=2)

    assert image.shape == (32, 16, 3)
    with pytest.raises(InvalidArgumentError):
        field_image(SpectralField.zeros(grid), quantity="phase")


def test_write_heatmap(tmp_path):
    """Test the PPM payload and the returned digest."""
    path = tmp_path / "u.ppm"

    digest, size = write_heatmap(path, SpectralField.zeros(TorusGrid(8, 8)))
    payload = path.read_bytes()

    assert size == (8, 8)
    assert payload.startswith(b"P6\n8 8\n255\n")
    assert payload == encode_ppm(np.zeros((8, 8, 3), dtype=np.uint8))
    assert len(digest) == 64
