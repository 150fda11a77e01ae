"""Binary matrix files, batch readers, and CSV/SVG emitters."""

import numpy as np
import pytest

import oracles
from parsvd.errors import MatrixFormatError
from parsvd.io import (BatchSource, read_batches, read_matrix,
                       read_matrix_header, read_modes_csv,
                       read_singular_values_csv, read_submatrix, write_matrix,
                       write_history_csv, write_mode_svg, write_modes_csv,
                       write_singular_values_csv)


# ---------- binary format ----------

def test_matrix_file_round_trip_and_exact_bytes(tmp_path):
    rng = np.random.Generator(np.random.Philox(70))
    a = rng.standard_normal((7, 5))
    path = tmp_path / "a.bin"
    write_matrix(path, a)
    assert path.read_bytes() == oracles.matrix_file_reference(a)
    assert np.array_equal(read_matrix(path), a)
    assert read_matrix_header(path) == (7, 5)


def test_matrix_file_empty(tmp_path):
    path = tmp_path / "empty.bin"
    write_matrix(path, np.zeros((0, 0)))
    assert path.stat().st_size == 24
    assert read_matrix(path).shape == (0, 0)


def test_matrix_file_bad_magic(tmp_path):
    path = tmp_path / "bad.bin"
    data = bytearray(oracles.matrix_file_reference(np.ones((2, 2))))
    data[7] = ord("9")
    path.write_bytes(bytes(data))
    with pytest.raises(MatrixFormatError, match="magic"):
        read_matrix(path)


def test_matrix_file_truncated_and_oversized(tmp_path):
    good = oracles.matrix_file_reference(np.ones((3, 2)))
    short = tmp_path / "short.bin"
    short.write_bytes(good[:-8])
    with pytest.raises(MatrixFormatError, match="40"):
        read_matrix(short)
    long_ = tmp_path / "long.bin"
    long_.write_bytes(good + b"\x00")
    with pytest.raises(MatrixFormatError):
        read_matrix(long_)
    stub = tmp_path / "stub.bin"
    stub.write_bytes(good[:10])
    with pytest.raises(MatrixFormatError, match="header"):
        read_matrix(stub)


def test_read_submatrix_blocks(tmp_path):
    rng = np.random.Generator(np.random.Philox(71))
    a = rng.standard_normal((10, 8))
    path = tmp_path / "a.bin"
    write_matrix(path, a)
    # full-height fast path
    assert np.array_equal(read_submatrix(path, 0, 10, 2, 5), a[:, 2:5])
    # strided row window
    assert np.array_equal(read_submatrix(path, 3, 7, 1, 8), a[3:7, 1:8])
    # empty selections are fine
    assert read_submatrix(path, 2, 2, 0, 8).shape == (0, 8)
    with pytest.raises(ValueError):
        read_submatrix(path, 0, 11, 0, 1)
    with pytest.raises(ValueError):
        read_submatrix(path, 0, 1, 5, 3)


# ---------- batch sources ----------

def test_batch_counts():
    a = np.zeros((4, 800))
    assert len(BatchSource.from_matrix(a, 100)) == 8
    assert len(BatchSource.from_matrix(np.zeros((4, 10)), 4)) == 3
    assert len(BatchSource.from_matrix(np.zeros((4, 5)), 5)) == 1
    assert len(BatchSource.from_matrix(np.zeros((4, 5)), 99)) == 1


def test_batches_tile_the_matrix(tmp_path):
    rng = np.random.Generator(np.random.Philox(72))
    a = rng.standard_normal((6, 10))
    widths = [b.shape[1] for b in BatchSource.from_matrix(a, 4)]
    assert widths == [4, 4, 2]
    assert np.array_equal(
        np.concatenate(list(BatchSource.from_matrix(a, 4)), axis=1), a)

    path = tmp_path / "a.bin"
    write_matrix(path, a)
    from_file = list(BatchSource.from_file(path, 4))
    from_memory = list(BatchSource.from_matrix(a, 4))
    for fb, mb in zip(from_file, from_memory):
        assert np.array_equal(fb, mb)


def test_batch_source_validation(tmp_path):
    with pytest.raises(ValueError):
        BatchSource(0, matrix=np.ones((2, 2)))
    with pytest.raises(ValueError):
        BatchSource(2)
    path = tmp_path / "a.bin"
    write_matrix(path, np.ones((2, 2)))
    with pytest.raises(ValueError):
        BatchSource(2, path=path, matrix=np.ones((2, 2)))
    src = BatchSource.from_file(path, 1)
    assert (src.rows, src.cols) == (2, 2)
    assert len(list(read_batches(src))) == 2


# ---------- CSV emitters ----------

def test_singular_values_csv_round_trip(tmp_path):
    values = np.array([3.0, np.pi, 2.0 ** -40, 1.2345678901234567e-10])
    path = tmp_path / "sv.csv"
    write_singular_values_csv(path, values)
    lines = path.read_text().splitlines()
    assert lines[0] == "index,sigma"
    assert len(lines) == 5
    # 17 significant digits make float64 round trips exact
    assert np.array_equal(read_singular_values_csv(path), values)


def test_modes_csv_round_trip(tmp_path):
    rng = np.random.Generator(np.random.Philox(73))
    grid = np.linspace(0.0, 1.0, 9)
    modes = rng.standard_normal((9, 3))
    path = tmp_path / "modes.csv"
    write_modes_csv(path, grid, modes)
    header = path.read_text().splitlines()[0]
    assert header == "grid,mode_1,mode_2,mode_3"
    grid_back, modes_back = read_modes_csv(path)
    assert np.array_equal(grid_back, grid)
    assert np.array_equal(modes_back, modes)


def test_modes_csv_validates_grid():
    with pytest.raises(ValueError):
        write_modes_csv("/tmp/never-written.csv", np.zeros(3), np.zeros((4, 2)))


def test_history_csv(tmp_path):
    history = np.array([[3.0, 1.0], [3.5, 1.2], [3.6, 1.3]])
    path = tmp_path / "history.csv"
    write_history_csv(path, history)
    lines = path.read_text().splitlines()
    assert lines[0] == "iteration,sigma_1,sigma_2"
    assert lines[1].startswith("0,3,") or lines[1].startswith("0,3.0")
    assert len(lines) == 4


def test_csv_reader_rejects_foreign_files(tmp_path):
    path = tmp_path / "junk.csv"
    path.write_text("time,value\n0,1\n")
    with pytest.raises(MatrixFormatError):
        read_singular_values_csv(path)
    with pytest.raises(MatrixFormatError):
        read_modes_csv(path)
    empty = tmp_path / "empty.csv"
    empty.write_text("grid,mode_1\n")
    with pytest.raises(MatrixFormatError):
        read_modes_csv(empty)


# ---------- SVG emitter ----------

def test_svg_deterministic_and_structured(tmp_path):
    rng = np.random.Generator(np.random.Philox(74))
    grid = np.linspace(0.0, 1.0, 40)
    modes = rng.standard_normal((40, 3))
    first = tmp_path / "one.svg"
    second = tmp_path / "two.svg"
    write_mode_svg(first, grid, modes)
    write_mode_svg(second, grid, modes)
    body = first.read_text()
    assert first.read_bytes() == second.read_bytes()
    assert body.count("<polyline") == 3
    assert body.startswith("<svg ")
    assert body.rstrip().endswith("</svg>")
    assert "mode 3" in body
    assert "NaN" not in body and "nan" not in body


def test_svg_flat_data(tmp_path):
    # constant modes: the y span is zero; must not divide by zero
    path = tmp_path / "flat.svg"
    write_mode_svg(path, np.arange(5.0), np.ones((5, 2)))
    assert "NaN" not in path.read_text()


def test_svg_validates_shapes(tmp_path):
    with pytest.raises(ValueError):
        write_mode_svg(tmp_path / "x.svg", np.arange(4.0), np.ones((5, 1)))
