"""Matrix files, column-batch readers, and CSV/SVG result emitters.

The binary matrix format is fixed and versioned by its magic:

    [8 bytes magic "PARSVD01"][u64 rows][u64 cols][rows*cols float64]

little endian, payload in column-major order so that a column batch is one
contiguous span and streaming readers never touch columns they do not need.

CSV emitters print 17 significant digits, enough for float64 round trips;
re-reading an emitted file reproduces the array bit for bit. The SVG emitter
is deliberately dependency-free and deterministic: equal inputs give
byte-equal files.
"""

import struct

import numpy as np

from .errors import MatrixFormatError
from .linalg import as_matrix

MAGIC = b"PARSVD01"
FILE_HEADER = struct.Struct("<8sQQ")


def write_matrix(path, a):
    """Write one matrix to `path` in the binary format above."""
    a = as_matrix(a, "a", allow_empty=True)
    with open(path, "wb") as fh:
        fh.write(FILE_HEADER.pack(MAGIC, a.shape[0], a.shape[1]))
        fh.write(a.tobytes(order="F"))


def _read_file_header(fh, path):
    head = fh.read(FILE_HEADER.size)
    if len(head) < FILE_HEADER.size:
        raise MatrixFormatError(
            f"{path}: file is {len(head)} bytes, header needs {FILE_HEADER.size}"
        )
    magic, rows, cols = FILE_HEADER.unpack(head)
    if magic != MAGIC:
        raise MatrixFormatError(
            f"{path}: bad magic {magic!r}, expected {MAGIC!r}"
        )
    return rows, cols


def read_matrix_header(path):
    """Shape (rows, cols) recorded in a matrix file, payload untouched."""
    with open(path, "rb") as fh:
        return _read_file_header(fh, path)


def read_matrix(path):
    """Read a whole matrix file; the byte count must match the header
    exactly, trailing garbage included."""
    with open(path, "rb") as fh:
        rows, cols = _read_file_header(fh, path)
        body = fh.read()
    expected = 8 * rows * cols
    if len(body) != expected:
        raise MatrixFormatError(
            f"{path}: payload is {len(body)} bytes, header promises {expected} "
            f"for shape ({rows}, {cols})"
        )
    flat = np.frombuffer(body, dtype="<f8", count=rows * cols)
    return flat.reshape((rows, cols), order="F").copy(order="F")


def read_submatrix(path, row_start, row_stop, col_start, col_stop):
    """Read the half-open block [row_start:row_stop, col_start:col_stop]
    without loading the rest of the file."""
    with open(path, "rb") as fh:
        rows, cols = _read_file_header(fh, path)
        if not (0 <= row_start <= row_stop <= rows):
            raise ValueError(
                f"row range [{row_start}, {row_stop}) outside [0, {rows})"
            )
        if not (0 <= col_start <= col_stop <= cols):
            raise ValueError(
                f"column range [{col_start}, {col_stop}) outside [0, {cols})"
            )
        n_rows = row_stop - row_start
        n_cols = col_stop - col_start
        out = np.empty((n_rows, n_cols), dtype=np.float64, order="F")
        if out.size == 0:
            return out
        if n_rows == rows:
            # full-height block: one contiguous span
            fh.seek(FILE_HEADER.size + 8 * rows * col_start)
            buf = fh.read(8 * rows * n_cols)
            if len(buf) != 8 * rows * n_cols:
                raise MatrixFormatError(f"{path}: file ends inside the payload")
            out[:] = np.frombuffer(buf, dtype="<f8").reshape(
                (rows, n_cols), order="F"
            )
            return out
        for j, col in enumerate(range(col_start, col_stop)):
            fh.seek(FILE_HEADER.size + 8 * (rows * col + row_start))
            buf = fh.read(8 * n_rows)
            if len(buf) != 8 * n_rows:
                raise MatrixFormatError(f"{path}: file ends inside the payload")
            out[:, j] = np.frombuffer(buf, dtype="<f8")
    return out


class BatchSource:
    """Iterates a matrix as column batches of a nominal width.

    Backed either by an open-on-demand matrix file (columns are read as
    needed, the whole matrix never resides in memory) or by an in-memory
    array. The final batch is narrower when the width does not divide the
    column count.
    """

    def __init__(self, batch_columns, *, path=None, matrix=None):
        if batch_columns < 1:
            raise ValueError(f"batch_columns must be >= 1, got {batch_columns}")
        if (path is None) == (matrix is None):
            raise ValueError("exactly one of path or matrix is required")
        self.batch_columns = batch_columns
        self._path = path
        self._matrix = None if matrix is None else as_matrix(matrix, "matrix")
        if path is not None:
            self.rows, self.cols = read_matrix_header(path)
        else:
            self.rows, self.cols = self._matrix.shape

    @classmethod
    def from_file(cls, path, batch_columns):
        return cls(batch_columns, path=path)

    @classmethod
    def from_matrix(cls, a, batch_columns):
        return cls(batch_columns, matrix=a)

    def __len__(self):
        return -(-self.cols // self.batch_columns)

    def __iter__(self):
        return read_batches(self)


def read_batches(source):
    """Generator over a BatchSource's column batches, in order."""
    width = source.batch_columns
    for start in range(0, source.cols, width):
        stop = min(start + width, source.cols)
        if source._matrix is not None:
            yield source._matrix[:, start:stop]
        else:
            yield read_submatrix(source._path, 0, source.rows, start, stop)


def _fmt(value):
    return format(float(value), ".17g")


def write_singular_values_csv(path, values):
    """Columns: index,sigma. One row per value, 17 significant digits."""
    values = np.asarray(values, dtype=np.float64)
    with open(path, "w") as fh:
        fh.write("index,sigma\n")
        for i, v in enumerate(values):
            fh.write(f"{i},{_fmt(v)}\n")


def read_singular_values_csv(path):
    with open(path) as fh:
        header = fh.readline()
        if not header.startswith("index,"):
            raise MatrixFormatError(f"{path}: unexpected header {header!r}")
        return np.array([float(line.split(",")[1]) for line in fh if line.strip()])


def write_modes_csv(path, grid, modes):
    """Columns: grid,mode_1..mode_K. One row per grid point."""
    grid = np.asarray(grid, dtype=np.float64)
    modes = as_matrix(modes, "modes")
    if grid.ndim != 1 or grid.size != modes.shape[0]:
        raise ValueError(
            f"grid length {grid.size} does not match {modes.shape[0]} mode rows"
        )
    names = ",".join(f"mode_{j + 1}" for j in range(modes.shape[1]))
    with open(path, "w") as fh:
        fh.write(f"grid,{names}\n")
        for i in range(grid.size):
            row = ",".join(_fmt(v) for v in modes[i])
            fh.write(f"{_fmt(grid[i])},{row}\n")


def read_modes_csv(path):
    """Inverse of write_modes_csv; returns (grid, modes)."""
    with open(path) as fh:
        header = fh.readline()
        if not header.startswith("grid,"):
            raise MatrixFormatError(f"{path}: unexpected header {header!r}")
        rows = [line.split(",") for line in fh if line.strip()]
    if not rows:
        raise MatrixFormatError(f"{path}: no data rows")
    data = np.array([[float(v) for v in row] for row in rows])
    return data[:, 0], data[:, 1:]


def write_history_csv(path, history):
    """Columns: iteration,sigma_1..sigma_K; one row per streaming step."""
    history = as_matrix(history, "history")
    names = ",".join(f"sigma_{j + 1}" for j in range(history.shape[1]))
    with open(path, "w") as fh:
        fh.write(f"iteration,{names}\n")
        for i in range(history.shape[0]):
            row = ",".join(_fmt(v) for v in history[i])
            fh.write(f"{i},{row}\n")


_SVG_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def write_mode_svg(path, grid, modes, width=720, height=420):
    """Plot mode columns against the grid as one SVG polyline each.

    No plotting dependency, no timestamps, no randomness: the output bytes
    depend only on the inputs. Axis extents are labelled with %.6g.
    """
    grid = np.asarray(grid, dtype=np.float64)
    modes = as_matrix(modes, "modes")
    if grid.ndim != 1 or grid.size != modes.shape[0]:
        raise ValueError(
            f"grid length {grid.size} does not match {modes.shape[0]} mode rows"
        )
    margin = 56
    x_lo, x_hi = float(np.min(grid)), float(np.max(grid))
    y_lo, y_hi = float(np.min(modes)), float(np.max(modes))
    x_span = (x_hi - x_lo) or 1.0
    y_span = (y_hi - y_lo) or 1.0
    xs = margin + (grid - x_lo) / x_span * (width - 2 * margin)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" '
        f'y2="{height - margin}" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" '
        f'y2="{height - margin}" stroke="black"/>',
        f'<text x="{margin}" y="{height - margin + 18}" font-size="11" '
        f'text-anchor="middle">{x_lo:.6g}</text>',
        f'<text x="{width - margin}" y="{height - margin + 18}" '
        f'font-size="11" text-anchor="middle">{x_hi:.6g}</text>',
        f'<text x="{margin - 6}" y="{height - margin}" font-size="11" '
        f'text-anchor="end">{y_lo:.6g}</text>',
        f'<text x="{margin - 6}" y="{margin + 4}" font-size="11" '
        f'text-anchor="end">{y_hi:.6g}</text>',
    ]
    for j in range(modes.shape[1]):
        color = _SVG_COLORS[j % len(_SVG_COLORS)]
        ys = (height - margin) - (modes[:, j] - y_lo) / y_span * (height - 2 * margin)
        points = " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(xs, ys))
        parts.append(
            f'<polyline fill="none" stroke="{color}" stroke-width="1.2" '
            f'points="{points}"/>'
        )
        parts.append(
            f'<text x="{width - margin + 4}" y="{margin + 14 * j + 4}" '
            f'font-size="11" fill="{color}">mode {j + 1}</text>'
        )
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")
