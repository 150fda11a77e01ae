"""Snapshot-matrix generators and row partitioning.

Two data sources are provided: the analytical solution of the viscous
Burgers equation (a standard test problem whose sharpening front gives a
slowly decaying singular spectrum), and synthetic matrices with a prescribed
spectrum for controlled accuracy experiments.
"""

from dataclasses import dataclass

import numpy as np

from .errors import CapacityError
from .linalg import as_matrix, qr_factor

# Default allocation cap for generated matrices, in bytes. Large enough for
# a 16384 x 800 float64 snapshot matrix (about 105 MB) with headroom.
DEFAULT_MATRIX_CAP = 1 << 30


@dataclass(frozen=True)
class BurgersConfig:
    """Domain and discretization of the analytical Burgers dataset.

    The solution lives on x in [0, length] for t in [0, t_final], sampled on
    `grid_points` equispaced points and `n_snapshots` equispaced times.
    `reynolds` is the Reynolds number 1/nu.
    """

    length: float = 1.0
    t_final: float = 2.0
    reynolds: float = 1000.0
    grid_points: int = 16384
    n_snapshots: int = 800

    def __post_init__(self):
        if not self.length > 0.0:
            raise ValueError(f"length must be positive, got {self.length}")
        if not self.t_final > 0.0:
            raise ValueError(f"t_final must be positive, got {self.t_final}")
        if not self.reynolds > 0.0:
            raise ValueError(f"reynolds must be positive, got {self.reynolds}")
        if self.grid_points < 2:
            raise ValueError(f"grid_points must be >= 2, got {self.grid_points}")
        if self.n_snapshots < 1:
            raise ValueError(f"n_snapshots must be >= 1, got {self.n_snapshots}")


def burgers_solution(x, t, config=BurgersConfig()):
    """Analytical solution u(x, t) of viscous Burgers on [0, length].

    Evaluates

        u = (x / (t + 1)) / (1 + sqrt((t + 1) / t0) * exp(Re x^2 / (4t + 4)))

    with t0 = exp(Re / 8). The exponential overflows float64 for Re ~ 1000,
    so the quotient is computed in log space via logaddexp; the two forms are
    algebraically identical. x and t broadcast together; scalars in give a
    scalar out. Points outside the space-time domain raise ValueError.
    """
    x = np.asarray(x, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    if x.size and (np.min(x) < 0.0 or np.max(x) > config.length):
        raise ValueError(f"x outside [0, {config.length}]")
    if t.size and (np.min(t) < 0.0 or np.max(t) > config.t_final):
        raise ValueError(f"t outside [0, {config.t_final}]")
    re = config.reynolds
    # log of sqrt((t+1)/t0) * exp(Re x^2 / (4(t+1))), with log(t0) = Re/8
    log_term = 0.5 * (np.log1p(t) - re / 8.0) + re * x * x / (4.0 * (t + 1.0))
    u = (x / (t + 1.0)) * np.exp(-np.logaddexp(0.0, log_term))
    if u.ndim == 0:
        return float(u)
    return u


def burgers_matrix(config=BurgersConfig(), max_bytes=DEFAULT_MATRIX_CAP):
    """Snapshot matrix of the Burgers solution, one column per time sample.

    Shape is (grid_points, n_snapshots); entry (i, j) is u(x_i, t_j). The
    float64 size is checked against max_bytes before allocation and a
    CapacityError is raised when it would not fit.
    """
    need = 8 * config.grid_points * config.n_snapshots
    if need > max_bytes:
        raise CapacityError(
            f"snapshot matrix needs {need} bytes, cap is {max_bytes}"
        )
    x = np.linspace(0.0, config.length, config.grid_points)
    t = np.linspace(0.0, config.t_final, config.n_snapshots)
    return burgers_solution(x[:, None], t[None, :], config)


def synthetic_spectrum_matrix(rows, cols, singular_values, seed=0):
    """Dense matrix with exactly the given leading singular values.

    Draws two Gaussian matrices from Philox(seed), orthonormalizes them into
    u (rows x k) and v (cols x k), and returns (u * sigma) @ v.T. The
    remaining min(rows, cols) - k singular values are zero. sigma must be
    1-D, non-negative, non-increasing, and no longer than min(rows, cols).
    """
    sv = np.asarray(singular_values, dtype=np.float64)
    if sv.ndim != 1 or sv.size < 1:
        raise ValueError("singular_values must be a non-empty 1-D sequence")
    if sv.size > min(rows, cols):
        raise ValueError(
            f"{sv.size} singular values do not fit a {rows}x{cols} matrix"
        )
    if np.any(sv < 0.0):
        raise ValueError("singular values must be non-negative")
    if np.any(np.diff(sv) > 0.0):
        raise ValueError("singular values must be non-increasing")
    rng = np.random.Generator(np.random.Philox(seed))
    u = qr_factor(rng.standard_normal((rows, sv.size))).q
    v = qr_factor(rng.standard_normal((cols, sv.size))).q
    return (u * sv) @ v.T


def partition_bounds(rows, world_size):
    """Half-open row ranges [(lo, hi), ...] splitting `rows` across ranks.

    The first rows % world_size ranks get one extra row, so sizes differ by
    at most one and the ranges tile [0, rows) in rank order. world_size must
    not exceed the row count: every rank owns at least one row.
    """
    if world_size < 1:
        raise ValueError(f"world_size must be >= 1, got {world_size}")
    if world_size > rows:
        raise ValueError(f"world_size {world_size} exceeds row count {rows}")
    base, rem = divmod(rows, world_size)
    bounds = []
    offset = 0
    for rank in range(world_size):
        size = base + (1 if rank < rem else 0)
        bounds.append((offset, offset + size))
        offset += size
    return bounds


def row_partition(a, world_size):
    """Split a matrix into per-rank row blocks (copies, in rank order)."""
    a = as_matrix(a)
    return [a[lo:hi].copy() for lo, hi in partition_bounds(a.shape[0], world_size)]
