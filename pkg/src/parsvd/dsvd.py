"""Distributed truncated SVD over row-partitioned snapshot matrices.

Each rank holds a horizontal slice A^i (some rows, all columns) of the
global matrix. Two assembly strategies are provided:

* apmos: approximate partitioned method of snapshots. Each rank compresses
  its slice to r1 right singular vectors scaled by their singular values,
  W^i = V~ S~^T (snapshots x r1, cheap to ship since it has no row
  dimension). Rank 0 stacks the W^i, factors the stack (exactly or with the
  randomized kernel), keeps r2 columns, and broadcasts them; each rank then
  lifts its local mode rows as U^i_j = A^i X_j / lambda_j. The stack
  satisfies W W^T = A^T A, which is what makes the assembly exact when
  nothing is truncated.

* parallel_qr + the parallel streaming pair: a tall-skinny QR across ranks
  (local QR, QR of the stacked triangular factors at rank 0, lift the
  global Q slices back) feeding the same update rule as the serial
  streaming module.

All collectives run through a RankContext, so the same functions work on
the simulator and over TCP.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .comm import broadcast, gather, recv, send
from .errors import DegenerateModeError
from .linalg import (QrResult, RandomSketchConfig, as_matrix, low_rank_svd,
                     qr_factor, svd_full)

# Tag base for shipping global-Q slices back to their ranks; rank i gets
# tag i + 10, mirroring how the row slices are laid out in the stacked Q.
QR_SLICE_TAG = 10


@dataclass(frozen=True)
class ApmosConfig:
    """local_rank  r1, right vectors kept per rank before the exchange
    global_rank r2, columns kept from the stacked factorization
    k_modes     K,  modes actually assembled (K <= r2)
    use_randomized / sketch: factor the stacked W with the randomized
    kernel instead of a dense SVD; sketch defaults to target_rank=r2."""

    local_rank: int
    global_rank: int
    k_modes: int
    use_randomized: bool = False
    sketch: Optional[RandomSketchConfig] = None

    def __post_init__(self):
        if self.local_rank < 1:
            raise ValueError(f"local_rank must be >= 1, got {self.local_rank}")
        if self.global_rank < 1:
            raise ValueError(f"global_rank must be >= 1, got {self.global_rank}")
        if self.k_modes < 1:
            raise ValueError(f"k_modes must be >= 1, got {self.k_modes}")
        if self.k_modes > self.global_rank:
            raise ValueError(
                f"k_modes {self.k_modes} exceeds global_rank {self.global_rank}"
            )
        if self.sketch is not None and self.sketch.target_rank < self.global_rank:
            raise ValueError(
                f"sketch target_rank {self.sketch.target_rank} is below "
                f"global_rank {self.global_rank}"
            )


@dataclass(frozen=True)
class LocalModes:
    """This rank's rows of the assembled left singular vectors, plus the
    (globally shared) singular values, both truncated to K."""

    modes: np.ndarray
    singular_values: np.ndarray


def generate_right_vectors(a_local, local_rank, method="svd"):
    """Leading right singular vectors and values of a local slice.

    Returns (v, s) with v of shape (n_cols, local_rank) and s of length
    local_rank. When the slice has fewer than local_rank nonzero directions
    (short blocks, min(rows, cols) < r1), both are zero-padded to exactly
    local_rank columns; padded columns carry sigma = 0 and do not disturb
    the W W^T = A^T A identity.

    method="svd" factors the slice directly; method="gram" takes the
    eigendecomposition of A^T A (the classical method of snapshots), whose
    vectors agree with the svd route up to column sign.
    """
    a = as_matrix(a_local, "a_local")
    n = a.shape[1]
    if local_rank < 1:
        raise ValueError(f"local_rank must be >= 1, got {local_rank}")
    if local_rank > n:
        raise ValueError(
            f"local_rank {local_rank} exceeds the snapshot count {n}"
        )
    if method == "svd":
        res = svd_full(a, want_vt=True)
        have = res.s.size
        keep = min(local_rank, have)
        v = res.vt[:keep].T.copy()
        s = res.s[:keep].copy()
    elif method == "gram":
        lam, vec = np.linalg.eigh(a.T @ a)
        order = np.argsort(-lam, kind="stable")
        # Roundoff can push tiny eigenvalues slightly negative.
        lam = np.clip(lam[order], 0.0, None)
        vec = vec[:, order]
        idx = np.argmax(np.abs(vec), axis=0)
        signs = np.sign(vec[idx, np.arange(vec.shape[1])])
        signs[signs == 0.0] = 1.0
        keep = min(local_rank, n)
        v = (vec * signs)[:, :keep]
        s = np.sqrt(lam[:keep])
    else:
        raise ValueError(f"unknown method {method!r}")
    if keep < local_rank:
        v = np.hstack([v, np.zeros((n, local_rank - keep))])
        s = np.concatenate([s, np.zeros(local_rank - keep)])
    return v, s


def apmos(ctx, a_local, config):
    """One-shot distributed SVD of the row-partitioned matrix.

    Every rank passes its slice; every rank returns LocalModes holding its
    rows of the K leading left singular vectors. Stacking the blocks in rank
    order reassembles the global modes. A zero singular value among the
    first K cannot be normalized against and raises DegenerateModeError on
    all ranks alike.
    """
    a = as_matrix(a_local, "a_local")
    r1, r2, k = config.local_rank, config.global_rank, config.k_modes
    if r2 > ctx.world_size * r1:
        raise ValueError(
            f"global_rank {r2} exceeds the {ctx.world_size * r1} columns "
            f"the exchange can produce"
        )
    v, s = generate_right_vectors(a, r1)
    w_local = v * s
    parts = gather(ctx, w_local)
    if ctx.rank == 0:
        w = np.concatenate(parts, axis=1)
        if config.use_randomized:
            sketch = config.sketch
            if sketch is None:
                sketch = RandomSketchConfig(target_rank=r2)
            res = low_rank_svd(w, sketch)
        else:
            res = svd_full(w, want_vt=False)
        if res.s.size < r2:
            raise ValueError(
                f"stacked exchange matrix only has {res.s.size} singular "
                f"values, global_rank is {r2}"
            )
        x = res.u[:, :r2]
        lam = res.s[:r2]
        broadcast(ctx, x)
        broadcast(ctx, lam)
    else:
        x = broadcast(ctx, None)
        lam = broadcast(ctx, np.empty(0))
    for j in range(k):
        if lam[j] == 0.0:
            raise DegenerateModeError(
                f"mode {j} has a zero singular value and cannot be assembled"
            )
    u_local = (a @ x[:, :k]) / lam[:k]
    return LocalModes(u_local, lam[:k].copy())


def parallel_qr(ctx, a_local):
    """Tall-skinny QR of the row-stacked global matrix.

    Returns QrResult(q_local, r) where q_local is this rank's row block of
    the global orthonormal factor and r, identical on every rank, is the
    shared triangular factor. At world size 1 this is exactly qr_factor, the
    same kernel call with no wire traffic.
    """
    a = as_matrix(a_local, "a_local")
    if ctx.world_size == 1:
        return qr_factor(a)
    q_local, r_local = qr_factor(a)
    parts = gather(ctx, r_local)
    if ctx.rank == 0:
        heights = [p.shape[0] for p in parts]
        q_stack, r_final = qr_factor(np.concatenate(parts, axis=0))
        offset = heights[0]
        for rank in range(1, ctx.world_size):
            send(ctx, q_stack[offset:offset + heights[rank]],
                 rank, QR_SLICE_TAG + rank)
            offset += heights[rank]
        broadcast(ctx, r_final)
        q_slice = q_stack[:heights[0]]
    else:
        q_slice = recv(ctx, 0, QR_SLICE_TAG + ctx.rank)
        r_final = broadcast(ctx, None)
    return QrResult(q_local @ q_slice, r_final)


def parallel_stream_initialize(ctx, a0_local, config):
    """Distributed counterpart of stream_initialize: same update, but the QR
    runs across ranks and each rank keeps only its row block of the modes."""
    a0 = as_matrix(a0_local, "a0_local")
    k = config.k_modes
    if a0.shape[1] < k:
        raise ValueError(
            f"initial batch has {a0.shape[1]} columns, need at least k_modes={k}"
        )
    q_local, r = parallel_qr(ctx, a0)
    res = svd_full(r, want_vt=False)
    modes = (q_local @ res.u)[:, :k]
    return LocalModes(modes, res.s[:k].copy())


def parallel_stream_incorporate(ctx, state, a_new_local, config):
    """Distributed counterpart of stream_incorporate.

    Every rank appends its slice of the new batch to its scaled mode block;
    one tall-skinny QR and a shared small SVD later, each rank holds the
    updated block. Singular values are identical across ranks.
    """
    a_new = as_matrix(a_new_local, "a_new_local")
    k = config.k_modes
    if state.modes.shape[1] != k:
        raise ValueError(
            f"state carries {state.modes.shape[1]} modes, config wants {k}"
        )
    if a_new.shape[0] != state.modes.shape[0]:
        raise ValueError(
            f"batch rows {a_new.shape[0]} != mode rows {state.modes.shape[0]}"
        )
    scaled = config.forget_factor * (state.modes * state.singular_values)
    q_local, r = parallel_qr(ctx, np.concatenate([scaled, a_new], axis=1))
    res = svd_full(r, want_vt=False)
    order = np.argsort(-res.s, kind="stable")
    modes = (q_local @ res.u[:, order])[:, :k]
    return LocalModes(modes, res.s[order][:k].copy())


def gather_modes(ctx, local_modes, root=0):
    """Stack per-rank mode blocks at the root, in rank order. Returns the
    (total_rows, K) matrix at the root and None elsewhere."""
    parts = gather(ctx, local_modes.modes, root=root)
    if parts is None:
        return None
    return np.concatenate(parts, axis=0)
