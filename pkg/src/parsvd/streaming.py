"""Streaming truncated SVD over column batches.

Maintains the K leading left singular vectors of everything seen so far
without storing past columns. Each update QR-factors the previous modes
(scaled by their singular values and an optional forget factor) alongside the
new batch, takes the SVD of the small triangular factor, and keeps the K
dominant directions:

    initialize:  A0 = Q R,  R = U' D0 V0^T,  U0 = (Q U')[:, :K]
    incorporate: [ff * U_{i-1} diag(D_{i-1}) | A_i] = Q^ R^
                 R^ = U~ D_i V~^T,  U_i = Q^ U~[:, :K]

A forget factor below one exponentially downweights history, which tracks
left singular vectors that drift over time.
"""

from dataclasses import dataclass

import numpy as np

from .linalg import as_matrix, qr_factor, svd_full

# When repeated updates erode orthonormality past this, the mode block is
# re-orthonormalized in place. LAPACK-backed kernels stay far below it.
ORTHO_DRIFT_TOL = 1e-8


@dataclass(frozen=True)
class StreamConfig:
    """k_modes kept per update, forget factor in (0, 1], nominal batch width.

    batch_columns is what drivers use to cut a column stream into batches;
    the update itself accepts any positive batch width.
    """

    k_modes: int
    forget_factor: float = 0.95
    batch_columns: int = 1

    def __post_init__(self):
        if self.k_modes < 1:
            raise ValueError(f"k_modes must be >= 1, got {self.k_modes}")
        if not 0.0 < self.forget_factor <= 1.0:
            raise ValueError(
                f"forget_factor must be in (0, 1], got {self.forget_factor}"
            )
        if self.batch_columns < 1:
            raise ValueError(
                f"batch_columns must be >= 1, got {self.batch_columns}"
            )


@dataclass(frozen=True)
class StreamState:
    """Current estimate: modes (m x K, orthonormal columns), their singular
    values (descending, length K), and the number of incorporate calls."""

    modes: np.ndarray
    singular_values: np.ndarray
    iteration: int


def stream_initialize(a0, config):
    """Build the initial state from the first batch.

    a0 needs at least k_modes columns; fewer would leave the mode block
    rank-deficient from the start.
    """
    a0 = as_matrix(a0, "a0")
    k = config.k_modes
    if a0.shape[1] < k:
        raise ValueError(
            f"initial batch has {a0.shape[1]} columns, need at least k_modes={k}"
        )
    q, r = qr_factor(a0)
    res = svd_full(r, want_vt=False)
    modes = (q @ res.u)[:, :k]
    return StreamState(modes, res.s[:k].copy(), 0)


def stream_incorporate(state, a_new, config):
    """Fold one new batch into the state; returns the updated state.

    The batch may have any positive column count but must match the row
    dimension of the existing modes.
    """
    a_new = as_matrix(a_new, "a_new")
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
    q_hat, r_hat = qr_factor(np.concatenate([scaled, a_new], axis=1))
    res = svd_full(r_hat, want_vt=False)
    # Stable descending sort; LAPACK already orders s, so this is a no-op
    # guard that keeps ties deterministic.
    order = np.argsort(-res.s, kind="stable")[:k]
    modes = q_hat @ res.u[:, order]
    values = res.s[order]

    gram = modes.T @ modes
    if np.max(np.abs(gram - np.eye(k))) > ORTHO_DRIFT_TOL:
        # Rescue pass: re-orthonormalize and fold the triangular correction
        # into the singular values, then restore descending order.
        qq, rr = qr_factor(modes)
        values = values * np.abs(np.diag(rr))
        order = np.argsort(-values, kind="stable")
        modes = qq[:, order]
        values = values[order]

    return StreamState(modes, values, state.iteration + 1)


def stream_all(batches, config):
    """Drive a whole pass: initialize on the first batch, incorporate the
    rest. Returns (final_state, history) where history lists the singular
    values after every step, the initial one included."""
    state = None
    history = []
    for batch in batches:
        if state is None:
            state = stream_initialize(batch, config)
        else:
            state = stream_incorporate(state, batch, config)
        history.append(state.singular_values.copy())
    if state is None:
        raise ValueError("batch stream is empty")
    return state, history
