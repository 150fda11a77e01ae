"""Dense factorization kernels: QR, SVD, and randomized low-rank approximation.

Everything here works on 2-D float64 arrays and follows two sign conventions
so that repeated runs and independently computed factorizations agree:

* QR: the diagonal of R is non-negative.
* SVD: in each column of U the entry of largest magnitude is positive.

Randomness enters only through `RandomSketchConfig.seed`, which drives a
counter-based Philox generator, so sketches are reproducible across runs and
machines.
"""

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .errors import ConvergenceError


class QrResult(NamedTuple):
    q: np.ndarray
    r: np.ndarray


class SvdResult(NamedTuple):
    u: np.ndarray
    s: np.ndarray
    vt: Optional[np.ndarray]


@dataclass(frozen=True)
class RandomSketchConfig:
    """Parameters of the randomized range finder.

    target_rank      rank of the approximation that is kept
    oversampling     extra sketch columns beyond target_rank
    power_iterations subspace iteration count (0 = plain sketch)
    seed             Philox seed for the Gaussian test matrix
    """

    target_rank: int
    oversampling: int = 10
    power_iterations: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.target_rank < 1:
            raise ValueError(f"target_rank must be >= 1, got {self.target_rank}")
        if self.oversampling < 0:
            raise ValueError(f"oversampling must be >= 0, got {self.oversampling}")
        if self.power_iterations < 0:
            raise ValueError(
                f"power_iterations must be >= 0, got {self.power_iterations}"
            )
        if self.seed < 0:
            raise ValueError(f"seed must be >= 0, got {self.seed}")

    @property
    def sketch_width(self):
        return self.target_rank + self.oversampling


def as_matrix(a, name="a", allow_empty=False):
    """Coerce to a float64 2-D array, rejecting non-finite entries.

    Zero-sized dimensions are rejected unless allow_empty is set; the comm
    layer is the only caller that legitimately moves empty matrices.
    """
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got {arr.ndim}-D")
    if not allow_empty and min(arr.shape) < 1:
        raise ValueError(f"{name} must have positive dimensions, got {arr.shape}")
    if arr.size and not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def _positive_column_signs(u, vt):
    """Flip column signs of u (and matching rows of vt) so the largest-|.|
    entry of every u column is positive. Ties keep the lower row index, which
    argmax already guarantees."""
    idx = np.argmax(np.abs(u), axis=0)
    signs = np.sign(u[idx, np.arange(u.shape[1])])
    signs[signs == 0.0] = 1.0
    u = u * signs
    if vt is not None:
        vt = vt * signs[:, None]
    return u, vt


def qr_factor(a):
    """Reduced QR factorization with diag(r) >= 0.

    Returns QrResult(q, r) with q of shape (m, min(m, n)) having orthonormal
    columns and r upper triangular such that q @ r reconstructs a.
    """
    a = as_matrix(a)
    q, r = np.linalg.qr(a, mode="reduced")
    d = np.sign(np.diag(r))
    d[d == 0.0] = 1.0
    return QrResult(q * d, r * d[:, None])


def svd_full(a, want_vt=True):
    """Thin SVD of a dense matrix.

    Returns SvdResult(u, s, vt) with s in descending order and the column
    sign convention applied. Pass want_vt=False to drop the right vectors
    (vt is then None); u and s are unchanged by that choice.
    """
    a = as_matrix(a)
    try:
        u, s, vt = np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceError(
            f"SVD did not converge for {a.shape[0]}x{a.shape[1]} input "
            f"(Frobenius norm {np.linalg.norm(a):.6e})"
        ) from exc
    u, vt = _positive_column_signs(u, vt)
    return SvdResult(u, s, vt if want_vt else None)


def randomized_range(a, config):
    """Orthonormal basis for the approximate range of a, via a Gaussian sketch.

    Draws a (n, target_rank + oversampling) test matrix from Philox(seed),
    forms y = a @ omega, and improves it with `power_iterations` rounds of
    subspace iteration, re-orthonormalizing by QR after every product so the
    basis does not collapse onto the leading mode. Returns the q factor of
    the final sketch, shape (m, sketch_width).
    """
    a = as_matrix(a)
    width = config.sketch_width
    if width > min(a.shape):
        raise ValueError(
            f"sketch width {width} exceeds min(a.shape) = {min(a.shape)}"
        )
    rng = np.random.Generator(np.random.Philox(config.seed))
    omega = rng.standard_normal((a.shape[1], width))
    q = qr_factor(a @ omega).q
    for _ in range(config.power_iterations):
        q = qr_factor(a.T @ q).q
        q = qr_factor(a @ q).q
    return q


def low_rank_svd(a, config):
    """Randomized truncated SVD: project onto the sketched range, factor there.

    b = q^T a is (sketch_width, n); its exact SVD lifts back through q. The
    result is truncated to target_rank columns and carries the usual sign
    convention. Accuracy follows the sketch: exact for matrices of rank
    <= target_rank, near-optimal when the spectrum decays.
    """
    q = randomized_range(a, config)
    small = svd_full(q.T @ a, want_vt=True)
    k = config.target_rank
    u, vt = _positive_column_signs(q @ small.u[:, :k], small.vt[:k])
    return SvdResult(u, small.s[:k].copy(), vt)


def aligned_mode_difference(a, b):
    """Per-column max-abs difference between two mode matrices, after
    flipping each column of `a` to the sign that best matches `b`.

    Singular vectors are only defined up to sign, so raw subtraction would
    report spurious O(1) differences; this is the comparison every
    equivalence check in the package uses.
    """
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    signs = np.sign(np.sum(a * b, axis=0))
    signs[signs == 0.0] = 1.0
    return np.max(np.abs(a * signs - b), axis=0)


def subspace_angles(a, b):
    """Principal angles (radians, ascending) between the column spans of two
    matrices with equal row counts. Zero angles mean identical subspaces."""
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[0] != b.shape[0]:
        raise ValueError(f"row mismatch: {a.shape} vs {b.shape}")
    qa = qr_factor(a).q
    qb = qr_factor(b).q
    cosines = np.linalg.svd(qa.T @ qb, compute_uv=False)
    return np.sort(np.arccos(np.clip(cosines, -1.0, 1.0)))


def matmul(a, b):
    """Matrix product with an explicit inner-dimension check."""
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def concat_cols(a, b):
    """Stack two matrices side by side; row counts must match."""
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[0] != b.shape[0]:
        raise ValueError(f"row mismatch: {a.shape} vs {b.shape}")
    return np.concatenate([a, b], axis=1)


def concat_rows(a, b):
    """Stack two matrices vertically; column counts must match."""
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"column mismatch: {a.shape} vs {b.shape}")
    return np.concatenate([a, b], axis=0)
