"""Dense linear-algebra kernels: pseudoinverse, Kronecker product, column
stacking, spectral radius, and block-diagonal assembly.

Everything operates on plain float64 ndarrays. All public operations validate
that inputs are finite and never let NaN/Inf escape. Matrices here are small
(a few hundred rows at most), so correctness is preferred over speed: the
spectral radius defaults to a full eigendecomposition, with power iteration
available as a fast path.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InvalidInputError, ShapeError

DEFAULT_PINV_RTOL = 1e-12
DEFAULT_RANK_RTOL = 1e-10


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Coerce to a finite float64 2-D array (copies; result is read-only)."""
    arr = np.array(a, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-dimensional, got ndim={arr.ndim}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    arr.setflags(write=False)
    return arr


def as_vector(a, name: str = "vector") -> np.ndarray:
    """Coerce to a finite float64 1-D array (copies; result is read-only)."""
    arr = np.array(a, dtype=float).reshape(-1)
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    arr.setflags(write=False)
    return arr


def pinv(a, rtol: float = DEFAULT_PINV_RTOL) -> np.ndarray:
    """Moore-Penrose pseudoinverse via SVD.

    Singular values below ``rtol * largest_singular_value`` are treated as
    zero, so rank decisions are explicit: low-rank Gram matrices are routine
    inputs and must pseudo-invert cleanly rather than blow up.
    """
    arr = as_matrix(a, "pinv input")
    if rtol <= 0:
        raise InvalidInputError(f"rtol must be positive, got {rtol}")
    return np.linalg.pinv(arr, rcond=rtol)


def kron(a, b) -> np.ndarray:
    """Kronecker product: block (i, j) of the result is a[i, j] * b."""
    return np.kron(as_matrix(a, "kron left"), as_matrix(b, "kron right"))


def vecm(a) -> np.ndarray:
    """Stack the columns of a p x q matrix into a pq x 1 column."""
    arr = as_matrix(a, "vecm input")
    return arr.reshape(-1, 1, order="F")


def unvec(v, rows: int, cols: int) -> np.ndarray:
    """Inverse of vecm: reshape a stacked column back to rows x cols."""
    arr = np.asarray(v, dtype=float).reshape(-1)
    if arr.size != rows * cols:
        raise ShapeError(
            f"cannot unvec length {arr.size} into {rows}x{cols} matrix"
        )
    return arr.reshape((rows, cols), order="F")


@dataclass(frozen=True)
class SpectralReport:
    """Spectral radius estimate plus the residual of the dominant eigenpair.

    ``dominant_magnitude_error`` is ||A v - lambda v|| for the unit-norm
    dominant eigenvector v; a large value means the estimate should not be
    trusted silently (defective or non-converged cases).
    """

    radius: float
    dominant_magnitude_error: float

    def __post_init__(self):
        if self.radius < 0:
            raise InvalidInputError("spectral radius cannot be negative")


def spectral_radius(
    a, max_iter: int = 1000, tol: float = 1e-10, method: str = "eig"
) -> SpectralReport:
    """Largest eigenvalue magnitude of a square (possibly non-symmetric) matrix.

    ``method='eig'`` (default) uses a full dense eigendecomposition, correct
    for any square input at these sizes. ``method='power'`` runs power
    iteration; it assumes a dominant eigenvalue and falls back to reporting
    its last residual if it has not converged within ``max_iter``.
    """
    arr = as_matrix(a, "spectral_radius input")
    n, m = arr.shape
    if n != m:
        raise ShapeError(f"spectral_radius needs a square matrix, got {n}x{m}")
    if n == 0:
        return SpectralReport(radius=0.0, dominant_magnitude_error=0.0)
    if method == "eig":
        return _spectral_radius_eig(arr)
    if method == "power":
        return _power_iteration(arr, max_iter, tol)
    raise InvalidInputError(f"unknown spectral_radius method {method!r}")


def _spectral_radius_eig(arr: np.ndarray) -> SpectralReport:
    try:
        values, vectors = np.linalg.eig(arr)
    except np.linalg.LinAlgError:
        # LAPACK very rarely fails to converge; the power fallback still
        # produces an estimate with an honest error bound.
        return _power_iteration(arr, max_iter=10_000, tol=1e-12)
    idx = int(np.argmax(np.abs(values)))
    lam = values[idx]
    v = vectors[:, idx]
    v = v / np.linalg.norm(v)
    residual = float(np.linalg.norm(arr @ v - lam * v))
    return SpectralReport(radius=float(np.abs(lam)), dominant_magnitude_error=residual)


def _power_iteration(arr: np.ndarray, max_iter: int, tol: float) -> SpectralReport:
    n = arr.shape[0]
    rng = np.random.default_rng(0)  # fixed start keeps the estimate deterministic
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    estimate = 0.0
    residual = np.inf
    for _ in range(max_iter):
        w = arr @ v
        norm_w = np.linalg.norm(w)
        if norm_w == 0.0:
            return SpectralReport(radius=0.0, dominant_magnitude_error=0.0)
        new_estimate = norm_w  # Rayleigh-style magnitude estimate
        v = w / norm_w
        residual = float(np.linalg.norm(arr @ v - new_estimate * v))
        if abs(new_estimate - estimate) <= tol * max(1.0, new_estimate):
            estimate = new_estimate
            break
        estimate = new_estimate
    return SpectralReport(radius=float(estimate), dominant_magnitude_error=residual)


def block_diag(blocks: Sequence) -> np.ndarray:
    """Assemble square or rectangular blocks into a block-diagonal matrix."""
    mats = [as_matrix(b, f"block {i}") for i, b in enumerate(blocks)]
    if not mats:
        raise InvalidInputError("block_diag needs at least one block")
    rows = sum(b.shape[0] for b in mats)
    cols = sum(b.shape[1] for b in mats)
    out = np.zeros((rows, cols))
    r = c = 0
    for b in mats:
        out[r : r + b.shape[0], c : c + b.shape[1]] = b
        r += b.shape[0]
        c += b.shape[1]
    return out


def matrix_rank(a, rtol: float = DEFAULT_RANK_RTOL) -> int:
    """Numerical rank: count of singular values above rtol * largest."""
    arr = as_matrix(a, "rank input")
    if arr.size == 0:
        return 0
    s = np.linalg.svd(arr, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > rtol * s[0]))


def is_full_rank(a, rtol: float = DEFAULT_RANK_RTOL) -> bool:
    arr = as_matrix(a, "rank input")
    return matrix_rank(arr, rtol) == min(arr.shape)
