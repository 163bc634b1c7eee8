"""Small dense linear-algebra helpers shared across modules."""

import numpy as np
from scipy.linalg import svd


def unit_rows(matrix: np.ndarray) -> np.ndarray:
    """Return a copy of ``matrix`` with every row scaled to unit length.

    Zero rows are left untouched; callers that must reject them check first.
    """
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return matrix / norms


def orthogonalize(matrix: np.ndarray) -> np.ndarray:
    """Nearest orthogonal matrix in Frobenius norm (U Vᵀ of the SVD)."""
    u, _, vt = svd(matrix, full_matrices=False, lapack_driver="gesvd")
    return u @ vt


def clip_spectrum(
    matrix: np.ndarray, max_value: float = 1.0, slack: float = 1e-12
) -> np.ndarray:
    """Clip singular values of ``matrix`` to at most ``max_value``.

    Matrices already within ``max_value + slack`` are returned as they are.
    """
    u, s, vt = svd(matrix, full_matrices=False, lapack_driver="gesvd")
    if s.max() <= max_value + slack:
        return matrix
    return (u * np.minimum(s, max_value)) @ vt


def top_k_indices(scores: np.ndarray, k: int) -> np.ndarray:
    """Column indices of the ``k`` largest entries of each row.

    Ties at the selection boundary go to the lower column index.
    """
    n_cols = scores.shape[1]
    if k == n_cols:
        return np.broadcast_to(np.arange(n_cols), scores.shape).copy()
    kth = np.partition(scores, n_cols - k, axis=1)[:, n_cols - k]
    picked = np.argpartition(-scores, k - 1, axis=1)[:, :k]
    tied = np.flatnonzero((scores >= kth[:, None]).sum(axis=1) > k)
    if tied.size:
        picked[tied] = np.argsort(-scores[tied], axis=1, kind="stable")[:, :k]
    return picked


def top_k_mean(scores: np.ndarray, k: int, axis: int = 1) -> np.ndarray:
    """Mean of the ``k`` largest entries along ``axis``."""
    if axis == 0:
        scores = scores.T
    n_cols = scores.shape[1]
    return np.partition(scores, n_cols - k, axis=1)[:, n_cols - k :].mean(axis=1)


def k_smallest_sorted(values: np.ndarray, k: int) -> np.ndarray:
    """The ``k`` smallest entries of each row, ascending."""
    k = min(k, values.shape[1])
    head = np.partition(values, k - 1, axis=1)[:, :k]
    return np.sort(head, axis=1)
