"""Dense linear-algebra helpers used by the channel, detection and precoding code."""

import numpy as np

from .errors import RankDeficientError

# Singular values below RANK_CUTOFF * s_max count as zero.
RANK_CUTOFF = 1e-12
# Hermitian symmetry tolerance, relative to the largest entry magnitude.
HERMITIAN_TOL = 1e-10


def _as_matrix(mat, name):
    a = np.asarray(mat)
    if a.ndim != 2 or a.size == 0:
        raise ValueError(f"{name} expects a non-empty 2-D matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} expects finite entries")
    return a.astype(np.complex128, copy=False)


def pseudo_inverse(mat):
    """Moore-Penrose pseudo-inverse computed through the SVD.

    Singular values below RANK_CUTOFF times the largest one are treated as
    zero.  A matrix with at least as many rows as columns must have full
    column rank; otherwise RankDeficientError (carrying the estimated rank)
    is raised.  Wide matrices may be row-rank deficient and still invert.
    """
    a = _as_matrix(mat, "pseudo_inverse")
    u, s, vh = np.linalg.svd(a, full_matrices=False)
    rank = 0 if s[0] == 0.0 else int(np.count_nonzero(s > RANK_CUTOFF * s[0]))
    m, n = a.shape
    if m >= n and rank < n:
        raise RankDeficientError(
            f"{m}x{n} matrix has estimated rank {rank} < {n}", estimated_rank=rank
        )
    inv = np.zeros_like(s)
    if rank:
        inv[:rank] = 1.0 / s[:rank]
    return (vh.conj().T * inv) @ u.conj().T


def hermitian_eig(mat):
    """Eigen-decomposition of a Hermitian matrix.

    Returns (eigenvalues, eigenvectors) with eigenvalues sorted descending and
    eigenvector columns in matching order.  Rejects matrices that are not
    Hermitian within HERMITIAN_TOL relative to their largest entry.
    """
    a = _as_matrix(mat, "hermitian_eig")
    if a.shape[0] != a.shape[1]:
        raise ValueError(f"hermitian_eig expects a square matrix, got shape {a.shape}")
    scale = max(1.0, float(np.abs(a).max()))
    asym = float(np.abs(a - a.conj().T).max())
    if asym > HERMITIAN_TOL * scale:
        raise ValueError(f"matrix is not Hermitian (asymmetry {asym:.3e}, scale {scale:.3e})")
    w, v = np.linalg.eigh(a)
    return w[::-1].copy(), v[:, ::-1].copy()
