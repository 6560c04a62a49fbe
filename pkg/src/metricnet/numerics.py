"""Dense float64 primitives shared by the losses and the metrics."""

import numpy as np

NORM_FLOOR = 1e-12


def as_matrix(X):
    """Return X as a 2-D C-contiguous float64 array, rejecting NaN/Inf."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("matrix contains non-finite entries")
    return X


def gram_matrix(X):
    X = as_matrix(X)
    G = X @ X.T
    # symmetrize so G[i, j] and G[j, i] are bit-identical
    return 0.5 * (G + G.T)


def pairwise_sq_dists(X):
    """Squared Euclidean distances between all rows of X.

    Computed from the Gram matrix; small negatives produced by cancellation
    are clamped to zero and the diagonal is exactly zero.
    """
    G = gram_matrix(X)
    sq = np.diag(G)
    D = sq[:, None] + sq[None, :] - 2.0 * G
    np.maximum(D, 0.0, out=D)
    np.fill_diagonal(D, 0.0)
    return D


def log1p_sum_exp(z):
    """log(1 + sum(exp(z))) without overflow. Empty z gives 0."""
    z = np.asarray(z, dtype=np.float64).ravel()
    if z.size == 0:
        return 0.0
    m = max(0.0, float(z.max()))
    return m + float(np.log(np.exp(-m) + np.exp(z - m).sum()))


def log1p_sum_exp_rows(Z):
    """Row-wise log1p_sum_exp plus the softmax weights d(value)/dZ.

    Returns (values, weights) where values[i] = log(1 + sum_j exp(Z[i, j]))
    and weights[i, j] = exp(Z[i, j]) / (1 + sum_k exp(Z[i, k])).
    """
    Z = np.asarray(Z, dtype=np.float64)
    if Z.shape[1] == 0:
        return np.zeros(Z.shape[0]), np.zeros_like(Z)
    m = np.maximum(Z.max(axis=1), 0.0)
    E = np.exp(Z - m[:, None])
    denom = np.exp(-m) + E.sum(axis=1)
    return m + np.log(denom), E / denom[:, None]


def l2_normalize_rows(X):
    """Scale each row to unit L2 norm.

    Rows whose norm falls below 1e-12 are divided by the floor instead and
    reported in the returned boolean mask.
    """
    X = as_matrix(X)
    norms = np.sqrt(np.einsum("ij,ij->i", X, X))
    degenerate = norms < NORM_FLOOR
    return X / np.maximum(norms, NORM_FLOOR)[:, None], degenerate
