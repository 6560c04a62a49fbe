"""Metric-learning losses with analytic gradients.

Every loss takes an embedding matrix (one row per sample) plus an index
structure naming which rows play anchor / positive / negative, and returns a
:class:`LossResult` whose ``grad`` has the same shape as the embeddings.
Rows that no tuple references get an exactly-zero gradient row.
"""

from dataclasses import dataclass

import numpy as np

from .numerics import as_matrix, log1p_sum_exp_rows


@dataclass
class LossResult:
    value: float
    grad: np.ndarray


@dataclass(frozen=True)
class LossHyper:
    margin: float = 1.0  # contrastive
    alpha: float = 0.2  # triplet
    K: int = 3  # constellation

    def __post_init__(self):
        if not self.margin > 0:
            raise ValueError(f"margin must be > 0, got {self.margin}")
        if not self.alpha >= 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if int(self.K) != self.K or self.K < 1:
            raise ValueError(f"K must be a positive integer, got {self.K}")


def contrastive_loss(pairs, X, margin=1.0):
    """Pairwise contrastive loss.

    ``pairs`` is a sequence (or (P, 3) array) of ``(i, j, y)`` with ``y = 0``
    for a same-class pair and ``y = 1`` for a different-class pair. Positive
    pairs pay ``d**2``; negative pairs pay ``max(0, margin - d)**2``; the sum
    is divided by ``2 * P``.
    """
    X = as_matrix(X)
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 3)
    if len(pairs) == 0:
        raise ValueError("no pairs")
    i, j, y = pairs[:, 0], pairs[:, 1], pairs[:, 2]
    if np.any((y != 0) & (y != 1)):
        raise ValueError("pair labels must be 0 (same class) or 1 (different)")
    n_pairs = len(pairs)

    diff = X[i] - X[j]
    sq = np.einsum("ij,ij->i", diff, diff)
    d = np.sqrt(sq)
    neg = y == 1
    hinge = np.where(neg, np.maximum(0.0, margin - d), 0.0)
    terms = np.where(neg, hinge**2, sq)
    value = float(terms.sum() / (2.0 * n_pairs))

    # d(term)/d(x_i) is 2*diff for positives and -2*hinge*diff/d for negatives;
    # the negative-pair gradient at d == 0 is taken as zero
    with np.errstate(divide="ignore", invalid="ignore"):
        neg_scale = np.where(d > 0, -hinge / d, 0.0)
    scale = np.where(neg, neg_scale, 1.0) / n_pairs
    contrib = scale[:, None] * diff
    grad = np.zeros_like(X)
    np.add.at(grad, i, contrib)
    np.add.at(grad, j, -contrib)
    return LossResult(value, grad)


def triplet_loss(triplets, X, alpha=0.2):
    """Mean hinge ``max(0, |a-p|^2 - |a-n|^2 + alpha)`` over the triplets."""
    X = as_matrix(X)
    T = np.asarray(getattr(triplets, "entries", triplets), dtype=np.int64)
    T = T.reshape(-1, 3)
    if len(T) == 0:
        raise ValueError("no triplets")
    a, p, n = X[T[:, 0]], X[T[:, 1]], X[T[:, 2]]
    d_ap = np.einsum("ij,ij->i", a - p, a - p)
    d_an = np.einsum("ij,ij->i", a - n, a - n)
    margin = d_ap - d_an + alpha
    active = margin > 0
    value = float(np.where(active, margin, 0.0).sum() / len(T))

    w = active.astype(np.float64)[:, None] * (2.0 / len(T))
    grad = np.zeros_like(X)
    np.add.at(grad, T[:, 0], w * (n - p))
    np.add.at(grad, T[:, 1], w * (p - a))
    np.add.at(grad, T[:, 2], w * (a - n))
    return LossResult(value, grad)


def npair_loss(anchors, positives):
    """Multi-class N-pair loss over two aligned arrays.

    Row ``i`` of ``anchors`` and of ``positives`` both belong to class ``i``.
    Anchor ``i`` is compared against the positives of every other class:
    ``log(1 + sum_{j != i} exp(a_i . p_j - a_i . p_i))``, averaged over i.

    The returned gradient is ``2N x D``: anchor rows first, then positives.
    """
    A = as_matrix(anchors)
    P = as_matrix(positives)
    if A.shape != P.shape:
        raise ValueError(f"anchor/positive shapes differ: {A.shape} vs {P.shape}")
    N = A.shape[0]
    if N < 2:
        raise ValueError("need >=2 classes")

    S = A @ P.T
    off = ~np.eye(N, dtype=bool)
    Z = (S - np.diag(S)[:, None])[off].reshape(N, N - 1)
    values, W = log1p_sum_exp_rows(Z)

    G = np.zeros((N, N))
    G[off] = W.ravel()
    G[np.diag_indices(N)] = -W.sum(axis=1)
    G /= N
    grad = np.concatenate([G @ P, G.T @ A])
    return LossResult(float(values.sum() / N), grad)


def constellation_loss(batch, X, K):
    """Constellation loss over anchor / positive / K-negative tuples.

    For each entry ``(a, p, [n_1..n_K])`` the term is
    ``log(1 + sum_k exp(x_a . x_{n_k} - x_a . x_p))``; the loss is the mean
    over entries. Gradients accumulate over every tuple touching a row.
    """
    X = as_matrix(X)
    anchors, positives, negatives = _constellation_arrays(batch, K)
    xa, xp, xn = X[anchors], X[positives], X[negatives]  # xn: (N, K, D)
    Z = np.einsum("nd,nkd->nk", xa, xn) - np.einsum("nd,nd->n", xa, xp)[:, None]
    values, W = log1p_sum_exp_rows(Z)
    N = len(anchors)
    W = W / N

    grad = np.zeros_like(X)
    np.add.at(grad, anchors, np.einsum("nk,nkd->nd", W, xn) - W.sum(1)[:, None] * xp)
    np.add.at(grad, positives, -W.sum(1)[:, None] * xa)
    np.add.at(grad, negatives.ravel(), (W[:, :, None] * xa[:, None, :]).reshape(-1, X.shape[1]))
    return LossResult(float(values.sum() / N), grad)


def _constellation_arrays(batch, K):
    entries = getattr(batch, "entries", batch)
    if len(entries) == 0:
        raise ValueError("no K-plets")
    anchors, positives, negatives = [], [], []
    for a, p, negs in entries:
        if len(negs) != K:
            raise ValueError(f"malformed K-plet: expected {K} negatives, got {len(negs)}")
        anchors.append(a)
        positives.append(p)
        negatives.append(list(negs))
    return (
        np.asarray(anchors, dtype=np.int64),
        np.asarray(positives, dtype=np.int64),
        np.asarray(negatives, dtype=np.int64).reshape(len(entries), K),
    )


def finite_diff_grad(loss_eval, X, h=1e-5):
    """Central-difference gradient of a scalar function of the matrix X."""
    if not h > 0:
        raise ValueError("h must be positive")
    X = np.array(X, dtype=np.float64)
    grad = np.zeros_like(X)
    flat, gflat = X.reshape(-1), grad.reshape(-1)
    for k in range(flat.size):
        orig = flat[k]
        flat[k] = orig + h
        up = loss_eval(X)
        flat[k] = orig - h
        down = loss_eval(X)
        flat[k] = orig
        gflat[k] = (up - down) / (2.0 * h)
    return grad


def max_rel_error(analytic, numeric, floor=1e-8):
    """Largest absolute gradient discrepancy relative to the gradient scale."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = max(np.abs(analytic).max(initial=0.0), np.abs(numeric).max(initial=0.0), floor)
    return float(np.abs(analytic - numeric).max(initial=0.0) / scale)
