"""Embedding quality: k-NN classification, clustering indices, PCA scatter."""

import csv
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial.distance import cdist

from .numerics import as_matrix


@dataclass
class EvalReport:
    accuracy: float
    balanced_accuracy: float
    davies_bouldin: float
    silhouette: float
    per_class_recall: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def knn_classify(train_emb, train_labels, test_emb, k=5):
    """Majority vote among the k nearest training rows (Euclidean).

    Equidistant neighbours are taken in ascending training index; a tied vote
    goes to the smallest class id.
    """
    train_emb = as_matrix(train_emb)
    train_labels = np.asarray(train_labels, dtype=np.int64)
    test_emb = as_matrix(test_emb)
    if len(train_emb) == 0:
        raise ValueError("empty training set")
    if not 1 <= k <= len(train_emb):
        raise ValueError(f"k={k} must be in [1, {len(train_emb)}]")
    n_classes = int(train_labels.max()) + 1
    preds = np.empty(len(test_emb), dtype=np.int64)
    for s in range(0, len(test_emb), 256):
        block = test_emb[s : s + 256]
        diff = block[:, None, :] - train_emb[None, :, :]
        d2 = np.einsum("ijk,ijk->ij", diff, diff)
        nearest = np.argsort(d2, axis=1, kind="stable")[:, :k]
        for r, nn in enumerate(nearest):
            preds[s + r] = np.argmax(np.bincount(train_labels[nn], minlength=n_classes))
    return preds


def classification_scores(predicted, truth, n_classes):
    """Return (accuracy, balanced accuracy, per-class recall).

    Recall is None for classes that never occur in ``truth``; those classes
    are left out of the balanced-accuracy mean.
    """
    predicted = np.asarray(predicted, dtype=np.int64)
    truth = np.asarray(truth, dtype=np.int64)
    if predicted.shape != truth.shape:
        raise ValueError(f"length mismatch: {len(predicted)} predictions, {len(truth)} labels")
    if len(truth) == 0:
        raise ValueError("no samples to score")
    correct = predicted == truth
    recall = []
    for c in range(n_classes):
        mask = truth == c
        recall.append(float(correct[mask].mean()) if mask.any() else None)
    present = [r for r in recall if r is not None]
    return float(correct.mean()), float(np.mean(present)), recall


def _centroids(emb, labels):
    classes = np.unique(labels)
    return classes, np.stack([emb[labels == c].mean(axis=0) for c in classes])


def davies_bouldin(emb, labels):
    emb = as_matrix(emb)
    labels = np.asarray(labels)
    classes, cent = _centroids(emb, labels)
    if len(classes) < 2:
        raise ValueError("Davies-Bouldin needs >= 2 classes")
    scatter = np.array(
        [np.linalg.norm(emb[labels == c] - cent[i], axis=1).mean() for i, c in enumerate(classes)]
    )
    sep = cdist(cent, cent)
    np.fill_diagonal(sep, np.inf)
    if sep.min() < 1e-12:
        raise ValueError("degenerate centroids")
    ratio = (scatter[:, None] + scatter[None, :]) / sep
    return float(ratio.max(axis=1).mean())


def silhouette(emb, labels):
    """Mean silhouette width; points in singleton classes score 0."""
    emb = as_matrix(emb)
    labels = np.asarray(labels)
    classes, inv, counts = np.unique(labels, return_inverse=True, return_counts=True)
    if len(classes) < 2:
        raise ValueError("silhouette needs >= 2 classes")
    if len(labels) < 3:
        raise ValueError("silhouette needs >= 3 points")
    dist = cdist(emb, emb)
    onehot = np.zeros((len(labels), len(classes)))
    onehot[np.arange(len(labels)), inv] = 1.0
    sums = dist @ onehot  # sums[i, c] = total distance from i to class c
    own = sums[np.arange(len(labels)), inv]
    own_count = counts[inv] - 1
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.where(own_count > 0, own / np.maximum(own_count, 1), 0.0)
        mean_other = sums / counts[None, :]
    mean_other[np.arange(len(labels)), inv] = np.inf
    b = mean_other.min(axis=1)
    denom = np.maximum(a, b)
    s = np.where((own_count > 0) & (denom > 0), (b - a) / np.where(denom > 0, denom, 1.0), 0.0)
    return float(s.mean())


def evaluate_embeddings(train_emb, train_labels, test_emb, test_labels, k=5, n_classes=None):
    """k-NN scores plus clustering indices computed on the test embeddings."""
    test_labels = np.asarray(test_labels, dtype=np.int64)
    if n_classes is None:
        n_classes = int(max(np.max(train_labels), test_labels.max())) + 1
    pred = knn_classify(train_emb, train_labels, test_emb, k)
    acc, bac, recall = classification_scores(pred, test_labels, n_classes)
    return EvalReport(acc, bac, davies_bouldin(test_emb, test_labels), silhouette(test_emb, test_labels), recall)


def pca_components(emb):
    """Top-2 principal directions (rows) and the data mean.

    Signs are fixed so each direction's largest-magnitude coordinate is
    positive.
    """
    X = as_matrix(emb)
    if X.shape[0] < 3 or X.shape[1] < 2:
        raise ValueError(f"PCA needs >= 3 points in >= 2 dims, got {X.shape}")
    mean = X.mean(axis=0)
    Xc = X - mean
    if np.abs(Xc).max() == 0.0:
        raise ValueError("all points identical: rank-0 data")
    _, _, Vt = np.linalg.svd(Xc, full_matrices=False)
    comps = Vt[:2].copy()
    for c in comps:
        if c[np.argmax(np.abs(c))] < 0:
            c *= -1.0
    return comps, mean


def pca_project_2d(emb):
    comps, mean = pca_components(emb)
    return (as_matrix(emb) - mean) @ comps.T


def write_scatter_csv(points, labels, path, label_names=None):
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["x", "y", "label"])
        for (x, y), lab in zip(points, labels):
            name = label_names[lab] if label_names else int(lab)
            writer.writerow([repr(float(x)), repr(float(y)), name])
