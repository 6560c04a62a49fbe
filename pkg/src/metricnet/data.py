"""Datasets: CSV ingestion, a synthetic Gaussian benchmark, stratified folds
and rigid grid augmentations."""

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .numerics import as_matrix
from .rng import make_rng


class DatasetError(ValueError):
    pass


class EmptyFileError(DatasetError):
    pass


class RaggedRowError(DatasetError):
    pass


class NonNumericCellError(DatasetError):
    pass


@dataclass(eq=False)
class LabeledDataset:
    features: np.ndarray
    labels: np.ndarray
    grid_shape: tuple = None
    name: str = ""
    # original label token for each contiguous class id
    label_names: list = field(default_factory=list)
    centers: np.ndarray = None  # set by the synthetic generator

    def __post_init__(self):
        self.features = as_matrix(self.features)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if len(self.labels) != len(self.features):
            raise DatasetError(
                f"{len(self.labels)} labels for {len(self.features)} feature rows"
            )
        classes = np.unique(self.labels)
        if len(classes) and not np.array_equal(classes, np.arange(len(classes))):
            raise DatasetError(f"class ids must be contiguous from 0, got {classes.tolist()}")
        if self.grid_shape is not None:
            H, W = self.grid_shape
            if H * W != self.features.shape[1]:
                raise DatasetError(f"grid {H}x{W} does not match {self.features.shape[1]} features")
            self.grid_shape = (int(H), int(W))
        if not self.label_names:
            self.label_names = [str(c) for c in classes]

    @property
    def n_classes(self):
        return int(self.labels.max()) + 1 if len(self.labels) else 0

    def subset(self, idx):
        idx = np.asarray(idx, dtype=np.int64)
        return self.features[idx], self.labels[idx]

    def __len__(self):
        return len(self.labels)


def _label_order(tokens):
    try:
        return sorted(tokens, key=float)
    except ValueError:
        return sorted(tokens)


def load_csv(path, name=None):
    """Read a ``f0,...,f{D-1},label`` CSV; labels are re-indexed to 0..C-1.

    Labels are mapped in sorted order (numeric when every token parses as a
    number) and the original tokens are kept in ``label_names``.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such dataset file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if r]
    if len(rows) < 2:
        raise EmptyFileError(f"{path}: no data rows")
    header, body = rows[0], rows[1:]
    width = len(header)
    if width < 2:
        raise DatasetError(f"{path}: header needs feature columns plus a label column")
    feats = []
    for lineno, row in enumerate(body, start=2):
        if len(row) != width:
            raise RaggedRowError(f"{path}:{lineno}: expected {width} cells, got {len(row)}")
        try:
            feats.append([float(c) for c in row[:-1]])
        except ValueError as exc:
            raise NonNumericCellError(f"{path}:{lineno}: {exc}") from None
    tokens = [row[-1].strip() for row in body]
    names = _label_order(set(tokens))
    mapping = {t: i for i, t in enumerate(names)}
    features = np.asarray(feats, dtype=np.float64)
    if not np.all(np.isfinite(features)):
        raise NonNumericCellError(f"{path}: non-finite feature value")
    return LabeledDataset(
        features,
        np.array([mapping[t] for t in tokens], dtype=np.int64),
        name=name or path.stem,
        label_names=names,
    )


def save_csv(ds, path):
    D = ds.features.shape[1]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"f{j}" for j in range(D)] + ["label"])
        for row, lab in zip(ds.features, ds.labels):
            writer.writerow([repr(float(v)) for v in row] + [ds.label_names[lab]])


def synth_gaussian_clusters(C, n, D, sep, sigma, rng, name="synthetic"):
    """Isotropic Gaussian blobs centered at ``sep * u_c``.

    ``u_c`` is the c-th axis when C <= D, otherwise a random unit direction.
    Rows are grouped by class.
    """
    if C < 2 or n < 1 or D < 2 or not sep > 0 or not sigma > 0:
        raise ValueError(f"invalid synthetic parameters C={C} n={n} D={D} sep={sep} sigma={sigma}")
    if C <= D:
        dirs = np.eye(D)[:C]
    else:
        dirs = rng.standard_normal((C, D))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    centers = sep * dirs
    X = np.concatenate([centers[c] + sigma * rng.standard_normal((n, D)) for c in range(C)])
    y = np.repeat(np.arange(C), n)
    return LabeledDataset(X, y, name=name, centers=centers)


def stratified_kfold(labels, k, seed):
    """k (train, test) index pairs; every class is spread evenly over folds.

    Each class's members (in ascending index order) are permuted by a stream
    seeded from ``seed`` and then dealt round-robin, starting where the
    previous class stopped so fold sizes stay balanced too. The assignment
    depends only on class sizes and the seed.
    """
    labels = np.asarray(getattr(labels, "labels", labels))
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    classes, counts = np.unique(labels, return_counts=True)
    for c, cnt in zip(classes, counts):
        if cnt < k:
            raise ValueError(f"class {c} has {cnt} samples, fewer than k={k}")
    rng = make_rng(seed, 0xF01D)
    fold_of = np.empty(len(labels), dtype=np.int64)
    start = 0
    for c in classes:
        members = np.flatnonzero(labels == c)
        members = members[rng.permutation(len(members))]
        fold_of[members] = (start + np.arange(len(members))) % k
        start = (start + len(members)) % k
    return [
        (np.flatnonzero(fold_of != f), np.flatnonzero(fold_of == f)) for f in range(k)
    ]


AUGMENT_OPS = ("identity", "flip_h", "flip_v", "rot90", "rot180", "rot270")


def augment_grid(row, grid_shape, op):
    """Apply a flip or quarter-turn (clockwise) to a flattened H x W grid."""
    H, W = grid_shape
    g = np.asarray(row).reshape(H, W)
    if op.startswith("rot") and H != W:
        raise ValueError(f"{op} needs a square grid, got {H}x{W}")
    if op == "identity":
        out = g
    elif op == "flip_h":
        out = g[:, ::-1]
    elif op == "flip_v":
        out = g[::-1, :]
    elif op == "rot90":
        out = np.rot90(g, -1)
    elif op == "rot180":
        out = np.rot90(g, 2)
    elif op == "rot270":
        out = np.rot90(g, 1)
    else:
        raise ValueError(f"unknown augmentation {op!r}")
    return out.reshape(-1).copy()


def augment_batch(X, grid_shape, rng):
    """Apply an independently, uniformly drawn op to each row.

    Non-square grids only draw from identity and the two flips.
    """
    choices = AUGMENT_OPS if grid_shape[0] == grid_shape[1] else AUGMENT_OPS[:3]
    ops = rng.integers(len(choices), size=len(X))
    return np.stack([augment_grid(x, grid_shape, choices[o]) for x, o in zip(X, ops)])
