"""Batch construction and online triplet mining.

All indices returned by the builders are positions into the label array they
were given, so they address rows of the matching embedding matrix directly.
"""

from dataclasses import dataclass, field

import numpy as np

from .numerics import pairwise_sq_dists

MINING_MODES = ("hard", "semihard", "all_valid")


@dataclass
class TripletIndexSet:
    entries: list = field(default_factory=list)  # (anchor, positive, negative)

    def __len__(self):
        return len(self.entries)

    def as_set(self):
        return set(self.entries)


@dataclass
class NPairBatch:
    anchor_rows: list
    positive_rows: list
    classes: list

    def __len__(self):
        return len(self.anchor_rows)


@dataclass
class ConstellationBatch:
    entries: list  # (anchor, positive, [K negatives])
    K: int

    def __len__(self):
        return len(self.entries)


def _classes_with_members(labels):
    labels = np.asarray(labels)
    return {int(c): np.flatnonzero(labels == c) for c in np.unique(labels)}


def sample_balanced_batch(labels, P, Q, rng):
    """Draw Q samples from each of P classes, classes without replacement.

    Returns P*Q positions grouped by class in the order the classes were drawn.
    """
    members = _classes_with_members(labels)
    eligible = sorted(c for c, idx in members.items() if len(idx) >= Q)
    if P < 1 or Q < 1:
        raise ValueError(f"P and Q must be >= 1 (got P={P}, Q={Q})")
    if len(eligible) < P:
        raise ValueError(
            f"need {P} classes with at least {Q} samples each, "
            f"only {len(eligible)} of {len(members)} classes qualify"
        )
    chosen = rng.choice(eligible, size=P, replace=False)
    out = []
    for c in chosen:
        out.extend(int(i) for i in rng.choice(members[int(c)], size=Q, replace=False))
    return out


def mine_triplets(X, labels, alpha=0.2, mode="semihard"):
    """All (anchor, positive, negative) triplets in the batch satisfying ``mode``.

    With squared distances d:
      hard      d(a,n) < d(a,p)
      semihard  d(a,p) <= d(a,n) < d(a,p) + alpha
      all_valid d(a,p) - d(a,n) + alpha > 0

    Triplets come out in ascending (anchor, positive, negative) order.
    """
    if mode not in MINING_MODES:
        raise ValueError(f"unknown mining mode {mode!r}; expected one of {MINING_MODES}")
    labels = np.asarray(labels)
    counts = np.unique(labels, return_counts=True)[1]
    if len(counts) < 2 or counts.max() < 2:
        raise ValueError("mining needs >= 2 classes and a class with >= 2 samples")

    D = pairwise_sq_dists(X)
    n = len(labels)
    same = labels[:, None] == labels[None, :]
    pos_mask = same & ~np.eye(n, dtype=bool)
    entries = []
    for a in range(n):
        ps = np.flatnonzero(pos_mask[a])
        ns = np.flatnonzero(~same[a])
        if len(ps) == 0 or len(ns) == 0:
            continue
        dap = D[a, ps][:, None]
        dan = D[a, ns][None, :]
        if mode == "hard":
            keep = dan < dap
        elif mode == "semihard":
            keep = (dap <= dan) & (dan < dap + alpha)
        else:
            keep = dap - dan + alpha > 0
        pi, ni = np.nonzero(keep)
        entries.extend((a, int(ps[i]), int(ns[j])) for i, j in zip(pi, ni))
    return TripletIndexSet(entries)


def mine_with_fallback(X, labels, alpha=0.2, modes=("semihard", "hard", "all_valid")):
    """First non-empty result over ``modes``; empty set if none yields triplets."""
    for mode in modes:
        found = mine_triplets(X, labels, alpha, mode)
        if len(found):
            return found, mode
    return TripletIndexSet(), None


def build_npair_batch(labels, rng):
    """One distinct (anchor, positive) pair per class, classes ascending."""
    members = _classes_with_members(labels)
    for c, idx in members.items():
        if len(idx) < 2:
            raise ValueError(f"class {c} has {len(idx)} sample(s); N-pair needs >= 2")
    if len(members) < 2:
        raise ValueError("need >=2 classes")
    anchors, positives = [], []
    for c in sorted(members):
        a, p = rng.choice(members[c], size=2, replace=False)
        anchors.append(int(a))
        positives.append(int(p))
    return NPairBatch(anchors, positives, sorted(members))


def build_constellation_batch(batch_labels, K, rng):
    """K-plets for every ordered anchor-positive pair within each class.

    For each pair, K distinct classes other than the anchor's are drawn
    uniformly without replacement and one sample is drawn uniformly from each.
    Classes are visited in ascending id, pairs in ascending (anchor, positive).
    """
    members = _classes_with_members(batch_labels)
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    if len(members) <= K:
        raise ValueError(
            f"K exceeds available negative classes: K={K} with {len(members)} classes in batch"
        )
    classes = sorted(members)
    entries = []
    for c in classes:
        idx = members[c]
        others = [o for o in classes if o != c]
        for a in idx:
            for p in idx:
                if a == p:
                    continue
                neg_classes = rng.choice(others, size=K, replace=False)
                negs = [int(rng.choice(members[int(o)])) for o in neg_classes]
                entries.append((int(a), int(p), negs))
    if not entries:
        raise ValueError("no class in the batch has >= 2 samples")
    return ConstellationBatch(entries, K)


def check_constellation_batch(batch, labels):
    """Raise AssertionError if any entry violates the K-plet invariants."""
    labels = np.asarray(labels)
    for a, p, negs in batch.entries:
        assert a != p, f"anchor {a} reused as positive"
        assert labels[a] == labels[p], f"positive {p} not in anchor class"
        assert len(negs) == batch.K, f"entry for anchor {a} has {len(negs)} negatives"
        neg_classes = [labels[n] for n in negs]
        assert all(c != labels[a] for c in neg_classes), f"negative shares anchor {a} class"
        assert len(set(neg_classes)) == len(neg_classes), "negative classes repeat"


def contrastive_pairs(labels):
    """All unordered pairs (i < j) with y = 0 for same class, 1 otherwise."""
    labels = np.asarray(labels)
    i, j = np.triu_indices(len(labels), k=1)
    y = (labels[i] != labels[j]).astype(np.int64)
    return np.stack([i, j, y], axis=1)
