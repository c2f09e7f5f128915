"""Basket clustering on trajectory features.

Baskets are compared by L1 distance between feature vectors.  Candidate
partitions come from average-linkage agglomeration; the number of clusters
is picked by the mean silhouette, in which only members of non-singleton
clusters are scored, and a weak best score (<= 0.25) collapses everything
into one cluster.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .markov import BasketModel

__all__ = [
    "Partition",
    "WEAK_STRUCTURE",
    "feature_vector",
    "orr_feature",
    "manhattan_distance",
    "dissimilarity_matrix",
    "candidate_partition",
    "silhouette",
    "select_clustering",
    "canonical_labels",
]

WEAK_STRUCTURE = 0.25


@dataclass(frozen=True)
class Partition:
    labels: tuple[int, ...]
    u: int
    mean_silhouette: float | None = None
    per_basket_silhouette: tuple[float | None, ...] | None = None
    # mean silhouette of each scored candidate, keyed by cluster count
    candidate_scores: dict[int, float] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        labels = tuple(int(x) for x in self.labels)
        object.__setattr__(self, "labels", labels)
        if not 1 <= self.u <= len(labels):
            raise ValueError(f"u={self.u} out of range for {len(labels)} baskets")
        if set(labels) != set(range(self.u)):
            raise ValueError("labels must use every cluster id in 0..u-1")

    @classmethod
    def single(cls, J: int, candidate_scores=None) -> "Partition":
        return cls((0,) * J, 1, candidate_scores=dict(candidate_scores or {}))

    @property
    def J(self) -> int:
        return len(self.labels)

    def clusters(self) -> list[list[int]]:
        """Member indices per cluster id."""
        out = [[] for _ in range(self.u)]
        for j, lab in enumerate(self.labels):
            out[lab].append(j)
        return out

    def to_dict(self) -> dict:
        return {
            "labels": list(self.labels),
            "u": self.u,
            "mean_silhouette": self.mean_silhouette,
            "per_basket_silhouette": (list(self.per_basket_silhouette)
                                      if self.per_basket_silhouette is not None
                                      else [None] * self.J),
            "candidate_scores": {str(k): v for k, v in sorted(self.candidate_scores.items())},
        }


def canonical_labels(labels) -> tuple[int, ...]:
    """Relabel so cluster ids appear in order of first member."""
    mapping: dict = {}
    return tuple(mapping.setdefault(lab, len(mapping)) for lab in labels)


def feature_vector(model: BasketModel) -> np.ndarray:
    return np.concatenate([model.final_state, [model.orr_hat]])


def orr_feature(model: BasketModel) -> np.ndarray:
    return np.array([model.orr_hat])


def manhattan_distance(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError("feature vectors must have the same length")
    return float(np.abs(a - b).sum())


def dissimilarity_matrix(features) -> np.ndarray:
    y = np.asarray(features, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    return np.abs(y[:, None, :] - y[None, :, :]).sum(axis=2)


def _merge_sequence(d: np.ndarray, stop_at: int) -> list[list[int]]:
    """Average-linkage agglomeration down to ``stop_at`` clusters.

    Cluster distances are means over the original pairwise distances.
    Ties go to the pair whose smallest member indices are lowest.
    """
    clusters = [[j] for j in range(d.shape[0])]
    while len(clusters) > stop_at:
        best = None
        for a in range(len(clusters)):
            for b in range(a + 1, len(clusters)):
                dist = d[np.ix_(clusters[a], clusters[b])].mean()
                if best is None or dist < best[0]:
                    best = (dist, a, b)
        _, a, b = best
        clusters[a] = sorted(clusters[a] + clusters[b])
        del clusters[b]
    # clusters stay ordered by their smallest member
    return clusters


def candidate_partition(d, u: int) -> Partition:
    d = np.asarray(d, dtype=float)
    J = d.shape[0]
    if not 2 <= u <= J - 1:
        raise ValueError(f"u must be in 2..{J - 1}, got {u}")
    labels = [0] * J
    for k, members in enumerate(_merge_sequence(d, u)):
        for j in members:
            labels[j] = k
    return Partition(tuple(labels), u)


def silhouette(d, partition: Partition, singletons: str = "zero") -> tuple[np.ndarray, float]:
    """Per-basket silhouette values and the overall mean.

    Only members of non-singleton clusters are scored; singletons still
    count as "other clusters" for everyone else.  With
    ``singletons="zero"`` a singleton scores 0 and the mean divides by all
    J baskets.  With ``"exclude"`` singletons get ``nan`` and the mean is
    taken over scored baskets only.
    """
    if singletons not in ("zero", "exclude"):
        raise ValueError(f"unknown singleton rule {singletons!r}")
    d = np.asarray(d, dtype=float)
    clusters = partition.clusters()
    if partition.u < 2:
        raise ValueError("silhouette needs at least two clusters")
    if all(len(c) < 2 for c in clusters):
        raise ValueError("silhouette is undefined when every cluster is a singleton")
    labels = partition.labels
    s = np.full(len(labels), 0.0 if singletons == "zero" else np.nan)
    for j, lab in enumerate(labels):
        own = clusters[lab]
        if len(own) < 2:
            continue
        a = d[j, own].sum() / (len(own) - 1)
        b = min(d[j, c].mean() for k, c in enumerate(clusters) if k != lab)
        m = max(a, b)
        s[j] = 0.0 if m == 0 else (b - a) / m
    return s, float(np.nanmean(s))


def select_clustering(features, singletons: str = "zero") -> Partition:
    """Choose a partition of the baskets from their feature vectors.

    Tries every cluster count from 2 to J-1 and keeps the best mean
    silhouette (first one wins on ties); see `silhouette` for how
    singletons are scored.  Returns the one-cluster partition
    if that best score is at most 0.25 or if J is 2.
    """
    y = np.asarray(features, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    J = y.shape[0]
    if J < 2:
        raise ValueError("need at least two baskets to cluster")
    d = dissimilarity_matrix(y)
    scores: dict[int, float] = {}
    best = None
    for u in range(2, J):
        cand = candidate_partition(d, u)
        s, mean = silhouette(d, cand, singletons)
        scores[u] = mean
        if best is None or mean > best[2]:
            best = (cand, s, mean)
    if best is None or best[2] <= WEAK_STRUCTURE:
        return Partition.single(J, scores)
    cand, s, mean = best
    return Partition(
        cand.labels,
        cand.u,
        mean_silhouette=mean,
        per_basket_silhouette=tuple(None if np.isnan(v) else float(v) for v in s),
        candidate_scores=scores,
    )
