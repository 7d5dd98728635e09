"""Fault classification with optimal 1-D k-means and a centroid-proximity ladder.

In one dimension the optimal k-means clusters are contiguous in sorted order,
so the globally SSE-minimal partition can be computed exactly with dynamic
programming (divide-and-conquer over the monotone argmin matrix, O(k n log n)).
The solver is fully deterministic: no seeding, no restarts, first-index
tie-breaks.

Detection starts at k=3 (one cluster near the process mean, one above, one
below). Whenever two adjacent centroids end up closer than the minimum
separation (1.5 x estimated sigma), k is reduced; if even k=2 fails the test,
the whole batch is declared normal.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import InsufficientDataError
from .spc import ProcessStats

DEFAULT_SEPARATION_FACTOR = 1.5


@dataclass(frozen=True)
class ClusterPolicy:
    """Knobs for the detection ladder."""

    min_centroid_separation: float
    k_start: int = 3

    def __post_init__(self):
        if self.min_centroid_separation < 0:
            raise ValueError("min_centroid_separation must be non-negative")
        if self.k_start < 2:
            raise ValueError("k_start must be at least 2")

    @classmethod
    def from_stats(cls, stats: ProcessStats, factor: float = DEFAULT_SEPARATION_FACTOR, **kwargs):
        return cls(min_centroid_separation=factor * stats.sigma, **kwargs)


@dataclass(frozen=True)
class ClusterResult:
    """Clustering outcome; centroids are sorted ascending and labels index them."""

    k: int
    centroids: np.ndarray
    labels: np.ndarray
    sse: float
    normal_cluster: int | None = None

    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.k)

    @property
    def faulty_mask(self) -> np.ndarray:
        if self.normal_cluster is None:
            raise ValueError("normal cluster not assigned; run cluster_detect")
        return self.labels != self.normal_cluster


def _fill_layer(prev: np.ndarray, s1: np.ndarray, s2: np.ndarray, m: int, n: int):
    """One DP layer: cur[j] = min_i prev[i] + cost(i, j) for j in [m, n].

    cost(i, j) is the SSE of the sorted segment [i, j). The argmin is monotone
    in j, so a divide-and-conquer sweep visits each j once and keeps the
    candidate ranges small.
    """
    cur = np.full(n + 1, np.inf)
    arg = np.zeros(n + 1, dtype=np.int64)
    stack = [(m, n, m - 1, n - 1)]
    while stack:
        jlo, jhi, ilo, ihi = stack.pop()
        if jlo > jhi:
            continue
        j = (jlo + jhi) // 2
        lo, hi = ilo, min(ihi, j - 1)
        cand = np.arange(lo, hi + 1)
        count = j - cand
        seg_sum = s1[j] - s1[cand]
        seg_cost = (s2[j] - s2[cand]) - seg_sum * seg_sum / count
        total = prev[cand] + seg_cost
        t = int(np.argmin(total))
        best = lo + t
        cur[j] = total[t]
        arg[j] = best
        stack.append((jlo, j - 1, ilo, best))
        stack.append((j + 1, jhi, best, ihi))
    return cur, arg


def kmeans_1d(values, k: int) -> ClusterResult:
    """Globally optimal 1-D k-means (minimum within-cluster sum of squares).

    Returns k non-empty clusters; with ties in the data, adjacent centroids may
    coincide, which downstream separation tests treat as "too close".
    """
    values = np.asarray(values, dtype=np.float64)
    n = len(values)
    if k < 1:
        raise ValueError("k must be at least 1")
    if n < k:
        raise InsufficientDataError(f"k-means needs at least {k} values, got {n}")

    order = np.argsort(values, kind="stable")
    x = values[order]
    s1 = np.concatenate([[0.0], np.cumsum(x)])
    s2 = np.concatenate([[0.0], np.cumsum(x * x)])

    # layer 1: one segment [0, j)
    js = np.arange(n + 1)
    with np.errstate(invalid="ignore", divide="ignore"):
        prev = s2[js] - np.where(js > 0, s1[js] ** 2 / np.maximum(js, 1), 0.0)
    prev[0] = 0.0

    arg_layers = []
    for m in range(2, k + 1):
        prev, arg = _fill_layer(prev, s1, s2, m, n)
        arg_layers.append(arg)

    boundaries = [n]
    j = n
    for arg in reversed(arg_layers):
        j = int(arg[j])
        boundaries.append(j)
    boundaries.append(0)
    boundaries.reverse()  # 0 = b_0 < b_1 < ... < b_k = n

    labels_sorted = np.empty(n, dtype=np.int64)
    centroids = np.empty(k)
    for i in range(k):
        lo, hi = boundaries[i], boundaries[i + 1]
        labels_sorted[lo:hi] = i
        centroids[i] = (s1[hi] - s1[lo]) / (hi - lo)

    labels = np.empty(n, dtype=np.int64)
    labels[order] = labels_sorted
    sse = float(np.sum((values - centroids[labels]) ** 2))
    return ClusterResult(k, centroids, labels, sse)


def _min_adjacent_gap(centroids: np.ndarray) -> float:
    if len(centroids) < 2:
        return np.inf
    return float(np.min(np.diff(centroids)))


def cluster_detect(values, stats: ProcessStats, policy: ClusterPolicy | None = None) -> ClusterResult:
    """Classify a batch of deviation values as normal/faulty via the k ladder.

    Returns a ClusterResult with ``normal_cluster`` set: the cluster whose
    centroid lies nearest the process mean is normal, every other cluster is
    faulty. A terminal k=1 result means no fault was found in the batch.
    """
    if policy is None:
        policy = ClusterPolicy.from_stats(stats)
    for k in range(policy.k_start, 1, -1):
        result = kmeans_1d(values, k)
        if _min_adjacent_gap(result.centroids) >= policy.min_centroid_separation:
            normal = int(np.argmin(np.abs(result.centroids - stats.mu)))
            return ClusterResult(
                result.k, result.centroids, result.labels, result.sse, normal
            )
    result = kmeans_1d(values, 1)
    return ClusterResult(result.k, result.centroids, result.labels, result.sse, 0)


def write_clusters_csv(timestamps, values, result: ClusterResult, path) -> None:
    path = Path(path)
    faulty = result.faulty_mask
    with path.open("w", encoding="utf-8", newline="") as fh:
        fh.write("timestamp,value,cluster,faulty\n")
        for ts, v, label, bad in zip(pd.DatetimeIndex(timestamps), values, result.labels, faulty):
            fh.write(f"{ts.isoformat()},{float(v)!r},{int(label)},{int(bad)}\n")
