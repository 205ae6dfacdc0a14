"""DBSCAN fact clustering and threshold-range selection."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from sklearn.cluster import DBSCAN

from ..corpus import FactTriple
from .similarity import SimilarityConfig, distance_matrix

EDIT_STEP = 0.05


@dataclass
class FactClustering:
    facts: list[FactTriple]
    labels: np.ndarray
    geometry: str
    eps: float

    @property
    def n_clusters(self) -> int:
        return len(set(self.labels.tolist()))

    def clusters(self) -> list[list[int]]:
        """Member indices per cluster, clusters ordered by first member."""
        groups: dict[int, list[int]] = {}
        for i, lab in enumerate(self.labels.tolist()):
            groups.setdefault(lab, []).append(i)
        return list(groups.values())


def cluster_from_distances(dist: np.ndarray, eps: float) -> np.ndarray:
    """DBSCAN labels with min_samples=1, i.e. connected components of {d <= eps}."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    if dist.shape[0] == 0:
        return np.zeros(0, dtype=int)
    return DBSCAN(eps=eps, min_samples=1, metric="precomputed").fit(dist).labels_


def cluster_facts(facts: Sequence[FactTriple], cfg: SimilarityConfig, eps: float,
                  dist: np.ndarray | None = None) -> FactClustering:
    facts = list(facts)
    if dist is None:
        dist = distance_matrix(facts, cfg)
    return FactClustering(facts, cluster_from_distances(dist, eps), cfg.geometry, eps)


def threshold_grid(cfg: SimilarityConfig, max_distance: float) -> list[float]:
    if cfg.geometry == "edit":
        return [round(EDIT_STEP * k, 10) for k in range(1, int(round(1 / EDIT_STEP)) + 1)]
    step = EDIT_STEP * max_distance
    return [step * k for k in range(1, int(round(1 / EDIT_STEP)) + 1)]


def auto_threshold_range(gold_sets: Sequence[Sequence[FactTriple]], cfg: SimilarityConfig,
                         hi_frac: float = 0.9, lo_frac: float = 1.1) -> list[float]:
    """Contiguous thresholds over which the mean gold cluster count moves from near
    one-cluster-per-fact down to near one cluster.

    The range starts at the last grid threshold still keeping >= ``hi_frac``
    of the maximum count and ends at the first one at <= ``lo_frac`` of the
    minimum count.
    """
    if not gold_sets:
        raise ValueError("need at least one gold set")
    dists = [distance_matrix(list(g), cfg) for g in gold_sets if len(g)]
    dmax = max((float(d.max()) for d in dists if d.size), default=0.0)
    if dmax == 0.0:
        return [EDIT_STEP]
    grid = threshold_grid(cfg, dmax)
    counts = np.array([np.mean([len(set(cluster_from_distances(d, eps).tolist())) for d in dists])
                       for eps in grid])
    most = np.mean([d.shape[0] for d in dists])
    least = 1.0
    above = np.flatnonzero(counts >= hi_frac * most)
    below = np.flatnonzero(counts <= lo_frac * least)
    start = int(above[-1]) if above.size else 0
    end = int(below[0]) if below.size else len(grid) - 1
    start, end = min(start, end), max(start, end)
    return grid[start:end + 1]
