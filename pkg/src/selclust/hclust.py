"""Agglomerative hierarchical clustering with squared Euclidean dissimilarity.

Besides the clustering itself, :class:`MergeHistory` keeps what the
truncation-set computation needs: the winning pair and height of every step,
cluster lifetimes, and the steps where the dendrogram inverts.

Steps are numbered ``1 .. n-K``. Cluster ids follow the scipy convention:
observation ``i`` is cluster ``i`` and the cluster created at step ``t`` is
``n + t - 1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Iterator

import numpy as np
from scipy.spatial.distance import cdist
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.utils.validation import check_is_fitted

from . import _engine
from ._validation import check_data
from .exceptions import ConfigError


class Linkage(str, Enum):
    AVERAGE = "average"
    WEIGHTED = "weighted"
    WARD = "ward"
    CENTROID = "centroid"
    MEDIAN = "median"
    SINGLE = "single"
    COMPLETE = "complete"

    @property
    def code(self) -> int:
        return list(Linkage).index(self)

    @property
    def is_lance_williams(self) -> bool:
        """Whether merged dissimilarities follow a linear Lance-Williams update."""
        return self not in (Linkage.SINGLE, Linkage.COMPLETE)

    @property
    def can_invert(self) -> bool:
        return self in (Linkage.CENTROID, Linkage.MEDIAN)

    @property
    def has_exact_truncation(self) -> bool:
        return self is not Linkage.COMPLETE

    @classmethod
    def parse(cls, value) -> "Linkage":
        if isinstance(value, Linkage):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            names = ", ".join(m.value for m in cls)
            raise ConfigError(f"unknown linkage {value!r}; expected one of {names}") from None


def lance_williams_coefficients(linkage, n1: int, n2: int, n3: int) -> tuple[float, float, float]:
    """(alpha1, alpha2, beta) of ``d(G1 u G2, G3)`` for clusters of sizes n1, n2, n3."""
    linkage = Linkage.parse(linkage)
    if not linkage.is_lance_williams:
        raise ConfigError(f"{linkage.value} linkage has no linear Lance-Williams update")
    a1, a2, beta, _ = _engine.lw_coefficients(linkage.code, float(n1), float(n2), float(n3))
    return a1, a2, beta


def pairwise_dissimilarity(x, i: int, j: int) -> float:
    """Squared Euclidean distance between rows ``i`` and ``j``."""
    x = np.asarray(x, dtype=np.float64)
    d = x[i] - x[j]
    return float(d @ d)


def squared_distances(x) -> np.ndarray:
    return cdist(x, x, "sqeuclidean")


@dataclass(frozen=True)
class LosingPair:
    """A cluster pair that coexists during steps ``l..u`` without merging.

    ``h`` is the largest merge height over that window.
    """

    pair: tuple[tuple[int, ...], tuple[int, ...]]
    ids: tuple[int, int]
    l: int
    u: int
    h: float


@dataclass(frozen=True, eq=False)
class MergeHistory:
    """Record of the first ``n - K`` merges of an agglomerative clustering."""

    n: int
    n_clusters: int
    linkage: Linkage
    slots: np.ndarray = field(repr=False)
    heights: np.ndarray = field(repr=False)
    tie: bool = False

    @property
    def n_steps(self) -> int:
        return self.n - self.n_clusters

    @cached_property
    def winners(self) -> np.ndarray:
        """Cluster ids ``(W1, W2)`` merged at each step, shape ``(n-K, 2)``."""
        ids = np.arange(self.n)
        out = np.empty((self.n_steps, 2), dtype=np.int64)
        for t, (a, b) in enumerate(self.slots):
            out[t] = ids[a], ids[b]
            ids[a] = self.n + t
        return out

    @cached_property
    def _members(self) -> dict[int, tuple[int, ...]]:
        members = {i: (i,) for i in range(self.n)}
        for t, (g1, g2) in enumerate(self.winners):
            members[self.n + t] = tuple(sorted(members[int(g1)] + members[int(g2)]))
        return members

    def members(self, cluster_id: int) -> tuple[int, ...]:
        return self._members[int(cluster_id)]

    @property
    def steps(self) -> list[tuple[int, tuple[int, ...], tuple[int, ...], float]]:
        """``(t, W1, W2, height)`` for every recorded step."""
        return [
            (t + 1, self.members(g1), self.members(g2), float(h))
            for t, ((g1, g2), h) in enumerate(zip(self.winners, self.heights))
        ]

    @cached_property
    def lifetimes(self) -> dict[int, tuple[int, int]]:
        """First and last step (``l_G``, ``u_G``) at which each cluster exists."""
        last = self.n_steps
        out = {i: (1, last) for i in range(self.n)}
        for t in range(1, last):
            out[self.n + t - 1] = (t + 1, last)
        for t, (g1, g2) in enumerate(self.winners, start=1):
            out[int(g1)] = (out[int(g1)][0], t)
            out[int(g2)] = (out[int(g2)][0], t)
        return out

    @cached_property
    def inversion_steps(self) -> np.ndarray:
        """Steps ``t < n-K`` whose merge height exceeds that of step ``t+1``."""
        h = self.heights
        return np.flatnonzero(h[:-1] > h[1:]) + 1

    @cached_property
    def slot_labels(self) -> np.ndarray:
        return _engine.slot_labels(self.n, self.slots[:, 0].copy(), self.slots[:, 1].copy())

    @cached_property
    def labels(self) -> np.ndarray:
        """Final cluster labels ``0..K-1``, numbered by smallest member."""
        _, labels = np.unique(self.slot_labels, return_inverse=True)
        return labels.astype(np.int64)

    @property
    def final_clusters(self) -> list[tuple[int, ...]]:
        return cut_clusters(self)


def run_agglomerative(x, linkage="average", n_clusters: int = 1) -> MergeHistory:
    """Cluster the rows of ``x`` down to ``n_clusters`` groups."""
    x = check_data(x, min_rows=1)
    linkage = Linkage.parse(linkage)
    n = x.shape[0]
    if not 1 <= n_clusters <= n:
        raise ConfigError(f"number of clusters must be in 1..{n}, got {n_clusters}")
    return _history_from_matrix(squared_distances(x), linkage, n_clusters)


def _history_from_matrix(D: np.ndarray, linkage: Linkage, n_clusters: int) -> MergeHistory:
    n = D.shape[0]
    a, b, heights, tie = _engine.agglomerate(D, linkage.code, n - n_clusters)
    slots = np.column_stack([a, b]).astype(np.int64)
    return MergeHistory(n, n_clusters, linkage, slots, heights, bool(tie))


def cut_clusters(history: MergeHistory) -> list[tuple[int, ...]]:
    """The K clusters as sorted member tuples, ordered by smallest member."""
    labels = history.labels
    return [tuple(np.flatnonzero(labels == k).tolist()) for k in range(history.n_clusters)]


def _window_max(heights: np.ndarray, inversions: np.ndarray, l: np.ndarray, u: np.ndarray) -> np.ndarray:
    # only inversion steps inside [l, u) can beat the height at u
    h = heights[u - 1].copy()
    for m in inversions:
        inside = (l <= m) & (m < u)
        if inside.any():
            h[inside] = np.maximum(h[inside], heights[m - 1])
    return h


def max_merge_height(history: MergeHistory, pair) -> float:
    """Largest merge height over a losing pair's lifetime ``[l, u]``."""
    l, u = (pair.l, pair.u) if isinstance(pair, LosingPair) else pair
    return float(_window_max(history.heights, history.inversion_steps, np.array([l]), np.array([u]))[0])


@dataclass
class LosingBlock:
    """Losing pairs that become alive at step ``t`` (the set ``L_t``)."""

    t: int
    left_slots: np.ndarray
    right_slots: np.ndarray
    left_ids: np.ndarray
    right_ids: np.ndarray
    l: np.ndarray
    u: np.ndarray


def iter_losing_blocks(history: MergeHistory) -> Iterator[LosingBlock]:
    """Yield ``L_1, L_2, ...`` in step order.

    Consumers that track per-slot state (as the truncation computation does)
    must apply merge ``t`` only after consuming block ``t``.
    """
    n, steps = history.n, history.n_steps
    if steps == 0:
        return
    winners = history.winners
    life = history.lifetimes
    u_of = np.array([life[g][1] for g in range(n + steps - 1)], dtype=np.int64)

    def winner_flag(g1, g2, u_min):
        w = winners[u_min - 1]
        return ((w[:, 0] == g1) & (w[:, 1] == g2)) | ((w[:, 0] == g2) & (w[:, 1] == g1))

    iu, ju = np.triu_indices(n, k=1)
    u = np.minimum(u_of[iu], u_of[ju])
    u = u - winner_flag(iu, ju, u)
    keep = u >= 1
    yield LosingBlock(1, iu[keep], ju[keep], iu[keep], ju[keep], np.ones(keep.sum(), dtype=np.int64), u[keep])

    active = np.ones(n, dtype=bool)
    slot_id = np.arange(n)
    for t in range(2, steps + 1):
        a, b = history.slots[t - 2]
        active[b] = False
        slot_id[a] = n + t - 2
        partners = np.flatnonzero(active)
        partners = partners[partners != a]
        g = slot_id[a]
        pid = slot_id[partners]
        gl = np.full(partners.size, g)
        uu = np.minimum(u_of[g], u_of[pid])
        uu = uu - winner_flag(gl, pid, uu)
        keep = uu >= t
        yield LosingBlock(
            t,
            np.full(keep.sum(), a),
            partners[keep],
            gl[keep],
            pid[keep],
            np.full(keep.sum(), t, dtype=np.int64),
            uu[keep],
        )


def losing_pairs(history: MergeHistory) -> list[LosingPair]:
    """Every losing pair with its lifetime and maximum merge height."""
    out = []
    for block in iter_losing_blocks(history):
        hs = _window_max(history.heights, history.inversion_steps, block.l, block.u)
        for g1, g2, l, u, h in zip(block.left_ids, block.right_ids, block.l, block.u, hs):
            out.append(
                LosingPair(
                    (history.members(g1), history.members(g2)),
                    (int(g1), int(g2)),
                    int(l),
                    int(u),
                    float(h),
                )
            )
    return out


def inversion_steps(history: MergeHistory) -> list[int]:
    return history.inversion_steps.tolist()


class HierarchicalClustering(ClusterMixin, BaseEstimator):
    """Agglomerative clustering on squared Euclidean distances.

    Parameters
    ----------
    linkage : {"average", "weighted", "ward", "centroid", "median", "single", "complete"}
    n_clusters : int
        Number of clusters to cut the dendrogram at.

    Attributes
    ----------
    history_ : MergeHistory
    labels_ : ndarray of shape (n_samples,)
        Cluster labels numbered by each cluster's smallest member.
    clusters_ : list of tuple
        Member indices of each cluster.
    """

    def __init__(self, linkage="average", n_clusters=2):
        self.linkage = linkage
        self.n_clusters = n_clusters

    def fit(self, X, y=None):
        X = check_data(X, min_rows=1)
        self.n_features_in_ = X.shape[1]
        self.history_ = run_agglomerative(X, self.linkage, self.n_clusters)
        self.labels_ = self.history_.labels
        self.clusters_ = cut_clusters(self.history_)
        return self

    @property
    def merge_heights_(self) -> np.ndarray:
        check_is_fitted(self, "history_")
        return self.history_.heights

    def __call__(self, X) -> np.ndarray:
        """Cluster labels of ``X``; lets an instance act as a plain clustering function."""
        return run_agglomerative(X, self.linkage, self.n_clusters).labels
