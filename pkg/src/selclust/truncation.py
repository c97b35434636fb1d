"""The set of perturbation sizes phi that leave the tested clusters intact.

For squared Euclidean distance the dissimilarity between two observations in
the perturbed data is a quadratic in phi, and Lance-Williams linkages keep
every cluster-to-cluster dissimilarity quadratic. Replaying the merge history
therefore turns the set into an intersection of quadratic inequalities, one
per losing pair, each compared against the largest merge height over that
pair's lifetime.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from . import _engine
from ._validation import ClusterPair, check_data, check_pair
from .core import contrast_vector, perturbed_dataset, perturbed_dataset_cov, project_out
from .exceptions import ConfigError, DegenerateDirectionError, InvalidPairError
from .hclust import Linkage, MergeHistory, _window_max, cut_clusters, iter_losing_blocks, squared_distances
from .intervals import INF, Interval, IntervalSet

log = logging.getLogger(__name__)

LINEAR_TOL = 1e-12
TIE_RTOL = 1e-9


@dataclass(frozen=True)
class PhiQuadratic:
    """``d(phi) = a phi^2 + b phi + c``."""

    a: float
    b: float
    c: float

    def __call__(self, phi):
        return (self.a * phi + self.b) * phi + self.c

    def __iter__(self):
        return iter((self.a, self.b, self.c))


@dataclass(frozen=True)
class Truncation:
    """A computed truncation set plus bookkeeping about how it was obtained."""

    support: IntervalSet
    statistic: float
    n_constraints: int
    near_tie: bool = False


# -- coefficients ---------------------------------------------------------------


def _base_matrices(x: np.ndarray, pair: ClusterPair, sigma_chol=None):
    """Coefficient matrices (A, B, C) for every observation pair, plus the statistic."""
    n = x.shape[0]
    nu = contrast_vector(pair, n)
    nn = nu @ nu
    w = x.T @ nu
    norm_w = float(np.linalg.norm(w))
    if norm_w == 0:
        raise DegenerateDirectionError("the two cluster means coincide; the test is undefined")
    if sigma_chol is None:
        scale, stat = 1.0, norm_w
    else:
        stat = float(np.linalg.norm(np.linalg.solve(sigma_chol, w)))
        scale = norm_w / stat
    proj = x @ (w / norm_w)
    k = (nu[:, None] - nu[None, :]) / nn
    A = (k * scale) ** 2
    B = 2.0 * (k * scale * (proj[:, None] - proj[None, :]) - A * stat)
    C = squared_distances(project_out(x, nu))
    return A, B, C, stat


def base_quadratic(x, nu, i: int, j: int) -> PhiQuadratic:
    """Quadratic ``||x'_i(phi) - x'_j(phi)||^2`` for one pair of observations."""
    return _single_base(x, nu, i, j, None)


def base_quadratic_cov(x, nu, sigma_chol, i: int, j: int) -> PhiQuadratic:
    """Same as :func:`base_quadratic` for the perturbation under ``Sigma = L L^T``."""
    return _single_base(x, nu, i, j, np.asarray(sigma_chol, dtype=np.float64))


def _single_base(x, nu, i, j, sigma_chol) -> PhiQuadratic:
    from .exceptions import InvalidContrastError

    x = np.asarray(x, dtype=np.float64)
    nu = np.asarray(nu, dtype=np.float64)
    nn = nu @ nu
    if nn == 0:
        raise InvalidContrastError("contrast vector is zero")
    w = x.T @ nu
    norm_w = float(np.linalg.norm(w))
    if norm_w == 0:
        raise DegenerateDirectionError("the two cluster means coincide; the test is undefined")
    if sigma_chol is None:
        scale, stat = 1.0, norm_w
    else:
        stat = float(np.linalg.norm(np.linalg.solve(sigma_chol, w)))
        scale = norm_w / stat
    k = (nu[i] - nu[j]) / nn
    a = (k * scale) ** 2
    diff = x[i] - x[j]
    b = 2.0 * (k * scale * float(diff @ (w / norm_w)) - a * stat)
    resid = diff - k * w
    return PhiQuadratic(float(a), float(b), float(resid @ resid))


def lw_combine(q13, q23, q12, linkage, sizes) -> PhiQuadratic:
    """Quadratic of ``d(G1 u G2, G3)`` from the three pre-merge quadratics."""
    linkage = Linkage.parse(linkage)
    if not linkage.is_lance_williams:
        raise ConfigError(f"{linkage.value} linkage has no linear Lance-Williams update")
    n1, n2, n3 = (float(s) for s in sizes)
    a1, a2, beta, _ = _engine.lw_coefficients(linkage.code, n1, n2, n3)
    q13, q23, q12 = (np.array(tuple(q), dtype=float) for q in (q13, q23, q12))
    return PhiQuadratic(*(a1 * q13 + a2 * q23 + beta * q12).tolist())


def _lw_arrays(code: int, na: float, nb: float, nk: np.ndarray):
    if code == _engine.WARD:
        s = na + nb + nk
        return (na + nk) / s, (nb + nk) / s, -nk / s
    a1, a2, beta, _ = _engine.lw_coefficients(code, na, nb, 1.0)
    return a1, a2, beta


# -- inequalities ---------------------------------------------------------------


def _forbidden(a: np.ndarray, b: np.ndarray, c: np.ndarray):
    """Closed intervals where ``a phi^2 + b phi + c <= 0`` on ``phi >= 0``.

    Each inequality forbids at most two pieces; returned as (lo, hi) arrays
    with ``hi = inf`` for unbounded pieces.
    """
    lo_parts, hi_parts = [], []
    scale = np.maximum(np.maximum(np.abs(b), np.abs(c)), 1.0)
    quad = np.abs(a) >= LINEAR_TOL * scale
    lin = ~quad & (b != 0)
    const = ~quad & ~lin

    # constant: forbidden everywhere when c <= 0
    m = const & (c <= 0)
    lo_parts.append(np.zeros(m.sum()))
    hi_parts.append(np.full(m.sum(), INF))

    # linear
    r = -c[lin] / b[lin]
    up = b[lin] > 0
    lo_parts += [np.zeros(up.sum()), r[~up]]
    hi_parts += [r[up], np.full((~up).sum(), INF)]

    # quadratic, numerically stable roots
    aq, bq, cq = a[quad], b[quad], c[quad]
    disc = bq * bq - 4.0 * aq * cq
    real = disc >= 0
    sq = np.sqrt(np.where(real, disc, 0.0))
    qq = -0.5 * (bq + np.where(bq >= 0, sq, -sq))
    with np.errstate(divide="ignore", invalid="ignore"):
        r1 = qq / aq
        r2 = np.where(qq != 0, cq / qq, r1)
    lo_r, hi_r = np.minimum(r1, r2), np.maximum(r1, r2)
    pos = aq > 0
    m = pos & real
    lo_parts.append(lo_r[m])
    hi_parts.append(hi_r[m])
    m = ~pos & ~real
    lo_parts.append(np.zeros(m.sum()))
    hi_parts.append(np.full(m.sum(), INF))
    m = ~pos & real
    lo_parts += [np.zeros(m.sum()), hi_r[m]]
    hi_parts += [lo_r[m], np.full(m.sum(), INF)]

    lo = np.concatenate(lo_parts)
    hi = np.concatenate(hi_parts)
    keep = hi >= 0
    return np.maximum(lo[keep], 0.0), hi[keep]


def _allowed_from_forbidden(lo: np.ndarray, hi: np.ndarray) -> IntervalSet:
    """Complement in ``[0, inf)`` of a union of closed intervals."""
    if lo.size == 0:
        return IntervalSet.full()
    order = np.argsort(lo, kind="stable")
    lo, hi = lo[order], hi[order]
    reach = np.maximum.accumulate(hi)
    pieces = []
    if lo[0] > 0:
        pieces.append(Interval(0.0, float(lo[0]), False, True))
    gaps = np.flatnonzero(lo[1:] > reach[:-1]) + 1
    for g in gaps:
        pieces.append(Interval(float(reach[g - 1]), float(lo[g]), True, True))
    if math.isfinite(reach[-1]):
        pieces.append(Interval(float(reach[-1]), INF, True, True))
    return IntervalSet(pieces)


def solve_quadratic_gt(quad, h: float = 0.0) -> IntervalSet:
    """``{phi >= 0 : a phi^2 + b phi + c > h}``."""
    a, b, c = (float(v) for v in quad)
    lo, hi = _forbidden(np.array([a]), np.array([b]), np.array([c - h]))
    return _allowed_from_forbidden(lo, hi)


def intersect_quadratics(a, b, c, h) -> IntervalSet:
    """Intersection of ``{phi >= 0 : a_k phi^2 + b_k phi + c_k > h_k}`` over k."""
    a, b, c, h = (np.asarray(v, dtype=np.float64) for v in (a, b, c, h))
    lo, hi = _forbidden(a, b, c - h)
    return _allowed_from_forbidden(lo, hi)


# -- truncation sets ------------------------------------------------------------


def _check_pair_in_clustering(history: MergeHistory, pair) -> ClusterPair:
    pair = check_pair(pair, history.n)
    clusters = set(cut_clusters(history))
    if pair.c1 not in clusters or pair.c2 not in clusters:
        raise InvalidPairError("the pair is not a pair of clusters in the clustering")
    return pair


def _lw_blocks(history: MergeHistory, A, B, C):
    """Yield ``(left_ids, right_ids, a, b, c, h)`` for each block of losing pairs."""
    n = history.n
    code = history.linkage.code
    A, B, C = A.copy(), B.copy(), C.copy()
    size = np.ones(n)
    active = np.ones(n, dtype=bool)
    inversions = history.inversion_steps
    for block in iter_losing_blocks(history):
        li, ri = block.left_slots, block.right_slots
        h = _window_max(history.heights, inversions, block.l, block.u)
        yield block.left_ids, block.right_ids, A[li, ri], B[li, ri], C[li, ri], h

        # fold merge t into the coefficient matrices before block t+1
        a, b = history.slots[block.t - 1]
        active[b] = False
        others = np.flatnonzero(active)
        others = others[others != a]
        a1, a2, beta = _lw_arrays(code, size[a], size[b], size[others])
        for Q in (A, B, C):
            row = a1 * Q[a, others] + a2 * Q[b, others] + beta * Q[a, b]
            Q[a, others] = row
            Q[others, a] = row
        size[a] += size[b]


def _lw_truncation(history: MergeHistory, A, B, C, stat) -> Truncation:
    return _assemble([blk[2:] for blk in _lw_blocks(history, A, B, C)], stat)


def losing_pair_quadratics(x, history: MergeHistory, pair, sigma_chol=None):
    """Cluster ids, quadratic coefficients and threshold of every losing pair.

    Returns a dict of arrays ``left``, ``right``, ``a``, ``b``, ``c``, ``h``;
    ids follow :attr:`MergeHistory.winners`.
    """
    x = check_data(x)
    pair = _check_pair_in_clustering(history, pair)
    if not history.linkage.is_lance_williams:
        raise ConfigError(f"{history.linkage.value} linkage has no linear Lance-Williams update")
    A, B, C, _ = _base_matrices(x, pair, sigma_chol)
    keys = ("left", "right", "a", "b", "c", "h")
    blocks = list(_lw_blocks(history, A, B, C))
    if not blocks:
        return {k: np.empty(0) for k in keys}
    return {k: np.concatenate(v) for k, v in zip(keys, zip(*blocks))}


def _assemble(parts, stat) -> Truncation:
    if not parts:
        return Truncation(IntervalSet.full(), stat, 0)
    qa, qb, qc, h = (np.concatenate(p) for p in zip(*parts))
    at_stat = (qa * stat + qb) * stat + qc
    tied = np.abs(at_stat - h) <= TIE_RTOL * np.maximum(np.abs(h), 1e-300)
    near_tie = bool(tied.any())
    if near_tie:
        log.warning("a losing pair is within %.0e of its merge height; the clustering has a near tie", TIE_RTOL)
        # tied pairs lost only through tie-breaking; compare them with >= so the
        # observed clustering stays inside the set
        h = np.where(tied, h - 2 * TIE_RTOL * np.abs(h) - 1e-300, h)
    support = intersect_quadratics(qa, qb, qc, h)
    return Truncation(support, stat, int(qa.size), near_tie)


def _single_truncation(history: MergeHistory, pair: ClusterPair, A, B, C, stat) -> Truncation:
    if history.n_steps == 0:
        return Truncation(IntervalSet.full(), stat, 0)
    labels = history.labels
    side = np.zeros(history.n, dtype=np.int64)
    side[list(pair.c1)] = 1
    side[list(pair.c2)] = 2
    iu, ju = np.triu_indices(history.n, k=1)
    # pairs split by the final clustering with at least one end in the tested pair
    keep = (labels[iu] != labels[ju]) & ((side[iu] > 0) | (side[ju] > 0))
    iu, ju = iu[keep], ju[keep]
    h = np.full(iu.size, history.heights[-1])
    return _assemble([(A[iu, ju], B[iu, ju], C[iu, ju], h)], stat)


def truncation(x, history: MergeHistory, pair, sigma_chol=None) -> Truncation:
    """Truncation set for ``pair`` with diagnostics; dispatches on the linkage."""
    x = check_data(x)
    pair = _check_pair_in_clustering(history, pair)
    if not history.linkage.has_exact_truncation:
        raise ConfigError(f"no exact truncation set for {history.linkage.value} linkage; use Monte Carlo")
    A, B, C, stat = _base_matrices(x, pair, sigma_chol)
    if history.linkage is Linkage.SINGLE:
        return _single_truncation(history, pair, A, B, C, stat)
    return _lw_truncation(history, A, B, C, stat)


def compute_S_lw(x, history: MergeHistory, pair, sigma_chol=None) -> IntervalSet:
    """Exact truncation set for the five Lance-Williams linkages."""
    if not history.linkage.is_lance_williams:
        raise ConfigError(f"{history.linkage.value} linkage has no linear Lance-Williams update")
    return truncation(x, history, pair, sigma_chol).support


def compute_S_single(x, history: MergeHistory, pair, sigma_chol=None) -> IntervalSet:
    """Exact truncation set for single linkage."""
    if history.linkage is not Linkage.SINGLE:
        raise ConfigError("compute_S_single needs a single-linkage history")
    return truncation(x, history, pair, sigma_chol).support


def default_phi_grid(history: MergeHistory, statistic: float, size: int = 400) -> np.ndarray:
    top = max(4.0 * statistic, 2.0 * math.sqrt(max(float(history.heights.max(initial=0.0)), 0.0)))
    return np.linspace(0.0, top, size)


def compute_S_oracle(x, linkage, n_clusters: int, pair, phi_grid, sigma_chol=None) -> np.ndarray:
    """Membership of each grid point, found by reclustering the perturbed data."""
    x = check_data(x)
    linkage = Linkage.parse(linkage)
    pair = check_pair(pair, x.shape[0])
    c1 = np.array(pair.c1, dtype=np.int64)
    c2 = np.array(pair.c2, dtype=np.int64)
    n = x.shape[0]
    out = np.zeros(len(phi_grid), dtype=bool)
    for s, phi in enumerate(phi_grid):
        if sigma_chol is None:
            xp = perturbed_dataset(x, pair, float(phi))
        else:
            xp = perturbed_dataset_cov(x, pair, float(phi), sigma_chol)
        sa, sb, _, _ = _engine.agglomerate(squared_distances(xp), linkage.code, n - n_clusters)
        out[s] = _engine.pair_preserved(_engine.slot_labels(n, sa, sb), c1, c2)
    return out


def oracle_agreement(support: IntervalSet, phi_grid, membership) -> np.ndarray:
    """Grid points (farther than one grid step from any endpoint) where analytic and oracle disagree."""
    grid = np.asarray(phi_grid, dtype=np.float64)
    step = float(np.max(np.diff(grid))) if grid.size > 1 else 0.0
    analytic = support.contains(grid)
    ends = support.endpoints
    if ends.size:
        far = np.min(np.abs(grid[:, None] - ends[None, :]), axis=1) > step
    else:
        far = np.ones(grid.size, dtype=bool)
    return np.flatnonzero(far & (analytic != np.asarray(membership, dtype=bool)))
