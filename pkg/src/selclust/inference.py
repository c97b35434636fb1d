"""P-values for the difference in means between two estimated clusters.

Under the null the norm of the mean difference is a scaled chi variable; the
selective p-value conditions on the clustering having produced the tested
pair, which truncates that law to the set of perturbation sizes that keep
both clusters intact.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from itertools import combinations

import mpmath
import numpy as np
from scipy import stats
from scipy.special import logsumexp
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import _engine
from ._validation import ClusterPair, check_covariance, check_data, check_pair, check_positive
from .core import test_statistic, whitened_statistic
from .exceptions import ConfigError, DataError, DegenerateSupportError, UnstableEstimateError
from .hclust import Linkage, MergeHistory, cut_clusters, run_agglomerative
from .intervals import INF, Interval, IntervalSet
from .truncation import _base_matrices, truncation

log = logging.getLogger(__name__)

TINY_P = 1e-307
MIN_ESS = 20.0


# -- chi tail arithmetic ----------------------------------------------------------


def _log_chi2_sf(x2: float, q: int) -> float:
    if x2 <= 0:
        return 0.0
    if math.isinf(x2):
        return -INF
    v = stats.chi2.sf(x2, q)
    if v > 1e-300:
        return math.log(v)
    return float(mpmath.log(mpmath.gammainc(q / 2.0, x2 / 2.0, mpmath.inf, regularized=True)))


def _log_chi2_cdf(x2: float, q: int) -> float:
    if x2 <= 0:
        return -INF
    if math.isinf(x2):
        return 0.0
    v = stats.chi2.cdf(x2, q)
    if v > 1e-300:
        return math.log(v)
    return float(mpmath.log(mpmath.gammainc(q / 2.0, 0, x2 / 2.0, regularized=True)))


def _log1mexp(d: float) -> float:
    """``log(1 - exp(d))`` for ``d <= 0``."""
    if d >= 0:
        return -INF
    if d > -math.log(2.0):
        return math.log(-math.expm1(d))
    return math.log1p(-math.exp(d))


def _log_interval_mass(lo: float, hi: float, q: int) -> float:
    """``log P(lo <= chi_q <= hi)``, differencing on whichever tail is smaller."""
    lo2, hi2 = lo * lo, hi * hi
    if lo2 >= hi2:
        return -INF
    if lo2 > stats.chi2.median(q):
        a, b = _log_chi2_sf(lo2, q), _log_chi2_sf(hi2, q)
    else:
        a, b = _log_chi2_cdf(hi2, q), _log_chi2_cdf(lo2, q)
    if a == -INF:
        return -INF
    return a + _log1mexp(b - a)


def _log_mass(support: IntervalSet, q: int, c: float) -> float:
    parts = [_log_interval_mass(p.lo / c, p.hi / c, q) for p in support]
    parts = [v for v in parts if v > -INF]
    return float(logsumexp(parts)) if parts else -INF


@dataclass(frozen=True)
class TruncatedChi:
    """``c * chi_q`` restricted to ``support``."""

    q: int
    c: float
    support: IntervalSet

    def __post_init__(self):
        if self.q < 1:
            raise ConfigError(f"degrees of freedom must be >= 1, got {self.q}")
        check_positive(self.c, "scale")

    def log_sf(self, t: float) -> float:
        # split the support at t and use log(upper / (upper + lower)), which
        # keeps full relative precision whether the answer is near 0 or near 1
        t = max(float(t), 0.0)
        upper = _log_mass(self.support & IntervalSet([Interval(t, INF)]), self.q, self.c)
        lower = _log_mass(self.support & IntervalSet([Interval(0.0, t, False, True)]), self.q, self.c)
        if upper == -INF and lower == -INF:
            raise DegenerateSupportError("the truncation set carries no probability mass")
        if upper == -INF:
            return -INF
        if lower == -INF:
            return 0.0
        return -float(np.logaddexp(0.0, lower - upper))

    def sf(self, t: float) -> float:
        return math.exp(self.log_sf(t))


def truncated_chi_survival(dist: TruncatedChi, t: float) -> float:
    """``P(phi >= t | phi in support)`` for ``phi ~ c * chi_q``."""
    return dist.sf(t)


# -- results ----------------------------------------------------------------------


def format_p(p: float) -> str:
    return f"<{TINY_P:.0e}" if p < TINY_P else f"{p:.6g}"


@dataclass
class TestResult:
    """Outcome of one test; ``pair`` uses 0-based observation indices."""

    __test__ = False

    statistic: float
    p_value: float
    method: str
    sigma_used: float
    log_p_value: float = math.nan
    truncation_set: IntervalSet | None = None
    n_samples: int | None = None
    ess: float | None = None
    pair: ClusterPair | None = None
    flags: list[str] = field(default_factory=list)

    def __post_init__(self):
        if math.isnan(self.log_p_value):
            self.log_p_value = math.log(self.p_value) if self.p_value > 0 else -INF

    def to_json(self, labels: tuple[int, int] | None = None) -> dict:
        out = {
            "statistic": self.statistic,
            "p_value": self.p_value,
            "p_value_display": format_p(self.p_value),
            "log_p_value": self.log_p_value if math.isfinite(self.log_p_value) else None,
            "method": self.method,
            "sigma_used": None if math.isnan(self.sigma_used) else self.sigma_used,
        }
        if self.truncation_set is not None:
            out["truncation_set"] = self.truncation_set.to_json()
        if self.n_samples is not None:
            out["n_samples"] = self.n_samples
            out["ess"] = self.ess
        if labels is not None:
            out["clusters"] = [labels[0] + 1, labels[1] + 1]
        if self.pair is not None:
            c1, c2 = self.pair.one_based()
            out["cluster_sizes"] = [len(c1), len(c2)]
            out["members"] = [c1, c2]
        out["flags"] = list(self.flags)
        return out


# -- exact p-values -----------------------------------------------------------------


def _exact(x, history, pair, sigma, method, sigma_chol=None) -> TestResult:
    x = check_data(x)
    pair = check_pair(pair, x.shape[0])
    tr = truncation(x, history, pair, sigma_chol)
    scale = math.sqrt(pair.squared_norm) * (1.0 if sigma_chol is not None else sigma)
    lp = TruncatedChi(x.shape[1], scale, tr.support).log_sf(tr.statistic)
    flags = ["near_tie"] if tr.near_tie or history.tie else []
    return TestResult(
        statistic=tr.statistic,
        p_value=math.exp(lp),
        log_p_value=lp,
        method=method,
        sigma_used=sigma,
        truncation_set=tr.support,
        pair=pair,
        flags=flags,
    )


def selective_p_exact(x, history: MergeHistory, pair, sigma: float) -> TestResult:
    """Selective p-value with known noise level ``sigma``."""
    return _exact(x, history, pair, check_positive(sigma, "sigma"), "exact")


def selective_p_plugin(x, history: MergeHistory, pair, sigma_hat: float) -> TestResult:
    """:func:`selective_p_exact` with an estimated noise level."""
    return _exact(x, history, pair, check_positive(sigma_hat, "sigma_hat"), "plugin")


def selective_p_cov(x, history: MergeHistory, pair, sigma_matrix) -> TestResult:
    """Selective p-value when the rows have known covariance ``sigma_matrix``."""
    x = check_data(x)
    chol = check_covariance(sigma_matrix, x.shape[1])
    return _exact(x, history, pair, math.nan, "covariance", chol)


def estimate_sigma(x) -> float:
    """Pooled standard deviation of the column-centred data, divisor ``nq - q``."""
    x = check_data(x, min_rows=2)
    n, q = x.shape
    ss = float(((x - x.mean(axis=0)) ** 2).sum())
    return math.sqrt(ss / (n * q - q))


def _log_chi_sf(stat: float, scale: float, q: int) -> float:
    return _log_chi2_sf((stat / scale) ** 2, q)


def wald_p(x, pair, sigma: float) -> float:
    """Naive p-value that ignores how the clusters were found."""
    x = check_data(x)
    pair = check_pair(pair, x.shape[0])
    scale = check_positive(sigma, "sigma") * math.sqrt(pair.squared_norm)
    return math.exp(_log_chi_sf(test_statistic(x, pair), scale, x.shape[1]))


def wald_p_cov(x, pair, sigma_matrix) -> float:
    """Naive p-value based on the Mahalanobis norm of the mean difference."""
    x = check_data(x)
    pair = check_pair(pair, x.shape[0])
    chol = check_covariance(sigma_matrix, x.shape[1])
    stat = whitened_statistic(x, pair, chol)
    return math.exp(_log_chi_sf(stat, math.sqrt(pair.squared_norm), x.shape[1]))


# -- Monte Carlo ------------------------------------------------------------------


def _preserved_by_callable(x, pair, sigma_chol, clusterer, phis):
    from .core import perturbed_dataset, perturbed_dataset_cov

    c1, c2 = set(pair.c1), set(pair.c2)
    out = np.zeros(len(phis), dtype=bool)
    for s, phi in enumerate(phis):
        if sigma_chol is None:
            xp = perturbed_dataset(x, pair, float(phi))
        else:
            xp = perturbed_dataset_cov(x, pair, float(phi), sigma_chol)
        labels = np.asarray(clusterer(xp))
        groups = {}
        for i, lab in enumerate(labels.tolist()):
            groups.setdefault(lab, set()).add(i)
        found = list(groups.values())
        out[s] = c1 in found and c2 in found
    return out


def _resolve_clusterer(clusterer, n_clusters):
    """Return (linkage, K) for the compiled path, or None for an arbitrary callable."""
    from .hclust import HierarchicalClustering

    if isinstance(clusterer, HierarchicalClustering):
        return Linkage.parse(clusterer.linkage), int(clusterer.n_clusters)
    if isinstance(clusterer, (str, Linkage)):
        if n_clusters is None:
            raise ConfigError("n_clusters is required when the clusterer is given as a linkage name")
        return Linkage.parse(clusterer), int(n_clusters)
    if callable(clusterer):
        return None
    raise ConfigError(f"cannot use {clusterer!r} as a clustering procedure")


def selective_p_importance(
    x,
    clusterer,
    pair,
    sigma: float | None = None,
    n_samples: int = 2000,
    seed=0,
    *,
    n_clusters: int | None = None,
    sigma_matrix=None,
) -> TestResult:
    """Importance-sampling estimate of the selective p-value.

    ``clusterer`` is a linkage name (with ``n_clusters``), a
    :class:`~selclust.hclust.HierarchicalClustering`, or any callable mapping
    a data matrix to labels. Draws come from a normal centred at the observed
    statistic; each is weighted by the chi density ratio and kept when
    reclustering the perturbed data reproduces both clusters.
    """
    x = check_data(x)
    n, q = x.shape
    pair = check_pair(pair, n)
    if int(n_samples) < 1:
        raise ConfigError("the number of Monte Carlo samples must be at least 1")
    n_samples = int(n_samples)
    if sigma_matrix is not None:
        if sigma is not None:
            raise ConfigError("give either sigma or a covariance matrix, not both")
        chol = check_covariance(sigma_matrix, q)
        sigma_used, scale = math.nan, math.sqrt(pair.squared_norm)
    else:
        chol = None
        sigma_used = check_positive(sigma, "sigma")
        scale = sigma_used * math.sqrt(pair.squared_norm)

    A, B, C, stat = _base_matrices(x, pair, chol)
    rng = np.random.default_rng(seed)
    omega = rng.normal(stat, scale, size=n_samples)
    ok = omega >= 0
    logw = np.full(n_samples, -INF)
    om = omega[ok]
    logw[ok] = stats.chi.logpdf(om / scale, q) - stats.norm.logpdf(om, stat, scale)

    keep = np.zeros(n_samples, dtype=bool)
    if ok.any():
        target = _resolve_clusterer(clusterer, n_clusters)
        if target is None:
            keep[ok] = _preserved_by_callable(x, pair, chol, clusterer, om)
        else:
            linkage, k = target
            c1 = np.array(pair.c1, dtype=np.int64)
            c2 = np.array(pair.c2, dtype=np.int64)
            keep[ok] = _engine.preserved_at(A, B, C, om, linkage.code, n - k, c1, c2)

    diagnostics = {"n_samples": n_samples, "n_nonnegative": int(ok.sum()), "n_preserved": int(keep.sum())}
    if not keep.any():
        raise UnstableEstimateError("no Monte Carlo draw reproduced the tested clusters", diagnostics)
    den = float(logsumexp(logw[keep]))
    hit = keep & (omega >= stat)
    num = float(logsumexp(logw[hit])) if hit.any() else -INF
    lp = min(num - den, 0.0)
    ess = math.exp(den)
    flags = []
    if ess < MIN_ESS:
        flags.append("low_ess")
        log.info("importance sampling kept little weight (ess=%.3g); the estimate may be poor", ess)
    return TestResult(
        statistic=stat,
        p_value=math.exp(lp),
        log_p_value=lp,
        method="monte_carlo",
        sigma_used=sigma_used,
        n_samples=n_samples,
        ess=ess,
        pair=pair,
        flags=flags,
    )


# -- estimator ------------------------------------------------------------------------


def choose_pair(n_clusters: int, seed) -> tuple[int, int]:
    """Two distinct cluster labels drawn uniformly, independent of the data."""
    if n_clusters < 2:
        raise ConfigError("need at least two clusters to pick a pair")
    i, j = np.random.default_rng(seed).choice(n_clusters, size=2, replace=False)
    return tuple(sorted((int(i), int(j))))


class ClusterMeanTest(BaseEstimator):
    """Hierarchical clustering followed by tests for differences in cluster means.

    Parameters
    ----------
    linkage : str
    n_clusters : int
    sigma : float or None
        Known noise standard deviation. When both ``sigma`` and
        ``sigma_matrix`` are None the noise level is estimated from the data
        passed to ``fit`` (or from ``sigma_data``) and plugged in.
    sigma_matrix : array of shape (n_features, n_features) or None
        Known covariance of each row.
    method : {"auto", "exact", "mc"}
        ``auto`` uses the exact truncation set when one exists and Monte Carlo
        otherwise (complete linkage).
    n_samples : int
        Monte Carlo sample size.
    random_state : int or None
        Seed for Monte Carlo draws.
    """

    def __init__(
        self,
        linkage="average",
        n_clusters=3,
        sigma=None,
        sigma_matrix=None,
        method="auto",
        n_samples=2000,
        random_state=None,
    ):
        self.linkage = linkage
        self.n_clusters = n_clusters
        self.sigma = sigma
        self.sigma_matrix = sigma_matrix
        self.method = method
        self.n_samples = n_samples
        self.random_state = random_state

    def _resolve_method(self, linkage: Linkage) -> str:
        if self.method not in ("auto", "exact", "mc"):
            raise ConfigError(f"unknown method {self.method!r}; expected auto, exact or mc")
        if self.method == "exact" and not linkage.has_exact_truncation:
            raise ConfigError(f"no exact p-value for {linkage.value} linkage; use method='mc'")
        if self.method == "auto":
            return "exact" if linkage.has_exact_truncation else "mc"
        return self.method

    def fit(self, X, y=None, sigma_data=None):
        X = check_data(X)
        linkage = Linkage.parse(self.linkage)
        self.method_ = self._resolve_method(linkage)
        if self.sigma is not None and self.sigma_matrix is not None:
            raise ConfigError("give either sigma or sigma_matrix, not both")
        self.sigma_chol_ = None
        if self.sigma_matrix is not None:
            self.sigma_chol_ = check_covariance(self.sigma_matrix, X.shape[1])
            self.sigma_ = math.nan
        elif self.sigma is not None:
            self.sigma_ = check_positive(self.sigma, "sigma")
        else:
            ref = X if sigma_data is None else check_data(sigma_data)
            if ref.shape[1] != X.shape[1]:
                raise DataError("the data used to estimate sigma has a different number of columns")
            self.sigma_ = check_positive(estimate_sigma(ref), "estimated sigma")
        self.X_ = X
        self.n_features_in_ = X.shape[1]
        self.history_ = run_agglomerative(X, linkage, self.n_clusters)
        self.labels_ = self.history_.labels
        self.clusters_ = cut_clusters(self.history_)
        return self

    def test(self, i: int, j: int, seed=None) -> TestResult:
        """Test equality of the means of clusters ``i`` and ``j`` (0-based labels)."""
        check_is_fitted(self, "history_")
        k = len(self.clusters_)
        if not (0 <= i < k and 0 <= j < k) or i == j:
            raise ConfigError(f"cluster labels must be two distinct values in 0..{k - 1}")
        pair = (self.clusters_[i], self.clusters_[j])
        if self.method_ == "mc":
            return selective_p_importance(
                self.X_,
                self.history_.linkage,
                pair,
                None if self.sigma_chol_ is not None else self.sigma_,
                self.n_samples,
                self.random_state if seed is None else seed,
                n_clusters=self.n_clusters,
                sigma_matrix=None if self.sigma_chol_ is None else self.sigma_matrix,
            )
        if self.sigma_chol_ is not None:
            return _exact(self.X_, self.history_, pair, math.nan, "covariance", self.sigma_chol_)
        method = "exact" if self.sigma is not None else "plugin"
        return _exact(self.X_, self.history_, pair, self.sigma_, method)

    def test_all_pairs(self, min_size: int = 1) -> list[tuple[tuple[int, int], TestResult]]:
        check_is_fitted(self, "history_")
        sizes = [len(c) for c in self.clusters_]
        return [
            ((i, j), self.test(i, j))
            for i, j in combinations(range(len(self.clusters_)), 2)
            if sizes[i] >= min_size and sizes[j] >= min_size
        ]

    def test_random_pair(self, seed) -> tuple[tuple[int, int], TestResult]:
        check_is_fitted(self, "history_")
        i, j = choose_pair(len(self.clusters_), seed)
        return (i, j), self.test(i, j)

    def wald(self, i: int, j: int) -> float:
        check_is_fitted(self, "history_")
        pair = (self.clusters_[i], self.clusters_[j])
        if self.sigma_chol_ is not None:
            return wald_p_cov(self.X_, pair, self.sigma_matrix)
        return wald_p(self.X_, pair, self.sigma_)
