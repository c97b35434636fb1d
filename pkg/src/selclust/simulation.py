"""Simulation studies for the cluster-mean tests.

Each study draws replicate data sets, clusters them, tests a randomly chosen
pair of clusters and records the outcome. Every replicate gets its own child
seed from ``numpy.random.SeedSequence``; the pair is chosen from a stream that
never touches the data, so the choice is independent of the data given the
clustering.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats

from ._validation import check_covariance
from .exceptions import ConfigError, DegenerateDirectionError, UnstableEstimateError
from .hclust import Linkage, cut_clusters, run_agglomerative
from .inference import choose_pair, estimate_sigma, selective_p_exact, selective_p_importance, selective_p_plugin, wald_p

KINDS = ("global_null", "three_equidistant", "two_cluster")


@dataclass(frozen=True)
class MeanModel:
    """Gaussian rows around a small set of distinct mean vectors."""

    kind: str = "global_null"
    n: int = 150
    q: int = 10
    sigma: float = 1.0
    delta: float = 0.0
    cov: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown mean model {self.kind!r}; expected one of {', '.join(KINDS)}")
        if self.n < 2 or self.q < 1:
            raise ConfigError("need n >= 2 and q >= 1")
        if self.kind == "three_equidistant" and (self.n % 3 or self.q < 2):
            raise ConfigError("three equidistant clusters need n divisible by 3 and q >= 2")
        if self.kind == "two_cluster" and (self.n % 2 or self.q < 2):
            raise ConfigError("two clusters need an even n and q >= 2")

    @property
    def labels(self) -> np.ndarray:
        """True cluster of every row."""
        groups = {"global_null": 1, "three_equidistant": 3, "two_cluster": 2}[self.kind]
        return np.repeat(np.arange(groups), self.n // groups)[: self.n] if groups > 1 else np.zeros(self.n, int)

    @property
    def centers(self) -> np.ndarray:
        d = self.delta
        if self.kind == "global_null":
            return np.zeros((1, self.q))
        c = np.zeros((3 if self.kind == "three_equidistant" else 2, self.q))
        if self.kind == "three_equidistant":
            c[0, 0] = -d / 2
            c[1, -1] = math.sqrt(3) * d / 2
            c[2, 0] = d / 2
        else:
            c[0, 0] = d / 2
            c[1, -1] = -d / 2
        return c

    @property
    def means(self) -> np.ndarray:
        return self.centers[self.labels]

    def noise_chol(self) -> np.ndarray | None:
        return None if self.cov is None else check_covariance(self.cov, self.q)


def generate(model: MeanModel, seed) -> np.ndarray:
    """One data matrix from ``model``; the same seed gives the same matrix."""
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((model.n, model.q))
    chol = model.noise_chol()
    noise = model.sigma * z if chol is None else z @ chol.T
    return model.means + noise


@dataclass
class SimReport:
    """Per-replicate records plus aggregate summaries of one study."""

    study: str
    params: dict
    columns: list[str]
    records: list[dict] = field(default_factory=list)
    aggregates: dict = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.records], dtype=float)

    @property
    def p_values(self) -> np.ndarray:
        return self.column("p_value")

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=self.columns, lineterminator="\n")
            w.writeheader()
            for r in self.records:
                w.writerow({k: _csv_cell(r[k]) for k in self.columns})

    def to_json(self) -> dict:
        return {"study": self.study, "params": self.params, "n_records": len(self.records), **self.aggregates}

    def write_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=2, sort_keys=True, allow_nan=False)
            fh.write("\n")


def _csv_cell(v):
    if isinstance(v, bool):
        return int(v)
    if isinstance(v, float):
        return repr(v)
    return v


# -- aggregates -------------------------------------------------------------------


ECDF_GRID = np.linspace(0.0, 1.0, 101)


def uniformity_summary(p: np.ndarray) -> dict:
    """KS distance to U(0, 1) and the empirical CDF on a fixed grid."""
    if p.size == 0:
        return {"ks_statistic": None, "ks_pvalue": None, "ecdf_grid": ECDF_GRID.tolist(), "ecdf": []}
    ks = stats.kstest(p, "uniform")
    ecdf = np.searchsorted(np.sort(p), ECDF_GRID, side="right") / p.size
    return {
        "ks_statistic": float(ks.statistic),
        "ks_pvalue": float(ks.pvalue),
        "ecdf_grid": ECDF_GRID.tolist(),
        "ecdf": ecdf.tolist(),
        "max_ecdf_excess": float(np.max(ecdf - ECDF_GRID)),
    }


def _rate(hits: np.ndarray) -> dict:
    m = int(hits.size)
    if m == 0:
        return {"rate": None, "se": None, "count": 0}
    p = float(hits.mean())
    return {"rate": p, "se": math.sqrt(p * (1 - p) / m), "count": m}


def binned_rates(x: np.ndarray, hits: np.ndarray, n_bins: int = 10) -> list[dict]:
    """Mean of ``hits`` within quantile bins of ``x`` (deciles by default)."""
    if x.size == 0:
        return []
    edges = np.unique(np.quantile(x, np.linspace(0, 1, n_bins + 1)))
    if edges.size == 1:
        return [{"lo": float(edges[0]), "hi": float(edges[0]), **_rate(hits)}]
    idx = np.clip(np.searchsorted(edges, x, side="right") - 1, 0, edges.size - 2)
    return [
        {"lo": float(edges[b]), "hi": float(edges[b + 1]), "center": float(x[idx == b].mean()), **_rate(hits[idx == b])}
        for b in range(edges.size - 1)
        if np.any(idx == b)
    ]


# -- replicate machinery ----------------------------------------------------------------


def _replicate_seeds(seed, reps: int):
    """(data, pair, monte-carlo) seed triples, one per replicate."""
    return [child.spawn(3) for child in np.random.SeedSequence(seed).spawn(reps)]


def _test_pair(x, history, pair, sigma, method, mc_samples, mc_seed, cov=None):
    if method == "mc":
        return selective_p_importance(
            x,
            history.linkage,
            pair,
            None if cov is not None else sigma,
            mc_samples,
            mc_seed,
            n_clusters=history.n_clusters,
            sigma_matrix=cov,
        )
    if cov is not None:
        from .inference import selective_p_cov

        return selective_p_cov(x, history, pair, cov)
    return selective_p_exact(x, history, pair, sigma)


def _resolve(linkage, method):
    linkage = Linkage.parse(linkage)
    if method not in ("auto", "exact", "mc"):
        raise ConfigError(f"unknown method {method!r}")
    if method == "exact" and not linkage.has_exact_truncation:
        raise ConfigError(f"no exact p-value for {linkage.value} linkage")
    if method == "auto":
        method = "exact" if linkage.has_exact_truncation else "mc"
    return linkage, method


def _is_true_pair(est: tuple, truth: list[set]) -> bool:
    return set(est[0]) in truth and set(est[1]) in truth


# -- studies ------------------------------------------------------------------------------


NULL_COLUMNS = ["replicate", "p_value", "wald_p_value", "statistic", "size1", "size2", "cluster1", "cluster2"]


def run_null_study(
    linkage="average",
    n: int = 150,
    q: int = 10,
    sigma: float = 1.0,
    K: int = 3,
    reps: int = 2000,
    seed=0,
    *,
    method: str = "auto",
    mc_samples: int = 2000,
    cov=None,
    alpha: float = 0.05,
) -> SimReport:
    """Global-null data; selective and Wald p-values of a random pair per replicate."""
    linkage, method = _resolve(linkage, method)
    model = MeanModel("global_null", n, q, sigma, cov=None if cov is None else np.asarray(cov, float))
    params = dict(linkage=linkage.value, n=n, q=q, sigma=sigma, K=K, reps=reps, seed=seed, method=method,
                  mc_samples=mc_samples, alpha=alpha, covariance=cov is not None)
    report = SimReport("null", params, NULL_COLUMNS)
    skipped = 0
    for r, (s_data, s_pair, s_mc) in enumerate(_replicate_seeds(seed, reps)):
        x = generate(model, s_data)
        history = run_agglomerative(x, linkage, K)
        i, j = choose_pair(K, s_pair)
        clusters = cut_clusters(history)
        pair = (clusters[i], clusters[j])
        try:
            res = _test_pair(x, history, pair, sigma, method, mc_samples, s_mc, model.cov)
        except (DegenerateDirectionError, UnstableEstimateError):
            skipped += 1
            continue
        wald = wald_p(x, pair, sigma) if cov is None else _wald_cov(x, pair, model.cov)
        report.records.append(dict(
            replicate=r, p_value=res.p_value, wald_p_value=wald, statistic=res.statistic,
            size1=len(pair[0]), size2=len(pair[1]), cluster1=i + 1, cluster2=j + 1,
        ))
    p = report.p_values
    wald = report.column("wald_p_value")
    report.aggregates = {
        "skipped": skipped,
        **uniformity_summary(p),
        "rejection_rate": _rate(p <= alpha)["rate"],
        "wald_rejection_rate": _rate(wald <= alpha)["rate"],
    }
    return report


def _wald_cov(x, pair, cov):
    from .inference import wald_p_cov

    return wald_p_cov(x, pair, cov)


POWER_COLUMNS = ["replicate", "delta", "p_value", "reject", "recovered", "statistic", "size1", "size2"]


def run_conditional_power_study(
    linkage="average",
    delta_grid: Sequence[float] = tuple(np.linspace(4.0, 7.0, 7)),
    n: int = 30,
    q: int = 10,
    sigma: float = 1.0,
    reps: int = 10_000,
    alpha: float = 0.05,
    seed=0,
    *,
    K: int = 3,
    method: str = "auto",
    mc_samples: int = 2000,
) -> SimReport:
    """Three equidistant true clusters; ``reps`` replicates at every delta.

    Records whether the tested pair is exactly two true clusters (recovery)
    and whether the test rejects; conditional power is the rejection rate
    among recovered pairs.
    """
    linkage, method = _resolve(linkage, method)
    grid = [float(d) for d in delta_grid]
    params = dict(linkage=linkage.value, delta_grid=grid, n=n, q=q, sigma=sigma, reps=reps, alpha=alpha,
                  seed=seed, K=K, method=method)
    report = SimReport("conditional_power", params, POWER_COLUMNS)
    per_delta = np.random.SeedSequence(seed).spawn(len(grid))
    skipped = 0
    for delta, ss in zip(grid, per_delta):
        model = MeanModel("three_equidistant", n, q, sigma, delta)
        truth = [set(np.flatnonzero(model.labels == k).tolist()) for k in range(3)]
        for r, child in enumerate(ss.spawn(reps)):
            s_data, s_pair, s_mc = child.spawn(3)
            x = generate(model, s_data)
            history = run_agglomerative(x, linkage, K)
            i, j = choose_pair(K, s_pair)
            clusters = cut_clusters(history)
            pair = (clusters[i], clusters[j])
            try:
                res = _test_pair(x, history, pair, sigma, method, mc_samples, s_mc)
            except (DegenerateDirectionError, UnstableEstimateError):
                skipped += 1
                continue
            report.records.append(dict(
                replicate=r, delta=delta, p_value=res.p_value, reject=res.p_value <= alpha,
                recovered=_is_true_pair(pair, truth), statistic=res.statistic,
                size1=len(pair[0]), size2=len(pair[1]),
            ))
    deltas = report.column("delta")
    reject = report.column("reject").astype(bool)
    recovered = report.column("recovered").astype(bool)
    curves = []
    for delta in grid:
        at = deltas == delta
        rec = _rate(recovered[at])
        power = _rate(reject[at & recovered])
        curves.append({
            "delta": delta,
            "recovery": rec["rate"], "recovery_se": rec["se"],
            "conditional_power": power["rate"], "conditional_power_se": power["se"],
            "n_recovered": power["count"], "n": rec["count"],
        })
    report.aggregates = {"skipped": skipped, "curves": curves}
    return report


PLUGIN_COLUMNS = ["replicate", "attempt", "p_value", "sigma_hat", "statistic", "size1", "size2"]


def run_plugin_sigma_study(
    linkage="average",
    delta: float = 4.0,
    n: int = 200,
    q: int = 10,
    reps: int = 500,
    seed=0,
    *,
    sigma: float = 1.0,
    K: int = 3,
    max_attempts: int | None = None,
) -> SimReport:
    """Split-sample study with an estimated noise level.

    Data come from two true clusters. Each data set is split at random into
    equal halves; the first half is clustered and tested, the noise level is
    estimated on the second. Only replicates whose tested pair has equal true
    means (so the null holds) are kept, until ``reps`` have been collected.
    """
    linkage, _ = _resolve(linkage, "exact")
    model = MeanModel("two_cluster", n, q, sigma, delta)
    max_attempts = max_attempts or 50 * max(reps, 1)
    params = dict(linkage=linkage.value, delta=delta, n=n, q=q, reps=reps, seed=seed, sigma=sigma, K=K)
    report = SimReport("plugin_sigma", params, PLUGIN_COLUMNS)
    means = model.means
    attempts = 0
    for attempt, child in enumerate(np.random.SeedSequence(seed).spawn(max_attempts)):
        if len(report.records) >= reps:
            break
        attempts += 1
        s_data, s_split, s_pair = child.spawn(3)
        x = generate(model, s_data)
        perm = np.random.default_rng(s_split).permutation(n)
        train, test = perm[: n // 2], perm[n // 2 :]
        x_train = x[train]
        history = run_agglomerative(x_train, linkage, K)
        i, j = choose_pair(K, s_pair)
        clusters = cut_clusters(history)
        pair = (clusters[i], clusters[j])
        mu = means[train]
        if not np.allclose(mu[list(pair[0])].mean(axis=0), mu[list(pair[1])].mean(axis=0)):
            continue
        sigma_hat = estimate_sigma(x[test])
        try:
            res = selective_p_plugin(x_train, history, pair, sigma_hat)
        except DegenerateDirectionError:
            continue
        report.records.append(dict(
            replicate=len(report.records), attempt=attempt, p_value=res.p_value, sigma_hat=sigma_hat,
            statistic=res.statistic, size1=len(pair[0]), size2=len(pair[1]),
        ))
    summary = uniformity_summary(report.p_values)
    report.aggregates = {
        "attempts": attempts,
        **summary,
        "ks_band": 1.36 / math.sqrt(max(len(report.records), 1)),
    }
    return report


EFFECT_COLUMNS = ["replicate", "delta", "p_value", "reject", "effect_size", "stratum", "boundary_gap",
                  "statistic", "size1", "size2"]


def run_effect_size_study(
    linkage="average",
    delta_grid: Sequence[float] = tuple(np.linspace(3.0, 7.0, 5)),
    n: int = 150,
    q: int = 10,
    sigma: float = 1.0,
    reps: int = 500,
    alpha: float = 0.05,
    seed=0,
    *,
    K: int = 3,
    min_size: int = 10,
    n_bins: int = 10,
) -> SimReport:
    """Rejection rate against the true standardized mean gap of the tested pair.

    Replicates whose smaller cluster has at least ``min_size`` members form the
    main stratum; rejection rates are binned by effect-size decile.
    """
    linkage, method = _resolve(linkage, "exact")
    grid = [float(d) for d in delta_grid]
    params = dict(linkage=linkage.value, delta_grid=grid, n=n, q=q, sigma=sigma, reps=reps, alpha=alpha,
                  seed=seed, K=K, min_size=min_size)
    report = SimReport("effect_size", params, EFFECT_COLUMNS)
    for delta, ss in zip(grid, np.random.SeedSequence(seed).spawn(len(grid))):
        model = MeanModel("three_equidistant", n, q, sigma, delta)
        means = model.means
        for r, child in enumerate(ss.spawn(reps)):
            s_data, s_pair = child.spawn(2)
            x = generate(model, s_data)
            history = run_agglomerative(x, linkage, K)
            i, j = choose_pair(K, s_pair)
            clusters = cut_clusters(history)
            pair = (clusters[i], clusters[j])
            try:
                res = selective_p_exact(x, history, pair, sigma)
            except DegenerateDirectionError:
                continue
            gap = means[list(pair[0])].mean(axis=0) - means[list(pair[1])].mean(axis=0)
            piece = next(p for p in res.truncation_set if res.statistic in p)
            report.records.append(dict(
                replicate=r, delta=delta, p_value=res.p_value, reject=res.p_value <= alpha,
                effect_size=float(np.linalg.norm(gap)) / sigma,
                stratum=min(len(pair[0]), len(pair[1])) >= min_size,
                boundary_gap=res.statistic - piece.lo,
                statistic=res.statistic, size1=len(pair[0]), size2=len(pair[1]),
            ))
    effect = report.column("effect_size")
    reject = report.column("reject").astype(bool)
    stratum = report.column("stratum").astype(bool)
    null_rate = _rate(reject[stratum & (effect <= 1e-12)])
    report.aggregates = {
        "binned_power": binned_rates(effect[stratum], reject[stratum], n_bins),
        "binned_power_small_clusters": binned_rates(effect[~stratum], reject[~stratum], n_bins),
        "null_rejection_rate": null_rate["rate"],
    }
    return report


STUDIES = {
    "null": run_null_study,
    "conditional_power": run_conditional_power_study,
    "plugin_sigma": run_plugin_sigma_study,
    "effect_size": run_effect_size_study,
}
