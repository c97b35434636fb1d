"""Acceptance criteria, each run at its stated scale and tolerance.

Every test records one PASS/FAIL line, shown in the terminal summary.
Penguin data for the last criterion are read from the directory named by
``SELCLUST_PENGUINS_DIR`` (files ``penguins_2007_2008.csv`` and
``penguins_2009.csv``, columns bill length then flipper length).
"""

import functools
import json
import math
import os
import time
from pathlib import Path

import numpy as np
import pytest
from scipy import integrate, stats

from conftest import EXACT_LINKAGES, LW_LINKAGES, random_instance, record_criterion
from reference import dissimilarity, history_dissimilarity, naive_clustering
from selclust import (
    IntervalSet,
    TruncatedChi,
    compute_S_lw,
    run_agglomerative,
    selective_p_exact,
    selective_p_importance,
    test_statistic,
)
from selclust.hclust import lance_williams_coefficients
from selclust.simulation import ECDF_GRID, run_conditional_power_study, run_null_study, run_plugin_sigma_study
from selclust.truncation import compute_S_oracle, default_phi_grid, losing_pair_quadratics, oracle_agreement, truncation

INF = math.inf


# 1 ---------------------------------------------------------------------------------


def test_oracle_equivalence():
    rng = np.random.default_rng(1)
    start = time.perf_counter()
    failures = []
    for linkage in EXACT_LINKAGES:
        for r in range(200):
            x, hist, pair = random_instance(rng, linkage)
            support = truncation(x, hist, pair).support
            grid = default_phi_grid(hist, test_statistic(x, pair), 400)
            member = compute_S_oracle(x, linkage, hist.n_clusters, pair, grid)
            if oracle_agreement(support, grid, member).size:
                failures.append((linkage, r))
    elapsed = time.perf_counter() - start
    ok = not failures and elapsed < 300
    record_criterion("1 oracle equivalence", ok,
                     f"{6 * 200 - len(failures)}/1200 instances agree in {elapsed:.0f}s (limit 300s)")
    assert ok, failures[:10]


# 2, 3 -------------------------------------------------------------------------------


@functools.lru_cache(maxsize=None)
def null_study(linkage, n, reps):
    method = "mc" if linkage == "complete" else "exact"
    start = time.perf_counter()
    report = run_null_study(linkage, n=n, q=10, sigma=1.0, K=3, reps=reps, seed=2000, method=method,
                            mc_samples=2000)
    return report, time.perf_counter() - start


@pytest.mark.slow
@pytest.mark.parametrize("linkage", ["average", "centroid", "single", "complete"])
def test_null_uniformity(linkage):
    report, elapsed = null_study(linkage, 150, 2000)
    ks = report.aggregates["ks_statistic"]
    ok = ks < 0.05 and len(report.records) == 2000
    record_criterion(f"2 null uniformity [{linkage}]", ok,
                     f"KS={ks:.4f} (< 0.05) over {len(report.records)} replicates, {elapsed / 60:.1f} min")
    assert ok


def test_null_uniformity_smoke():
    start = time.perf_counter()
    results = {}
    for linkage in ("average", "centroid", "single", "complete"):
        report, _ = null_study(linkage, 60, 500)
        results[linkage] = report.aggregates["ks_statistic"]
    elapsed = time.perf_counter() - start
    ok = all(v < 0.10 for v in results.values())
    detail = ", ".join(f"{k} KS={v:.3f}" for k, v in results.items())
    record_criterion("2 null uniformity smoke (n=60, 500 reps)", ok, f"{detail} (< 0.10), {elapsed:.0f}s")
    assert ok


@pytest.mark.slow
def test_wald_anticonservative():
    report, _ = null_study("average", 150, 2000)
    rate = report.aggregates["wald_rejection_rate"]
    ok = rate > 0.25
    record_criterion("3 Wald anti-conservative", ok, f"rejection rate at 0.05 = {rate:.3f} (> 0.25)")
    assert ok


# 4 ----------------------------------------------------------------------------------


def _quadrature(q, c, support, t):
    def dens(u):
        return stats.chi.pdf(u / c, q) / c

    def mass(s):
        return sum(integrate.quad(dens, p.lo, p.hi, epsabs=1e-14, epsrel=1e-13, limit=200)[0] for p in s)

    return mass(support & IntervalSet([(t, INF)])) / mass(support)


def test_truncated_chi_against_quadrature():
    rng = np.random.default_rng(4)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(500):
        q = int(rng.integers(1, 21))
        c = float(rng.uniform(0.2, 4.0))
        k = int(rng.integers(1, 5))
        pts = np.sort(rng.uniform(0, 5 * c * math.sqrt(q), 2 * k))
        pieces = [(lo, hi, True, True) for lo, hi in zip(pts[::2], pts[1::2])]
        if rng.uniform() < 0.3:
            pieces[-1] = (pieces[-1][0], INF, True, True)
        s = IntervalSet(pieces)
        t = float(rng.uniform(s.inf, pts[-1]))
        try:
            ref = _quadrature(q, c, s, t)
        except ZeroDivisionError:
            continue
        worst = max(worst, abs(TruncatedChi(q, c, s).sf(t) - ref))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-8 and elapsed < 10
    record_criterion("4 truncated chi vs quadrature", ok,
                     f"max abs error {worst:.2e} (<= 1e-8) over 500 cases, {elapsed:.1f}s (limit 10s)")
    assert ok


# 5 ----------------------------------------------------------------------------------


def test_importance_sampling_agreement():
    rng = np.random.default_rng(5)
    start = time.perf_counter()
    close = total = 0
    while total < 50:
        x = rng.standard_normal((30, 4))
        hist = run_agglomerative(x, "average", 3)
        i, j = sorted(rng.choice(3, size=2, replace=False))
        pair = (hist.final_clusters[i], hist.final_clusters[j])
        exact = selective_p_exact(x, hist, pair, 1.0).p_value
        if not 0.1 <= exact <= 0.9:
            continue
        est = selective_p_importance(x, "average", pair, 1.0, 2000, seed=total, n_clusters=3).p_value
        total += 1
        close += abs(est - exact) <= 0.05
    elapsed = time.perf_counter() - start
    ok = close >= 48 and elapsed < 300
    record_criterion("5 importance sampling agreement", ok,
                     f"{close}/50 within 0.05 (>= 48), {elapsed:.0f}s (limit 300s)")
    assert ok


# 6 ----------------------------------------------------------------------------------


def test_plugin_monotonicity():
    rng = np.random.default_rng(6)
    start = time.perf_counter()
    strict = 0
    for _ in range(1000):
        q = int(rng.integers(1, 21))
        k = int(rng.integers(1, 4))
        scale = math.sqrt(q)
        pts = np.sort(rng.uniform(0, 4 * scale, 2 * k))
        s = IntervalSet([(lo, hi, True, True) for lo, hi in zip(pts[::2], pts[1::2])])
        piece = s.intervals[int(rng.integers(len(s)))]
        t = float(piece.lo + rng.uniform(0.05, 0.95) * (piece.hi - piece.lo))
        c1 = float(rng.uniform(0.3, 2.0))
        c2 = c1 * float(rng.uniform(1.05, 3.0))
        strict += TruncatedChi(q, c1, s).log_sf(t) < TruncatedChi(q, c2, s).log_sf(t)
    elapsed = time.perf_counter() - start
    ok = strict == 1000 and elapsed < 5
    record_criterion("6 plug-in monotonicity", ok,
                     f"strict increase in {strict}/1000 triples, {elapsed:.1f}s (limit 5s)")
    assert ok


# 7 ----------------------------------------------------------------------------------


@pytest.mark.slow
def test_plugin_null_behaviour():
    band = 1.36 / math.sqrt(500)
    excess = {}
    for delta in (2.0, 4.0, 6.0):
        report = run_plugin_sigma_study("average", delta=delta, n=200, q=10, reps=500, seed=7)
        assert len(report.records) == 500
        ecdf = np.asarray(report.aggregates["ecdf"])
        excess[delta] = float(np.max(ecdf - ECDF_GRID))
    ok = all(v <= band for v in excess.values())
    detail = ", ".join(f"delta={d:g}: max(F-U)={v:.4f}" for d, v in excess.items())
    record_criterion("7 plug-in null behaviour", ok, f"{detail} (<= {band:.4f})")
    assert ok


# 8 ----------------------------------------------------------------------------------


def _nondecreasing_within(values, ses, k=2.0):
    return all(b >= a - k * math.hypot(sa, sb) for a, b, sa, sb in zip(values, values[1:], ses, ses[1:]))


@pytest.mark.slow
def test_conditional_power_monotone():
    grid = list(np.linspace(4.0, 7.0, 7))
    avg = run_conditional_power_study("average", delta_grid=grid, reps=10_000, seed=8)
    curves = avg.aggregates["curves"]
    power = [c["conditional_power"] for c in curves]
    power_se = [c["conditional_power_se"] for c in curves]
    recovery = [c["recovery"] for c in curves]
    recovery_se = [c["recovery_se"] for c in curves]
    single = run_conditional_power_study("single", delta_grid=[4.0], reps=10_000, seed=8)
    single_rec = single.aggregates["curves"][0]["recovery"]
    ok_power = _nondecreasing_within(power, power_se)
    ok_rec = _nondecreasing_within(recovery, recovery_se)
    ok_single = single_rec < recovery[0]
    ok = ok_power and ok_rec and ok_single
    record_criterion(
        "8 conditional power monotone", ok,
        "power " + " ".join(f"{p:.3f}" for p in power)
        + "; recovery " + " ".join(f"{r:.3f}" for r in recovery)
        + f"; single recovery at 4 = {single_rec:.3f} < {recovery[0]:.3f}",
    )
    assert ok


# 9 ----------------------------------------------------------------------------------


def _median_time(n, trials=20):
    rng = np.random.default_rng(n)
    times = []
    for _ in range(trials):
        x = rng.standard_normal((n, 5))
        hist = run_agglomerative(x, "average", 3)
        pair = hist.final_clusters[:2]
        start = time.perf_counter()
        compute_S_lw(x, hist, pair)
        times.append(time.perf_counter() - start)
    return float(np.median(times))


def test_complexity_scaling():
    _median_time(50, 2)
    t200, t400 = _median_time(200), _median_time(400)
    ratio = t400 / t200
    ok = ratio <= 8
    record_criterion("9 complexity scaling", ok,
                     f"median {t200 * 1e3:.1f} ms at n=200, {t400 * 1e3:.1f} ms at n=400, ratio {ratio:.2f} (<= 8)")
    assert ok


# 10 ---------------------------------------------------------------------------------


def test_lance_williams_fidelity():
    rng = np.random.default_rng(10)
    start = time.perf_counter()
    worst = 0.0
    checked = 0

    def rel(a, b):
        return abs(a - b) / max(abs(b), 1e-12)

    for linkage in LW_LINKAGES:
        for _ in range(60):
            n = int(rng.integers(2, 9))
            k = int(rng.integers(1, n + 1))
            x = rng.standard_normal((n, int(rng.choice([1, 2, 3]))))
            hist = run_agglomerative(x, linkage, k)
            # replay the recursion on a dissimilarity matrix, comparing every
            # live cluster pair with its definition after every merge
            D = ((x[:, None] - x[None]) ** 2).sum(-1)
            ids = list(range(n))
            size = [1] * n
            live = set(range(n))
            for t, (a, b) in enumerate(hist.slots):
                worst = max(worst, rel(D[a, b], history_dissimilarity(x, hist, ids[a], ids[b])))
                for kk in live - {a, b}:
                    a1, a2, beta = lance_williams_coefficients(linkage, size[a], size[b], size[kk])
                    D[a, kk] = D[kk, a] = a1 * D[a, kk] + a2 * D[b, kk] + beta * D[a, b]
                live.discard(b)
                size[a] += size[b]
                ids[a] = n + t
                for s1 in live:
                    for s2 in live:
                        if s1 < s2:
                            worst = max(worst, rel(D[s1, s2], history_dissimilarity(x, hist, ids[s1], ids[s2])))
                            checked += 1
            # engine heights against a from-scratch agglomeration
            states, _ = naive_clustering(x, linkage, k)
            for h, (_, _, d) in zip(hist.heights, states):
                worst = max(worst, rel(h, d))
            # quadratics propagated for the truncation set, evaluated at the statistic
            if k >= 2:
                pair = hist.final_clusters[:2]
                if test_statistic(x, pair) > 0:
                    quads = losing_pair_quadratics(x, hist, pair)
                    stat = test_statistic(x, pair)
                    for g1, g2, qa, qb, qc in zip(quads["left"], quads["right"], quads["a"], quads["b"], quads["c"]):
                        worst = max(worst, rel((qa * stat + qb) * stat + qc,
                                               history_dissimilarity(x, hist, int(g1), int(g2))))
                        checked += 1
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-8 and elapsed < 30
    record_criterion("10 Lance-Williams fidelity", ok,
                     f"max relative error {worst:.1e} (<= 1e-8) over {checked} comparisons, {elapsed:.1f}s")
    assert ok


# 11 ---------------------------------------------------------------------------------

REFERENCE_STATISTICS = [10.1, 25.0, 10.1, 33.8, 17.1, 18.9]
REFERENCE_P_VALUES = [0.591, 1.70e-14, 0.714, 0.070, 0.291, 2.10e-6]


def test_penguins_reference(tmp_path, capsys):
    root = os.environ.get("SELCLUST_PENGUINS_DIR")
    files = [Path(root, "penguins_2007_2008.csv"), Path(root, "penguins_2009.csv")] if root else []
    if not files or not all(f.exists() for f in files):
        record_criterion("11 penguins reference (optional)", True, "skipped: no penguin CSVs supplied")
        pytest.skip("penguin data not supplied")
    from selclust.cli import main

    out = tmp_path / "penguins.json"
    code = main(["test", "--input", str(files[0]), "--k", "5", "--all-pairs", "--min-size", "2",
                 "--estimate-sigma", "--sigma-data", str(files[1]), "--out", str(out)])
    results = json.loads(out.read_text())["results"] if code == 0 else []
    got = sorted((r["statistic"], r["log_p_value"]) for r in results)
    want = sorted(zip(REFERENCE_STATISTICS, REFERENCE_P_VALUES))
    lines, ok = [], len(got) == len(want)
    for (s, lp), (ws, wp) in zip(got, want):
        stat_ok = float(f"{s:.3g}") == ws
        p_ok = lp is not None and abs(lp - math.log(wp)) <= math.log(2)
        ok &= stat_ok and p_ok
        lines.append(f"stat {s:.3g} vs {ws}, p {math.exp(lp) if lp is not None else 0:.3g} vs {wp}")
    record_criterion("11 penguins reference (optional)", ok, "; ".join(lines) or f"command exited {code}")
    # informational only: a mismatch is reported, not failed
