"""Command line interface.

Exit codes: 0 success, 1 oracle mismatch, 2 configuration error, 3 data
error, 4 numerical degeneracy. Cluster numbers and observation indices shown
to users are 1-based; clusters are numbered by their smallest member.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys

import numpy as np

from . import __version__
from ._validation import check_covariance
from .exceptions import ConfigError, SelclustError
from .hclust import Linkage, run_agglomerative
from .inference import ClusterMeanTest, choose_pair, format_p
from .io import load_csv, write_json, write_qq_svg
from .simulation import STUDIES
from .truncation import compute_S_oracle, default_phi_grid, oracle_agreement, truncation

ORACLE_CAP = 25
LINKAGES = [m.value for m in Linkage]


def _pair_spec(text: str):
    if text == "random":
        return "random"
    try:
        a, b = (int(v) for v in text.split(","))
    except ValueError:
        raise ConfigError(f"--pair expects two cluster numbers like '1,3' or 'random', got {text!r}") from None
    if a == b:
        raise ConfigError("--pair needs two different clusters")
    return a - 1, b - 1


def _add_clustering_args(p):
    p.add_argument("--input", required=True, help="CSV file, one observation per row")
    p.add_argument("--linkage", default="average", choices=LINKAGES)
    p.add_argument("--k", type=int, required=True, help="number of clusters")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="selclust", description="Selective tests for differences in cluster means.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("cluster", help="cluster a data file and report the clusters")
    _add_clustering_args(p)
    p.add_argument("--out", help="JSON output path (default stdout)")

    p = sub.add_parser("test", help="test for a difference in means between clusters")
    _add_clustering_args(p)
    which = p.add_mutually_exclusive_group(required=True)
    which.add_argument("--pair", type=_pair_spec, help="two cluster numbers like '1,3', or 'random'")
    which.add_argument("--all-pairs", action="store_true")
    p.add_argument("--min-size", type=int, default=1, help="with --all-pairs, skip clusters smaller than this")
    p.add_argument("--seed", type=int, default=0, help="seed for the random pair and Monte Carlo draws")
    noise = p.add_mutually_exclusive_group()
    noise.add_argument("--sigma", type=float, help="known noise standard deviation")
    noise.add_argument("--estimate-sigma", action="store_true", help="plug in an estimate of sigma")
    noise.add_argument("--cov", help="CSV file with the known q x q covariance of each row")
    p.add_argument("--sigma-data", help="with --estimate-sigma, estimate sigma from this file instead")
    p.add_argument("--method", default="auto", choices=["auto", "exact", "mc"])
    p.add_argument("--mc-samples", type=int, default=2000)
    p.add_argument("--out", help="JSON output path (default stdout)")

    p = sub.add_parser("oracle-check", help="compare analytic truncation sets with brute-force reclustering")
    p.add_argument("--input", help="CSV file to check (all cluster pairs); default is a random batch")
    p.add_argument("--linkage", default="average", choices=[m for m in LINKAGES if m != "complete"])
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--instances", type=int, default=20)
    p.add_argument("--n", type=int, default=15)
    p.add_argument("--q", type=int, default=2)
    p.add_argument("--grid", type=int, default=400)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cap", type=int, default=ORACLE_CAP, help="largest n allowed")
    p.add_argument("--mutate", action="store_true", help=argparse.SUPPRESS)
    p.add_argument("--out", help="JSON output path (default stdout)")

    p = sub.add_parser("simulate", help="run a simulation study")
    p.add_argument("--study", required=True, choices=sorted(STUDIES))
    p.add_argument("--linkage", default="average", choices=LINKAGES)
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--n", type=int)
    p.add_argument("--q", type=int, default=10)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--delta", type=float, default=4.0, help="cluster separation (plugin_sigma study)")
    p.add_argument("--deltas", help="comma-separated separations (conditional_power, effect_size)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--method", default="auto", choices=["auto", "exact", "mc"])
    p.add_argument("--mc-samples", type=int, default=2000)
    p.add_argument("--out", help="JSON aggregates path (default stdout)")
    p.add_argument("--csv", help="per-replicate CSV path")
    p.add_argument("--svg", help="QQ plot path")
    return parser


# -- commands ---------------------------------------------------------------------


def _clusters_json(clusters):
    return [{"cluster": k + 1, "size": len(c), "members": [i + 1 for i in c]} for k, c in enumerate(clusters)]


def cmd_cluster(args) -> int:
    x = load_csv(args.input)
    history = run_agglomerative(x, args.linkage, args.k)
    write_json(
        {
            "command": "cluster",
            "n": int(x.shape[0]),
            "q": int(x.shape[1]),
            "linkage": history.linkage.value,
            "k": args.k,
            "labels": (history.labels + 1).tolist(),
            "clusters": _clusters_json(history.final_clusters),
            "merge_heights": history.heights.tolist(),
            "tie": history.tie,
        },
        args.out,
    )
    return 0


def cmd_test(args) -> int:
    x = load_csv(args.input)
    if args.sigma_data and not args.estimate_sigma:
        raise ConfigError("--sigma-data only applies together with --estimate-sigma")
    if args.sigma is None and not args.estimate_sigma and args.cov is None:
        raise ConfigError("choose one of --sigma, --estimate-sigma or --cov")
    cov = load_csv(args.cov) if args.cov else None
    if cov is not None:
        check_covariance(cov, x.shape[1])
    linkage = Linkage.parse(args.linkage)
    if args.method == "exact" and not linkage.has_exact_truncation:
        raise ConfigError(f"--method exact is not available for {linkage.value} linkage")
    if not 2 <= args.k <= x.shape[0]:
        raise ConfigError(f"--k must be between 2 and the number of observations ({x.shape[0]})")

    model = ClusterMeanTest(
        linkage=linkage.value,
        n_clusters=args.k,
        sigma=args.sigma,
        sigma_matrix=cov,
        method=args.method,
        n_samples=args.mc_samples,
        random_state=args.seed,
    )
    model.fit(x, sigma_data=load_csv(args.sigma_data) if args.sigma_data else None)

    if args.all_pairs:
        results = model.test_all_pairs(min_size=args.min_size)
    else:
        if args.pair == "random":
            i, j = choose_pair(args.k, args.seed)
        else:
            i, j = sorted(args.pair)
            if not (0 <= i and j < args.k):
                raise ConfigError(f"cluster numbers must lie in 1..{args.k}")
        results = [((i, j), model.test(i, j))]

    records = []
    for (i, j), res in results:
        rec = res.to_json((i, j))
        wald = model.wald(i, j)
        rec["wald_p_value"] = wald
        rec["wald_p_value_display"] = format_p(wald)
        records.append(rec)
        print(
            f"clusters {i + 1} vs {j + 1}: statistic {res.statistic:.4g}, p {format_p(res.p_value)}, "
            f"wald p {format_p(wald)}",
            file=sys.stderr,
        )
    sigma_mode = "covariance" if cov is not None else ("fixed" if args.sigma is not None else "estimated")
    write_json(
        {
            "command": "test",
            "linkage": linkage.value,
            "k": args.k,
            "method": model.method_,
            "sigma_mode": sigma_mode,
            "sigma": None if math.isnan(model.sigma_) else model.sigma_,
            "clusters": _clusters_json(model.clusters_),
            "results": records,
        },
        args.out,
    )
    return 0


def _oracle_cases(args):
    if args.input:
        x = load_csv(args.input)
        yield "input", x
        return
    rng = np.random.default_rng(args.seed)
    for r in range(args.instances):
        yield f"instance-{r + 1}", rng.standard_normal((args.n, args.q))


def cmd_oracle_check(args) -> int:
    if args.input is None and args.n > args.cap:
        raise ConfigError(f"oracle checks are limited to n <= {args.cap}")
    checks, failures = [], 0
    for name, x in _oracle_cases(args):
        if x.shape[0] > args.cap:
            raise ConfigError(f"oracle checks are limited to n <= {args.cap}, input has {x.shape[0]} rows")
        history = run_agglomerative(x, args.linkage, args.k)
        clusters = history.final_clusters
        for i in range(len(clusters)):
            for j in range(i + 1, len(clusters)):
                pair = (clusters[i], clusters[j])
                tr = truncation(x, history, pair)
                support = tr.support.complement() if args.mutate else tr.support
                grid = default_phi_grid(history, tr.statistic, args.grid)
                member = compute_S_oracle(x, history.linkage, args.k, pair, grid)
                bad = oracle_agreement(support, grid, member)
                failures += bool(bad.size)
                checks.append({
                    "case": name,
                    "clusters": [i + 1, j + 1],
                    "agree": not bad.size,
                    "mismatched_points": grid[bad].tolist(),
                    "truncation_set": support.to_json(),
                })
    write_json(
        {
            "command": "oracle-check",
            "linkage": args.linkage,
            "k": args.k,
            "n_checks": len(checks),
            "n_failures": failures,
            "passed": failures == 0,
            "checks": checks,
        },
        args.out,
    )
    return 0 if failures == 0 else 1


def cmd_simulate(args) -> int:
    study = STUDIES[args.study]
    kwargs = dict(linkage=args.linkage, reps=args.reps, seed=args.seed, q=args.q)
    if args.n is not None:
        kwargs["n"] = args.n
    deltas = [float(v) for v in args.deltas.split(",")] if args.deltas else None
    if args.study == "null":
        kwargs.update(sigma=args.sigma, K=args.k, method=args.method, mc_samples=args.mc_samples)
    elif args.study == "conditional_power":
        kwargs.update(sigma=args.sigma, K=args.k, method=args.method, mc_samples=args.mc_samples)
        if deltas:
            kwargs["delta_grid"] = deltas
    elif args.study == "plugin_sigma":
        kwargs.update(delta=args.delta, sigma=args.sigma, K=args.k)
    else:
        kwargs.update(sigma=args.sigma, K=args.k)
        if deltas:
            kwargs["delta_grid"] = deltas
    report = study(**kwargs)
    if args.csv:
        report.to_csv(args.csv)
    if args.svg:
        write_qq_svg(args.svg, report.p_values, f"{args.study} study, {args.linkage} linkage")
    write_json(report.to_json(), args.out)
    return 0


COMMANDS = {"cluster": cmd_cluster, "test": cmd_test, "oracle-check": cmd_oracle_check, "simulate": cmd_simulate}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except SelclustError as exc:
        extra = getattr(exc, "diagnostics", None)
        print(f"error [{exc.code}]: {exc}" + (f" {extra}" if extra else ""), file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
