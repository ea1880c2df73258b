"""Command-line runner: simulate scenarios and regenerate figure data as CSV."""

from __future__ import annotations

import argparse
import csv
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional

import numpy as np

from . import analytics
from .distributions import Constant, Uniform
from .dns_model import GuessSpace
from .scenario import ConfigError, ScenarioFile
from .sim import ScenarioError, Simulation

FIGURES = ("fig5", "fig6", "fig7", "fig8", "fig9", "fig10", "fig11")
FIGURE_COLUMNS = ("figure", "series", "x", "estimate", "ci_halfwidth", "ttl_triggered", "update_triggered", "bound")
UPDATE_MEANS = (100, 300, 500, 700, 900, 1100, 1300, 1400)
TTL_SERIES = (Constant(1000.0), Uniform(500.0, 1500.0))
LIFECYCLE_HOURS = (1, 2, 4, 6, 8, 10, 12, 16, 20, 24)
D_SERIES = (10, 20, 40)
LOG_HEADER = "# time\tkind\tquestion\tverdict\n"
ROUND_COLUMNS = ("round", "qname", "started_at", "ended_at", "forgeries", "oblivious_attempts", "escalated", "success", "answered")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


def _num(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _write_csv(path: Path, header, rows) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


# -- simulate --------------------------------------------------------------


def _simulate_one(scenario, out: Path) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    with (out / "events.log").open("w") as log:
        log.write(LOG_HEADER)
        metrics = Simulation(scenario, log).run()
    _write_csv(out / "metrics.csv", ("key", "value"), metrics.as_rows())
    rounds = [
        (r.round, r.qname, _num(r.started_at), _num(r.ended_at), r.forgeries, r.oblivious_attempts, int(r.escalated), int(r.success), int(r.answered))
        for r in metrics.rounds
    ]
    _write_csv(out / "rounds.csv", ROUND_COLUMNS, rounds)
    return dict(metrics.as_rows())


def cmd_simulate(args) -> int:
    try:
        sf = ScenarioFile.load(args.scenario)
        for item in args.override:
            sf.override(item)
        if args.seed is not None:
            sf.override(f"experiment.seed={args.seed}")
        base = sf.build()
    except (ConfigError, ScenarioError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out = Path(args.out)
    try:
        if args.replications <= 1:
            _simulate_one(base, out)
        else:
            scenarios = []
            for k in range(args.replications):
                rep = ScenarioFile(sf.values, sf.lines, sf.source, sf.base_dir)
                rep.override(f"experiment.seed={base.seed + k}")
                scenarios.append(rep.build())
            dirs = [out / f"rep-{k:03d}" for k in range(args.replications)]
            with ProcessPoolExecutor(max_workers=args.jobs) as pool:
                results = list(pool.map(_simulate_one, scenarios, dirs))
            _write_csv(out / "summary.csv", ("key", "value"), _pool_counts(results))
    except AssertionError as exc:
        print(f"runtime assertion failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def _pool_counts(results: list[dict]) -> list[tuple[str, str]]:
    """Sum the integer counters across replications; order does not matter."""
    rows = [("replications", str(len(results)))]
    for key, value in results[0].items():
        if value.lstrip("-").isdigit():
            rows.append((key, str(sum(int(r[key]) for r in results))))
    return rows


# -- figures ---------------------------------------------------------------


def _interval_job(job) -> analytics.QueryIntervalEstimate:
    ttl, mean, n_updates, seed_words = job
    rng_seed = np.random.SeedSequence(seed_words)
    return analytics.mc_query_intervals(ttl, mean, n_updates, rng_seed)


def _interval_points(figure: str, points, n_updates: int, seed: int, replications: int, jobs: Optional[int]):
    """Estimate every (ttl, update mean) point with independent streams per replication."""
    work = []
    for series_idx, (ttl, mean) in enumerate(points):
        for rep in range(replications):
            work.append((ttl, float(mean), n_updates, [seed, FIGURES.index(figure), series_idx, int(mean), rep]))
    if replications > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(_interval_job, work))
    else:
        parts = [_interval_job(w) for w in work]
    return [analytics.QueryIntervalEstimate.combine(parts[i * replications : (i + 1) * replications]) for i in range(len(points))]


def figure_rows(name: str, typed: dict, replications: int = 1, jobs: Optional[int] = None) -> list[tuple]:
    r, z, e = typed["resolver"], typed["auth"], typed["experiment"]
    seed, n_updates = e["seed"], e["n_updates"]
    d = r["outstanding_cap"]
    g = GuessSpace(r["id_space"], r["port_space"], r["n_auth"], r["guess_form"], r["guess_space"]).size
    caching = r["priority_cache"]
    rt = z["window_s"]
    rows = []

    if name in ("fig5", "fig6", "fig7"):
        if name == "fig7":
            points = [(Constant(1000.0), 1000)]
        else:
            points = [(ttl, m) for ttl in TTL_SERIES for m in UPDATE_MEANS]
        estimates = _interval_points(name, points, n_updates, seed, replications, jobs)
        for (ttl, mean), est in zip(points, estimates):
            if name == "fig5":
                estimate, ci = est.mean_interval, est.mean_interval_ci
                bound = analytics.independence_bound(float(mean), ttl.mean)
            else:
                estimate, ci, bound = est.ttl_triggered_ratio, est.ratio_ci, None
            rows.append((name, str(ttl), float(mean), estimate, ci, est.ttl_triggered, est.update_triggered, bound))
        return rows

    if name in ("fig8", "fig9"):
        series = [(r["tod"], dd) for dd in D_SERIES] if name == "fig8" else [(t, d) for t in (2, 3)]
        for tod, dd in series:
            for hours in LIFECYCLE_HOURS:
                life = hours * 3600.0
                t = analytics.time_to_success(0.5, life, tod, dd, g, rt, caching)
                rows.append((name, f"tod={tod},d={dd}", life, t, 0.0, None, None, None))
        return rows

    tods = (r["tod"],) if name == "fig10" else (3, 5)
    for tod in tods:
        curve = analytics.success_curve(e["horizon_s"], z["lifecycle_s"], tod, d, g, caching=caching, response_time=rt)
        for t, p in curve.points:
            rows.append((name, f"tod={tod},d={d}", t, p, 0.0, None, None, None))
    return rows


def cmd_figure(args) -> int:
    if args.name not in FIGURES:
        print(f"error: unknown figure {args.name!r}; choose from {', '.join(FIGURES)}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        sf = ScenarioFile.load(args.scenario) if args.scenario else ScenarioFile({}, {})
        for item in args.override:
            sf.override(item)
        if args.seed is not None:
            sf.override(f"experiment.seed={args.seed}")
        typed = sf.typed()
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        rows = figure_rows(args.name, typed, max(1, args.replications), args.jobs)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    _write_csv(out / f"{args.name}.csv", FIGURE_COLUMNS, [tuple(_num(v) for v in row) for row in rows])
    return EXIT_OK


def cmd_validate_config(args) -> int:
    try:
        sf = ScenarioFile.load(args.scenario)
        for item in args.override:
            sf.override(item)
        sf.build()
    except (ConfigError, ScenarioError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    sys.stdout.write(sf.render())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tdwn", description="TDWN resolver simulator and figure reproduction.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE", help="override a scenario key (repeatable)")
        p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("simulate", help="run one scenario and write metrics.csv, rounds.csv and events.log")
    p.add_argument("scenario")
    p.add_argument("--out", default="out")
    p.add_argument("--replications", type=int, default=1)
    p.add_argument("--jobs", type=int, default=None, help="worker processes for replications")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("figure", help="write <name>.csv for one of " + ", ".join(FIGURES))
    p.add_argument("name")
    p.add_argument("--scenario", default=None)
    p.add_argument("--out", default="out")
    p.add_argument("--replications", type=int, default=1)
    p.add_argument("--jobs", type=int, default=None)
    common(p)
    p.set_defaults(func=cmd_figure)

    p = sub.add_parser("validate-config", help="check a scenario file and print the effective settings")
    p.add_argument("scenario")
    p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
    p.set_defaults(func=cmd_validate_config)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
