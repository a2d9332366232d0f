"""Command line interface: ``ipmu generate|solve|exact|ssg|bench``.

Data goes to files or stdout, diagnostics to stderr.  Run records are JSON
documents with a fixed field order.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .instance import (
    GenSpec,
    Instance,
    InstanceFormatError,
    errors,
    generate_instance,
    load_instance,
    read_comments,
    save_instance,
    validate,
)
from .oracle import DEFAULT_EXACT_LIMIT, LimitExceeded, exact_enumerate
from .paths import compute_path_cache
from .search import BEST, FIRST, SearchConfig, grasp, kh_construct
from .ssg import DEFAULT_SSG_LIMIT, build_ssg, export_dot, ssg_stats, stats_csv
from .upgrade import IMPROVE_TOL, EvaluatedSolution, Evaluator, objective_with_plan

RECORD_FORMAT = "ipmu-run/1"

# instance grids: (n, arc counts or densities, p values, budgets, files per combination)
SMALL_GRID = {
    "n": {20: (100, 200, 300), 40: (100, 300, 500), 60: (100, 300, 500), 80: (100, 300, 500)},
    "p": (2, 3, 4, 5),
    "budget": (50, 100),
    "count": 5,
}
LARGE_GRID = {
    "n": {100: (0.25, 0.5, 0.75), 200: (0.25, 0.5, 0.75), 500: (0.25, 0.5, 0.75)},
    "p": (2, 3, 4, 5, 10),
    "budget": (100,),
    "count": 3,
}


class CliError(Exception):
    pass


@dataclass
class RunRecord:
    instance: str
    algorithm: str
    config: dict
    seed: int | None
    objective: float
    base_cost: float
    medians: list[int]
    upgrades: list[list] = field(default_factory=list)
    wall_time_ms: float = 0.0
    iterations: int | None = None
    evaluations: int | None = None
    optimality: str = "unknown"
    ties: int | None = None
    deviation_pct: float | None = None

    def to_json(self) -> str:
        doc = {"format": RECORD_FORMAT}
        doc.update(asdict(self))
        return json.dumps(doc, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RunRecord":
        doc = json.loads(text)
        if doc.pop("format", None) != RECORD_FORMAT:
            raise CliError(f"not an {RECORD_FORMAT} record")
        return cls(**doc)


def _record(path, instance: Instance, algorithm: str, config: dict, seed, sol: EvaluatedSolution, **extra) -> RunRecord:
    upgrades = [
        [int(instance.src[a]), int(instance.dst[a]), float(b)]
        for a, b in enumerate(sol.plan.b.tolist())
        if b > 0
    ]
    return RunRecord(
        instance=str(path),
        algorithm=algorithm,
        config=config,
        seed=seed,
        objective=sol.objective,
        base_cost=sol.base_cost,
        medians=list(sol.medians),
        upgrades=upgrades,
        **extra,
    )


def verify_record(instance: Instance, record: RunRecord, cache=None, tol: float = 1e-6) -> float:
    """Recompute a record's objective from its medians and upgrades.

    Raises ``ValueError`` if the plan is infeasible or the objective differs
    by more than ``tol``; returns the recomputed value.
    """
    cache = cache if cache is not None else compute_path_cache(instance)
    b = np.zeros(instance.m)
    for s, d, amount in record.upgrades:
        b[instance.arc_id(int(s), int(d))] = float(amount)
    if (b < 0).any() or (b > instance.u + 1e-12).any():
        raise ValueError("upgrade outside [0, u]")
    if b.sum() > instance.budget + 1e-9:
        raise ValueError(f"upgrades spend {b.sum()} > budget {instance.budget}")
    value = objective_with_plan(instance, cache, record.medians, b)
    if abs(value - record.objective) > tol:
        raise ValueError(f"recorded objective {record.objective} but recomputed {value}")
    return value


def _load_checked(path) -> Instance:
    try:
        instance = load_instance(path)
    except InstanceFormatError as exc:
        raise CliError(f"{path}: {exc}") from None
    except OSError as exc:
        raise CliError(f"{path}: {exc.strerror}") from None
    bad = errors(validate(instance))
    if bad:
        raise CliError(f"{path}: invalid instance: " + "; ".join(v.message for v in bad))
    return instance


def _write(text: str, out) -> None:
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


# ---------------------------------------------------------------------------
# generate


def _instance_name(spec: GenSpec) -> str:
    budget = f"{spec.budget:g}"
    return f"{spec.kind}_n{spec.n}_m{spec.arc_count()}_p{spec.p}_B{budget}_s{spec.seed}.ipmu"


def _grid_specs(grid: dict, seed: int, kinds, demand_range) -> list[GenSpec]:
    specs = []
    k = 0
    for kind in kinds:
        for n, sizes in grid["n"].items():
            for size in sizes:
                for p in grid["p"]:
                    for budget in grid["budget"]:
                        for _ in range(grid["count"]):
                            arcs = dict(density=size) if isinstance(size, float) else dict(m=size)
                            specs.append(GenSpec(n=n, p=p, budget=budget, kind=kind, seed=seed + k,
                                                 demand_range=demand_range, **arcs))
                            k += 1
    return specs


def cmd_generate(args) -> int:
    demand_range = (args.demand_min, args.demand_max)
    if args.grid:
        grid = SMALL_GRID if args.grid == "small" else LARGE_GRID
        kinds = [args.type] if args.type else ["P", "R"]
        specs = _grid_specs(grid, args.seed, kinds, demand_range)
    else:
        specs = [
            GenSpec(n=args.n, p=args.p, budget=args.budget, kind=args.type or "P", m=args.m,
                    density=args.density, demand_range=demand_range, seed=args.seed + k)
            for k in range(args.count)
        ]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for spec in specs:
        try:
            spec.check()
        except ValueError as exc:
            raise CliError(str(exc)) from None
        path = out / _instance_name(spec)
        save_instance(generate_instance(spec), path, comments=[
            "generator: ipmu", f"type: {spec.kind}", f"seed: {spec.seed}",
        ])
        print(path)
    return 0


# ---------------------------------------------------------------------------
# solve / exact


def _config_from(args) -> SearchConfig:
    try:
        return SearchConfig(alpha=args.alpha, ls_strategy=args.ls, max_iters=args.max_iters,
                            max_iters_wi=args.max_iters_wi, seed=args.seed)
    except ValueError as exc:
        raise CliError(str(exc)) from None


def run_algorithm(path, instance: Instance, algorithm: str, config: SearchConfig,
                  exact_limit: int = DEFAULT_EXACT_LIMIT, cache=None) -> RunRecord:
    cache = cache if cache is not None else compute_path_cache(instance)
    ev = Evaluator(instance, cache)
    t0 = time.perf_counter()
    if algorithm == "grasp":
        res = grasp(instance, cache, config, ev)
        echo = {"alpha": config.alpha, "ls": config.ls_strategy,
                "max_iters": config.max_iters, "max_iters_wi": config.max_iters_wi}
        rec = _record(path, instance, "grasp", echo, config.seed, res.best,
                      iterations=res.iterations_run, evaluations=res.evaluations)
    elif algorithm == "kh":
        sol = kh_construct(instance, cache, ev)
        rec = _record(path, instance, "kh", {}, None, sol, iterations=instance.p, evaluations=ev.evaluations)
    elif algorithm == "exact":
        res = exact_enumerate(instance, cache, exact_limit, ev)
        rec = _record(path, instance, "exact", {"limit": exact_limit}, None, res.best,
                      iterations=res.explored, evaluations=ev.evaluations,
                      optimality="certified", ties=res.ties)
    else:
        raise CliError(f"unknown algorithm {algorithm!r}")
    rec.wall_time_ms = round((time.perf_counter() - t0) * 1000.0, 3)
    return rec


def deviation_pct(value: float, reference: float) -> float:
    if abs(reference) <= IMPROVE_TOL:
        return 0.0 if abs(value) <= IMPROVE_TOL else math.inf
    return 100.0 * (value - reference) / reference


def cmd_solve(args) -> int:
    instance = _load_checked(args.instance)
    config = _config_from(args)
    rec = run_algorithm(args.instance, instance, args.algorithm, config)
    _write(rec.to_json(), args.out)
    return 0


def cmd_exact(args) -> int:
    instance = _load_checked(args.instance)
    try:
        rec = run_algorithm(args.instance, instance, "exact", SearchConfig(), exact_limit=args.limit)
    except LimitExceeded as exc:
        raise CliError(
            f"refusing exact enumeration: C({instance.n},{instance.p}) = {exc.required} median sets "
            f"exceeds --limit {exc.limit}"
        ) from None
    if args.compare:
        try:
            other = RunRecord.from_json(Path(args.compare).read_text(encoding="utf-8"))
        except (OSError, ValueError, TypeError) as exc:
            raise CliError(f"{args.compare}: {exc}") from None
        rec.deviation_pct = deviation_pct(other.objective, rec.objective)
        print(f"deviation of {other.algorithm}: {rec.deviation_pct:.3f}%", file=sys.stderr)
    _write(rec.to_json(), args.out)
    return 0


# ---------------------------------------------------------------------------
# ssg


def cmd_ssg(args) -> int:
    instance = _load_checked(args.instance)
    cache = compute_path_cache(instance)
    try:
        graph = build_ssg(instance, cache, args.limit)
    except LimitExceeded as exc:
        raise CliError(f"refusing SSG: {exc}") from None
    stats = ssg_stats(graph)
    _write(stats_csv(graph, stats), args.out)
    if args.dot:
        Path(args.dot).write_text(export_dot(graph, args.collapse_above), encoding="utf-8")
    print(
        f"nodes={graph.size} edges={graph.edge_count} local_optima={stats.local_optima} "
        f"global={stats.global_value:.6f} global_basin_share={stats.global_basin_share:.4f}",
        file=sys.stderr,
    )
    return 0


# ---------------------------------------------------------------------------
# bench

BENCH_COLUMNS = ["type", "algorithm", "runs", "avg_objective", "avg_time_s", "dev_pct", "n_best", "n_opt"]
RUN_COLUMNS = ["instance", "type", "algorithm", "seed", "objective", "time_s", "dev_pct", "status"]


def instance_type(path) -> str:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError:
        return "?"
    for c in read_comments(text):
        key, _, value = c.partition(":")
        if key.strip() == "type" and value.strip():
            return value.strip()
    return "?"


def _bench_one(job):
    path, algorithms, seeds, config, exact_limit = job
    kind = instance_type(path)
    rows = []
    try:
        instance = _load_checked(path)
        cache = compute_path_cache(instance)
    except CliError as exc:
        return [dict(instance=str(path), type=kind, algorithm=a, seed="", error=str(exc)) for a in algorithms]
    for algorithm in algorithms:
        run_seeds = seeds if algorithm == "grasp" else [None]
        for seed in run_seeds:
            cfg = SearchConfig(**{**asdict(config), "seed": seed}) if seed is not None else config
            try:
                rec = run_algorithm(path, instance, algorithm, cfg, exact_limit, cache)
            except (LimitExceeded, CliError) as exc:
                rows.append(dict(instance=str(path), type=kind, algorithm=algorithm, seed=seed, error=str(exc)))
                continue
            rows.append(dict(instance=str(path), type=kind, algorithm=algorithm, seed=seed,
                             objective=rec.objective, time_s=rec.wall_time_ms / 1000.0,
                             certified=rec.optimality == "certified"))
    return rows


def aggregate(rows: list[dict], algorithms) -> tuple[list[dict], list[dict]]:
    """Per-run deviations from the pooled best value, then per (type, algorithm) means."""
    best: dict[str, float] = {}
    optimum: dict[str, float] = {}
    for r in rows:
        if "error" in r:
            continue
        best[r["instance"]] = min(best.get(r["instance"], math.inf), r["objective"])
        if r["certified"]:
            optimum[r["instance"]] = r["objective"]
    for r in rows:
        if "error" in r:
            continue
        ref = best[r["instance"]]
        r["dev_pct"] = deviation_pct(r["objective"], ref)
        r["is_best"] = r["objective"] <= ref + IMPROVE_TOL
        opt = optimum.get(r["instance"])
        r["is_opt"] = opt is not None and r["objective"] <= opt + IMPROVE_TOL

    table = []
    kinds = sorted({r["type"] for r in rows})
    for kind in kinds:
        for algorithm in algorithms:
            ok = [r for r in rows if r["type"] == kind and r["algorithm"] == algorithm and "error" not in r]
            if not ok:
                continue
            table.append(dict(
                type=kind,
                algorithm=algorithm,
                runs=len(ok),
                avg_objective=float(np.mean([r["objective"] for r in ok])),
                avg_time_s=float(np.mean([r["time_s"] for r in ok])),
                dev_pct=float(np.mean([r["dev_pct"] for r in ok])),
                n_best=sum(r["is_best"] for r in ok),
                n_opt=sum(r["is_opt"] for r in ok) if optimum else "",
            ))
    return table, rows


def _csv(rows, columns, formats) -> str:
    buf = io.StringIO()
    out = csv.writer(buf, lineterminator="\n")
    out.writerow(columns)
    for r in rows:
        out.writerow([formats[c](r[c]) if c in formats and r.get(c) not in (None, "") else r.get(c, "")
                      for c in columns])
    return buf.getvalue()


def cmd_bench(args) -> int:
    paths = sorted(Path(args.directory).glob(args.pattern))
    if not paths:
        raise CliError(f"no instances matching {args.pattern!r} in {args.directory}")
    algorithms = [a.strip() for a in args.algorithms.split(",") if a.strip()]
    for a in algorithms:
        if a not in ("grasp", "kh", "exact"):
            raise CliError(f"unknown algorithm {a!r}")
    config = _config_from(args)
    seeds = [args.seed + k for k in range(args.seeds)]
    jobs = [(p, algorithms, seeds, config, args.exact_limit) for p in paths]
    threads = max(1, args.threads)
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_bench_one, jobs))
    else:
        results = [_bench_one(j) for j in jobs]
    rows = [r for batch in results for r in batch]

    table, runs = aggregate(rows, algorithms)
    for r in runs:
        r["status"] = r.get("error", "ok")
    fmt = {"avg_objective": "{:.6f}".format, "avg_time_s": "{:.3f}".format, "dev_pct": "{:.3f}".format,
           "objective": repr, "time_s": "{:.3f}".format}
    _write(_csv(table, BENCH_COLUMNS, fmt), args.out)
    if args.runs:
        Path(args.runs).write_text(_csv(runs, RUN_COLUMNS, fmt), encoding="utf-8")
    failures = [r for r in rows if "error" in r]
    for r in failures:
        print(f"{r['instance']} [{r['algorithm']}]: {r['error']}", file=sys.stderr)
    return 1 if failures else 0


# ---------------------------------------------------------------------------
# argument parsing


def _search_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--alpha", type=float, default=0.51, help="RCL greediness in [0, 1] (default 0.51)")
    p.add_argument("--ls", choices=[BEST, FIRST], default=BEST, help="local search strategy")
    p.add_argument("--max-iters", type=int, default=100)
    p.add_argument("--max-iters-wi", type=int, default=29, help="iterations without improvement")


def _common_flags(p: argparse.ArgumentParser, out_help: str) -> None:
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                   help="worker processes (results do not depend on it)")
    p.add_argument("--out", default=None, help=out_help)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ipmu", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write random instances")
    g.add_argument("--n", type=int)
    size = g.add_mutually_exclusive_group()
    size.add_argument("--m", type=int, help="number of arcs")
    size.add_argument("--density", type=float, help="fraction of n(n-1) arcs")
    g.add_argument("--p", type=int)
    g.add_argument("--budget", type=float)
    g.add_argument("--type", choices=["P", "R"], default=None, help="P correlated, R random")
    g.add_argument("--count", type=int, default=1)
    g.add_argument("--demand-min", type=int, default=1)
    g.add_argument("--demand-max", type=int, default=1)
    g.add_argument("--grid", choices=["small", "large"], help="write a whole benchmark grid")
    _common_flags(g, "output directory (default: current directory)")
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("solve", help="run a heuristic on one instance")
    s.add_argument("instance")
    s.add_argument("--algorithm", choices=["grasp", "kh"], default="grasp")
    _search_flags(s)
    _common_flags(s, "record file (default: stdout)")
    s.set_defaults(func=cmd_solve)

    e = sub.add_parser("exact", help="certify the optimum by enumeration")
    e.add_argument("instance")
    e.add_argument("--limit", type=int, default=DEFAULT_EXACT_LIMIT, help="maximum C(n,p)")
    e.add_argument("--compare", help="run record to report the deviation of")
    _common_flags(e, "record file (default: stdout)")
    e.set_defaults(func=cmd_exact)

    a = sub.add_parser("ssg", help="search space graph statistics")
    a.add_argument("instance")
    a.add_argument("--limit", type=int, default=DEFAULT_SSG_LIMIT)
    a.add_argument("--dot", help="also write the graph in DOT format")
    a.add_argument("--collapse-above", type=int, default=None, help="draw bigger basins as one box")
    _common_flags(a, "stats CSV (default: stdout)")
    a.set_defaults(func=cmd_ssg)

    b = sub.add_parser("bench", help="run algorithms over a directory of instances")
    b.add_argument("directory")
    b.add_argument("--pattern", default="*.ipmu")
    b.add_argument("--algorithms", default="grasp,kh")
    b.add_argument("--seeds", type=int, default=1, help="GRASP runs per instance")
    b.add_argument("--exact-limit", type=int, default=DEFAULT_EXACT_LIMIT)
    b.add_argument("--runs", help="also write per-run rows to this CSV")
    _search_flags(b)
    _common_flags(b, "summary CSV (default: stdout)")
    b.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "generate":
        if args.grid is None:
            missing = [f for f in ("n", "p", "budget") if getattr(args, f) is None]
            if args.m is None and args.density is None:
                missing.append("m or density")
            if missing:
                parser.error("generate needs --" + ", --".join(missing))
            if not 1 <= args.p < args.n:
                parser.error(f"--p must satisfy 1 ≤ p < n (p={args.p}, n={args.n})")
        if args.out is None:
            args.out = "."
    try:
        return args.func(args)
    except CliError as exc:
        print(f"ipmu {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
