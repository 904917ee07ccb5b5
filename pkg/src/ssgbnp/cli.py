"""Command-line surface: generate, solve, bench, summary, verify, render.

Set SSGBNP_LOG=node for line-delimited JSON node events on stderr, or
SSGBNP_LOG=pivot to additionally stream simplex pivots.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict

import numpy as np

from . import engine, instgen, oracle
from .master import FormulationSpec, build_master, build_master_sg
from .model import GameSG, GameSSG, STATUS_OPTIMAL, STATUS_TIME_LIMIT
from .pricing import initial_columns
from .simplexlp import render_lp_text

BENCH_HEADER = (
    "instance,formulation,cuts,init_cols,pricer_cols,delta,status,objective,"
    "time_s,nodes,root_lp_value,root_gap_pct,columns_generated,pricing_iterations"
)


def _int_list(text: str):
    return [int(tok) for tok in text.split(",") if tok]


def _parse_variant(token: str) -> FormulationSpec:
    base, _, scope = token.partition(":")
    return FormulationSpec(base=base, cut_scope=scope or "both")


def _make_spec(args) -> FormulationSpec:
    cuts = args.cuts
    if args.formulation == "d2" and cuts is not None:
        print("warning: --cuts is ignored for the d2 formulation", file=sys.stderr)
    return FormulationSpec(base=args.formulation, cut_scope=cuts or "both")


def _solve_options(args) -> engine.SolveOptions:
    log_mode = os.environ.get("SSGBNP_LOG", "off")
    node_log = None
    lp_trace = None
    if log_mode in ("node", "pivot"):
        node_log = lambda rec: print(json.dumps(rec), file=sys.stderr)  # noqa: E731
    if log_mode == "pivot":
        lp_trace = lambda line: print(line, file=sys.stderr)  # noqa: E731
    return engine.SolveOptions(
        init_cols=args.init_cols,
        pricer_cols=args.pricer_cols,
        delta=args.stabilize,
        time_limit_s=args.time_limit,
        seed=args.seed,
        node_log=node_log,
        lp_trace=lp_trace,
    )


def cmd_generate(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    written = []
    for n in _int_list(args.n):
        for k in _int_list(args.k):
            for h in range(1, args.H + 1):
                g = instgen.generate(n, k, h, args.H, args.seed)
                path = os.path.join(args.out, instgen.instance_filename(n, k, h, args.seed))
                instgen.save(g, path)
                written.append(path)
    for path in written:
        print(path)
    print(f"{len(written)} instance files written to {args.out}")
    return 0


def _strategy_payload(strategy, value):
    return {
        "value": value,
        "support": [
            {"targets": list(col.indices()), "probability": prob}
            for col, prob in strategy.support
        ],
        "responses": [
            {
                "target": r.target,
                "defender_value": r.defender_value,
                "attacker_value": r.attacker_value,
            }
            for r in strategy.responses
        ],
    }


def cmd_solve(args) -> int:
    g = instgen.load(args.instance)
    spec = _make_spec(args)
    opts = _solve_options(args)
    if isinstance(g, GameSG):
        _, report = engine.solve_sg(g, spec, opts)
        strategy = None
    else:
        strategy, report = engine.solve(g, spec, opts)
    print(json.dumps(asdict(report), indent=1))
    if args.strategy_out and strategy is not None:
        with open(args.strategy_out, "w", encoding="utf-8") as fh:
            json.dump(_strategy_payload(strategy, report.objective), fh, indent=1)
    if report.status == STATUS_OPTIMAL:
        return 0
    if report.status == STATUS_TIME_LIMIT:
        return 2
    return 1


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _bench_row(task):
    path, variant, init_cols, pricer_cols, delta, time_limit, seed = task
    name = os.path.basename(path)
    spec = _parse_variant(variant)
    row = {
        "instance": name,
        "formulation": spec.base,
        "cuts": spec.cuts_tag,
        "init_cols": init_cols,
        "pricer_cols": pricer_cols,
        "delta": delta,
    }
    try:
        g = instgen.load(path)
        opts = engine.SolveOptions(
            init_cols=init_cols, pricer_cols=pricer_cols,
            delta=delta, time_limit_s=time_limit, seed=seed,
        )
        if isinstance(g, GameSG):
            _, report = engine.solve_sg(g, spec, opts)
        else:
            _, report = engine.solve(g, spec, opts)
        row.update(
            status=report.status,
            objective=report.objective,
            time_s=report.time_s,
            nodes=report.nodes,
            root_lp_value=report.root_lp_value,
            root_gap_pct=report.root_gap_pct,
            columns_generated=report.columns_generated,
            pricing_iterations=report.pricing_iterations,
        )
    except Exception as exc:  # noqa: BLE001 - a bad row must not kill the batch
        row.update(status="error", objective=None, time_s=None, nodes=None,
                   root_lp_value=None, root_gap_pct=None,
                   columns_generated=None, pricing_iterations=None)
        print(f"error on {name} / {variant}: {exc}", file=sys.stderr)
    return row


def run_bench(instance_paths, variants, init_cols=None, pricer_cols=1,
              delta=None, time_limit=3600.0, seed=0, jobs=1):
    """Solve every (instance, variant) pair; rows come back sorted."""
    tasks = [
        (path, variant, init_cols, pricer_cols, delta, time_limit, seed)
        for path in instance_paths
        for variant in variants
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_bench_row, tasks))
    else:
        rows = [_bench_row(t) for t in tasks]
    rows.sort(key=lambda r: (r["instance"], r["formulation"], r["cuts"]))
    return rows


def write_bench_csv(rows, out) -> None:
    fields = BENCH_HEADER.split(",")
    out.write(BENCH_HEADER + "\n")
    for row in rows:
        out.write(",".join(_fmt(row.get(f)) for f in fields) + "\n")


def cmd_bench(args) -> int:
    paths = sorted(
        os.path.join(args.instances, f)
        for f in os.listdir(args.instances)
        if f.endswith(".json")
    )
    variants = [v for v in args.variants.split(",") if v]
    rows = run_bench(
        paths, variants,
        init_cols=args.init_cols, pricer_cols=args.pricer_cols,
        delta=args.stabilize, time_limit=args.time_limit,
        seed=args.seed, jobs=args.jobs,
    )
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            write_bench_csv(rows, fh)
        print(f"{len(rows)} rows written to {args.out}")
    else:
        write_bench_csv(rows, sys.stdout)
    return 0


def summarize_bench(rows):
    """Column/time ratios of the cut formulation vs the big-M baseline, plus
    per-instance root-LP dominance violations."""
    by_instance = {}
    for row in rows:
        if row.get("status") not in (STATUS_OPTIMAL, STATUS_TIME_LIMIT):
            continue
        by_instance.setdefault(row["instance"], {})[row["formulation"]] = row
    col_ratios, time_ratios, violations = [], [], []
    for name, variants in sorted(by_instance.items()):
        d2 = variants.get("d2")
        plus = variants.get("d2plus")
        prime = variants.get("d2plusprime")
        if d2 and plus:
            if d2.get("columns_generated"):
                col_ratios.append(plus["columns_generated"] / d2["columns_generated"])
            if d2.get("time_s"):
                time_ratios.append(plus["time_s"] / d2["time_s"])
            r_d2, r_plus = d2.get("root_lp_value"), plus.get("root_lp_value")
            if r_d2 is not None and r_plus is not None and r_plus > r_d2 + 1e-6:
                violations.append(f"{name}: d2plus root {r_plus} > d2 root {r_d2}")
        if plus and prime:
            r_plus, r_prime = plus.get("root_lp_value"), prime.get("root_lp_value")
            if r_plus is not None and r_prime is not None and r_prime > r_plus + 1e-6:
                violations.append(f"{name}: d2plusprime root {r_prime} > d2plus root {r_plus}")
    return {
        "instances": len(by_instance),
        "mean_column_ratio_d2plus_over_d2": float(np.mean(col_ratios)) if col_ratios else None,
        "mean_time_ratio_d2plus_over_d2": float(np.mean(time_ratios)) if time_ratios else None,
        "dominance_violations": violations,
    }


def _read_bench_csv(path):
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for raw in csv.DictReader(fh):
            row = dict(raw)
            for key in ("objective", "time_s", "root_lp_value", "root_gap_pct"):
                row[key] = float(row[key]) if row.get(key) else None
            for key in ("nodes", "columns_generated", "pricing_iterations"):
                row[key] = int(row[key]) if row.get(key) else None
            rows.append(row)
    return rows


def cmd_summary(args) -> int:
    summary = summarize_bench(_read_bench_csv(args.csv))
    print(json.dumps(summary, indent=1))
    return 1 if summary["dominance_violations"] else 0


def cmd_verify(args) -> int:
    rng = np.random.default_rng(args.seed)
    spec = _make_spec(args)
    failures = []
    if args.count == 0:
        print("warning: empty battery, nothing verified")
        print("PASS (0 instances)")
        return 0
    for i in range(args.count):
        n = int(rng.integers(3, args.max_n + 1))
        k = int(rng.integers(1, args.max_k + 1))
        h = int(rng.integers(1, 6))
        g = instgen.generate(n, k, h, 5, seed=args.seed * 100003 + i)
        _, value = oracle.solve_multiple_lps(g)
        solver_input = g
        if args.perturb:
            # self-test knob: feed the engine a perturbed copy so mismatches fire
            from dataclasses import replace
            solver_input = replace(g, d_prot=g.d_prot + args.perturb)
        _, report = engine.solve(solver_input, spec, engine.SolveOptions(seed=args.seed))
        name = instgen.instance_filename(n, k, h, args.seed * 100003 + i)
        if report.status != STATUS_OPTIMAL or abs(report.objective - value) > 1e-6:
            failures.append(f"{name}: engine {report.objective} vs oracle {value}")
            print(f"FAIL {name}: engine={report.objective} oracle={value}")
        elif args.verbose:
            print(f"ok   {name}: {value:.9g}")
    if failures:
        print(f"FAIL ({len(failures)}/{args.count} mismatches)")
        return 1
    print(f"PASS ({args.count} instances)")
    return 0


def cmd_render(args) -> int:
    g = instgen.load(args.instance)
    spec = _make_spec(args)
    if isinstance(g, GameSG):
        lp = build_master_sg(g, spec)
    else:
        cols = initial_columns(g, g.n_targets, seed=args.seed)
        lp = build_master(g, cols, spec)
    print(render_lp_text(lp))
    return 0


def _add_variant_flags(p) -> None:
    p.add_argument("--formulation", default="d2plus",
                   choices=["d2", "d2plus", "d2plusprime"])
    p.add_argument("--cuts", default=None,
                   choices=["attacker", "defender", "both"])
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ssgbnp",
        description="Branch-and-price solver for budget-constrained Stackelberg security games",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write an (n, k, h) grid of instance files")
    p.add_argument("--n", required=True, help="comma-separated target counts")
    p.add_argument("--k", required=True, help="comma-separated attacker counts")
    p.add_argument("--H", type=int, default=5, help="budget levels per cell")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="instances")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("solve", help="solve one instance file")
    p.add_argument("instance")
    _add_variant_flags(p)
    p.add_argument("--init-cols", type=int, default=None)
    p.add_argument("--pricer-cols", type=int, default=1)
    p.add_argument("--stabilize", type=float, default=None, metavar="DELTA")
    p.add_argument("--time-limit", type=float, default=3600.0)
    p.add_argument("--strategy-out", default=None)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("bench", help="solve an instance directory across variants")
    p.add_argument("--instances", required=True)
    p.add_argument("--variants", default="d2,d2plus",
                   help="comma list, e.g. d2,d2plus:defender,d2plusprime")
    p.add_argument("--init-cols", type=int, default=None)
    p.add_argument("--pricer-cols", type=int, default=1)
    p.add_argument("--stabilize", type=float, default=None, metavar="DELTA")
    p.add_argument("--time-limit", type=float, default=3600.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", default=None, help="CSV path (stdout when omitted)")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("summary", help="ratios and dominance checks over a bench CSV")
    p.add_argument("csv")
    p.set_defaults(func=cmd_summary)

    p = sub.add_parser("verify", help="engine vs brute-force oracle on a seeded battery")
    _add_variant_flags(p)
    p.add_argument("--count", type=int, default=50)
    p.add_argument("--max-n", type=int, default=6)
    p.add_argument("--max-k", type=int, default=2)
    p.add_argument("--perturb", type=float, default=0.0,
                   help="self-test: perturb payoffs fed to the engine")
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("render", help="print a master LP in readable text form")
    p.add_argument("instance")
    _add_variant_flags(p)
    p.set_defaults(func=cmd_render)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
