"""Command-line front end: sample, audit, experiment, retrieve.

Every subcommand is deterministic in its arguments; rerunning with the same
flags reproduces each output file byte for byte.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from .audits import (
    suite_bounds,
    suite_fixed_point,
    suite_gradients,
    suite_separation,
    summarize,
)
from .measures import DiscreteMeasure, PatternBank
from .retrieval import RetrievalConfig, retrieve, success_metric, write_trace_csv
from .sampling import SampleConfig, sample_patterns, separation_stats, theory_constants
from .serialize import dump_json
from .sinkhorn import SinkhornConfig
from .experiments import ExperimentConfig, config_from_json, run_experiment, run_repeats

DIVERGENCE_SCAN_LIMIT = 50  # pairwise solves grow quadratically in the pattern count


def _cmd_sample(args) -> int:
    cfg = SampleConfig(
        dim=args.dim,
        center=tuple(0.0 for _ in range(args.dim)),
        radius=args.R,
        sigma=args.sigma,
        gamma=args.gamma,
        p=args.p,
        M=args.M,
        a_min=args.a_min,
        delta_min=args.delta_min,
        epsilon=args.eps,
        seed=args.seed,
    )
    consts = theory_constants(cfg)
    bank = sample_patterns(cfg, n=args.count)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    bank.save(out)
    scan_cfg = SinkhornConfig(epsilon=args.eps) if bank.n_patterns <= DIVERGENCE_SCAN_LIMIT else None
    stats = separation_stats(bank, consts, ot_cfg=scan_cfg)
    report = {
        "sample_config": dataclasses.asdict(cfg),
        "theory_constants": dataclasses.asdict(consts),
        "separation_stats": dataclasses.asdict(stats),
        "divergence_scan": scan_cfg is not None,
        "n_patterns": bank.n_patterns,
    }
    sidecar = out.with_name(out.stem + ".report.json")
    dump_json(report, sidecar)
    print(f"wrote {out} and {sidecar} ({bank.n_patterns} patterns)")
    return 0


def _cmd_audit(args) -> int:
    bank = PatternBank.load(args.bank)
    ot_cfg = SinkhornConfig(epsilon=args.eps)
    retr_cfg = RetrievalConfig(beta=args.beta, eta=args.eta, lam=args.lam)
    reports = []
    if args.suite in ("bounds", "all"):
        reports.extend(suite_bounds(bank, ot_cfg, args.seed))
    if args.suite in ("gradients", "all"):
        reports.extend(suite_gradients(bank, args.eps, args.seed))
    if args.suite in ("separation", "all"):
        reports.extend(suite_separation(bank, args.eps, ot_cfg, args.seed))
    if args.suite in ("fixed-point", "all"):
        reports.extend(suite_fixed_point(bank, retr_cfg, ot_cfg))
    summary = summarize(reports)
    payload = {
        "bank": str(args.bank),
        "suite": args.suite,
        "seed": args.seed,
        "parameters": {"epsilon": args.eps, "beta": args.beta, "eta": args.eta, "lam": args.lam},
        "summary": summary,
        "reports": [r.to_dict() for r in reports],
    }
    dump_json(payload, args.out)
    for r in reports:
        if r.skipped:
            print(f"SKIP {r.name}: {r.skip_reason}")
        else:
            print(f"{'PASS' if r.passed else 'FAIL'} {r.name} slack={r.slack:.3e}")
    print(
        f"{summary['passed']}/{summary['ran']} audits passed, "
        f"{summary['skipped']} skipped -> {args.out}"
    )
    return 0 if summary["all_passed"] else 1


def _cmd_experiment(args) -> int:
    if args.config is not None:
        data = json.loads(Path(args.config).read_text())
        if args.id is not None:
            data["experiment"] = args.id
        data["seed"] = args.seed
        cfg = config_from_json(data)
    elif args.id is not None:
        cfg = ExperimentConfig.from_id(args.id, seed=args.seed)
    else:
        print("experiment: need --id or --config", file=sys.stderr)
        return 2
    out = args.out if args.out is not None else f"{cfg.experiment}_s{args.seed}"
    if args.repeats > 1:
        summary = run_repeats(cfg, args.repeats, out)
        agg = summary["aggregate"]
        print(
            f"{cfg.experiment}: {args.repeats} repeats; transport all-correct in "
            f"{agg['shk_all_correct']}, euclidean all-correct in "
            f"{agg['euclidean_all_correct']} -> {out}"
        )
    else:
        result = run_experiment(cfg, out)
        n = len(result.shk)
        print(
            f"{cfg.experiment}: transport {result.shk_successes}/{n}, "
            f"euclidean {result.euclidean_successes}/{n} -> {out}"
        )
    return 0


def _cmd_retrieve(args) -> int:
    bank = PatternBank.load(args.bank)
    query = DiscreteMeasure.load(args.query)
    retr_cfg = RetrievalConfig(
        beta=args.beta, eta=args.eta, lam=args.lam, max_iter=args.max_iter
    )
    ot_cfg = SinkhornConfig(epsilon=args.eps)
    trace = retrieve(query, bank, retr_cfg, ot_cfg)
    match = success_metric(trace.final, bank, ot_cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    trace.final.save(out / "final.json")
    write_trace_csv(trace, out / "trace.csv")
    dump_json(
        {
            "status": trace.status,
            "iterations": trace.iterations,
            "nearest_pattern": match.index,
            "margin": None if np.isinf(match.margin) else match.margin,
            "tied": match.tied,
            "divergences": list(match.divergences),
            "final_energy": trace.steps[-1].energy_state.energy if trace.steps else None,
        },
        out / "result.json",
    )
    print(
        f"retrieval {trace.status} after {trace.iterations} iterations; "
        f"nearest pattern {match.index} -> {out}"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sinkmem",
        description="Associative memory over weighted point clouds: sample pattern "
        "banks, audit the theory bounds, run the benchmark experiments, retrieve.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("sample", help="draw a random pattern bank with capacity constants")
    ps.add_argument("--dim", type=int, required=True)
    ps.add_argument("--R", type=float, required=True, help="domain ball radius")
    ps.add_argument("--sigma", type=float, required=True, help="shape radius, in (0, R/4)")
    ps.add_argument("--gamma", type=float, required=True, help="separation margin in (0,1)")
    ps.add_argument("--p", type=float, required=True, help="failure budget in (0,1)")
    ps.add_argument("--M", type=int, required=True, help="atoms per pattern")
    ps.add_argument("--a-min", dest="a_min", type=float, required=True)
    ps.add_argument("--delta-min", dest="delta_min", type=float, required=True)
    ps.add_argument("--eps", type=float, required=True, help="entropic regularization")
    ps.add_argument("--seed", type=int, default=0)
    ps.add_argument("--count", type=int, default=None, help="patterns to draw (default: capacity)")
    ps.add_argument("--out", required=True, help="bank JSON path")
    ps.set_defaults(func=_cmd_sample)

    pa = sub.add_parser("audit", help="run bound/gradient/separation/fixed-point audits")
    pa.add_argument("--bank", required=True)
    pa.add_argument(
        "--suite",
        choices=["bounds", "gradients", "separation", "fixed-point", "all"],
        default="all",
    )
    pa.add_argument("--seed", type=int, default=0)
    pa.add_argument("--out", required=True, help="report JSON path")
    pa.add_argument("--eps", type=float, default=0.05)
    pa.add_argument("--beta", type=float, default=50.0)
    pa.add_argument("--eta", type=float, default=1.3)
    pa.add_argument("--lambda", dest="lam", type=float, default=1.0)
    pa.set_defaults(func=_cmd_audit)

    pe = sub.add_parser("experiment", help="run a recall benchmark end to end")
    pe.add_argument("--id", choices=["exp1", "exp2"], default=None)
    pe.add_argument("--seed", type=int, default=0)
    pe.add_argument("--repeats", type=int, default=1)
    pe.add_argument("--out", default=None, help="output directory")
    pe.add_argument("--config", default=None, help="JSON file overriding config fields")
    pe.set_defaults(func=_cmd_experiment)

    pr = sub.add_parser("retrieve", help="retrieve from a stored bank given a query measure")
    pr.add_argument("--bank", required=True)
    pr.add_argument("--query", required=True, help="measure JSON path")
    pr.add_argument("--beta", type=float, default=50.0)
    pr.add_argument("--eps", type=float, default=0.05)
    pr.add_argument("--eta", type=float, default=1.3)
    pr.add_argument("--lambda", dest="lam", type=float, default=1.0)
    pr.add_argument("--max-iter", dest="max_iter", type=int, default=200)
    pr.add_argument("--out", required=True, help="output directory")
    pr.set_defaults(func=_cmd_retrieve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
