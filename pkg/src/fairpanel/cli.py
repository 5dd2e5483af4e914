"""Command line interface: ``fairpanel <command> ...``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .allocation import ball_quotas_csv, fractional_allocation
from .audit import EXACT_MAX_N, InstanceTooLarge, audit_panel, exact_core_violation
from .birkhoff import BIRKHOFF_MAX_N, PanelDistribution, fgc_distribution, sample_panel
from .harness import load_config, run_experiment, summarize
from .metric import DatasetError, FeatureSchema, MetricError, MetricInstance, build_metric, load_dataset, parse_distance_matrix
from .selectors import afgc_sample, uniform_panel


def _add_instance_args(p: argparse.ArgumentParser):
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--dist", help="distance-matrix file (first line n, then n rows)")
    src.add_argument("--data", help="dataset CSV (needs --schema)")
    p.add_argument("--weights", help="optional file with one integer weight per line (with --dist)")
    p.add_argument("--schema", help="feature schema file (with --data)")
    p.add_argument("--metric-seed", type=int, default=0, help="seed for random feature weights")
    p.add_argument("--resolution", type=int, help="rescale dataset weights to sum to about this")


def _instance(args) -> MetricInstance:
    if args.dist:
        weight = None
        if args.weights:
            weight = np.array([int(x) for x in Path(args.weights).read_text().split()])
        return MetricInstance(parse_distance_matrix(Path(args.dist).read_text(encoding="utf-8")), weight=weight)
    if not args.schema:
        raise DatasetError("--data needs --schema")
    schema = FeatureSchema.load(args.schema)
    return build_metric(load_dataset(args.data, schema), schema, seed=args.metric_seed, resolution=args.resolution)


def _write(text: str, out: str | None):
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _read_panel(path: str) -> list[int]:
    return [int(x) for x in Path(path).read_text().split()]


def cmd_select(args):
    inst = _instance(args)
    rng = np.random.default_rng(args.seed)
    if args.algo == "uniform":
        panel = uniform_panel(inst, args.k, rng)
    elif args.algo == "fgc":
        panel = sample_panel(fgc_distribution(inst, args.k, max_exact_n=args.gate), rng)
    else:
        if args.q is None:
            raise ValueError("--algo afgc needs --q")
        panel = afgc_sample(inst, args.k, args.q, rng)
    _write("".join(f"{i}\n" for i in panel), args.out)


def cmd_decompose(args):
    inst = _instance(args)
    dist = fgc_distribution(inst, args.k, method=args.method, max_exact_n=args.gate)
    _write(dist.dumps(), args.out)


def cmd_allocate(args):
    inst = _instance(args)
    alloc = fractional_allocation(inst, args.k)
    _write(alloc.dumps(), args.out)
    if args.quotas:
        ball_quotas_csv(alloc, args.quotas)


def cmd_quotas(args):
    inst = _instance(args)
    _write(ball_quotas_csv(fractional_allocation(inst, args.k)), args.out)


def cmd_audit(args):
    inst = _instance(args)
    report = audit_panel(inst, _read_panel(args.panel), args.k, args.q)
    text = report.dumps()
    text += f"unbounded = {str(inst.is_unbounded(report.alpha_hat)).lower()}\n"
    _write(text, args.out)
    if args.per_center:
        Path(args.per_center).write_text(report.per_center_csv(), encoding="utf-8")


def cmd_oracle(args):
    inst = _instance(args)
    panels = []
    if args.panel:
        panels = [_read_panel(args.panel)]
    elif args.distribution:
        panels = PanelDistribution.parse(Path(args.distribution).read_text(), inst.n).panels
    lines = []
    for panel in panels:
        r = exact_core_violation(inst, panel, args.k, args.q, max_size=args.max_size, max_n=args.max_n)
        alpha = "inf" if r.unbounded else repr(r.alpha_star)
        lines.append(
            f"panel = {' '.join(map(str, panel))}\nalpha_star = {alpha}\n"
            f"witness_panel = {' '.join(map(str, r.witness_panel))}\n"
            f"witness_set = {' '.join(map(str, r.witness_set))}\n"
        )
    note = f"# deviations with {args.q} to {args.k if args.max_size is None else min(args.k, args.max_size)} seats\n"
    _write(note + "\n".join(lines), args.out)


def cmd_experiment(args):
    cfg = load_config(args.config)
    if args.workers:
        from dataclasses import replace

        cfg = replace(cfg, workers=args.workers)
    out = run_experiment(cfg)
    print(f"wrote {out}")


def cmd_summarize(args):
    for name, path in summarize(args.dir).items():
        print(f"wrote {path}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fairpanel", description="Fair, proportionally representative panel selection")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("select", help="sample one panel")
    _add_instance_args(p)
    p.add_argument("--algo", choices=("uniform", "fgc", "afgc"), required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--q", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--gate", type=int, default=BIRKHOFF_MAX_N)
    p.add_argument("--out")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("decompose", help="exact fair greedy capture distribution")
    _add_instance_args(p)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--method", choices=("auto", "birkhoff", "compact"), default="auto")
    p.add_argument("--gate", type=int, default=BIRKHOFF_MAX_N)
    p.add_argument("--out")
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("allocate", help="fractional allocation dump")
    _add_instance_args(p)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--quotas", help="also write the ball-membership CSV here")
    p.add_argument("--out")
    p.set_defaults(func=cmd_allocate)

    p = sub.add_parser("quotas", help="ball-membership CSV (id, balls)")
    _add_instance_args(p)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_quotas)

    p = sub.add_parser("audit", help="audit a panel with nearest-neighbor deviations")
    _add_instance_args(p)
    p.add_argument("--panel", required=True, help="file with one id per line")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--q", type=int, required=True)
    p.add_argument("--per-center", help="write the per-center CSV here")
    p.add_argument("--out")
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("oracle", help="exact core violation by enumeration")
    _add_instance_args(p)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--panel")
    g.add_argument("--distribution", help="distribution dump; every support panel is checked")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--q", type=int, required=True)
    p.add_argument("--max-size", type=int)
    p.add_argument("--max-n", type=int, default=EXACT_MAX_N, help="refuse populations larger than this")
    p.add_argument("--out")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("experiment", help="run an experiment config")
    p.add_argument("--config", required=True)
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("summarize", help="recompute aggregates for a report directory")
    p.add_argument("dir")
    p.set_defaults(func=cmd_summarize)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (ValueError, MetricError, DatasetError, InstanceTooLarge, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
