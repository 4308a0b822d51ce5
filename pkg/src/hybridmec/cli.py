"""Command-line front end: train one run, sweep a parameter, or merge
per-run summaries into a report. Exit code 0 on success, 1 with a
message on bad configuration or I/O trouble."""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys

from hybridmec import harness
from hybridmec.errors import ConfigError, EmptyInput
from hybridmec.harness import (
    AGENT_KINDS,
    METRICS_HEADER,
    SUMMARY_HEADER,
    dump_config,
    merge_summaries,
    parse_config,
    read_summary_csv,
    run_experiment,
    sweep,
    write_csv,
)


def _write_run(result, out_dir: str, cfg) -> None:
    os.makedirs(out_dir, exist_ok=True)
    base = os.path.join(out_dir, result.run_id)
    write_csv(result.rows, base + "_metrics.csv", METRICS_HEADER)
    if result.summary is not None:
        write_csv([result.summary], base + "_summary.csv", SUMMARY_HEADER)
    with open(base + "_config.txt", "w", encoding="utf-8") as fh:
        fh.write(dump_config(cfg))


def _cmd_train(args) -> int:
    cfg = parse_config(args.config)
    if args.agent is not None:
        cfg = dataclasses.replace(cfg, agent=args.agent)
    out_dir = args.out if args.out is not None else cfg.out_dir
    result = run_experiment(cfg, args.seed)
    _write_run(result, out_dir, cfg)
    if result.summary is not None:
        print(f"{result.run_id}: eval mean reward "
              f"{result.summary.mean_reward:.4f}, outage rate "
              f"{result.summary.outage_rate:.4f}")
    else:
        print(f"{result.run_id}: training only, no evaluation slots")
    return 0


def _cmd_sweep(args) -> int:
    cfg = parse_config(args.config)
    out_dir = args.out if args.out is not None else cfg.out_dir
    try:
        values = [float(v) for v in args.values.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"--values must be comma-separated numbers, "
                          f"got '{args.values}'") from None
    if not values:
        raise ConfigError("--values is empty")
    seeds = range(args.seeds) if args.seeds is not None else None
    results = sweep(cfg, args.param, values, seeds=seeds)
    for result in results:
        point = dataclasses.replace(
            cfg, **{args.param: (int(result.param_value)
                                 if args.param == "K"
                                 else result.param_value)})
        _write_run(result, out_dir, point)
    summaries, _ = harness.aggregate(results)
    # plain "summary.csv" so the per-run "*_summary.csv" glob skips it
    write_csv(summaries, os.path.join(out_dir, "summary.csv"),
              SUMMARY_HEADER)
    for s in summaries:
        print(f"{s.config_id}: mean reward {s.mean_reward:.4f} "
              f"+/- {s.std_reward:.4f}")
    return 0


def _cmd_report(args) -> int:
    rows = []
    for name in sorted(os.listdir(args.in_dir)):
        if name.endswith("_summary.csv"):
            rows.extend(read_summary_csv(os.path.join(args.in_dir, name)))
    merged = merge_summaries(rows)
    write_csv(merged, args.out, SUMMARY_HEADER)
    print(f"wrote {len(merged)} config summaries to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hybridmec",
        description="Hybrid backscatter/active offloading experiments")
    subs = parser.add_subparsers(dest="command", required=True)

    p_train = subs.add_parser("train", help="run one seeded experiment")
    p_train.add_argument("--config", required=True)
    p_train.add_argument("--seed", type=int, default=0)
    p_train.add_argument("--agent", choices=AGENT_KINDS, default=None)
    p_train.add_argument("--out", default=None)
    p_train.set_defaults(func=_cmd_train)

    p_sweep = subs.add_parser("sweep", help="run a parameter sweep")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--param", required=True,
                         choices=harness.SWEEPABLE)
    p_sweep.add_argument("--values", required=True,
                         help="comma-separated numbers")
    p_sweep.add_argument("--seeds", type=int, default=None,
                         help="use seeds 0..N-1 instead of the config list")
    p_sweep.add_argument("--out", default=None)
    p_sweep.set_defaults(func=_cmd_sweep)

    p_report = subs.add_parser("report", help="merge per-run summaries")
    p_report.add_argument("--in", dest="in_dir", required=True)
    p_report.add_argument("--out", required=True)
    p_report.set_defaults(func=_cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, EmptyInput, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
