"""Command-line entry point: run, sweep, compare, verify."""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from . import ledger as lg
from .engine import STRATEGIES, SimConfig, dump_ledgers, finalize, run_state
from .errors import ConfigInvalid, SardError
from .experiments import (
    DEFAULT_NODE_VALUES, DEFAULT_REQUEST_VALUES, SweepRow, SweepSpec, compare_report, emit_csv, read_csv,
    run_sweep,
)

EXIT_OK, EXIT_ORDERING, EXIT_CONFIG = 0, 1, 2


def _base_config(args: argparse.Namespace) -> SimConfig:
    cfg = SimConfig.from_json(args.config) if args.config else SimConfig()
    changes = {}
    for name in ("steps", "n_users", "n_nodes"):
        v = getattr(args, name, None)
        if v is not None:
            changes[name] = v
    if getattr(args, "allow_raw_fallback", False):
        changes["allow_raw_fallback"] = True
    return dataclasses.replace(cfg, **changes).validate()


def _csv_list(text: str, conv=str) -> list:
    try:
        return [conv(t.strip()) for t in text.split(",") if t.strip()]
    except ValueError:
        raise ConfigInvalid("list", f"cannot parse {text!r}") from None


def cmd_run(args: argparse.Namespace) -> int:
    changes = {}
    if args.strategy:
        changes["strategy"] = args.strategy
    if args.seed is not None:
        changes["seed"] = args.seed
    cfg = dataclasses.replace(_base_config(args), **changes).validate()
    state = run_state(cfg)
    metrics = finalize(state)
    if args.out:
        row = SweepRow(
            axis="run", value=float(cfg.n_nodes), strategy=cfg.strategy, seed_count=1,
            total_cost_mean=metrics.total_cost, total_cost_std=0.0,
            resp_ms_mean=metrics.mean_response_ms, resp_ms_std=0.0, p95_ms=metrics.p95_response_ms,
            acceptance_mean=metrics.acceptance_rate, bytes_saved_mean=float(metrics.bytes_saved),
            cache_hit_rate=metrics.cache_hit_rate, rezones=float(metrics.rezone_count),
        )
        emit_csv([row], args.out)
    if args.dump_trace:
        Path(args.dump_trace).write_text(state.trace.to_csv())
    if args.dump_zones:
        Path(args.dump_zones).write_text(json.dumps([p.to_dict() for p in state.plan_history], sort_keys=True))
    if args.dump_ledgers:
        dump_ledgers(state, args.dump_ledgers)
    print(json.dumps(metrics.to_dict(), sort_keys=True))
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    if args.values:
        values = _csv_list(args.values, float)
    else:
        values = list(DEFAULT_NODE_VALUES if args.axis == "nodes" else DEFAULT_REQUEST_VALUES)
    spec = SweepSpec(
        axis=args.axis, values=values, strategies=_csv_list(args.strategies),
        seeds=list(range(args.seed_base, args.seed_base + args.seeds)), base=_base_config(args),
    )
    for s in spec.strategies:
        if s not in STRATEGIES:
            raise ConfigInvalid("strategies", f"unknown strategy {s!r}")
    result = run_sweep(spec, dump_dir=args.dump_ledgers)
    emit_csv(result.rows, args.out, timing=args.timing)
    print(f"wrote {len(result.rows)} rows to {args.out}")
    return EXIT_OK


def cmd_compare(args: argparse.Namespace) -> int:
    report = compare_report(read_csv(args.inp))
    for line in report.lines():
        print(line)
    return EXIT_OK if report.ok else EXIT_ORDERING


def cmd_verify(args: argparse.Namespace) -> int:
    raw = Path(args.dump).read_bytes()
    if raw.startswith(lg.DUMP_MAGIC):
        bad = lg.verify_binary(raw)
    else:
        try:
            bad = lg.verify(lg.from_ndjson(raw.decode()))
        except (ValueError, KeyError) as exc:
            print(f"unreadable dump: {exc}")
            return EXIT_ORDERING
    if bad is None:
        print("ok")
        return EXIT_OK
    print(f"CorruptAt({bad})")
    return EXIT_ORDERING


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sard", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="JSON file with SimConfig fields")
        p.add_argument("--steps", type=int)
        p.add_argument("--n-users", dest="n_users", type=int)
        p.add_argument("--allow-raw-fallback", action="store_true")

    p = sub.add_parser("run", help="single simulation run")
    common(p)
    p.add_argument("--n-nodes", dest="n_nodes", type=int)
    p.add_argument("--strategy", choices=STRATEGIES)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="CSV file for the run summary")
    p.add_argument("--dump-trace")
    p.add_argument("--dump-zones")
    p.add_argument("--dump-ledgers", metavar="DIR")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="parameter sweep over nodes or request load")
    common(p)
    p.add_argument("--axis", choices=("nodes", "requests"), required=True)
    p.add_argument("--values", help="comma separated, strictly increasing")
    p.add_argument("--strategies", default="optimal,proposed,random")
    p.add_argument("--seeds", type=int, default=20, help="number of seeds")
    p.add_argument("--seed-base", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--dump-ledgers", metavar="DIR")
    p.add_argument("--timing", action="store_true", help="append mean wall-clock runtime column")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("compare", help="check strategy orderings in a sweep CSV")
    p.add_argument("--in", dest="inp", required=True)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("verify", help="verify a ledger dump (NDJSON or binary)")
    p.add_argument("dump")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (SardError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
