"""Node-count sweep: writes results/nodes.csv and prints the ordering report."""
import argparse
from pathlib import Path

from sard.engine import SimConfig
from sard.experiments import DEFAULT_NODE_VALUES, SweepSpec, compare_report, emit_csv, run_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--steps", type=int, default=40)
    ap.add_argument("--strategies", default="optimal,proposed,random,ccam,sdms")
    ap.add_argument("--out", default="results/nodes.csv")
    ap.add_argument("--timing", action="store_true")
    args = ap.parse_args()
    spec = SweepSpec("nodes", list(DEFAULT_NODE_VALUES), args.strategies.split(","), list(range(args.seeds)),
                     SimConfig(steps=args.steps))
    rows = run_sweep(spec).rows
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    emit_csv(rows, args.out, timing=args.timing)
    for line in compare_report(rows).lines():
        print(line)


if __name__ == "__main__":
    main()
