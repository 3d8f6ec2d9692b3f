"""Request-load sweep: writes results/requests.csv and prints the ordering report."""
import argparse
from pathlib import Path

from sard.engine import SimConfig
from sard.experiments import DEFAULT_REQUEST_VALUES, SweepSpec, compare_report, emit_csv, run_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--steps", type=int, default=40)
    ap.add_argument("--strategies", default="proposed,random,ccam,sdms,optimal")
    ap.add_argument("--out", default="results/requests.csv")
    ap.add_argument("--timing", action="store_true")
    args = ap.parse_args()
    spec = SweepSpec("requests", list(DEFAULT_REQUEST_VALUES), args.strategies.split(","), list(range(args.seeds)),
                     SimConfig(steps=args.steps))
    rows = run_sweep(spec).rows
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    emit_csv(rows, args.out, timing=args.timing)
    for line in compare_report(rows).lines():
        print(line)


if __name__ == "__main__":
    main()
