#!/usr/bin/env python3
"""Reproduce the headline numbers: train one sitting per seed, score the
held-out command stream, and print the accuracy/latency table.

    python3 scripts/benchmark.py
    python3 scripts/benchmark.py --seeds 42 1 2 3 4 5 --repeats 3 --out reports/
"""

from argparse import ArgumentParser
from pathlib import Path
import sys
import time

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from minddrone.evaluate import evaluate, report_json, train_from_script
from minddrone.scenarios import evaluation_script, training_script
from minddrone.synth import NoiseModel


def main() -> int:
    parser = ArgumentParser(description=__doc__)
    parser.add_argument("--seeds", type=int, nargs="+", default=[42, 1, 2, 3, 4, 5])
    parser.add_argument("--repeats", type=int, default=1,
                        help="training recordings per command")
    parser.add_argument("--episodes", type=int, default=10,
                        help="evaluation episodes per command")
    parser.add_argument("--out", type=Path, default=None,
                        help="write one JSON report per seed into this directory")
    args = parser.parse_args()

    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)

    print(f"{'seed':>6} {'accuracy':>9} {'windows':>8} {'lat p50':>8} {'lat p95':>8}")
    started = time.monotonic()
    accuracies = []
    for seed in args.seeds:
        noise = NoiseModel(seed=seed)
        profile = train_from_script(
            training_script(repeats=args.repeats), noise=noise
        )
        report = evaluate(
            profile,
            evaluation_script(episodes_per_label=args.episodes),
            noise=noise,
        )
        accuracies.append(report.accuracy)
        lat = report.latency
        print(
            f"{seed:>6} {report.accuracy:>9.4f} {report.window_count:>8}"
            f" {lat.p50 if lat else '-':>8} {lat.p95 if lat else '-':>8}"
        )
        if args.out is not None:
            (args.out / f"seed{seed}.json").write_text(report_json(report))
    elapsed = time.monotonic() - started
    print(f"mean accuracy {sum(accuracies) / len(accuracies):.4f}"
          f" over {len(args.seeds)} seeds in {elapsed:.1f} s")
    return 0


if __name__ == "__main__":
    sys.exit(main())
