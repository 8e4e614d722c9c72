"""Run the nominal and outlier benchmarks and write CSV plus JSON summaries.

    python3 scripts/run_experiment.py --runs 30 --seed 0 --out results/
"""

import argparse
import json
import logging
import time
from pathlib import Path

from rkhsbayes.experiment import ExperimentConfig, export, run
from rkhsbayes.mcmc import ChainConfig


def main():
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--runs", type=int, default=30)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--chain-length", type=int, default=20_000)
    parser.add_argument("--jobs", type=int, default=1)
    parser.add_argument("--out", type=Path, default=Path("results"))
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args()
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    args.out.mkdir(parents=True, exist_ok=True)
    for name, outliers in (("nominal", False), ("outliers", True)):
        cfg = ExperimentConfig(
            runs=args.runs,
            seed=args.seed,
            outliers=outliers,
            chain=ChainConfig(length=args.chain_length),
            jobs=args.jobs,
        )
        t0 = time.perf_counter()
        report = run(cfg)
        export(report, args.out / f"{name}.csv")
        print(name, f"{time.perf_counter() - t0:.0f}s", json.dumps(report.summary(), indent=2))


if __name__ == "__main__":
    main()
