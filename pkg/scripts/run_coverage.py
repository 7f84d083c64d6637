"""Coverage of mean +/- 3 sd intervals for each emulator on one scenario.

Fits the selected emulators on an 80-run maximin design and reports the
fraction of test cells inside the interval together with the mean test
RMSE. The MCMC emulators run the full 10000-iteration chain unless
``--iterations`` is lowered.

    python scripts/run_coverage.py --d 4 --emulators stprs itprs --out results/coverage.csv
"""

import argparse
import csv
import sys
import time
from pathlib import Path

from tprs_emu.harness import ExperimentConfig, evaluate_on_test, fit_selected, make_datasets


def coverage_rows(d: int, emulators, seeds, **overrides):
    for seed in seeds:
        cfg = ExperimentConfig(scenario=d, emulators=tuple(emulators), seed=seed, **overrides)
        data = make_datasets(cfg, seed)
        for name in emulators:
            t0 = time.perf_counter()
            model, search = fit_selected(name, data, cfg, seed)
            res = evaluate_on_test(name, model, data.test, cfg, search)
            yield {
                "d": d,
                "seed": seed,
                "emulator": name,
                "coverage": res.coverage,
                "mean_rmse": res.rmse.summary["mean"],
                "sigma2": model.sigma2,
                "seconds": time.perf_counter() - t0,
            }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--d", type=int, default=4)
    ap.add_argument("--emulators", nargs="+", default=["stprs", "itprs"])
    ap.add_argument("--replicates", type=int, default=1)
    ap.add_argument("--first-seed", type=int, default=0)
    ap.add_argument("--iterations", type=int, default=10000)
    ap.add_argument("--burn-in", type=int, default=1000)
    ap.add_argument("--out", default="results/coverage.csv")
    args = ap.parse_args(argv)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    seeds = range(args.first_seed, args.first_seed + args.replicates)
    rows = coverage_rows(args.d, args.emulators, seeds, mcmc_iterations=args.iterations,
                         mcmc_burn_in=args.burn_in)
    with open(out, "w", newline="") as fh:
        w = None
        for row in rows:
            if w is None:
                w = csv.DictWriter(fh, fieldnames=list(row))
                w.writeheader()
            w.writerow(row)
            fh.flush()
            print(" ".join(f"{k}={v:.4g}" if isinstance(v, float) else f"{k}={v}" for k, v in row.items()))
            sys.stdout.flush()


if __name__ == "__main__":
    main()
