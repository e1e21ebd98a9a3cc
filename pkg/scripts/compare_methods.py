"""Final test accuracy of every method at several noise rates, averaged over seeds.

    python3 scripts/compare_methods.py --taus 0.0 0.6 --seeds 0 1 2 --out results/compare.csv
"""
import argparse
import csv
import time
from pathlib import Path

import numpy as np

from pnal_lab.config import METHODS, desk_config
from pnal_lab.experiment import make_benchmark, run_experiment
from pnal_lab.noise import NoiseConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--methods", nargs="+", default=list(METHODS), choices=METHODS)
    ap.add_argument("--taus", nargs="+", type=float, default=[0.0, 0.6])
    ap.add_argument("--seeds", nargs="+", type=int, default=[0, 1, 2])
    ap.add_argument("--out", default="results/compare.csv")
    args = ap.parse_args()

    rows = []
    for seed in args.seeds:
        bench = make_benchmark(desk_config(seed=seed))
        for tau in args.taus:
            for method in args.methods:
                cfg = desk_config(seed=seed, method=method, noise=NoiseConfig("symmetric", tau))
                t0 = time.perf_counter()
                res = run_experiment(cfg, bench)
                last = res.final("test")
                rows.append((method, tau, seed, last.oa, last.miou, res.final("train").true_correction_frac))
                print(f"seed {seed} tau {tau:.1f} {method:<4} OA {last.oa:.4f} mIoU {last.miou:.4f} "
                      f"({time.perf_counter() - t0:.0f}s)", flush=True)

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["method", "tau", "seed", "test_oa", "test_miou", "true_correction_frac"])
        w.writerows(rows)

    print(f"\n{'method':<6} {'tau':>4} {'mean OA':>8} {'std':>6}")
    for tau in args.taus:
        for method in args.methods:
            oa = np.array([r[3] for r in rows if r[0] == method and r[1] == tau])
            print(f"{method:<6} {tau:>4.1f} {oa.mean():>8.4f} {oa.std():>6.4f}")


if __name__ == "__main__":
    main()
