"""Per-epoch label correction and test accuracy of one PNAL run.

    python3 scripts/correction_curve.py --tau 0.6 --seed 0 --out results/curve.csv
"""
import argparse
import csv
from dataclasses import replace
from pathlib import Path

from pnal_lab.config import desk_config
from pnal_lab.experiment import run_experiment
from pnal_lab.noise import NoiseConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--tau", type=float, default=0.6)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--eps", type=float, help="clustering radius (default: preset)")
    ap.add_argument("--out", default="results/curve.csv")
    args = ap.parse_args()

    cfg = desk_config(seed=args.seed, noise=NoiseConfig("symmetric", args.tau))
    if args.eps is not None:
        cfg = replace(cfg, clustering=replace(cfg.clustering, eps=args.eps))
    res = run_experiment(cfg)

    by_epoch = {}
    for r in res.log:
        by_epoch.setdefault(r.epoch, {})[r.split] = r
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["epoch", "correction_frac", "true_correction_frac", "test_oa"])
        print(f"{'epoch':>5} {'corr':>6} {'true':>6} {'test OA':>8}")
        for e in sorted(by_epoch):
            tr, te = by_epoch[e]["train"], by_epoch[e]["test"]
            w.writerow([e, tr.correction_frac, tr.true_correction_frac, te.oa])
            print(f"{e:>5} {tr.correction_frac:>6.3f} {tr.true_correction_frac:>6.3f} {te.oa:>8.4f}")


if __name__ == "__main__":
    main()
