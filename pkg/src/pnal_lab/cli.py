"""Command-line experiment runner.

Layout under ``--out``::

    manifest.jsonl              one JSON object per artifact
    data/{train,test}/scene_XXX.pnts
    labels/scene_XXX.lbls       noisy training labels
    labels/noise_summary.jsonl  one JSON line: rates and confusion
    runs/<method>/checkpoint.npz, metrics.csv, config.yaml, labels/epoch_XXX.lbls
    report.csv, curves/<name>.csv

Exit codes: 0 success, 1 invalid config or input, 2 missing input.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from . import experiment
from .config import METHODS, ConfigError, ExperimentConfig, desk_config
from .data import FormatError, LabelStore, read_labels, read_scene, write_labels, write_scene
from .metrics import EpochReport, per_class_iou_json, read_metrics_csv, write_metrics_csv
from .model import load_params, save_params
from .pnal.training import Pool, evaluate, predict_pool

log = logging.getLogger("pnal_lab")

EXIT_OK, EXIT_INVALID, EXIT_MISSING = 0, 1, 2


class MissingInput(Exception):
    pass


# ----------------------------------------------------------------- helpers

def load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else desk_config()
    return cfg.with_overrides(seed=args.seed, method=getattr(args, "method", None))


def _rel(out: Path, p: Path) -> str:
    return p.relative_to(out).as_posix()


def update_manifest(out: Path, stage: str, entries: list[dict], key: dict | None = None) -> None:
    """Replace this stage's previous entries (matching ``key``) and append the new ones."""
    path = out / "manifest.jsonl"
    key = {"stage": stage, **(key or {})}
    kept = []
    if path.exists():
        for line in path.read_text().splitlines():
            if not line.strip():
                continue
            e = json.loads(line)
            if not all(e.get(k) == v for k, v in key.items()):
                kept.append(e)
    new = [{**key, **e} for e in entries]
    path.write_text("".join(json.dumps(e, sort_keys=True) + "\n" for e in kept + new))


def _scene_files(out: Path, split: str) -> list[Path]:
    files = sorted((out / "data" / split).glob("scene_*.pnts"))
    if not files:
        raise MissingInput(f"no {split} scenes under {out / 'data' / split}; run gen-data first")
    return files


def load_split(out: Path, split: str):
    return [read_scene(p) for p in _scene_files(out, split)]


def load_noisy_labels(out: Path, scenes) -> LabelStore:
    stores = []
    for i, scene in enumerate(scenes):
        p = out / "labels" / f"scene_{i:03d}.lbls"
        if not p.exists():
            raise MissingInput(f"missing {p}; run inject-noise first")
        stores.append(read_labels(scene, p))
    return LabelStore.concat(stores)


# ---------------------------------------------------------------- commands

def cmd_gen_data(cfg: ExperimentConfig, out: Path) -> int:
    bench = experiment.make_benchmark(cfg)
    entries = []
    for split, scenes in (("train", bench.train), ("test", bench.test)):
        d = out / "data" / split
        d.mkdir(parents=True, exist_ok=True)
        for old in d.glob("scene_*.pnts"):
            old.unlink()
        for i, scene in enumerate(scenes):
            p = d / f"scene_{i:03d}.pnts"
            write_scene(scene, p)
            entries.append({"kind": "scene", "split": split, "path": _rel(out, p), "points": len(scene)})
    update_manifest(out, "gen-data", entries)
    print(f"wrote {len(bench.train)} train and {len(bench.test)} test scenes to {out / 'data'}")
    return EXIT_OK


def cmd_inject_noise(cfg: ExperimentConfig, out: Path) -> int:
    scenes = load_split(out, "train")
    stores, summary = experiment.noisy_labels(cfg, scenes)
    d = out / "labels"
    d.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, store in enumerate(stores):
        p = d / f"scene_{i:03d}.lbls"
        write_labels(store, p)
        entries.append({"kind": "labels", "path": _rel(out, p)})
    sp = d / "noise_summary.jsonl"
    sp.write_text(json.dumps(summary, sort_keys=True) + "\n")
    entries.append({"kind": "noise_summary", "path": _rel(out, sp)})
    update_manifest(out, "inject-noise", entries)
    print(f"{summary['kind']} noise tau={summary['tau']}: instance rate {summary['instance_rate']:.4f}, "
          f"point rate {summary['point_rate']:.4f}")
    return EXIT_OK


def cmd_train(cfg: ExperimentConfig, out: Path) -> int:
    train = load_split(out, "train")
    test = load_split(out, "test")
    store = load_noisy_labels(out, train)
    run_dir = out / "runs" / cfg.method
    run_dir.mkdir(parents=True, exist_ok=True)
    cfg.dump(run_dir / "config.yaml")
    entries = [{"kind": "config", "path": _rel(out, run_dir / "config.yaml")}]

    snap_dir = run_dir / "labels"

    def snapshot(epoch, s):
        p = snap_dir / f"epoch_{epoch:03d}.lbls"
        write_labels(s, p)
        entries.append({"kind": "labels", "epoch": epoch, "path": _rel(out, p)})

    if cfg.label_snapshots:
        snap_dir.mkdir(exist_ok=True)
    res = experiment.train(cfg, train, store, test, snapshot if cfg.label_snapshots else None)
    save_params(res.params, run_dir / "checkpoint.npz")
    write_metrics_csv(res.log, run_dir / "metrics.csv")
    entries += [{"kind": "checkpoint", "path": _rel(out, run_dir / "checkpoint.npz")},
                {"kind": "metrics", "path": _rel(out, run_dir / "metrics.csv")}]
    update_manifest(out, "train", entries, {"method": cfg.method})
    last = [r for r in res.log if r.split == "test"][-1]
    print(f"{cfg.method}: final test OA {last.oa:.4f} mIoU {last.miou:.4f}")
    return EXIT_OK


def cmd_eval(cfg: ExperimentConfig, out: Path, checkpoint: str | None, split: str) -> int:
    ckpt = Path(checkpoint) if checkpoint else out / "runs" / cfg.method / "checkpoint.npz"
    if not ckpt.exists():
        raise MissingInput(f"checkpoint {ckpt} not found")
    params = load_params(ckpt)
    pool = Pool(load_split(out, split), cfg.training.block_size)
    if params.num_classes != pool.num_classes:
        raise ValueError("checkpoint class count does not match the scenes")
    oa, miou = evaluate(params, pool)
    names = pool.scenes[0].class_names
    per_class = per_class_iou_json(predict_pool(params, pool), pool.gt, pool.num_classes, names)
    result = {"checkpoint": str(ckpt), "split": split, "oa": oa, "miou": miou, "iou": per_class}
    p = ckpt.parent / f"eval_{split}.json"
    p.write_text(json.dumps(result, indent=1) + "\n")
    print(f"{split}: OA {oa:.6f} mIoU {miou:.6f}")
    for name, v in per_class.items():
        print(f"  {name:<10} {'n/a' if v is None else f'{v:.4f}'}")
    return EXIT_OK


def _final(log_rows: list[EpochReport], split: str) -> EpochReport:
    rows = [r for r in log_rows if r.split == split]
    if not rows:
        raise ValueError(f"no {split} rows in metrics")
    return rows[-1]


def cmd_report(out: Path, inputs: list[str]) -> int:
    if not inputs:
        raise ValueError("report needs at least one metrics CSV")
    runs = []
    for path in inputs:
        p = Path(path)
        if not p.exists():
            raise MissingInput(f"metrics file {p} not found")
        runs.append((p.parent.name or p.stem, read_metrics_csv(p)))
    out.mkdir(parents=True, exist_ok=True)
    (out / "curves").mkdir(exist_ok=True)
    base = _final(runs[0][1], "test").oa
    table = []
    for name, rows in runs:
        te, tr = _final(rows, "test"), _final(rows, "train")
        table.append([name, f"{te.oa:.4f}", f"{te.miou:.4f}", f"{te.oa - base:+.4f}",
                      f"{tr.correction_frac:.4f}", f"{tr.true_correction_frac:.4f}"])
        by_epoch: dict[int, dict] = {}
        for r in rows:
            d = by_epoch.setdefault(r.epoch, {})
            d[r.split] = r
        with open(out / "curves" / f"{name}.csv", "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["epoch", "train_oa", "test_oa", "test_miou", "correction_frac",
                        "true_correction_frac"])
            for e in sorted(by_epoch):
                d = by_epoch[e]
                t, s = d.get("train"), d.get("test")
                w.writerow([e, repr(t.oa) if t else "", repr(s.oa) if s else "",
                            repr(s.miou) if s else "", repr(t.correction_frac) if t else "",
                            repr(t.true_correction_frac) if t else ""])
    header = ["method", "test_oa", "test_miou", "delta_oa", "correction_frac", "true_correction_frac"]
    with open(out / "report.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        w.writerows(table)
    widths = [max(len(str(r[i])) for r in [header] + table) for i in range(len(header))]
    for r in [header] + table:
        print("  ".join(str(v).ljust(wd) for v, wd in zip(r, widths)))
    return EXIT_OK


# ------------------------------------------------------------------- entry

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pnal-lab", description="Noise-adaptive point-cloud labelling lab")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML experiment config (default: built-in desk preset)")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--out", default="out", help="output directory (default: out)")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("gen-data", parents=[common], help="write benchmark scenes")
    sub.add_parser("inject-noise", parents=[common], help="write noisy training labels")
    p = sub.add_parser("train", parents=[common], help="train one method")
    p.add_argument("--method", choices=METHODS)
    p = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint")
    p.add_argument("--method", choices=METHODS)
    p.add_argument("--checkpoint")
    p.add_argument("--split", choices=("train", "test"), default="test")
    p = sub.add_parser("report", parents=[common], help="compare metrics CSVs")
    p.add_argument("inputs", nargs="*", help="metrics.csv files; the first is the reference row")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out = Path(args.out)
    try:
        if args.command == "report":
            return cmd_report(out, args.inputs)
        if args.config and not Path(args.config).exists():
            raise MissingInput(f"config {args.config} not found")
        cfg = load_config(args)
        if args.command == "gen-data":
            out.mkdir(parents=True, exist_ok=True)
            return cmd_gen_data(cfg, out)
        if args.command == "inject-noise":
            return cmd_inject_noise(cfg, out)
        if args.command == "train":
            return cmd_train(cfg, out)
        return cmd_eval(cfg, out, args.checkpoint, args.split)
    except MissingInput as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_MISSING
    except (ConfigError, FormatError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
