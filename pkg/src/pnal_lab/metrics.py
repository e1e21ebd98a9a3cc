"""Segmentation accuracy, correction-process statistics and the metrics CSV."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, NamedTuple

import numpy as np

from .data import LabelStore, Scene

CSV_HEADER = ("epoch", "split", "oa", "miou", "correction_frac", "true_correction_frac", "wall_time_s")


def overall_accuracy(pred, gt) -> float:
    pred, gt = np.asarray(pred), np.asarray(gt)
    if pred.shape != gt.shape or pred.size == 0:
        raise ValueError("pred and gt must be non-empty and equally shaped")
    return float(np.mean(pred == gt))


def confusion_matrix(pred, gt, num_classes: int) -> np.ndarray:
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(cm, (np.asarray(gt), np.asarray(pred)), 1)
    return cm


def iou_per_class(cm: np.ndarray) -> np.ndarray:
    """IoU per class from a gt x pred confusion matrix; NaN where a class is absent from both."""
    tp = np.diag(cm).astype(float)
    union = cm.sum(0) + cm.sum(1) - tp
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(union > 0, tp / union, np.nan)


def mean_iou(pred, gt, num_classes: int) -> float:
    """Mean IoU over classes present in gt or pred."""
    ious = iou_per_class(confusion_matrix(pred, gt, num_classes))
    return float(np.nanmean(ious))


class CorrectionStats(NamedTuple):
    correction_frac: float
    true_correction_frac: float


def correction_stats(store: LabelStore, scene: Scene) -> CorrectionStats:
    return correction_stats_many([store], [scene])


def correction_stats_many(stores, scenes) -> CorrectionStats:
    """Fraction of points ever replaced, and of those the fraction now equal to gt.

    Replacements that restored the original label count as corrections.
    """
    n = replaced = right = 0
    for store, scene in zip(stores, scenes):
        r = store.ever_replaced
        n += len(r)
        replaced += int(r.sum())
        right += int(np.sum(r & (store.current_label == scene.gt_labels)))
    return CorrectionStats(replaced / n if n else 0.0, right / replaced if replaced else 0.0)


@dataclass(frozen=True)
class EpochReport:
    epoch: int
    split: str
    oa: float
    miou: float
    correction_frac: float = 0.0
    true_correction_frac: float = 0.0
    wall_time: float = 0.0

    def __post_init__(self):
        for name in ("oa", "miou", "correction_frac", "true_correction_frac"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")

    def row(self) -> list[str]:
        return [str(self.epoch), self.split, repr(self.oa), repr(self.miou),
                repr(self.correction_frac), repr(self.true_correction_frac), repr(self.wall_time)]


def write_metrics_csv(reports: Iterable[EpochReport], path) -> None:
    """One row per (epoch, split), ordered by epoch then train before test."""
    order = {"train": 0, "test": 1}
    rows = sorted(reports, key=lambda r: (r.epoch, order.get(r.split, 2), r.split))
    with open(Path(path), "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in rows:
            w.writerow(r.row())


def read_metrics_csv(path) -> list[EpochReport]:
    with open(Path(path), newline="") as f:
        reader = csv.DictReader(f)
        if tuple(reader.fieldnames or ()) != CSV_HEADER:
            raise ValueError(f"{path}: unexpected metrics header {reader.fieldnames}")
        return [
            EpochReport(int(r["epoch"]), r["split"], float(r["oa"]), float(r["miou"]),
                        float(r["correction_frac"]), float(r["true_correction_frac"]),
                        float(r["wall_time_s"]))
            for r in reader
        ]


def per_class_iou_json(pred, gt, num_classes: int, class_names=None) -> dict:
    ious = iou_per_class(confusion_matrix(pred, gt, num_classes))
    names = class_names or [str(i) for i in range(num_classes)]
    return {n: (None if np.isnan(v) else float(v)) for n, v in zip(names, ious)}

