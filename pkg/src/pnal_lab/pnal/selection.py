"""Prediction histories and point-level reliable-sample selection.

Ids here are row indices into whatever point pool the history was built for
(one scene, or several scenes concatenated by the training loop).
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np


class HistoryBuffer:
    """Per-point ring buffer holding the last ``q`` predicted labels."""

    def __init__(self, size: int, q: int):
        if q < 1:
            raise ValueError("history length must be >= 1")
        self.q = q
        self.buf = np.zeros((size, q), dtype=np.int16)
        self.fill = np.zeros(size, dtype=np.int64)
        self.head = np.zeros(size, dtype=np.int64)  # next write slot

    def __len__(self):
        return len(self.fill)

    def entries(self, i: int) -> list[int]:
        """Stored labels of point ``i``, oldest first."""
        f, h = int(self.fill[i]), int(self.head[i])
        slots = [(h - f + k) % self.q for k in range(f)]
        return [int(self.buf[i, s]) for s in slots]

    def full(self, ids) -> np.ndarray:
        return self.fill[np.asarray(ids, dtype=np.int64)] == self.q


def record_predictions(history: HistoryBuffer, ids, predicted_labels) -> HistoryBuffer:
    """Append one prediction per id, evicting the oldest at capacity.

    Repeated ids in one call (with-replacement draws) are recorded once, using
    the first occurrence.
    """
    ids = np.asarray(ids, dtype=np.int64)
    labels = np.asarray(predicted_labels)
    if ids.shape != labels.shape:
        raise ValueError("one label per id required")
    ids, first = np.unique(ids, return_index=True)
    labels = labels[first]
    history.buf[ids, history.head[ids]] = labels
    history.head[ids] = (history.head[ids] + 1) % history.q
    history.fill[ids] = np.minimum(history.fill[ids] + 1, history.q)
    return history


def label_counts(history: HistoryBuffer, ids, num_classes: int) -> np.ndarray:
    """Occurrences of each class in the stored histories (``len(ids) x M``).

    Only meaningful for full histories; partial slots hold stale zeros.
    """
    ids = np.asarray(ids, dtype=np.int64)
    flat = np.arange(len(ids))[:, None] * num_classes + history.buf[ids]
    counts = np.bincount(flat.ravel(), minlength=len(ids) * num_classes)
    return counts.reshape(len(ids), num_classes)


def label_distribution(history: HistoryBuffer, i: int, num_classes: int) -> np.ndarray:
    """Empirical label distribution of point ``i``'s full history."""
    if history.fill[i] != history.q:
        raise ValueError("history not full")
    return label_counts(history, [i], num_classes)[0] / history.q


def confidence_from_counts(counts: np.ndarray) -> np.ndarray:
    """1 - H(P)/log(M) per row, with 0 log 0 := 0; M is the row length."""
    counts = np.atleast_2d(counts)
    m = counts.shape[1]
    if m < 2:
        raise ValueError("confidence needs at least 2 classes")
    p = counts / counts.sum(axis=1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        plogp = np.where(p > 0, p * np.log(p), 0.0)
    entropy = -plogp.sum(axis=1)
    return np.clip(1.0 - entropy / np.log(m), 0.0, 1.0)


def confidence(history: HistoryBuffer, i: int, num_classes: int) -> float:
    """History consistency of point ``i`` in [0, 1]; 1 iff all entries agree."""
    if history.fill[i] != history.q:
        raise ValueError("history not full")
    return float(confidence_from_counts(label_counts(history, [i], num_classes))[0])


class ReliableSet(NamedTuple):
    ids: np.ndarray  # selected ids
    labels: np.ndarray  # reliable label (history mode) per selected id

    def as_dict(self) -> dict[int, int]:
        return dict(zip(self.ids.tolist(), self.labels.tolist()))


def reliable_mask(history: HistoryBuffer, ids, sigma: float, num_classes: int):
    """Boolean selection over ``ids`` plus the mode label of every id."""
    ids = np.asarray(ids, dtype=np.int64)
    counts = label_counts(history, ids, num_classes)
    conf = confidence_from_counts(counts) if len(ids) else np.zeros(0)
    mask = history.full(ids) & (conf >= sigma)
    return mask, np.argmax(counts, axis=1)


def select_reliable(history: HistoryBuffer, ids, sigma: float, num_classes: int) -> ReliableSet:
    """Full-history ids whose confidence reaches ``sigma``; ties in the mode go to the lowest class."""
    ids = np.asarray(ids, dtype=np.int64)
    mask, mode = reliable_mask(history, ids, sigma, num_classes)
    return ReliableSet(ids[mask], mode[mask])
