"""Two-stage training: plain warm-up, then history selection + cluster voting."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, replace
from typing import Callable, NamedTuple, Sequence

import numpy as np

from ..clustering import Clusterer
from ..data import (Block, LabelStore, Scene, normalize_features, partition_into_blocks,
                    sample_positions)
from ..metrics import EpochReport, mean_iou, overall_accuracy
from ..model import CE, LossKind, ModelParams, _forward, backward, init_params, sgd_step, zeros_like
from .selection import HistoryBuffer, record_predictions, reliable_mask
from .voting import block_vote_matrix, pick_winners

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PnalConfig:
    q: int = 4
    sigma: float = 0.7
    gamma: float = 4.0
    epochs_total: int = 30
    e_warmup: int = 5
    lr: float = 0.05
    momentum: float = 0.9
    sample_n: int = 4096
    batch_blocks: int = 8  # blocks per gradient step
    block_size: float = 1.0
    stride: float = 0.5
    hidden: int = 64
    dtype: str = "float32"
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.sigma <= 1.0:
            raise ValueError("sigma must lie in [0, 1]")
        if self.gamma < 1:
            raise ValueError("gamma must be >= 1")
        if not 0 <= self.e_warmup <= self.epochs_total:
            raise ValueError("e_warmup must lie in [0, epochs_total]")
        if self.pnal_enabled and self.q > self.e_warmup:
            raise ValueError("history length q must not exceed e_warmup")
        if self.q < 1 or self.sample_n < 1 or self.hidden < 1 or self.batch_blocks < 1:
            raise ValueError("q, sample_n, batch_blocks and hidden must be positive")

    @property
    def e_clean(self) -> int:
        return self.epochs_total - self.e_warmup

    @property
    def pnal_enabled(self) -> bool:
        return self.e_warmup < self.epochs_total

    @classmethod
    def recommended(cls, epochs_total: int = 30, **kw) -> "PnalConfig":
        """Warm-up equal to a fifth of the cleaning stage."""
        return cls(epochs_total=epochs_total, e_warmup=round(epochs_total / 6), **kw)

    def baseline(self) -> "PnalConfig":
        """Same settings with the cleaning stage switched off."""
        return replace(self, e_warmup=self.epochs_total)


class PoolBlock(NamedTuple):
    scene: int
    block: Block
    rows: np.ndarray  # pool rows of block members
    features: np.ndarray  # block-normalized features of the members
    cluster_of: np.ndarray | None  # local cluster id per member
    k: int


class Pool:
    """Several scenes flattened into one row space."""

    def __init__(self, scenes: Sequence[Scene], block_size: float):
        self.scenes = list(scenes)
        sizes = [len(s) for s in self.scenes]
        self.offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(np.int64)
        self.size = int(sum(sizes))
        self.gt = np.concatenate([s.gt_labels for s in self.scenes])
        self.num_classes = self.scenes[0].num_classes
        self.block_size = block_size
        self._eval_features = None

    def eval_features(self) -> np.ndarray:
        """Features over a non-overlapping tiling, so each point is predicted once."""
        if self._eval_features is None:
            feats = np.empty((self.size, 9))
            for off, scene in zip(self.offsets, self.scenes):
                for blk in partition_into_blocks(scene, self.block_size, self.block_size):
                    feats[off + blk.indices] = normalize_features(scene, blk, blk.indices)
            self._eval_features = feats
        return self._eval_features

    def blocks(self, stride: float, clusterer: Clusterer | None, dtype=np.float32) -> list[PoolBlock]:
        """Training blocks with cached features and (optionally) cached clusters."""
        out = []
        for si, (off, scene) in enumerate(zip(self.offsets, self.scenes)):
            for blk in partition_into_blocks(scene, self.block_size, stride):
                feats = normalize_features(scene, blk, blk.indices).astype(dtype)
                cluster_of, k = None, 0
                if clusterer is not None:
                    ca = clusterer.cluster_block(scene, blk)
                    cluster_of, k = ca.cluster_of, ca.k
                out.append(PoolBlock(si, blk, off + blk.indices, feats, cluster_of, k))
        return out


def predict_pool(params: ModelParams, pool: Pool, chunk: int = 65536) -> np.ndarray:
    feats = pool.eval_features()
    out = np.empty(pool.size, dtype=np.int64)
    for a in range(0, pool.size, chunk):
        logits = _forward(params, feats[a:a + chunk])[3]
        out[a:a + chunk] = np.argmax(logits, axis=1)
    return out


def evaluate(params: ModelParams, pool: Pool) -> tuple[float, float]:
    pred = predict_pool(params, pool)
    return overall_accuracy(pred, pool.gt), mean_iou(pred, pool.gt, pool.num_classes)


def _correction_fracs(store: LabelStore, gt: np.ndarray) -> tuple[float, float]:
    r = store.ever_replaced
    n_rep = int(r.sum())
    if n_rep == 0:
        return 0.0, 0.0
    return n_rep / len(r), int(np.sum(r & (store.current_label == gt))) / n_rep


class TrainResult(NamedTuple):
    params: ModelParams
    log: list[EpochReport]
    store: LabelStore
    history: HistoryBuffer


def clean_block(pb: PoolBlock, history: HistoryBuffer, store: LabelStore, config: PnalConfig,
                num_classes: int, rng: np.random.Generator) -> int:
    """Select reliable points, vote in every eligible cluster and overwrite. Returns #clusters corrected."""
    rel, mode = reliable_mask(history, pb.rows, config.sigma, num_classes)
    if not rel.any():
        return 0
    occs = block_vote_matrix(pb.cluster_of, pb.k, rel, mode, num_classes)
    eligible = np.flatnonzero(occs.max(axis=1) > 0)
    winner = np.full(pb.k, -1, dtype=np.int64)
    winner[eligible] = pick_winners(occs[eligible], config.gamma, rng)
    w = winner[pb.cluster_of]
    hit = w >= 0
    store.current_label[pb.rows[hit]] = w[hit]
    store.ever_replaced[pb.rows[hit]] = True
    return len(eligible)


def run_training(
    scenes: Sequence[Scene],
    label_store: LabelStore,
    config: PnalConfig,
    clusterer: Clusterer | None = None,
    params: ModelParams | None = None,
    loss_kind: LossKind = CE,
    test_scenes: Sequence[Scene] = (),
    on_epoch_end: Callable[[int, LabelStore], None] | None = None,
    record_wall_time: bool = False,
) -> TrainResult:
    """Train on ``scenes`` whose pooled training labels are ``label_store``.

    The store is mutated in place by label correction.  Epochs after
    ``config.e_warmup`` run the cleaning stage, which needs ``clusterer``.
    """
    pool = Pool(scenes, config.block_size)
    if len(label_store) != pool.size:
        raise ValueError("label store does not match the training scenes")
    test_pool = Pool(test_scenes, config.block_size) if test_scenes else None
    m = pool.num_classes
    if config.pnal_enabled and clusterer is None:
        raise ValueError("the cleaning stage needs a clusterer")
    dtype = np.dtype(config.dtype)
    blocks = pool.blocks(config.stride, clusterer if config.pnal_enabled else None, dtype)
    if params is None:
        params = init_params(m, config.hidden, seed=config.seed, dtype=dtype)
    params = params.map(lambda a: a.astype(dtype))
    velocity = zeros_like(params)
    history = HistoryBuffer(pool.size, config.q)
    rng = np.random.default_rng(config.seed)
    reports: list[EpochReport] = []
    t0 = time.perf_counter()

    for epoch in range(1, config.epochs_total + 1):
        cleaning = epoch > config.e_warmup
        n_fixed = 0
        order = rng.permutation(len(blocks))
        for a in range(0, len(order), config.batch_blocks):
            batch = [blocks[b] for b in order[a:a + config.batch_blocks]]
            pos = [sample_positions(len(pb.rows), config.sample_n, rng) for pb in batch]
            rows = np.concatenate([pb.rows[p] for pb, p in zip(batch, pos)])
            cache = _forward(params, np.concatenate([pb.features[p] for pb, p in zip(batch, pos)]))
            record_predictions(history, rows, np.argmax(cache[3], axis=1))
            if cleaning:
                for pb in batch:
                    n_fixed += clean_block(pb, history, label_store, config, m, rng)
                mask = label_store.ever_replaced[rows]
                if not mask.any():
                    continue
            else:
                mask = None
            labels = label_store.current_label[rows]
            res = backward(params, cache, labels, mask, loss_kind)
            params, velocity = sgd_step(params, res.grad, config.lr, config.momentum, velocity)

        corr, true_corr = _correction_fracs(label_store, pool.gt)
        wall = time.perf_counter() - t0 if record_wall_time else 0.0
        oa, miou = evaluate(params, pool)
        reports.append(EpochReport(epoch, "train", oa, miou, corr, true_corr, wall))
        if test_pool is not None:
            oa_t, miou_t = evaluate(params, test_pool)
            reports.append(EpochReport(epoch, "test", oa_t, miou_t, 0.0, 0.0, wall))
        log.info("epoch %d%s train oa %.4f%s corr %.3f true %.3f clusters fixed %d", epoch,
                 " (clean)" if cleaning else "", oa,
                 f" test oa {reports[-1].oa:.4f}" if test_pool is not None else "",
                 corr, true_corr, n_fixed)
        if on_epoch_end is not None:
            on_epoch_end(epoch, label_store)
    return TrainResult(params, reports, label_store, history)

