"""End-to-end pipeline: benchmark -> noisy labels -> training -> metrics."""
from __future__ import annotations

from typing import Callable, NamedTuple, Sequence

from .clustering import DbscanClusterer
from .config import ExperimentConfig
from .data import LabelStore, Scene
from .metrics import EpochReport
from .model import ModelParams
from .noise import corrupt
from .pnal.training import run_training
from .synth import Benchmark, default_benchmark


class RunResult(NamedTuple):
    params: ModelParams
    log: list[EpochReport]
    store: LabelStore
    noise_summary: dict

    def final(self, split: str = "test") -> EpochReport:
        return [r for r in self.log if r.split == split][-1]


def make_benchmark(cfg: ExperimentConfig) -> Benchmark:
    return default_benchmark(cfg.seed, cfg.benchmark)


def noisy_labels(cfg: ExperimentConfig, scenes: Sequence[Scene]) -> tuple[list[LabelStore], dict]:
    return corrupt(scenes, cfg.noise_config())


def train(cfg: ExperimentConfig, scenes: Sequence[Scene], store: LabelStore,
          test_scenes: Sequence[Scene] = (), on_epoch_end: Callable | None = None,
          record_wall_time: bool = False):
    return run_training(scenes, store, cfg.train_config(), DbscanClusterer(cfg.clustering),
                        loss_kind=cfg.loss_kind(), test_scenes=test_scenes,
                        on_epoch_end=on_epoch_end, record_wall_time=record_wall_time)


def run_experiment(cfg: ExperimentConfig, bench: Benchmark | None = None,
                   on_epoch_end: Callable | None = None) -> RunResult:
    """Full pipeline in memory; a pure function of ``cfg``."""
    bench = bench or make_benchmark(cfg)
    stores, summary = noisy_labels(cfg, bench.train)
    res = train(cfg, bench.train, LabelStore.concat(stores), bench.test, on_epoch_end)
    return RunResult(res.params, res.log, res.store, summary)
