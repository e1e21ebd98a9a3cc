"""Experiment configuration: one YAML file, one dataclass tree.

Every section maps onto a dataclass used by the library, so a config file is
just those constructors' keyword arguments::

    seed: 0
    method: pnal            # ce | gce | sce | pnal
    benchmark: {num_train: 40, num_test: 10, ...}
    noise: {kind: symmetric, tau: 0.6, tau_pair: 0.0, pairs: []}
    clustering: {eps: 0.072, min_pts: 10}
    training: {q: 4, sigma: 0.7, gamma: 4, epochs_total: 30, e_warmup: 5, ...}
    loss: {q_gce: 0.7, alpha: 0.1, beta: 1.0}

Unknown keys are rejected.  Seeds of the noise draw and of training are
derived from the top-level ``seed``.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np
import yaml

from .clustering import DbscanParams
from .model import LossKind
from .noise import NoiseConfig
from .pnal.training import PnalConfig
from .synth import BenchmarkSpec

METHODS = ("ce", "gce", "sce", "pnal")


class ConfigError(ValueError):
    pass


def _derive_seed(seed: int, stream: int) -> int:
    return int(np.random.SeedSequence([seed, stream]).generate_state(1)[0])


@dataclass(frozen=True)
class LossParams:
    """Parameters of the robust-loss baselines."""

    q_gce: float = 0.7
    alpha: float = 0.1
    beta: float = 1.0
    log_zero_floor: float = -4.0


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    method: str = "pnal"
    benchmark: BenchmarkSpec = field(default_factory=BenchmarkSpec)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    clustering: DbscanParams = field(default_factory=DbscanParams)
    training: PnalConfig = field(default_factory=PnalConfig)
    loss: LossParams = field(default_factory=LossParams)
    label_snapshots: bool = False

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError("seed must be a non-negative integer")

    # -- derived pieces -------------------------------------------------

    def noise_config(self) -> NoiseConfig:
        return replace(self.noise, seed=_derive_seed(self.seed, 1))

    def train_config(self) -> PnalConfig:
        """Training schedule for ``method``; baselines never enter the cleaning stage."""
        cfg = replace(self.training, seed=_derive_seed(self.seed, 2))
        return cfg if self.method == "pnal" else cfg.baseline()

    def loss_kind(self) -> LossKind:
        name = self.method if self.method in ("gce", "sce") else "ce"
        return LossKind(name, **asdict(self.loss))

    def with_overrides(self, seed: int | None = None, method: str | None = None) -> "ExperimentConfig":
        kw = {}
        if seed is not None:
            kw["seed"] = seed
        if method is not None:
            kw["method"] = method
        return replace(self, **kw) if kw else self

    # -- (de)serialization -----------------------------------------------

    def to_dict(self) -> dict:
        d = asdict(self)
        d["noise"].pop("seed")
        d["training"].pop("seed")
        d["noise"]["pairs"] = [list(p) for p in self.noise.pairs]
        for k in ("room_xy", "room_height"):
            d["benchmark"][k] = list(d["benchmark"][k])
        return d

    @classmethod
    def from_dict(cls, raw: dict | None) -> "ExperimentConfig":
        raw = dict(raw or {})
        sections = {"benchmark": BenchmarkSpec, "noise": NoiseConfig, "clustering": DbscanParams,
                    "training": PnalConfig, "loss": LossParams}
        top = {f.name for f in fields(cls)}
        unknown = set(raw) - top
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kw = {}
        for name, value in raw.items():
            if name in sections:
                kw[name] = _build(sections[name], value, name)
            else:
                kw[name] = value
        try:
            return cls(**kw)
        except (TypeError, ValueError) as e:
            raise ConfigError(str(e)) from e

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path) as f:
            return cls.from_dict(yaml.safe_load(f))

    def dump(self, path) -> None:
        with open(path, "w") as f:
            yaml.safe_dump(self.to_dict(), f, sort_keys=False)


def _build(kind, value, section: str):
    value = dict(value or {})
    allowed = {f.name for f in fields(kind)} - {"seed"}
    unknown = set(value) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {section}: {sorted(unknown)}")
    for k in ("room_xy", "room_height"):
        if k in value:
            value[k] = tuple(value[k])
    if "pairs" in value:
        value["pairs"] = tuple(tuple(p) for p in value["pairs"])
    try:
        return kind(**value)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{section}: {e}") from e


def desk_config(**kw) -> ExperimentConfig:
    """Settings for the synthetic benchmark.

    Scenes are sampled at roughly 200 points per square metre, far sparser
    than a laser scan, so the clustering radius is scaled up to keep about the
    same neighbour count.  Blocks hold a few hundred points, hence the smaller
    per-block sample.
    """
    base = ExperimentConfig(
        clustering=DbscanParams(eps=0.072, min_pts=10),
        training=PnalConfig(sample_n=512, batch_blocks=4, lr=0.05, momentum=0.9),
    )
    return replace(base, **kw)
