"""Instance-level label corruption: symmetric and pair-wise asymmetric noise."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .data import LabelStore, Scene

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class NoiseConfig:
    kind: str = "symmetric"
    tau: float = 0.0
    tau_pair: float = 0.0
    pairs: tuple[tuple[int, int], ...] = ()
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "pairs", tuple(tuple(int(c) for c in p) for p in self.pairs))
        if self.kind not in ("symmetric", "asymmetric"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        for name in ("tau", "tau_pair"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        seen = set()
        for p in self.pairs:
            if len(p) != 2 or p[0] == p[1]:
                raise ValueError(f"bad class pair {p}")
            if seen & set(p):
                raise ValueError("class pairs must be disjoint")
            seen |= set(p)


def _instances(scene: Scene):
    """Instance ids, their gt class and per-point instance position."""
    inst, first, inverse = np.unique(scene.instance_ids, return_index=True, return_inverse=True)
    return inst, scene.gt_labels[first], inverse


def _flip_uniform(gt: np.ndarray, m: int, rng) -> np.ndarray:
    t = rng.integers(0, m - 1, size=len(gt))
    return t + (t >= gt)


def inject_symmetric(scene: Scene, tau: float, rng: np.random.Generator) -> LabelStore:
    """Flip each instance with probability ``tau`` to a uniformly chosen other class."""
    m = scene.num_classes
    if m < 2:
        raise ValueError("symmetric noise needs at least 2 classes")
    _, gt, inverse = _instances(scene)
    flip = rng.random(len(gt)) < tau
    target = _flip_uniform(gt, m, rng)
    noisy = np.where(flip, target, gt)
    return LabelStore.from_labels(scene, noisy[inverse])


def solve_unpaired_rate(class_counts, tau: float, tau_pair: float, pairs) -> tuple[float, bool]:
    """Flip rate for unpaired classes that makes the expected overall rate ``tau``.

    ``class_counts[c]`` is the number of instances of class ``c``.  Returns the
    rate clamped to [0, 1] and whether it was feasible without clamping.
    """
    counts = np.asarray(class_counts, dtype=float)
    paired = np.zeros(len(counts), dtype=bool)
    for a, b in pairs:
        paired[[a, b]] = True
    n_total, n_pair = counts.sum(), counts[paired].sum()
    n_free = n_total - n_pair
    if n_free == 0:
        return 0.0, bool(np.isclose(tau_pair, tau))
    rate = (tau * n_total - tau_pair * n_pair) / n_free
    feasible = 0.0 <= rate <= 1.0
    return float(np.clip(rate, 0.0, 1.0)), bool(feasible)


def inject_asymmetric(scene: Scene, tau: float, tau_pair: float, pairs, rng: np.random.Generator,
                      unpaired_rate: float | None = None) -> tuple[LabelStore, dict]:
    """Swap labels inside confusable pairs; other classes get symmetric noise.

    When ``unpaired_rate`` is None it is solved from this scene's instance
    counts.  Pass it explicitly to calibrate over a whole dataset.
    """
    m = scene.num_classes
    partner = np.arange(m)
    for a, b in pairs:
        partner[a], partner[b] = b, a
    paired = partner != np.arange(m)
    _, gt, inverse = _instances(scene)
    feasible = True
    if unpaired_rate is None:
        counts = np.bincount(gt, minlength=m)
        unpaired_rate, feasible = solve_unpaired_rate(counts, tau, tau_pair, pairs)
        if not feasible:
            log.warning("overall noise rate %.3f infeasible; unpaired rate clamped to %.3f",
                        tau, unpaired_rate)
    u = rng.random(len(gt))
    sym_target = _flip_uniform(gt, m, rng)
    rate = np.where(paired[gt], tau_pair, unpaired_rate)
    flip = u < rate
    noisy = np.where(flip, np.where(paired[gt], partner[gt], sym_target), gt)
    summary = {"unpaired_rate": float(unpaired_rate), "feasible": feasible}
    return LabelStore.from_labels(scene, noisy[inverse]), summary


class NoiseMeasurement(NamedTuple):
    instance_rate: float
    point_rate: float
    confusion: np.ndarray  # gt -> current, point counts


def _noise_counts(scene: Scene, store: LabelStore):
    m = scene.num_classes
    cur = store.current_label
    confusion = np.zeros((m, m), dtype=np.int64)
    np.add.at(confusion, (scene.gt_labels, cur), 1)
    inst, inverse = np.unique(scene.instance_ids, return_inverse=True)
    wrong_pts = cur != scene.gt_labels
    # an instance is noisy when any of its points disagrees with gt
    inst_wrong = np.zeros(len(inst), dtype=bool)
    np.logical_or.at(inst_wrong, inverse, wrong_pts)
    return int(inst_wrong.sum()), len(inst), int(wrong_pts.sum()), len(cur), confusion


def measure_noise(scene: Scene, store: LabelStore) -> NoiseMeasurement:
    return measure_noise_many([scene], [store])


def measure_noise_many(scenes: Sequence[Scene], stores: Sequence[LabelStore]) -> NoiseMeasurement:
    """Pooled measurement over several scenes (instances counted per scene)."""
    wi = ni = wp = npts = 0
    confusion = 0
    for scene, store in zip(scenes, stores):
        a, b, c, d, conf = _noise_counts(scene, store)
        wi, ni, wp, npts, confusion = wi + a, ni + b, wp + c, npts + d, confusion + conf
    return NoiseMeasurement(wi / ni, wp / npts, confusion)


def corrupt(scenes: Sequence[Scene], config: NoiseConfig,
            rng: np.random.Generator | None = None) -> tuple[list[LabelStore], dict]:
    """Apply ``config`` to every scene once; asymmetric rates are calibrated over all scenes."""
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    summary: dict = {"kind": config.kind, "tau": config.tau}
    if config.kind == "symmetric":
        stores = [inject_symmetric(s, config.tau, rng) for s in scenes]
    else:
        m = scenes[0].num_classes
        counts = np.zeros(m)
        for s in scenes:
            counts += np.bincount(_instances(s)[1], minlength=m)
        rate, feasible = solve_unpaired_rate(counts, config.tau, config.tau_pair, config.pairs)
        if not feasible:
            log.warning("overall noise rate %.3f infeasible; unpaired rate clamped to %.3f",
                        config.tau, rate)
        stores = [inject_asymmetric(s, config.tau, config.tau_pair, config.pairs, rng, rate)[0]
                  for s in scenes]
        summary.update(tau_pair=config.tau_pair, pairs=[list(p) for p in config.pairs],
                       unpaired_rate=rate, feasible=feasible)
    meas = measure_noise_many(scenes, stores)
    summary.update(instance_rate=meas.instance_rate, point_rate=meas.point_rate,
                   confusion=meas.confusion.tolist())
    return stores, summary
