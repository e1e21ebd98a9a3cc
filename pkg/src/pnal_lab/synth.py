"""Procedural indoor-style scenes with per-instance ground truth.

Colour carries most of the class signal; geometry carries instance
structure.  Instances in the default benchmark are kept apart by a gap
larger than the clustering radius, so density-based clusters line up with
instances the way the cluster assumption expects.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .data import Scene

SHAPES = ("plane", "box", "sphere")

CLASS_NAMES = ("floor", "wall", "ceiling", "table", "chair", "clutter")
CLASS_COLORS = np.array([
    [0.55, 0.35, 0.20],
    [0.80, 0.80, 0.72],
    [0.97, 0.97, 0.97],
    [0.25, 0.15, 0.05],
    [0.20, 0.40, 0.75],
    [0.35, 0.75, 0.30],
])


@dataclass(frozen=True)
class InstanceSpec:
    """One object.  ``size`` is the full extent; a plane has exactly one zero
    component (its normal axis), a sphere uses ``size[0]`` as diameter."""

    class_id: int
    shape: str
    center: tuple[float, float, float]
    size: tuple[float, float, float]
    num_points: int


@dataclass(frozen=True)
class ColorModel:
    means: np.ndarray  # M x 3
    noise_std: float = 0.05
    instance_std: float = 0.0  # per-instance offset of the mean


@dataclass(frozen=True)
class SceneSpec:
    room_extent: tuple[float, float, float]
    num_classes: int
    instances: Sequence[InstanceSpec]
    color_model: ColorModel
    seed: int = 0
    jitter: float = 0.01
    class_names: tuple[str, ...] = ()
    id_offset: int = 0


def _validate(spec: SceneSpec):
    if spec.num_classes < 2:
        raise ValueError("need at least 2 classes")
    if not spec.instances:
        raise ValueError("scene spec has no instances")
    if np.shape(spec.color_model.means) != (spec.num_classes, 3):
        raise ValueError("color model needs one mean per class")
    for inst in spec.instances:
        if not 0 <= inst.class_id < spec.num_classes:
            raise ValueError(f"instance class {inst.class_id} out of range")
        if inst.shape not in SHAPES:
            raise ValueError(f"unknown shape {inst.shape!r}")
        if inst.num_points < 10:
            raise ValueError("instances need at least 10 points")
        if inst.shape == "plane" and sum(s == 0 for s in inst.size) != 1:
            raise ValueError("a plane needs exactly one zero size component")


def _sample_surface(inst: InstanceSpec, rng: np.random.Generator) -> np.ndarray:
    n = inst.num_points
    c = np.asarray(inst.center, dtype=float)
    s = np.asarray(inst.size, dtype=float)
    if inst.shape == "sphere":
        v = rng.normal(size=(n, 3))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        return c + v * (s[0] / 2)
    if inst.shape == "plane":
        u = rng.uniform(-0.5, 0.5, size=(n, 3)) * s
        return c + u
    # box: pick faces proportionally to their area
    areas = np.array([s[1] * s[2], s[0] * s[2], s[0] * s[1]])
    face_p = np.repeat(areas, 2) / (2 * areas.sum())
    face = rng.choice(6, size=n, p=face_p)
    u = rng.uniform(-0.5, 0.5, size=(n, 3))
    axis = face // 2
    u[np.arange(n), axis] = np.where(face % 2 == 0, -0.5, 0.5)
    return c + u * s


def generate_scene(spec: SceneSpec) -> Scene:
    _validate(spec)
    rng = np.random.default_rng(spec.seed)
    cm = spec.color_model
    means = np.asarray(cm.means, dtype=float)
    pos, col, lab, inst_ids = [], [], [], []
    for i, inst in enumerate(spec.instances):
        p = _sample_surface(inst, rng)
        p = p + rng.normal(scale=spec.jitter, size=p.shape)
        mean = means[inst.class_id]
        if cm.instance_std > 0:
            mean = mean + rng.normal(scale=cm.instance_std, size=3)
        c = np.clip(mean + rng.normal(scale=cm.noise_std, size=p.shape), 0.0, 1.0)
        pos.append(p)
        col.append(c)
        lab.append(np.full(inst.num_points, inst.class_id))
        inst_ids.append(np.full(inst.num_points, i))
    n = sum(len(p) for p in pos)
    return Scene(
        positions=np.concatenate(pos),
        colors=np.concatenate(col),
        gt_labels=np.concatenate(lab),
        instance_ids=np.concatenate(inst_ids),
        global_ids=np.arange(spec.id_offset, spec.id_offset + n),
        num_classes=spec.num_classes,
        class_names=spec.class_names or tuple(f"class{i}" for i in range(spec.num_classes)),
    )


# ------------------------------------------------------------ benchmark

@dataclass(frozen=True)
class BenchmarkSpec:
    """Knobs for the default scene family."""

    num_train: int = 40
    num_test: int = 10
    density: float = 200.0  # points per square metre of surface
    min_instances: int = 20
    max_instances: int = 40
    room_xy: tuple[float, float] = (2.0, 2.5)
    room_height: tuple[float, float] = (2.0, 2.4)
    gap: float = 0.2  # minimum clearance between instances, metres
    jitter: float = 0.01
    noise_std: float = 0.05
    instance_std: float = 0.0


class Benchmark(NamedTuple):
    train: list[Scene]
    test: list[Scene]


def _n_points(area: float, density: float) -> int:
    return max(10, int(round(area * density)))


def _place_objects(rng, L, W, H, count, gap, density):
    """Rejection-sample tables, chairs and clutter with clearance ``gap``."""
    placed_lo, placed_hi = [], []
    specs = []
    lo_room = np.array([gap, gap, gap])
    hi_room = np.array([L - gap, W - gap, H - gap])
    kinds = rng.choice([3, 4, 5], size=count, p=[0.15, 0.25, 0.60])
    for cls in kinds:
        # furniture that does not fit is replaced by a small clutter item
        for attempt in range(400):
            if attempt >= 100:
                cls = 5
            if cls == 3:  # table top slab
                size = np.array([rng.uniform(0.5, 0.9), rng.uniform(0.4, 0.7), 0.06])
                zc = rng.uniform(0.65, 0.8)
            elif cls == 4:  # chair body
                size = np.array([rng.uniform(0.35, 0.45), rng.uniform(0.35, 0.45),
                                 rng.uniform(0.35, 0.5)])
                zc = gap + size[2] / 2 + rng.uniform(0, 0.05)
            else:  # clutter: small box or ball anywhere
                d = rng.uniform(0.1, 0.25) if attempt < 200 else rng.uniform(0.08, 0.12)
                size = np.array([d, d, d])
                zc = rng.uniform(gap + d / 2, H - gap - d / 2)
            c = np.array([rng.uniform(lo_room[0] + size[0] / 2, hi_room[0] - size[0] / 2),
                          rng.uniform(lo_room[1] + size[1] / 2, hi_room[1] - size[1] / 2), zc])
            lo, hi = c - size / 2, c + size / 2
            if np.any(lo < lo_room) or np.any(hi > hi_room):
                continue
            if placed_lo and np.any(np.all((lo < np.array(placed_hi) + gap)
                                           & (np.array(placed_lo) < hi + gap), axis=1)):
                continue
            placed_lo.append(lo)
            placed_hi.append(hi)
            if cls == 5 and rng.random() < 0.5:
                shape, area = "sphere", np.pi * size[0] ** 2
            else:
                shape = "box"
                area = 2 * (size[0] * size[1] + size[0] * size[2] + size[1] * size[2])
            specs.append(InstanceSpec(int(cls), shape, tuple(c), tuple(size),
                                      _n_points(area, density)))
            break
    return specs


def room_spec(rng: np.random.Generator, bench: BenchmarkSpec, seed: int, id_offset: int) -> SceneSpec:
    L, W = rng.uniform(*bench.room_xy, size=2)
    H = rng.uniform(*bench.room_height)
    g, d = bench.gap, bench.density
    # structural planes are inset so floor, walls and ceiling do not touch
    fl = (L - 2 * g, W - 2 * g)
    insts = [
        InstanceSpec(0, "plane", (L / 2, W / 2, 0.0), (fl[0], fl[1], 0.0), _n_points(fl[0] * fl[1], d)),
        InstanceSpec(2, "plane", (L / 2, W / 2, H), (fl[0], fl[1], 0.0), _n_points(fl[0] * fl[1], d)),
    ]
    wh = H - 2 * g
    for x in (0.0, L):
        insts.append(InstanceSpec(1, "plane", (x, W / 2, H / 2), (0.0, W - 2 * g, wh),
                                  _n_points((W - 2 * g) * wh, d)))
    for y in (0.0, W):
        insts.append(InstanceSpec(1, "plane", (L / 2, y, H / 2), (L - 2 * g, 0.0, wh),
                                  _n_points((L - 2 * g) * wh, d)))
    count = int(rng.integers(bench.min_instances, bench.max_instances + 1)) - len(insts)
    insts += _place_objects(rng, L, W, H, count, g, d)
    return SceneSpec(
        room_extent=(float(L), float(W), float(H)),
        num_classes=len(CLASS_NAMES),
        instances=insts,
        color_model=ColorModel(CLASS_COLORS, bench.noise_std, bench.instance_std),
        seed=seed,
        jitter=bench.jitter,
        class_names=CLASS_NAMES,
        id_offset=id_offset,
    )


def default_benchmark(seed: int = 0, bench: BenchmarkSpec | None = None) -> Benchmark:
    """Train/test rooms over six indoor classes; global ids are unique across the split."""
    bench = bench or BenchmarkSpec()
    ss = np.random.SeedSequence(seed)
    layout_seq, color_seq = ss.spawn(2)
    total = bench.num_train + bench.num_test
    layout_rngs = [np.random.default_rng(s) for s in layout_seq.spawn(total)]
    scene_seeds = [int(s.generate_state(1)[0]) for s in color_seq.spawn(total)]
    scenes, offset = [], 0
    for rng, sd in zip(layout_rngs, scene_seeds):
        scene = generate_scene(room_spec(rng, bench, sd, offset))
        offset += len(scene)
        scenes.append(scene)
    return Benchmark(scenes[:bench.num_train], scenes[bench.num_train:])
