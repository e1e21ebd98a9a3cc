"""Point-cloud data model, room-block partitioning, block sampling and PNTS/LBLS I/O."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np


class FormatError(ValueError):
    """Raised for malformed PNTS/LBLS files or invalid scene contents."""


class PointRecord(NamedTuple):
    position: tuple[float, float, float]
    color: tuple[float, float, float]
    gt_label: int
    instance_id: int
    global_id: int


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Scene:
    """Immutable point cloud with ground-truth semantics and instance ids.

    Stored column-wise; ``points[i]`` gives a :class:`PointRecord` view.
    """

    positions: np.ndarray
    colors: np.ndarray
    gt_labels: np.ndarray
    instance_ids: np.ndarray
    global_ids: np.ndarray
    num_classes: int
    class_names: tuple[str, ...] = ()

    def __post_init__(self):
        set_ = lambda k, v: object.__setattr__(self, k, v)  # noqa: E731
        set_("positions", _frozen(self.positions, np.float64).reshape(-1, 3))
        set_("colors", _frozen(self.colors, np.float64).reshape(-1, 3))
        set_("gt_labels", _frozen(self.gt_labels, np.int64).reshape(-1))
        set_("instance_ids", _frozen(self.instance_ids, np.int64).reshape(-1))
        set_("global_ids", _frozen(self.global_ids, np.int64).reshape(-1))
        if not self.class_names:
            set_("class_names", tuple(f"class{i}" for i in range(self.num_classes)))
        set_("class_names", tuple(self.class_names))
        self._validate()
        set_("_bounds", (_frozen(self.positions.min(axis=0), np.float64),
                         _frozen(self.positions.max(axis=0), np.float64)))

    def _validate(self):
        n = len(self.positions)
        if n == 0:
            raise FormatError("empty scene")
        for name in ("colors", "gt_labels", "instance_ids", "global_ids"):
            if len(getattr(self, name)) != n:
                raise FormatError(f"{name} has {len(getattr(self, name))} entries, expected {n}")
        if self.num_classes < 1:
            raise FormatError("num_classes must be positive")
        if len(self.class_names) != self.num_classes:
            raise FormatError("class_names must have num_classes entries")
        if self.gt_labels.min() < 0 or self.gt_labels.max() >= self.num_classes:
            raise FormatError("label out of range")
        if self.instance_ids.min() < 0 or self.global_ids.min() < 0:
            raise FormatError("ids must be non-negative")
        if len(np.unique(self.global_ids)) != n:
            raise FormatError("duplicate global_id")
        if not np.all(np.isfinite(self.positions)):
            raise FormatError("non-finite position")
        if self.colors.min() < 0 or self.colors.max() > 1:
            raise FormatError("color out of [0,1]")
        # instances must be label-homogeneous
        order = np.lexsort((self.gt_labels, self.instance_ids))
        inst, lab = self.instance_ids[order], self.gt_labels[order]
        same_inst = inst[1:] == inst[:-1]
        if np.any(same_inst & (lab[1:] != lab[:-1])):
            raise FormatError("instance with more than one gt_label")

    def __len__(self):
        return len(self.positions)

    @property
    def points(self) -> list[PointRecord]:
        return [
            PointRecord(tuple(p), tuple(c), int(l), int(i), int(g))
            for p, c, l, i, g in zip(
                self.positions.tolist(), self.colors.tolist(), self.gt_labels,
                self.instance_ids, self.global_ids,
            )
        ]

    @property
    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self._bounds

    def index_of(self, global_ids) -> np.ndarray:
        """Row indices for the given global ids."""
        order = np.argsort(self.global_ids)
        gids = np.asarray(global_ids, dtype=np.int64)
        pos = np.searchsorted(self.global_ids, gids, sorter=order)
        pos = np.clip(pos, 0, len(order) - 1)
        rows = order[pos]
        if np.any(self.global_ids[rows] != gids):
            raise KeyError("unknown global_id")
        return rows

    def equals(self, other: "Scene") -> bool:
        return (
            self.num_classes == other.num_classes
            and self.class_names == other.class_names
            and all(
                np.array_equal(getattr(self, k), getattr(other, k))
                for k in ("positions", "colors", "gt_labels", "instance_ids", "global_ids")
            )
        )


@dataclass(frozen=True, eq=False)
class Block:
    origin: tuple[float, float]
    block_size: float
    indices: np.ndarray  # row indices into the scene, ordered by global id
    member_ids: np.ndarray  # global ids of the same rows (ascending)

    def __len__(self):
        return len(self.indices)


@dataclass
class LabelStore:
    """Mutable training labels for one scene, aligned with the scene's rows."""

    global_ids: np.ndarray
    current_label: np.ndarray
    ever_replaced: np.ndarray = field(default=None)

    def __post_init__(self):
        self.global_ids = np.asarray(self.global_ids, dtype=np.int64)
        self.current_label = np.array(self.current_label, dtype=np.int64, copy=True)
        if self.ever_replaced is None:
            self.ever_replaced = np.zeros(len(self.current_label), dtype=bool)
        else:
            self.ever_replaced = np.array(self.ever_replaced, dtype=bool, copy=True)
        if not (len(self.global_ids) == len(self.current_label) == len(self.ever_replaced)):
            raise ValueError("LabelStore arrays must have equal length")

    @classmethod
    def from_labels(cls, scene: Scene, labels) -> "LabelStore":
        labels = np.asarray(labels, dtype=np.int64)
        if labels.shape != (len(scene),):
            raise ValueError("one label per scene point required")
        if labels.min() < 0 or labels.max() >= scene.num_classes:
            raise FormatError("label out of range")
        return cls(scene.global_ids, labels)

    def copy(self) -> "LabelStore":
        return LabelStore(self.global_ids, self.current_label, self.ever_replaced)

    def __len__(self):
        return len(self.current_label)

    @classmethod
    def concat(cls, stores: Sequence["LabelStore"]) -> "LabelStore":
        """One store over several scenes; rows follow the input order."""
        return cls(
            np.concatenate([s.global_ids for s in stores]),
            np.concatenate([s.current_label for s in stores]),
            np.concatenate([s.ever_replaced for s in stores]),
        )

    def split(self, sizes: Sequence[int]) -> list["LabelStore"]:
        bounds = np.cumsum([0, *sizes])
        if bounds[-1] != len(self):
            raise ValueError("sizes do not add up to the store length")
        return [
            LabelStore(self.global_ids[a:b], self.current_label[a:b], self.ever_replaced[a:b])
            for a, b in zip(bounds[:-1], bounds[1:])
        ]


class SampledBatch(NamedTuple):
    indices: np.ndarray
    global_ids: np.ndarray
    features: np.ndarray
    labels: np.ndarray


def _axis_origins(span: float, block_size: float, stride: float) -> int:
    if span <= block_size:
        return 1
    # small slack so that exact multiples do not add a spurious extra block
    return int(math.ceil((span - block_size) / stride - 1e-9)) + 1


def partition_into_blocks(scene: Scene, block_size: float = 1.0, stride: float = 0.5) -> list[Block]:
    """Cover the scene's xy footprint with square blocks on a stride grid.

    The grid starts at the scene's minimum (x, y).  Cells are half-open
    ``[origin, origin + block_size)`` except the last cell along each axis,
    which is closed so that points on the maximum edge are covered.
    Empty cells are dropped.
    """
    if block_size <= 0 or stride <= 0:
        raise ValueError("block_size and stride must be positive")
    if stride > block_size:
        raise ValueError("stride larger than block_size leaves gaps")
    if len(scene) == 0:
        raise FormatError("empty scene")
    lo, hi = scene.bounds
    rel = scene.positions[:, :2] - lo[:2]
    nx = _axis_origins(hi[0] - lo[0], block_size, stride)
    ny = _axis_origins(hi[1] - lo[1], block_size, stride)

    def axis_masks(coord, count):
        masks = []
        for i in range(count):
            start = i * stride
            m = coord >= start
            if i < count - 1:
                m &= coord < start + block_size
            masks.append(m)
        return masks

    xm, ym = axis_masks(rel[:, 0], nx), axis_masks(rel[:, 1], ny)
    blocks = []
    for i in range(nx):
        for j in range(ny):
            idx = np.flatnonzero(xm[i] & ym[j])
            if len(idx) == 0:
                continue
            idx = idx[np.argsort(scene.global_ids[idx], kind="stable")]
            blocks.append(Block(
                origin=(float(lo[0] + i * stride), float(lo[1] + j * stride)),
                block_size=float(block_size),
                indices=idx,
                member_ids=scene.global_ids[idx],
            ))
    return blocks


def normalize_features(scene: Scene, block: Block, indices) -> np.ndarray:
    """9-column features: block-relative xyz, rgb, scene-normalized xyz."""
    indices = np.asarray(indices, dtype=np.int64)
    pos = scene.positions[indices]
    lo, hi = scene.bounds
    span = hi - lo
    safe = np.where(span > 0, span, 1.0)
    feats = np.empty((len(indices), 9))
    feats[:, 0] = (pos[:, 0] - block.origin[0]) / block.block_size
    feats[:, 1] = (pos[:, 1] - block.origin[1]) / block.block_size
    feats[:, 2] = np.where(span[2] > 0, (pos[:, 2] - lo[2]) / safe[2], 0.0)
    feats[:, 3:6] = scene.colors[indices]
    feats[:, 6:9] = np.where(span > 0, (pos - lo) / safe, 0.0)
    return feats


def sample_positions(size: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """Positions into a block of ``size`` members; small blocks are used whole
    and topped up with replacement."""
    if n <= 0:
        raise ValueError("n must be positive")
    if size == 0:
        raise ValueError("empty block")
    if size >= n:
        return rng.choice(size, size=n, replace=False)
    extra = rng.choice(size, size=n - size, replace=True)
    return rng.permutation(np.concatenate([np.arange(size), extra]))


def sample_indices(block: Block, n: int, rng: np.random.Generator) -> np.ndarray:
    """Scene rows of ``n`` sampled block points.

    Members are kept in global-id order, so the draw depends only on the
    block contents, ``n`` and the generator state.
    """
    return block.indices[sample_positions(len(block), n, rng)]


def sample_block(scene: Scene, block: Block, label_store: LabelStore, n: int,
                 rng: np.random.Generator) -> SampledBatch:
    idx = sample_indices(block, n, rng)
    return SampledBatch(
        indices=idx,
        global_ids=scene.global_ids[idx],
        features=normalize_features(scene, block, idx),
        labels=label_store.current_label[idx].copy(),
    )


# ---------------------------------------------------------------- file I/O

def write_scene(scene: Scene, path) -> None:
    path = Path(path)
    lines = [f"PNTS 1 {len(scene)} {scene.num_classes}"]
    lines += [f"CLASS {i} {name}" for i, name in enumerate(scene.class_names)]
    for p, c, l, inst, g in zip(scene.positions.tolist(), scene.colors.tolist(),
                                scene.gt_labels.tolist(), scene.instance_ids.tolist(),
                                scene.global_ids.tolist()):
        lines.append(f"{g} {p[0]!r} {p[1]!r} {p[2]!r} {c[0]!r} {c[1]!r} {c[2]!r} {l} {inst}")
    path.write_text("\n".join(lines) + "\n")


def _header(line: str, magic: str, nfields: int) -> list[int]:
    parts = line.split()
    if len(parts) != nfields or parts[0] != magic or parts[1] != "1":
        raise FormatError(f"malformed header: {line.strip()!r}")
    try:
        return [int(x) for x in parts[2:]]
    except ValueError:
        raise FormatError(f"malformed header: {line.strip()!r}") from None


def read_scene(path) -> Scene:
    text = Path(path).read_text().splitlines()
    if not text:
        raise FormatError("malformed header: empty file")
    n, m = _header(text[0], "PNTS", 4)
    if n == 0:
        raise FormatError("empty scene")
    names = {}
    body = []
    for line in text[1:]:
        if not line.strip():
            continue
        if line.startswith("CLASS"):
            parts = line.split(maxsplit=2)
            if len(parts) != 3:
                raise FormatError(f"malformed CLASS line: {line!r}")
            names[int(parts[1])] = parts[2].strip()
        else:
            body.append(line)
    if len(body) != n:
        raise FormatError(f"header declares {n} points, found {len(body)}")
    try:
        rows = [line.split() for line in body]
        if any(len(r) != 9 for r in rows):
            raise FormatError("point lines need 9 fields")
        gid = np.array([int(r[0]) for r in rows], dtype=np.int64)
        xyz = np.array([[float(v) for v in r[1:4]] for r in rows])
        rgb = np.array([[float(v) for v in r[4:7]] for r in rows])
        lab = np.array([int(r[7]) for r in rows], dtype=np.int64)
        inst = np.array([int(r[8]) for r in rows], dtype=np.int64)
    except ValueError as e:
        raise FormatError(f"bad point line: {e}") from None
    if names and sorted(names) != list(range(m)):
        raise FormatError("CLASS lines must cover 0..M-1")
    class_names = tuple(names[i] for i in range(m)) if names else ()
    return Scene(xyz, rgb, lab, inst, gid, m, class_names)


def write_labels(store: LabelStore, path) -> None:
    lines = [f"LBLS 1 {len(store.global_ids)}"]
    lines += [f"{g} {l}" for g, l in zip(store.global_ids.tolist(), store.current_label.tolist())]
    Path(path).write_text("\n".join(lines) + "\n")


def read_labels(scene: Scene, path) -> LabelStore:
    """Read an LBLS sidecar and align it with ``scene``'s rows."""
    text = [l for l in Path(path).read_text().splitlines() if l.strip()]
    if not text:
        raise FormatError("malformed header: empty file")
    (n,) = _header(text[0], "LBLS", 3)
    if n != len(text) - 1:
        raise FormatError(f"header declares {n} labels, found {len(text) - 1}")
    if n != len(scene):
        raise FormatError("label count does not match scene")
    try:
        pairs = np.array([[int(v) for v in l.split()] for l in text[1:]], dtype=np.int64)
    except ValueError as e:
        raise FormatError(f"bad label line: {e}") from None
    if pairs.shape != (n, 2):
        raise FormatError("label lines need 2 fields")
    if len(np.unique(pairs[:, 0])) != n:
        raise FormatError("duplicate global_id")
    labels = np.empty(n, dtype=np.int64)
    labels[scene.index_of(pairs[:, 0])] = pairs[:, 1]
    return LabelStore.from_labels(scene, labels)

