"""Density-based clustering of block points into label-correction units."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .data import Block, Scene

NOISE = -1


@dataclass(frozen=True)
class DbscanParams:
    eps: float = 0.018
    min_pts: int = 10

    def __post_init__(self):
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if self.min_pts < 1:
            raise ValueError("min_pts must be >= 1")


@dataclass(frozen=True, eq=False)
class ClusterAssignment:
    cluster_of: np.ndarray  # local index -> cluster id or NOISE
    clusters: list  # member local indices per cluster, ascending

    @property
    def k(self) -> int:
        return len(self.clusters)

    @classmethod
    def from_labels(cls, labels) -> "ClusterAssignment":
        labels = np.asarray(labels, dtype=np.int64)
        k = int(labels.max()) + 1 if len(labels) and labels.max() >= 0 else 0
        order = np.argsort(labels, kind="stable")
        bounds = np.searchsorted(labels[order], np.arange(k + 1))
        clusters = [order[bounds[c]:bounds[c + 1]] for c in range(k)]
        return cls(labels, clusters)

    @property
    def noise(self) -> np.ndarray:
        return np.flatnonzero(self.cluster_of == NOISE)


def dbscan(points, params: DbscanParams) -> ClusterAssignment:
    """DBSCAN with deterministic labelling.

    A point is core when at least ``min_pts`` points (itself included) lie
    within ``eps``.  Clusters are connected components of core points, numbered
    by their lowest index; a border point joins the lowest-numbered cluster
    among its core neighbours.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    n = len(pts)
    if n == 0:
        raise ValueError("dbscan needs at least one point")
    pairs = cKDTree(pts).query_pairs(params.eps, output_type="ndarray")
    i, j = pairs[:, 0], pairs[:, 1]
    degree = np.bincount(np.concatenate([i, j]), minlength=n) + 1
    core = degree >= params.min_pts

    labels = np.full(n, NOISE, dtype=np.int64)
    core_idx = np.flatnonzero(core)
    if len(core_idx):
        both = core[i] & core[j]
        remap = np.full(n, -1)
        remap[core_idx] = np.arange(len(core_idx))
        g = coo_matrix((np.ones(both.sum()), (remap[i[both]], remap[j[both]])),
                       shape=(len(core_idx),) * 2)
        _, comp = connected_components(g, directed=False)
        # renumber components by first (lowest-index) core point
        _, first = np.unique(comp, return_index=True)
        rank = np.empty(len(first), dtype=np.int64)
        rank[np.argsort(first)] = np.arange(len(first))
        labels[core_idx] = rank[comp]

        # border points: min cluster id over adjacent cores
        big = np.iinfo(np.int64).max
        best = np.full(n, big)
        for a, b in ((i, j), (j, i)):
            sel = core[b] & ~core[a]
            np.minimum.at(best, a[sel], labels[b[sel]])
        border = ~core & (best != big)
        labels[border] = best[border]
    return ClusterAssignment.from_labels(labels)


def dbscan_reference(points, params: DbscanParams) -> np.ndarray:
    """O(n^2) DBSCAN used as a test oracle: full distance matrix + union-find."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    n = len(pts)
    d2 = ((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1)
    adj = d2 <= params.eps ** 2
    core = adj.sum(1) >= params.min_pts
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a in range(n):
        if not core[a]:
            continue
        for b in range(a + 1, n):
            if core[b] and adj[a, b]:
                ra, rb = find(a), find(b)
                if ra != rb:
                    parent[max(ra, rb)] = min(ra, rb)
    labels = [NOISE] * n
    next_id, root_id = 0, {}
    for a in range(n):
        if core[a]:
            r = find(a)
            if r not in root_id:
                root_id[r] = next_id
                next_id += 1
            labels[a] = root_id[r]
    for a in range(n):
        if not core[a]:
            ids = [labels[b] for b in range(n) if core[b] and adj[a, b]]
            if ids:
                labels[a] = min(ids)
    return np.array(labels, dtype=np.int64)


def promote_noise(assignment: ClusterAssignment) -> ClusterAssignment:
    """Turn every NOISE point into its own singleton cluster."""
    labels = assignment.cluster_of.copy()
    noise = np.flatnonzero(labels == NOISE)
    labels[noise] = assignment.k + np.arange(len(noise))
    return ClusterAssignment.from_labels(labels)


def block_unit_cube(scene: Scene, block: Block) -> np.ndarray:
    """Block positions shifted to the block corner and scaled isotropically into [0, 1]^3."""
    pos = scene.positions[block.indices]
    lo = np.array([block.origin[0], block.origin[1], pos[:, 2].min()])
    scale = max(block.block_size, float(np.ptp(pos[:, 2])))
    return (pos - lo) / scale


class Clusterer(Protocol):
    def cluster_block(self, scene: Scene, block: Block) -> ClusterAssignment: ...


@dataclass(frozen=True)
class DbscanClusterer:
    params: DbscanParams = DbscanParams()

    def cluster_block(self, scene: Scene, block: Block) -> ClusterAssignment:
        return cluster_block(scene, block, self.params)


def cluster_block(scene: Scene, block: Block, params: DbscanParams) -> ClusterAssignment:
    """Cluster a block's points; indices refer to positions in ``block.indices``.

    Points are processed in global-id order so the result does not depend on
    how the block happens to be stored.
    """
    order = np.argsort(block.member_ids, kind="stable")
    cube = block_unit_cube(scene, block)
    raw = dbscan(cube[order], params)
    labels = np.empty(len(order), dtype=np.int64)
    labels[order] = promote_noise(raw).cluster_of
    return ClusterAssignment.from_labels(labels)
