"""Cluster-level voting and label overwrite."""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from ..clustering import ClusterAssignment
from ..data import LabelStore
from .selection import ReliableSet


class VoteTally(NamedTuple):
    occs: np.ndarray  # length-M counts of reliable labels

    @property
    def top(self) -> int:
        return int(self.occs.max()) if len(self.occs) else 0


def eligible_clusters(assignment: ClusterAssignment, member_ids, reliable: ReliableSet) -> list[int]:
    """Clusters holding at least one reliable point.

    ``member_ids[j]`` is the pool id of the assignment's local index ``j``.
    """
    is_rel = np.isin(np.asarray(member_ids), reliable.ids)
    hit = np.zeros(assignment.k, dtype=bool)
    labels = assignment.cluster_of
    ok = labels >= 0
    hit[labels[ok & is_rel]] = True
    return np.flatnonzero(hit).tolist()


def tally_votes(cluster_ids, reliable: ReliableSet, num_classes: int) -> VoteTally:
    """Count reliable labels among the cluster's members."""
    sel = np.isin(reliable.ids, np.asarray(cluster_ids))
    return VoteTally(np.bincount(reliable.labels[sel], minlength=num_classes))


def candidate_mask(occs: np.ndarray, gamma: float) -> np.ndarray:
    """Labels whose count reaches top/gamma; rows with no votes have no candidates."""
    occs = np.atleast_2d(occs)
    top = occs.max(axis=1, keepdims=True)
    return (occs >= top / gamma) & (top > 0)


def pick_winners(occs: np.ndarray, gamma: float, rng: np.random.Generator) -> np.ndarray:
    """One uniform draw per row over its candidate labels."""
    if gamma < 1:
        raise ValueError("gamma must be >= 1")
    cand = candidate_mask(occs, gamma)
    n_cand = cand.sum(axis=1)
    if np.any(n_cand == 0):
        raise ValueError("no reliable votes")
    pick = rng.integers(0, n_cand)
    # position of the pick-th candidate in each row
    rank = np.cumsum(cand, axis=1) - 1
    return np.argmax(cand & (rank == pick[:, None]), axis=1)


def pick_winner(tally: VoteTally, gamma: float, rng: np.random.Generator) -> int:
    if tally.top == 0:
        raise ValueError("no reliable votes")
    return int(pick_winners(tally.occs[None, :], gamma, rng)[0])


def correct_cluster(store: LabelStore, cluster_ids, winner: int) -> LabelStore:
    """Overwrite every member with ``winner`` and flag it as replaced."""
    ids = np.asarray(cluster_ids, dtype=np.int64)
    store.current_label[ids] = winner
    store.ever_replaced[ids] = True
    return store


def block_vote_matrix(cluster_of: np.ndarray, k: int, reliable: np.ndarray, mode: np.ndarray,
                      num_classes: int) -> np.ndarray:
    """``k x M`` tally for all clusters of a block at once (local indices)."""
    occs = np.zeros((k, num_classes), dtype=np.int64)
    np.add.at(occs, (cluster_of[reliable], mode[reliable]), 1)
    return occs
