"""Cluster fine-tuning: resolve empty clusters by splitting oversized clusters
into sub-clusters via partitioning, with a cautiously scaled target size.

Each resolution iteration frees the empty slots plus the slots of every
cluster larger than the layer-wide average, re-partitions the donors'
members, and pools whatever the slot budget could not cover into one final
centroid. The best state seen (fewest empty clusters) is returned.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import Assignment, Codebook, WeightMatrix, nearest_centroid, pairwise_sqdist
from .errors import UsageError
from .preassign import CentroidSink, PartitionParams, centroid_partitioning


@dataclass
class FinetuneConfig:
    max_resolution_iters: int = 15
    patience: int = 3

    def __post_init__(self):
        if self.max_resolution_iters < 1:
            raise UsageError("max_resolution_iters must be >= 1")
        if self.patience < 1:
            raise UsageError("patience must be >= 1")


@dataclass
class SplitPlan:
    """Donor clusters (larger than the layer-wide average) and the recomputed
    average cluster size over the weights they hold."""

    donor_clusters: list[tuple[int, float]]
    s_avg_reassigned: float
    n_reassigned: float


@dataclass
class ResolutionStats:
    iterations: int = 0
    empty_trajectory: list[int] = field(default_factory=list)
    unfilled_slots: int = 0


def scaled_target(n_ne: float, s_avg: float) -> float:
    """Post-split cluster-size target for a cluster of n_ne weights.

    Scales with the cluster being split so that very large clusters are not
    shattered into too many pieces: max(n_ne / sqrt(n_ne / s_avg), s_avg).
    """
    if n_ne < 1:
        raise UsageError("n_ne must be >= 1")
    if s_avg <= 0:
        raise UsageError("s_avg must be positive")
    return max(n_ne / np.sqrt(n_ne / s_avg), s_avg)


def plan_splits(sizes: np.ndarray, n_empty: int, s_c: float) -> SplitPlan:
    """Pick donors (size > s_c, largest first) and size their share."""
    order = np.argsort(-sizes, kind="stable")
    donors = [(int(j), float(sizes[j])) for j in order if sizes[j] > s_c]
    n_reassigned = float(sum(s for _, s in donors))
    slots = n_empty + len(donors)
    s_avg_ra = max(n_reassigned / slots, 1.0) if slots else 1.0
    return SplitPlan(donor_clusters=donors, s_avg_reassigned=s_avg_ra,
                     n_reassigned=n_reassigned)


def resolve_empty_clusters(w: WeightMatrix, cb: Codebook, a: Assignment,
                           cfg: Optional[FinetuneConfig] = None,
                           multiplicity: Optional[np.ndarray] = None,
                           ) -> tuple[Codebook, Assignment, ResolutionStats]:
    """Split oversized clusters until no empty clusters remain or budgets run out.

    The codebook size is invariant: freed slots are rewritten in place, never
    added or removed. Rows of `w` may carry integer multiplicities, in which
    case all cluster sizes are weighted counts.
    """
    cfg = cfg or FinetuneConfig()
    if a.index.shape[0] != w.n or a.k != cb.k:
        raise UsageError("assignment inconsistent with matrix/codebook")
    values = w.blocks
    mult = (np.ones(w.n, dtype=np.int64) if multiplicity is None
            else np.asarray(multiplicity, dtype=np.int64))
    k = cb.k
    n_total = float(mult.sum())
    s_c = n_total / k
    centroids = cb.centroids.copy()
    index = a.index.copy()
    sizes = np.bincount(index, weights=mult.astype(np.float64), minlength=k)

    stats = ResolutionStats()
    stats.empty_trajectory.append(int(np.count_nonzero(sizes == 0)))
    best_empty = stats.empty_trajectory[0]
    best = (centroids.copy(), index.copy(), sizes.copy())
    stall = 0

    while best_empty > 0 and stats.iterations < cfg.max_resolution_iters:
        empty = np.flatnonzero(sizes == 0)
        if empty.size == 0:
            break
        plan = plan_splits(sizes, int(empty.size), s_c)
        if not plan.donor_clusters:
            break
        stats.iterations += 1
        slot_order = [int(j) for j in empty] + [j for j, _ in plan.donor_clusters]

        sink = CentroidSink(capacity=len(slot_order), reserve_last=True)
        for row in centroids:
            sink.block(row)
        donor_member_lists = []
        for j, n_lc in plan.donor_clusters:
            members = np.flatnonzero(index == j)
            donor_member_lists.append(members)
            if sink.full:
                continue
            params = PartitionParams(
                s_avg=scaled_target(n_lc, plan.s_avg_reassigned),
                reserve_last=True, k_target=len(slot_order))
            centroid_partitioning(values, mult, members, sink, s_avg=params.s_avg)

        for slot, row in zip(slot_order, sink.rows):
            centroids[slot] = row
        covered = np.zeros(w.n, dtype=bool)
        for ids in sink.covered:
            covered[ids] = True
        uncovered = np.concatenate([m[~covered[m]] for m in donor_member_lists])
        written = len(sink.rows)
        if uncovered.size > 0:
            mu = mult[uncovered].astype(np.float64)
            c_last = ((values[uncovered].astype(np.float64) * mu[:, None]).sum(axis=0)
                      / mu.sum()).astype(np.float32)
            if sink.emit(c_last, uncovered):
                centroids[slot_order[-1]] = c_last
                written += 1
        stats.unfilled_slots = len(slot_order) - written

        index = nearest_centroid(pairwise_sqdist(values, centroids))
        sizes = np.bincount(index, weights=mult.astype(np.float64), minlength=k)
        n_empty = int(np.count_nonzero(sizes == 0))
        stats.empty_trajectory.append(n_empty)
        if n_empty < best_empty:
            best_empty = n_empty
            best = (centroids.copy(), index.copy(), sizes.copy())
            stall = 0
        else:
            stall += 1
            if stall >= cfg.patience:
                break

    centroids, index, sizes = best
    out = Assignment(index=index, sizes=sizes.astype(np.int64))
    return Codebook(centroids), out, stats


def make_resolver(cfg: Optional[FinetuneConfig] = None):
    """Adapt resolve_empty_clusters to the lloyd_iterate resolver protocol."""
    cfg = cfg or FinetuneConfig()

    def resolver(w, cb, a, multiplicity):
        cb2, a2, stats = resolve_empty_clusters(w, cb, a, cfg, multiplicity)
        return cb2, a2, stats.iterations

    return resolver
