"""Partitioning-guided pre-assignment: recursive bisection of the weight
distribution producing k initial centroids with no empty clusters.

The partitioning runs over the distinct block values (exact duplicates are
collapsed and carried as integer multiplicities). Split sizes count copies,
so heavily repeated values weigh as many blocks, but a repeated value can
never be torn into several identical centroids. Sub-distributions are kept
sorted ascending by distinct-value rank, which makes distance ties and the
emitted centroid sequence deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import Codebook, DistinctView, WeightMatrix, nearest_centroid, \
    pairwise_sqdist, sqdist_to_point
from .errors import UsageError


@dataclass
class PartitionParams:
    """Targets for one partitioning run."""

    s_avg: float
    reserve_last: bool
    k_target: int

    def __post_init__(self):
        if self.s_avg <= 0:
            raise UsageError("s_avg must be positive")
        if self.k_target < 1:
            raise UsageError("k_target must be >= 1")


@dataclass
class CentroidSink:
    """Collects centroids emitted by partitioning runs sharing one slot budget.

    Emissions that duplicate an already-present centroid value are dropped:
    a repeated centroid is guaranteed to induce an empty cluster, so the slot
    is better left for repair. `covered` marks which distinct values belong
    to some emitted cell; leftovers pool into the caller's final centroid.
    """

    capacity: int
    reserve_last: bool
    rows: list[np.ndarray] = field(default_factory=list)
    covered: list[np.ndarray] = field(default_factory=list)
    _seen: set[bytes] = field(default_factory=set)

    def block(self, centroid: np.ndarray) -> None:
        """Pre-register a live centroid value so emissions never collide with it."""
        self._seen.add(np.ascontiguousarray(centroid, dtype=np.float32).tobytes())

    @property
    def full(self) -> bool:
        reserved = 1 if self.reserve_last else 0
        return len(self.rows) >= self.capacity - reserved

    def emit(self, centroid: np.ndarray, ids: np.ndarray) -> bool:
        key = np.ascontiguousarray(centroid, dtype=np.float32).tobytes()
        if key in self._seen:
            return False
        self._seen.add(key)
        self.rows.append(centroid.astype(np.float32))
        self.covered.append(ids)
        return True


def round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def _half_split_weight(n_w: float, s_avg: float) -> float:
    """Integral multiple of s_avg closest to n_w / 2, clamped so both sides
    keep at least one average cluster's worth of weight."""
    raw = round_half_up((n_w / 2.0) / s_avg) * s_avg
    lo = float(np.ceil(s_avg))
    hi = n_w - lo
    if lo > hi:
        return float(np.floor(n_w / 2.0))
    return float(min(max(round_half_up(raw), lo), hi))


def centroid_partitioning(values: np.ndarray, mult: np.ndarray, ids: np.ndarray,
                          sink: CentroidSink, s_avg: float) -> None:
    """Recursively bisect a sub-distribution, emitting one centroid per cell.

    `values`/`mult` describe the full distinct set; `ids` selects the
    sub-distribution. Realized with an explicit work stack (safe at n = 1e6);
    the stack order reproduces recursion order: the cell nearest the farthest
    point is refined first, then the remainder.
    """
    if ids.size == 0:
        return
    stack: list[np.ndarray] = [np.sort(ids)]
    while stack:
        if sink.full:
            return
        sub = stack.pop()
        if sub.size == 0:
            continue
        x = values[sub]
        m = mult[sub].astype(np.float64)
        n_w = float(m.sum())
        centroid64 = (x.astype(np.float64) * m[:, None]).sum(axis=0) / n_w
        if sub.size == 1 or n_w <= s_avg + 1.0:
            sink.emit(centroid64.astype(np.float32), sub)
            continue
        d_c = sqdist_to_point(x, centroid64)
        farthest = x[int(np.argmax(d_c))]
        d_f = sqdist_to_point(x, farthest)
        order = np.argsort(d_f, kind="stable")
        n_h = _half_split_weight(n_w, s_avg)
        cum = np.cumsum(m[order])
        # split after the position whose cumulative weight is nearest n_h,
        # keeping at least one distinct value on each side
        cut = int(np.argmin(np.abs(cum[:-1] - n_h))) + 1
        near = np.sort(sub[order[:cut]])
        rest = np.sort(sub[order[cut:]])
        stack.append(rest)
        stack.append(near)


def _split_repair(values: np.ndarray, mult: np.ndarray, rows: list[np.ndarray],
                  cells: list[np.ndarray], k: int) -> None:
    """Fill a centroid shortfall by bisecting the heaviest emitted cells.

    Each split replaces one cell's mean with the means of its two halves
    (same farthest-point rule as the main recursion), so n = k inputs end
    with every block as its own centroid. Cells of one distinct value or
    whose halves collide with existing centroids are left alone.
    """
    seen = {r.tobytes() for r in rows}
    blocked: set[int] = set()
    while len(rows) < k:
        weights = [float(mult[c].sum()) if i not in blocked and c.size > 1 else -1.0
                   for i, c in enumerate(cells)]
        pick = int(np.argmax(weights))
        if weights[pick] <= 0:
            break
        sub = cells[pick]
        x = values[sub]
        m = mult[sub].astype(np.float64)
        centroid64 = (x.astype(np.float64) * m[:, None]).sum(axis=0) / m.sum()
        d_c = sqdist_to_point(x, centroid64)
        farthest = x[int(np.argmax(d_c))]
        order = np.argsort(sqdist_to_point(x, farthest), kind="stable")
        cum = np.cumsum(m[order])
        n_h = _half_split_weight(float(m.sum()), float(m.sum()) / 2.0)
        cut = int(np.argmin(np.abs(cum[:-1] - n_h))) + 1
        halves = [np.sort(sub[order[:cut]]), np.sort(sub[order[cut:]])]
        means = []
        for h in halves:
            hm = mult[h].astype(np.float64)
            means.append(((values[h].astype(np.float64) * hm[:, None]).sum(axis=0)
                          / hm.sum()).astype(np.float32))
        keys = [mn.tobytes() for mn in means]
        old_key = rows[pick].tobytes()
        if keys[0] == keys[1] or any(key in seen and key != old_key for key in keys):
            blocked.add(pick)
            continue
        seen.discard(old_key)
        seen.update(keys)
        rows[pick] = means[0]
        cells[pick] = halves[0]
        rows.append(means[1])
        cells.append(halves[1])


def _gonzalez_fill(values: np.ndarray, rows: list[np.ndarray], k: int) -> None:
    """Top rows up to k with farthest-first distinct values (last resort)."""
    d_near = np.full(values.shape[0], np.inf)
    for r in rows:
        np.minimum(d_near, sqdist_to_point(values, r.astype(np.float64)), out=d_near)
    while len(rows) < k:
        far = int(np.argmax(d_near))
        if d_near[far] <= 0.0:
            break
        rows.append(values[far].copy())
        np.minimum(d_near, sqdist_to_point(values, values[far].astype(np.float64)),
                   out=d_near)
    while len(rows) < k:
        # fewer distinct values than k: duplicate slots are unavoidable
        rows.append(rows[len(rows) % max(len(rows), 1)].copy())


def _reseed_empty_slots(values: np.ndarray, mult: np.ndarray,
                        centroids: np.ndarray, max_passes: int = 32) -> np.ndarray:
    """Move empty-cluster slots onto the blocks worst served by the codebook.

    Each pass reseeds every currently-empty slot with a farthest-first pick,
    then reassigns. A reseeded slot always captures its seed value; passes
    repeat in case a reseed starves some other cluster.
    """
    for _ in range(max_passes):
        d2 = pairwise_sqdist(values, centroids)
        idx = nearest_centroid(d2)
        sizes = np.bincount(idx, weights=mult.astype(np.float64),
                            minlength=centroids.shape[0])
        empty = np.flatnonzero(sizes == 0)
        if empty.size == 0:
            break
        d_near = d2[np.arange(values.shape[0]), idx].copy()
        changed = False
        for slot in empty:
            far = int(np.argmax(d_near))
            if d_near[far] <= 0.0:
                break
            centroids[slot] = values[far]
            np.minimum(d_near, sqdist_to_point(values, values[far].astype(np.float64)),
                       out=d_near)
            changed = True
        if not changed:
            break
    return centroids


def preassign(w: WeightMatrix, k: int) -> Codebook:
    """Build k initial centroids by recursive bisection of the distribution.

    Always returns exactly k centroids. Whenever the matrix holds at least k
    distinct blocks, the induced nearest-centroid assignment has no empty
    clusters: cells whose means collide are skipped during partitioning and
    the freed slots are repaired with farthest-first seeds.
    """
    if k < 1:
        raise UsageError("k must be >= 1")
    if w.n < k:
        raise UsageError(f"more centroids than blocks (k={k}, n={w.n})")
    dv = DistinctView.of(w)
    values = dv.values.blocks
    params = PartitionParams(s_avg=w.n / k, reserve_last=False, k_target=k)
    sink = CentroidSink(capacity=params.k_target, reserve_last=params.reserve_last)
    centroid_partitioning(values, dv.multiplicity, np.arange(values.shape[0]),
                          sink, s_avg=params.s_avg)
    rows = sink.rows
    if len(rows) < k:
        _split_repair(values, dv.multiplicity, rows, sink.covered, k)
    if len(rows) < k:
        _gonzalez_fill(values, rows, k)
    centroids = np.stack(rows[:k]).astype(np.float32)
    if values.shape[0] >= k:
        centroids = _reseed_empty_slots(values, dv.multiplicity, centroids)
    return Codebook(centroids)
