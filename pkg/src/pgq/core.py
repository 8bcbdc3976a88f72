"""Shared numeric foundation: block matrices, distance maps, and Lloyd iteration.

All block data is stored as float32 and every accumulation (distances, means,
objectives) runs in float64. Cluster sizes optionally carry integer
multiplicities so that callers may collapse exactly-repeated blocks into one
row and still get byte-for-byte identical assignments and exact size
histograms (weighted Lloyd).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import UsageError


@dataclass
class WeightMatrix:
    """n blocks of dimension b, one block per row. Row order is stable."""

    blocks: np.ndarray

    def __post_init__(self):
        self.blocks = np.ascontiguousarray(self.blocks, dtype=np.float32)
        if self.blocks.ndim != 2:
            raise UsageError(f"blocks must be 2-D, got shape {self.blocks.shape}")
        if self.blocks.shape[0] < 1 or self.blocks.shape[1] < 1:
            raise UsageError(f"need n >= 1 and b >= 1, got shape {self.blocks.shape}")
        if not np.all(np.isfinite(self.blocks)):
            raise UsageError("blocks contain NaN or Inf")

    @property
    def n(self) -> int:
        return self.blocks.shape[0]

    @property
    def b(self) -> int:
        return self.blocks.shape[1]


@dataclass
class Codebook:
    """k centroids of dimension b."""

    centroids: np.ndarray

    def __post_init__(self):
        self.centroids = np.ascontiguousarray(self.centroids, dtype=np.float32)
        if self.centroids.ndim != 2 or self.centroids.shape[0] < 1:
            raise UsageError(f"centroids must be 2-D with k >= 1, got {self.centroids.shape}")
        if not np.all(np.isfinite(self.centroids)):
            raise UsageError("centroids contain NaN or Inf")

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    @property
    def b(self) -> int:
        return self.centroids.shape[1]


@dataclass
class Assignment:
    """Per-block centroid index plus the derived cluster-size histogram."""

    index: np.ndarray
    sizes: np.ndarray

    @classmethod
    def from_index(cls, index: np.ndarray, k: int,
                   multiplicity: Optional[np.ndarray] = None) -> "Assignment":
        index = np.asarray(index, dtype=np.int32)
        weights = None if multiplicity is None else np.asarray(multiplicity, dtype=np.int64)
        sizes = np.bincount(index, weights=weights, minlength=k)
        return cls(index=index, sizes=sizes.astype(np.int64))

    @property
    def k(self) -> int:
        return self.sizes.shape[0]

    def empty_clusters(self) -> np.ndarray:
        """Indices of clusters with zero members, ascending."""
        return np.flatnonzero(self.sizes == 0)


@dataclass
class DistanceMap:
    """(block index, distance) pairs sorted ascending by distance, ties by index."""

    entries: list[tuple[int, float]]
    anchor: np.ndarray


def euclidean(a: np.ndarray, x: np.ndarray) -> float:
    """Euclidean distance between two equal-length vectors."""
    a = np.asarray(a, dtype=np.float64).ravel()
    x = np.asarray(x, dtype=np.float64).ravel()
    if a.shape != x.shape:
        raise UsageError(f"dimension mismatch: {a.shape} vs {x.shape}")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(x))):
        raise UsageError("non-finite input to euclidean")
    d = a - x
    return float(np.sqrt(np.dot(d, d)))


def sqdist_to_point(blocks: np.ndarray, point: np.ndarray) -> np.ndarray:
    """Squared distances from every row of `blocks` to one point, float64, exact-by-difference."""
    diff = blocks.astype(np.float64) - np.asarray(point, dtype=np.float64)
    return np.einsum("ij,ij->i", diff, diff)


def build_distance_map(w: WeightMatrix, anchor: np.ndarray) -> DistanceMap:
    """Sorted Euclidean distance map from every block to an anchor point.

    Ties are broken by ascending block index (stable sort over distances).
    """
    anchor = np.asarray(anchor, dtype=np.float64).ravel()
    if anchor.shape[0] != w.b:
        raise UsageError(f"anchor dimension {anchor.shape[0]} != block size {w.b}")
    d = np.sqrt(sqdist_to_point(w.blocks, anchor))
    order = np.argsort(d, kind="stable")
    return DistanceMap(entries=[(int(i), float(d[i])) for i in order], anchor=anchor)


def pairwise_sqdist(blocks: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """(n, k) squared-distance matrix in float64.

    Uses the augmented-GEMM form [x, |x|^2, 1] @ [-2c, 1, |c|^2]^T so the whole
    matrix comes out of a single matmul. Negative rounding residue is clipped
    to zero after the argmin-relevant values are formed; callers compare raw
    entries, so exact duplicates still tie exactly.
    """
    x = blocks.astype(np.float64)
    c = centroids.astype(np.float64)
    n, b = x.shape
    k = c.shape[0]
    xa = np.empty((n, b + 2), dtype=np.float64)
    xa[:, :b] = x
    xa[:, b] = np.einsum("ij,ij->i", x, x)
    xa[:, b + 1] = 1.0
    ca = np.empty((k, b + 2), dtype=np.float64)
    ca[:, :b] = -2.0 * c
    ca[:, b] = 1.0
    ca[:, b + 1] = np.einsum("ij,ij->i", c, c)
    d2 = xa @ ca.T
    np.maximum(d2, 0.0, out=d2)
    return d2


def nearest_centroid(d2: np.ndarray) -> np.ndarray:
    """Argmin per row; np.argmin returns the first minimum, i.e. the lowest index."""
    return np.argmin(d2, axis=1).astype(np.int32)


def assign(w: WeightMatrix, cb: Codebook,
           multiplicity: Optional[np.ndarray] = None) -> Assignment:
    """Map each block to its nearest centroid; ties go to the lowest centroid index."""
    if cb.k == 0:
        raise UsageError("cannot assign against an empty codebook")
    if cb.b != w.b:
        raise UsageError(f"block size mismatch: matrix b={w.b}, codebook b={cb.b}")
    d2 = pairwise_sqdist(w.blocks, cb.centroids)
    return Assignment.from_index(nearest_centroid(d2), cb.k, multiplicity)


def update_centroids(w: WeightMatrix, a: Assignment, cb: Codebook,
                     multiplicity: Optional[np.ndarray] = None) -> Codebook:
    """Replace each non-empty cluster's centroid by the mean of its members.

    Empty clusters keep their previous centroid; resolving them is the
    resolver's job, not the update step's.
    """
    k, b = cb.k, cb.b
    if multiplicity is None:
        weights = np.ones(w.n, dtype=np.float64)
    else:
        weights = np.asarray(multiplicity, dtype=np.float64)
    counts = np.bincount(a.index, weights=weights, minlength=k)
    sums = np.empty((k, b), dtype=np.float64)
    x = w.blocks.astype(np.float64)
    for d in range(b):
        sums[:, d] = np.bincount(a.index, weights=weights * x[:, d], minlength=k)
    out = cb.centroids.astype(np.float64).copy()
    nonempty = counts > 0
    out[nonempty] = sums[nonempty] / counts[nonempty, None]
    return Codebook(out.astype(np.float32))


def weighted_objective(blocks: np.ndarray, centroids: np.ndarray, index: np.ndarray,
                       multiplicity: Optional[np.ndarray] = None) -> float:
    """Sum over blocks of squared distance to the assigned centroid (float64)."""
    diff = blocks.astype(np.float64) - centroids.astype(np.float64)[index]
    per_block = np.einsum("ij,ij->i", diff, diff)
    if multiplicity is not None:
        per_block = per_block * np.asarray(multiplicity, dtype=np.float64)
    return float(per_block.sum())


# A resolver takes (w, cb, a, multiplicity) and returns (cb, a, iterations_used).
Resolver = Callable[[WeightMatrix, Codebook, Assignment, Optional[np.ndarray]],
                    tuple[Codebook, Assignment, int]]


@dataclass
class IterationStats:
    """Per-iteration diagnostics of one Lloyd run."""

    empty_before_resolution: list[int] = field(default_factory=list)
    resolver_iterations: list[int] = field(default_factory=list)
    objective: list[float] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False

    @property
    def total_resolver_iterations(self) -> int:
        return int(sum(self.resolver_iterations))


def lloyd_iterate(w: WeightMatrix, cb: Codebook, resolver: Optional[Resolver],
                  max_iters: int,
                  multiplicity: Optional[np.ndarray] = None,
                  ) -> tuple[Codebook, Assignment, IterationStats]:
    """Alternate assign / resolve / update until assignments stop changing.

    Stops at `max_iters`, when two consecutive iterations produce identical
    assignments, or when an update leaves the codebook bit-identical with no
    resolver intervention (already-converged input stops after one iteration).
    """
    if max_iters < 1:
        raise UsageError("max_iters must be >= 1")
    stats = IterationStats()
    prev_index: Optional[np.ndarray] = None
    a = assign(w, cb, multiplicity)
    for t in range(1, max_iters + 1):
        stats.iterations = t
        stats.empty_before_resolution.append(int(np.count_nonzero(a.sizes == 0)))
        if resolver is not None and np.any(a.sizes == 0):
            cb, a, used = resolver(w, cb, a, multiplicity)
        else:
            used = 0
        stats.resolver_iterations.append(used)
        if prev_index is not None and np.array_equal(a.index, prev_index):
            stats.objective.append(
                weighted_objective(w.blocks, cb.centroids, a.index, multiplicity))
            stats.converged = True
            break
        prev_index = a.index
        new_cb = update_centroids(w, a, cb, multiplicity)
        codebook_fixed = used == 0 and np.array_equal(new_cb.centroids, cb.centroids)
        cb = new_cb
        stats.objective.append(
            weighted_objective(w.blocks, cb.centroids, a.index, multiplicity))
        if codebook_fixed:
            stats.converged = True
            break
        if t < max_iters:
            a = assign(w, cb, multiplicity)
    return cb, a, stats


@dataclass
class DistinctView:
    """Exact-duplicate rows of a matrix collapsed to one row with a count."""

    values: WeightMatrix
    multiplicity: np.ndarray
    inverse: np.ndarray

    @classmethod
    def of(cls, w: WeightMatrix) -> "DistinctView":
        values, inverse, counts = np.unique(
            w.blocks, axis=0, return_inverse=True, return_counts=True)
        return cls(values=WeightMatrix(values),
                   multiplicity=counts.astype(np.int64),
                   inverse=inverse.astype(np.int64).ravel())

    @property
    def is_trivial(self) -> bool:
        return self.values.n == self.inverse.shape[0]

    def scatter_index(self, index: np.ndarray) -> np.ndarray:
        """Expand a per-distinct-value assignment back to all original rows."""
        return np.asarray(index, dtype=np.int32)[self.inverse]
