"""Reference competitor: random-init k-means with the mixed greedy/random
empty-cluster heuristic (clone the most populous cluster's centroid and
perturb both copies).

One resolution iteration fixes one empty cluster and then reassigns. Since a
perturbation only moves two centroids, the reassignment is done incrementally
against the maintained distance matrix; rows whose donor moved away from them
are the only ones rescanned against all centroids. The result is identical to
a full argmin (lowest-index tie-break) over the same matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .core import Assignment, Codebook, WeightMatrix, nearest_centroid, \
    pairwise_sqdist, sqdist_to_point
from .errors import UsageError


@dataclass
class BaselineConfig:
    max_resolution_iters: int = 100
    perturb_scale: float = 1e-6

    def __post_init__(self):
        if self.max_resolution_iters < 1:
            raise UsageError("max_resolution_iters must be >= 1")
        if self.perturb_scale <= 0:
            raise UsageError("perturb_scale must be positive")


@dataclass
class ResolutionStats:
    iterations: int = 0
    empty_trajectory: list[int] = field(default_factory=list)


def _as_rng(seed: Union[int, np.random.Generator]) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def random_init(w: WeightMatrix, k: int, seed: Union[int, np.random.Generator]) -> Codebook:
    """k centroids equal to k distinct uniformly sampled blocks."""
    if k < 1:
        raise UsageError("k must be >= 1")
    if w.n < k:
        raise UsageError(f"more centroids than blocks (k={k}, n={w.n})")
    rng = _as_rng(seed)
    picks = rng.choice(w.n, size=k, replace=False)
    return Codebook(w.blocks[picks].copy())


def _challenge(best_d: np.ndarray, best_i: np.ndarray,
               cand_d: np.ndarray, cand_i: int) -> None:
    """In-place: replace (best_d, best_i) where the candidate column wins.

    Wins on strictly smaller distance, or equal distance with lower index.
    """
    better = (cand_d < best_d) | ((cand_d == best_d) & (cand_i < best_i))
    best_d[better] = cand_d[better]
    best_i[better] = cand_i


def greedy_random_resolve(w: WeightMatrix, cb: Codebook, a: Assignment,
                          cfg: Optional[BaselineConfig] = None,
                          rng: Union[int, np.random.Generator] = 0,
                          multiplicity: Optional[np.ndarray] = None,
                          _verify_incremental: bool = False,
                          ) -> tuple[Codebook, Assignment, ResolutionStats]:
    """Fix one empty cluster per iteration by splitting the most populous one.

    The donor centroid is cloned; a noise vector with magnitude
    perturb_scale * ||donor|| is added to the clone and subtracted from the
    donor. Returns the best state seen (fewest empty clusters).
    """
    cfg = cfg or BaselineConfig()
    rng = _as_rng(rng)
    if a.index.shape[0] != w.n or a.k != cb.k:
        raise UsageError("assignment inconsistent with matrix/codebook")
    values = w.blocks
    mult = (np.ones(w.n, dtype=np.float64) if multiplicity is None
            else np.asarray(multiplicity, dtype=np.float64))
    k = cb.k
    b = cb.b
    centroids = cb.centroids.copy()

    d2 = pairwise_sqdist(values, centroids)
    index = nearest_centroid(d2)
    best_d = d2[np.arange(w.n), index]
    sizes = np.bincount(index, weights=mult, minlength=k)

    stats = ResolutionStats()
    stats.empty_trajectory.append(int(np.count_nonzero(sizes == 0)))
    best_empty = stats.empty_trajectory[0]
    best = (centroids.copy(), index.copy(), sizes.copy())

    while best_empty > 0 and stats.iterations < cfg.max_resolution_iters:
        empty = np.flatnonzero(sizes == 0)
        if empty.size == 0:
            break
        stats.iterations += 1
        slot = int(empty[0])
        donor = int(np.argmax(sizes))

        dc = centroids[donor].astype(np.float64)
        mag = cfg.perturb_scale * float(np.sqrt(np.dot(dc, dc)))
        if mag == 0.0:
            mag = cfg.perturb_scale
        g = rng.standard_normal(b)
        gn = float(np.sqrt(np.dot(g, g)))
        if gn == 0.0:
            g = np.zeros(b)
            g[0] = 1.0
            gn = 1.0
        e_vec = g * (mag / gn)
        centroids[slot] = (dc + e_vec).astype(np.float32)
        centroids[donor] = (dc - e_vec).astype(np.float32)
        d2[:, slot] = sqdist_to_point(values, centroids[slot])
        new_donor_col = sqdist_to_point(values, centroids[donor])

        on_donor = index == donor
        moved_away = on_donor & (new_donor_col > best_d)
        d2[:, donor] = new_donor_col

        # rows not previously on the donor, plus donor rows it moved toward:
        # only the two rewritten columns can beat their current best
        cheap = ~moved_away
        cd = best_d[cheap]
        ci = index[cheap].copy()
        # donor rows keep the donor as a candidate at its new distance
        cd[on_donor[cheap]] = new_donor_col[cheap][on_donor[cheap]]
        _challenge(cd, ci, new_donor_col[cheap], donor)
        _challenge(cd, ci, d2[cheap, slot], slot)
        index[cheap] = ci
        best_d[cheap] = cd
        if np.any(moved_away):
            sub = d2[moved_away]
            idx = np.argmin(sub, axis=1).astype(np.int32)
            index[moved_away] = idx
            best_d[moved_away] = sub[np.arange(sub.shape[0]), idx]
        if _verify_incremental:
            ref = nearest_centroid(d2)
            assert np.array_equal(index, ref), "incremental reassign diverged"

        sizes = np.bincount(index, weights=mult, minlength=k)
        n_empty = int(np.count_nonzero(sizes == 0))
        stats.empty_trajectory.append(n_empty)
        if n_empty < best_empty:
            best_empty = n_empty
            best = (centroids.copy(), index.copy(), sizes.copy())

    centroids, index, sizes = best
    return Codebook(centroids), Assignment(index=index, sizes=sizes.astype(np.int64)), stats


def make_resolver(cfg: Optional[BaselineConfig] = None,
                  rng: Union[int, np.random.Generator] = 0):
    """Adapt greedy_random_resolve to the lloyd_iterate resolver protocol."""
    cfg = cfg or BaselineConfig()
    rng = _as_rng(rng)

    def resolver(w, cb, a, multiplicity):
        cb2, a2, stats = greedy_random_resolve(w, cb, a, cfg, rng, multiplicity)
        return cb2, a2, stats.iterations

    return resolver
