"""Dense-weights consolidation: replace tight clumps of blocks with one
representative weight before clustering and re-expand afterwards.

Identification scans a sorted distance map anchored at one block, cutting a
window whenever the distance gap from the window start exceeds epsilon.
Windows are rings, not balls, so each window of two or more blocks is only a
potential cluster; it is confirmed when, after re-anchoring on its first
member, that member's whole window survives intact (every member then lies
within epsilon of it). Unconfirmed windows are re-partitioned recursively.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .core import Assignment, WeightMatrix, sqdist_to_point
from .errors import UsageError

logger = logging.getLogger(__name__)

MAX_REFINE_DEPTH = 64
EPSILON_FLOOR_FACTOR = 2.0 ** -24


@dataclass
class ConsolidationConfig:
    epsilon: Optional[float] = None  # None: 0.25 x mean nearest-neighbour distance
    c_sd: float = 0.8
    c_mc: float = 2.0

    def __post_init__(self):
        if self.epsilon is not None and self.epsilon <= 0:
            raise UsageError("epsilon must be positive")
        if not 0.0 < self.c_sd < 1.0:
            raise UsageError("c_sd must be in (0, 1)")
        if self.c_mc < 1.0:
            raise UsageError("c_mc must be >= 1")


@dataclass
class DenseClusterMap:
    """Consolidated rows plus, per row, the original block indices it stands for."""

    representatives: WeightMatrix
    origin: list[np.ndarray]
    epsilon: float
    degenerate: bool = False

    @property
    def n_cw(self) -> int:
        return self.representatives.n

    def is_identity(self) -> bool:
        return all(ids.size == 1 for ids in self.origin)


def update_epsilon(eps: float, n_c: int, n_cw: int, c_sd: float = 0.8,
                   c_mc: float = 2.0) -> float:
    """Shrink epsilon by c_sd while consolidation leaves fewer than
    n_c * c_mc weights; otherwise leave it unchanged."""
    if n_cw < n_c * c_mc:
        return eps * c_sd
    return eps


def _identify(blocks: np.ndarray, ids: np.ndarray, eps: float,
              ) -> tuple[list[np.ndarray], list[int]]:
    """Window scan of the distance map from ids to blocks[ids[0]].

    Returns (potential clusters, independents); windows of one block are
    independent. The trailing window is flushed like any other so the two
    outputs always partition `ids`.
    """
    anchor = blocks[ids[0]].astype(np.float64)
    d = np.sqrt(sqdist_to_point(blocks[ids], anchor))
    order = np.lexsort((ids, d))
    sd = d[order]
    sids = ids[order]
    groups: list[np.ndarray] = []
    indep: list[int] = []
    s = 0
    n = sd.shape[0]
    while s < n:
        j = int(np.searchsorted(sd, sd[s] + eps, side="right"))
        if j - s > 1:
            groups.append(sids[s:j])
        else:
            indep.append(int(sids[s]))
        s = j
    return groups, indep


def identify_potential(w: WeightMatrix, eps: float,
                       ) -> tuple[list[np.ndarray], list[int]]:
    """Potential dense clusters and independent blocks, anchored at block 0."""
    if eps <= 0:
        raise UsageError("eps must be positive")
    return _identify(w.blocks, np.arange(w.n), eps)


def generate_dense(w: WeightMatrix, eps: float, anchor_index: int,
                   potentials: list[np.ndarray],
                   out_confirmed: list[np.ndarray],
                   out_independent: list[int],
                   _depth: int = 0) -> None:
    """Recursive refinement: confirm the first potential cluster when the
    anchor lies inside it, re-partition the rest around their own first
    members. Beyond the depth cap, groups dissolve into independents."""
    if _depth > MAX_REFINE_DEPTH:
        logger.warning("dense-cluster refinement exceeded depth %d; "
                       "dissolving %d group(s)", MAX_REFINE_DEPTH, len(potentials))
        for g in potentials:
            out_independent.extend(int(i) for i in g)
        return
    start = 0
    if potentials and np.any(potentials[0] == anchor_index):
        out_confirmed.append(potentials[0])
        start = 1
    for g in potentials[start:]:
        sub_groups, sub_indep = _identify(w.blocks, g, eps)
        out_independent.extend(sub_indep)
        if sub_groups:
            generate_dense(w, eps, int(g[0]), sub_groups,
                           out_confirmed, out_independent, _depth + 1)


def default_epsilon(w: WeightMatrix, rng: np.random.Generator,
                    sample_cap: int = 1024) -> float:
    """0.25 x mean nearest-neighbour distance over a sampled subset."""
    n = min(w.n, sample_cap)
    picks = rng.choice(w.n, size=n, replace=False)
    x = w.blocks[picks].astype(np.float64)
    d2 = np.maximum(
        (x * x).sum(axis=1)[:, None] + (x * x).sum(axis=1)[None, :] - 2.0 * (x @ x.T),
        0.0)
    np.fill_diagonal(d2, np.inf)
    nn = np.sqrt(d2.min(axis=1))
    eps = 0.25 * float(nn[np.isfinite(nn)].mean()) if n > 1 else 0.0
    return eps if eps > 0 else 1e-6


def consolidate(w: WeightMatrix, k: int,
                cfg: Optional[ConsolidationConfig] = None,
                rng: Union[int, np.random.Generator] = 0) -> DenseClusterMap:
    """Identify and confirm dense clusters, shrinking epsilon until the
    consolidated weight count is at least k * c_mc.

    Representatives are the means of confirmed clusters followed by the
    independent blocks verbatim. When n < k * c_mc no epsilon can satisfy
    the loop, so the identity map is returned flagged as degenerate.
    """
    cfg = cfg or ConsolidationConfig()
    if k < 1:
        raise UsageError("k must be >= 1")
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    if w.n < k * cfg.c_mc:
        return DenseClusterMap(
            representatives=WeightMatrix(w.blocks.copy()),
            origin=[np.array([i]) for i in range(w.n)],
            epsilon=cfg.epsilon if cfg.epsilon is not None else 0.0,
            degenerate=True)

    eps = cfg.epsilon if cfg.epsilon is not None else default_epsilon(w, rng)
    eps_floor = eps * EPSILON_FLOOR_FACTOR
    anchor = int(rng.integers(w.n))
    ids = np.concatenate([[anchor], np.delete(np.arange(w.n), anchor)])

    while True:
        potentials, indep = _identify(w.blocks, ids, eps)
        confirmed: list[np.ndarray] = []
        independents: list[int] = list(indep)
        generate_dense(w, eps, anchor, potentials, confirmed, independents)
        n_cw = len(confirmed) + len(independents)
        if n_cw < k * cfg.c_mc and eps > eps_floor:
            eps = update_epsilon(eps, k, n_cw, cfg.c_sd, cfg.c_mc)
            continue
        break

    # dense-cluster representatives first, then independents verbatim; each
    # section ordered by block index so an all-independent map is the
    # identity (expand(identity, a) == a)
    confirmed.sort(key=lambda g: int(g.min()))
    independents.sort()
    reps = np.empty((n_cw, w.b), dtype=np.float32)
    origin: list[np.ndarray] = []
    for i, g in enumerate(confirmed):
        reps[i] = w.blocks[g].astype(np.float64).mean(axis=0).astype(np.float32)
        origin.append(np.asarray(g, dtype=np.int64))
    for j, idx in enumerate(independents):
        reps[len(confirmed) + j] = w.blocks[idx]
        origin.append(np.array([idx], dtype=np.int64))
    return DenseClusterMap(representatives=WeightMatrix(reps), origin=origin,
                           epsilon=eps)


def expand(dmap: DenseClusterMap, a_consolidated: Assignment) -> Assignment:
    """Give every original block the centroid index of its representative."""
    if a_consolidated.index.shape[0] != dmap.n_cw:
        raise UsageError("assignment does not cover the representatives")
    n = int(sum(ids.size for ids in dmap.origin))
    out = np.empty(n, dtype=np.int32)
    for row, ids in enumerate(dmap.origin):
        out[ids] = a_consolidated.index[row]
    return Assignment.from_index(out, a_consolidated.k)
