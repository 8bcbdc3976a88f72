"""Layer-level product quantization: reshape tensors into blocks, run a
k-means variant, and report reconstruction and compression metrics.

A layer tensor is sliced into contiguous length-b subvectors down each
column, column-major (all subvectors of column 0 first). Exactly repeated
blocks are collapsed before clustering and carried as multiplicities, which
is exact: identical blocks always share an assignment, and every size,
objective, and empty-cluster count is computed in weighted form.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, asdict
from typing import Optional, Union

import numpy as np

from . import baseline as baseline_mod
from . import dense as dense_mod
from . import finetune as finetune_mod
from .core import Assignment, Codebook, DistinctView, WeightMatrix, lloyd_iterate
from .errors import UsageError
from .formats import index_bits

METHODS = ("baseline", "pg", "pg_full")


@dataclass
class LayerSpec:
    name: str
    kind: str  # embedding | linear
    rows: int
    cols: int
    block_size: int
    num_centroids: int

    def __post_init__(self):
        if self.kind not in ("embedding", "linear"):
            raise UsageError(f"layer {self.name!r}: unknown kind {self.kind!r}")
        if self.rows < 1 or self.cols < 1 or self.block_size < 1:
            raise UsageError(f"layer {self.name!r}: bad shape/block size")
        if self.rows % self.block_size != 0:
            raise UsageError(
                f"layer {self.name!r}: rows not divisible by block size "
                f"(shape {self.rows}x{self.cols}, block_size {self.block_size})")
        if self.num_centroids < 1 or self.num_centroids > self.n_blocks:
            raise UsageError(
                f"layer {self.name!r}: num_centroids {self.num_centroids} "
                f"outside [1, {self.n_blocks}]")

    @property
    def n_blocks(self) -> int:
        return self.rows // self.block_size * self.cols


@dataclass
class QuantReport:
    empty_clusters: int = 0
    resolution_iters: int = 0
    kmeans_iters: int = 0
    mse: float = 0.0
    compressed_bytes: int = 0
    original_bytes: int = 0
    wall_time_ms: float = 0.0
    method: str = ""
    seed: int = 0
    consolidated_weights: Optional[int] = None
    dense_degenerate: bool = False
    epsilon: Optional[float] = None
    resolver_iterations_per_call: list[int] = field(default_factory=list)

    def to_json(self) -> dict:
        return asdict(self)


@dataclass
class QuantizedLayer:
    spec: LayerSpec
    codebook: Codebook
    assignment: Assignment
    report: QuantReport


def reshape_to_blocks(tensor: np.ndarray, b: int, name: str = "<tensor>") -> WeightMatrix:
    """Split each column into contiguous length-b subvectors, column-major."""
    tensor = np.asarray(tensor, dtype=np.float32)
    if tensor.ndim != 2:
        raise UsageError(f"layer {name!r}: tensor must be 2-D, got {tensor.shape}")
    rows, cols = tensor.shape
    if b < 1 or rows % b != 0:
        raise UsageError(f"layer {name!r}: rows not divisible by block size "
                         f"(shape {rows}x{cols}, block_size {b})")
    m = rows // b
    return WeightMatrix(tensor.T.reshape(cols * m, b))


def blocks_to_tensor(blocks: np.ndarray, rows: int, cols: int) -> np.ndarray:
    """Inverse of reshape_to_blocks; bit-exact round trip."""
    return np.ascontiguousarray(blocks, dtype=np.float32).reshape(cols, rows).T.copy()


def compressed_bits(n: int, k: int, b: int) -> int:
    """Payload size of a quantized layer: f32 codebook + packed indices."""
    return k * b * 32 + n * index_bits(k)


def compression_ratio_parts(rows: int, cols: int, n: int, k: int, b: int,
                            original_bits_per_weight: int) -> float:
    return (rows * cols * original_bits_per_weight) / compressed_bits(n, k, b)


def compression_ratio(q: QuantizedLayer, original_bits_per_weight: int) -> float:
    """original bits / (codebook bits + index bits)."""
    s = q.spec
    return compression_ratio_parts(s.rows, s.cols, s.n_blocks, s.num_centroids,
                                   s.block_size, original_bits_per_weight)


def quantize_blocks(w: WeightMatrix, k: int, method: str,
                    seed: Union[int, np.random.Generator] = 0,
                    kmeans_iters: int = 15,
                    baseline_cfg: Optional[baseline_mod.BaselineConfig] = None,
                    finetune_cfg: Optional[finetune_mod.FinetuneConfig] = None,
                    dense_cfg: Optional[dense_mod.ConsolidationConfig] = None,
                    ) -> tuple[Codebook, Assignment, QuantReport]:
    """Cluster a block matrix with the chosen method and produce a report.

    Pipeline: [pg_full: consolidate] -> init (preassign or random) ->
    Lloyd iterations with the matching resolver -> [pg_full: expand].
    wall_time_ms covers the Lloyd loop only.
    """
    if method not in METHODS:
        raise UsageError(f"unknown method {method!r}, expected one of {METHODS}")
    if k < 1 or k > w.n:
        raise UsageError(f"num_centroids {k} outside [1, {w.n}]")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    report = QuantReport(method=method,
                         seed=int(seed) if not isinstance(seed, np.random.Generator) else -1)

    cluster_w = w
    dmap = None
    if method == "pg_full":
        dmap = dense_mod.consolidate(w, k, dense_cfg, rng)
        if dmap.n_cw < k:
            # too few distinct weights to both consolidate and seat k centroids
            dmap = dense_mod.DenseClusterMap(
                representatives=WeightMatrix(w.blocks.copy()),
                origin=[np.array([i]) for i in range(w.n)],
                epsilon=dmap.epsilon, degenerate=True)
        cluster_w = dmap.representatives
        report.consolidated_weights = dmap.n_cw
        report.dense_degenerate = dmap.degenerate
        report.epsilon = dmap.epsilon

    if method == "baseline":
        cb0 = baseline_mod.random_init(w, k, rng)
        resolver = baseline_mod.make_resolver(baseline_cfg, rng)
    else:
        from .preassign import preassign
        cb0 = preassign(cluster_w, k)
        resolver = finetune_mod.make_resolver(finetune_cfg)

    dv = DistinctView.of(cluster_w)
    t0 = time.perf_counter()
    cb, a_distinct, stats = lloyd_iterate(dv.values, cb0, resolver, kmeans_iters,
                                          multiplicity=dv.multiplicity)
    report.wall_time_ms = (time.perf_counter() - t0) * 1e3

    a_cluster = Assignment.from_index(dv.scatter_index(a_distinct.index), k)
    a_final = dense_mod.expand(dmap, a_cluster) if dmap is not None else a_cluster

    report.kmeans_iters = stats.iterations
    report.resolution_iters = stats.total_resolver_iterations
    report.resolver_iterations_per_call = [r for r in stats.resolver_iterations if r > 0]
    report.empty_clusters = int(np.count_nonzero(a_final.sizes == 0))
    diff = w.blocks.astype(np.float64) - cb.centroids.astype(np.float64)[a_final.index]
    report.mse = float(np.einsum("ij,ij->", diff, diff) / (w.n * w.b))
    report.original_bytes = w.n * w.b * 4
    report.compressed_bytes = (k * w.b * 4 + (w.n * index_bits(k) + 7) // 8)
    return cb, a_final, report


def quantize_layer(tensor: np.ndarray, spec: LayerSpec, method: str,
                   seed: Union[int, np.random.Generator] = 0,
                   kmeans_iters: int = 15,
                   original_bits: int = 32,
                   baseline_cfg: Optional[baseline_mod.BaselineConfig] = None,
                   finetune_cfg: Optional[finetune_mod.FinetuneConfig] = None,
                   dense_cfg: Optional[dense_mod.ConsolidationConfig] = None,
                   ) -> QuantizedLayer:
    tensor = np.asarray(tensor, dtype=np.float32)
    if tensor.shape != (spec.rows, spec.cols):
        raise UsageError(f"layer {spec.name!r}: tensor shape {tensor.shape} "
                         f"does not match spec {spec.rows}x{spec.cols}")
    w = reshape_to_blocks(tensor, spec.block_size, spec.name)
    cb, a, report = quantize_blocks(
        w, spec.num_centroids, method, seed, kmeans_iters,
        baseline_cfg, finetune_cfg, dense_cfg)
    report.original_bytes = spec.rows * spec.cols * original_bits // 8
    return QuantizedLayer(spec=spec, codebook=cb, assignment=a, report=report)


def dequantize(q: QuantizedLayer) -> np.ndarray:
    """Replace each block by its assigned centroid and undo the reshape."""
    blocks = q.codebook.centroids[q.assignment.index]
    return blocks_to_tensor(blocks, q.spec.rows, q.spec.cols)
