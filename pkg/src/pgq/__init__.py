"""Product quantization of neural-network weight matrices.

Two k-means variants over PQ blocks: a partitioning-guided pipeline
(bisection pre-assignment, cluster fine-tuning for empty-cluster resolution,
optional dense-weights consolidation) and a reference baseline (random init
with the greedy/random perturbation heuristic), plus a benchmark harness.
"""

from .baseline import BaselineConfig, greedy_random_resolve, random_init
from .core import (Assignment, Codebook, DistanceMap, IterationStats,
                   WeightMatrix, assign, build_distance_map, euclidean,
                   lloyd_iterate, update_centroids)
from .dense import (ConsolidationConfig, DenseClusterMap, consolidate, expand,
                    generate_dense, identify_potential, update_epsilon)
from .engine import (LayerSpec, QuantReport, QuantizedLayer, compression_ratio,
                     dequantize, quantize_blocks, quantize_layer,
                     reshape_to_blocks)
from .errors import FormatError, UsageError
from .finetune import FinetuneConfig, resolve_empty_clusters, scaled_target
from .preassign import PartitionParams, centroid_partitioning, preassign

__version__ = "0.1.0"

__all__ = [
    "Assignment", "BaselineConfig", "Codebook", "ConsolidationConfig",
    "DenseClusterMap", "DistanceMap", "FinetuneConfig", "FormatError",
    "IterationStats", "LayerSpec", "PartitionParams", "QuantReport",
    "QuantizedLayer", "UsageError", "WeightMatrix", "assign",
    "build_distance_map", "centroid_partitioning", "compression_ratio",
    "consolidate", "dequantize", "euclidean", "expand", "generate_dense",
    "greedy_random_resolve", "identify_potential", "lloyd_iterate",
    "preassign", "quantize_blocks", "quantize_layer", "random_init",
    "reshape_to_blocks", "resolve_empty_clusters", "scaled_target",
    "update_centroids", "update_epsilon",
]
