import math

import numpy as np
import pytest

from pgq.core import WeightMatrix


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_matrix(rng, n, b, duplicates=0.0):
    """Random float32 block matrix, optionally with exact duplicate rows."""
    blocks = rng.standard_normal((n, b)).astype(np.float32)
    if duplicates > 0 and n > 4:
        n_dup = int(n * duplicates)
        sources = rng.integers(0, max(n - n_dup, 1), n_dup)
        blocks[n - n_dup:] = blocks[sources]
        rng.shuffle(blocks)
    return WeightMatrix(blocks)


def brute_force_nearest(blocks, centroids):
    """Exhaustive nearest-centroid scan in plain Python floats.

    Distances accumulate term by term in float64; ties break to the lowest
    centroid index.
    """
    n = len(blocks)
    out = np.empty(n, dtype=np.int32)
    for i in range(n):
        best_j, best_d = 0, math.inf
        for j, c in enumerate(centroids):
            d = 0.0
            for a, x in zip(blocks[i], c):
                diff = float(a) - float(x)
                d += diff * diff
            if d < best_d:
                best_j, best_d = j, d
        out[i] = best_j
    return out


def brute_force_means(blocks, index, k, old_centroids):
    """Per-cluster means via per-cluster Python-loop averaging."""
    out = np.array(old_centroids, dtype=np.float64)
    for j in range(k):
        members = [blocks[i] for i in range(len(blocks)) if index[i] == j]
        if members:
            out[j] = np.sum(np.array(members, dtype=np.float64), axis=0) / len(members)
    return out.astype(np.float32)
