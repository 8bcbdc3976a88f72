"""Synthetic distribution generators and the paired head-to-head harness.

Each suite row generates one block matrix, runs every requested method on
that same matrix (hash-checked), and records per-method reports plus paired
deltas against the baseline. Adversarial families lean on exact duplicates:
the greedy/random perturbation heuristic cannot separate bit-identical
blocks, so clusters of repeated values reliably strand empty centroids.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .baseline import BaselineConfig
from .core import WeightMatrix
from .dense import ConsolidationConfig
from .engine import QuantReport, quantize_blocks
from .errors import UsageError
from .finetune import FinetuneConfig

FAMILIES = ("gaussian_mixture", "dense_clumps", "uniform", "skewed_mass",
            "duplicate_heavy")

CSV_SCHEMA = 1
JSON_SCHEMA = 1


@dataclass
class SyntheticSpec:
    family: str
    n: int
    b: int
    k: int
    seed: int = 0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise UsageError(f"unknown family {self.family!r}")
        if self.n < 1 or self.b < 1 or not 1 <= self.k <= self.n:
            raise UsageError(f"bad sizes n={self.n} b={self.b} k={self.k}")

    def label(self) -> str:
        return f"{self.family}/n{self.n}/b{self.b}/k{self.k}"


def _unit_ball(rng: np.random.Generator, count: int, b: int) -> np.ndarray:
    g = rng.standard_normal((count, b))
    norms = np.linalg.norm(g, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    radii = rng.uniform(0, 1, (count, 1)) ** (1.0 / b)
    return g / norms * radii


def _split_counts(total: int, parts: int) -> np.ndarray:
    base = np.full(parts, total // parts, dtype=np.int64)
    base[: total % parts] += 1
    return base


def _separated_means(rng: np.random.Generator, c: int, b: int,
                     min_sep: float) -> np.ndarray:
    """Means in the unit ball, pairwise at least min_sep apart; the threshold
    halves whenever rejection stalls so low dimensions stay feasible."""
    means = np.empty((c, b))
    count, misses, sep = 0, 0, min_sep
    while count < c:
        cand = _unit_ball(rng, 1, b)[0]
        if count == 0 or (np.linalg.norm(means[:count] - cand, axis=1) >= sep).all():
            means[count] = cand
            count += 1
            misses = 0
        else:
            misses += 1
            if misses > 200:
                sep *= 0.5
                misses = 0
    return means


def _maximin_means(rng: np.random.Generator, count: int, b: int,
                   taken: np.ndarray, pool_size: int = 4096) -> np.ndarray:
    """Greedy farthest-point picks from a sampled pool, spreading new means
    as far as possible from each other and from already-taken means."""
    pool = _unit_ball(rng, pool_size, b)
    d = np.full(pool_size, np.inf)
    for t in taken:
        d = np.minimum(d, np.linalg.norm(pool - t, axis=1))
    out = np.empty((count, b))
    for i in range(count):
        pick = int(np.argmax(d))
        out[i] = pool[pick]
        d = np.minimum(d, np.linalg.norm(pool - pool[pick], axis=1))
    return out


def _gaussian_mixture(rng, n, b, params) -> np.ndarray:
    """Two-scale mixture: broad, well-separated components plus point-like
    clumps in the empty space between them, with skewed masses.

    Each tight clump holds a few clusters' worth of blocks concentrated far
    below quantization cell size, so balanced initialization overspends
    centroids on it unless the clump is consolidated to a single weight
    first. Clump means are placed farthest-first so no two clumps ever sit
    close enough to compete for one centroid."""
    n_broad = int(params.get("broad_components", 8))
    n_tight = int(params.get("tight_clumps", 8))
    sigma_tight = params.get("sigma_tight", (1e-5, 2e-4))
    sigma_broad = params.get("sigma_broad", (0.015, 0.03))
    tight_mass = float(params.get("tight_mass", 0.2))
    mass_alpha = float(params.get("mass_alpha", 0.6))
    min_sep = float(params.get("min_mean_separation", 0.7))

    broad_means = _separated_means(rng, n_broad, b, min_sep)
    broad_sigmas = np.exp(rng.uniform(np.log(sigma_broad[0]),
                                      np.log(sigma_broad[1]), n_broad))
    tight_means = _maximin_means(rng, n_tight, b, broad_means)
    tight_sigmas = np.exp(rng.uniform(np.log(sigma_tight[0]),
                                      np.log(sigma_tight[1]), n_tight))

    tight_counts = _split_counts(int(round(n * tight_mass)), n_tight) \
        if n_tight else np.zeros(0, dtype=np.int64)
    remaining = n - int(tight_counts.sum())
    masses = rng.dirichlet(np.full(n_broad, mass_alpha))
    # floor island masses: near-empty islands leave stray blocks in the void
    floor = int(params.get("min_broad_fraction", 0.04) * remaining)
    broad_counts = np.maximum(np.round(masses * remaining).astype(np.int64), floor)
    while broad_counts.sum() > remaining:
        broad_counts[int(np.argmax(broad_counts))] -= 1
    broad_counts[int(np.argmax(broad_counts))] += remaining - broad_counts.sum()

    rows = [broad_means[i] + broad_sigmas[i] * rng.standard_normal((broad_counts[i], b))
            for i in range(n_broad)]
    rows += [tight_means[i] + tight_sigmas[i] * rng.standard_normal((tight_counts[i], b))
             for i in range(n_tight)]
    out = np.concatenate(rows)
    rng.shuffle(out)
    return out


def _dense_clumps(rng, n, b, params) -> np.ndarray:
    clumps = int(params.get("clumps", max(2, n // 100)))
    radius = float(params.get("radius", 1e-3))
    separation = float(params.get("separation", 100.0 * radius))
    side = int(np.ceil(clumps ** (1.0 / b)))
    grid = np.stack(np.meshgrid(*([np.arange(side)] * b), indexing="ij"),
                    axis=-1).reshape(-1, b).astype(np.float64)
    order = rng.permutation(grid.shape[0])[:clumps]
    centers = grid[order] * separation
    counts = _split_counts(n, clumps)
    rows = [centers[i] + _unit_ball(rng, counts[i], b) * radius
            for i in range(clumps)]
    out = np.concatenate(rows)
    rng.shuffle(out)
    return out


def _uniform(rng, n, b, params) -> np.ndarray:
    low = float(params.get("low", -1.0))
    high = float(params.get("high", 1.0))
    if not low < high:
        raise UsageError("uniform family needs low < high")
    return rng.uniform(low, high, (n, b))


def _skewed_mass(rng, n, b, params) -> np.ndarray:
    values = int(params.get("values", 64))
    exponent = float(params.get("zipf_exponent", 1.4))
    unique_fraction = float(params.get("unique_fraction", 0.05))
    if not 0 <= unique_fraction < 1:
        raise UsageError("unique_fraction must be in [0, 1)")
    n_unique = int(round(n * unique_fraction))
    n_dup = n - n_unique
    mass = np.arange(1, values + 1, dtype=np.float64) ** -exponent
    mass /= mass.sum()
    counts = np.maximum(np.round(mass * n_dup).astype(np.int64), 1)
    while counts.sum() > n_dup:
        counts[int(np.argmax(counts))] -= 1
    counts[0] += n_dup - counts.sum()
    dup_values = rng.standard_normal((values, b))
    rows = [np.repeat(dup_values[i][None, :], counts[i], axis=0)
            for i in range(values)]
    rows.append(rng.standard_normal((n_unique, b)))
    out = np.concatenate(rows)
    rng.shuffle(out)
    return out


def _duplicate_heavy(rng, n, b, params) -> np.ndarray:
    fraction = float(params.get("duplicate_fraction", 0.9))
    values = int(params.get("values", 100))
    if not 0 <= fraction <= 1:
        raise UsageError("duplicate_fraction must be in [0, 1]")
    n_dup = int(round(n * fraction))
    dup_values = rng.standard_normal((values, b))
    picks = dup_values[rng.integers(0, values, n_dup)]
    uniques = rng.standard_normal((n - n_dup, b))
    out = np.concatenate([picks, uniques])
    rng.shuffle(out)
    return out


_GENERATORS = {
    "gaussian_mixture": _gaussian_mixture,
    "dense_clumps": _dense_clumps,
    "uniform": _uniform,
    "skewed_mass": _skewed_mass,
    "duplicate_heavy": _duplicate_heavy,
}


def generate(spec: SyntheticSpec) -> WeightMatrix:
    """Deterministic synthetic block matrix for one spec."""
    rng = np.random.default_rng(spec.seed)
    blocks = _GENERATORS[spec.family](rng, spec.n, spec.b, spec.params)
    return WeightMatrix(blocks.astype(np.float32))


@dataclass
class HeadToHeadResult:
    spec: SyntheticSpec
    input_sha256: str
    reports: dict[str, QuantReport] = field(default_factory=dict)
    deltas: dict[str, dict] = field(default_factory=dict)
    error: Optional[str] = None


def _ratio(num: float, den: float, floor: float) -> float:
    """num/den with the denominator floored, keeping ratios finite."""
    return num / max(den, floor)


def _pair_deltas(base: QuantReport, other: QuantReport) -> dict:
    return {
        "empty_delta": base.empty_clusters - other.empty_clusters,
        "mse_delta": base.mse - other.mse,
        "iter_ratio": _ratio(base.resolution_iters, other.resolution_iters, 1.0),
        "wall_ratio": _ratio(base.wall_time_ms, other.wall_time_ms, 1e-6),
    }


def run_row(spec: SyntheticSpec, methods: list[str],
            kmeans_iters: int = 15,
            baseline_cfg: Optional[BaselineConfig] = None,
            finetune_cfg: Optional[FinetuneConfig] = None,
            dense_cfg: Optional[ConsolidationConfig] = None) -> HeadToHeadResult:
    w = generate(spec)
    digest = hashlib.sha256(w.blocks.tobytes()).hexdigest()
    result = HeadToHeadResult(spec=spec, input_sha256=digest)
    for method in methods:
        _, _, report = quantize_blocks(
            w, spec.k, method, seed=spec.seed, kmeans_iters=kmeans_iters,
            baseline_cfg=baseline_cfg, finetune_cfg=finetune_cfg,
            dense_cfg=dense_cfg)
        result.reports[method] = report
    if "baseline" in result.reports:
        base = result.reports["baseline"]
        for method, report in result.reports.items():
            if method != "baseline":
                result.deltas[method] = _pair_deltas(base, report)
    return result


def run_suite(specs: list[SyntheticSpec], methods: list[str],
              kmeans_iters: int = 15, jobs: int = 1,
              baseline_cfg: Optional[BaselineConfig] = None,
              finetune_cfg: Optional[FinetuneConfig] = None,
              dense_cfg: Optional[ConsolidationConfig] = None,
              ) -> list[HeadToHeadResult]:
    """Paired runs over the whole manifest; failures are recorded per row."""
    if not specs:
        raise UsageError("empty suite manifest")
    if not methods:
        raise UsageError("no methods requested")
    for m in methods:
        if m not in ("baseline", "pg", "pg_full"):
            raise UsageError(f"unknown method {m!r}")

    def one(spec: SyntheticSpec) -> HeadToHeadResult:
        try:
            return run_row(spec, methods, kmeans_iters,
                           baseline_cfg, finetune_cfg, dense_cfg)
        except Exception as exc:  # recorded, suite continues
            return HeadToHeadResult(spec=spec, input_sha256="",
                                    error=f"{type(exc).__name__}: {exc}")

    if jobs <= 1:
        results = [one(s) for s in specs]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(one, specs))
    results.sort(key=lambda r: (r.spec.family, r.spec.n, r.spec.b, r.spec.k,
                                r.spec.seed))
    return results


def aggregate(results: list[HeadToHeadResult]) -> dict:
    """Per (family, method) means/medians over successful rows."""
    groups: dict[tuple[str, str], list[QuantReport]] = {}
    for r in results:
        if r.error:
            continue
        for method, report in r.reports.items():
            groups.setdefault((r.spec.family, method), []).append(report)
    out = {}
    for (family, method), reports in sorted(groups.items()):
        empties = [r.empty_clusters for r in reports]
        iters = [r.resolution_iters for r in reports]
        mses = [r.mse for r in reports]
        walls = [r.wall_time_ms for r in reports]
        out[f"{family}/{method}"] = {
            "runs": len(reports),
            "mean_empty_clusters": float(np.mean(empties)),
            "median_empty_clusters": float(np.median(empties)),
            "zero_empty_rate": float(np.mean([e == 0 for e in empties])),
            "mean_resolution_iters": float(np.mean(iters)),
            "median_resolution_iters": float(np.median(iters)),
            "mean_mse": float(np.mean(mses)),
            "mean_wall_time_ms": float(np.mean(walls)),
        }
    return out


CSV_COLUMNS = [
    "schema", "family", "n", "b", "k", "seed", "input_sha256",
    "method_a", "method_b",
    "empty_a", "empty_b", "empty_delta",
    "mse_a", "mse_b", "mse_delta",
    "resolve_iters_a", "resolve_iters_b", "iter_ratio",
    "kmeans_iters_a", "kmeans_iters_b", "error",
]


def to_csv(results: list[HeadToHeadResult]) -> str:
    """One row per (instance, baseline-vs-method pair), stable column set.

    Wall-clock timings live in the JSON report only, keeping CSV output
    byte-identical across runs with the same seed.
    """
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for r in results:
        common = {"schema": CSV_SCHEMA, "family": r.spec.family, "n": r.spec.n,
                  "b": r.spec.b, "k": r.spec.k, "seed": r.spec.seed,
                  "input_sha256": r.input_sha256, "error": r.error or ""}
        if r.error or "baseline" not in r.reports or len(r.reports) == 1:
            writer.writerow(common)
            continue
        base = r.reports["baseline"]
        for method, rep in r.reports.items():
            if method == "baseline":
                continue
            d = r.deltas[method]
            writer.writerow({
                **common, "method_a": "baseline", "method_b": method,
                "empty_a": base.empty_clusters, "empty_b": rep.empty_clusters,
                "empty_delta": d["empty_delta"],
                "mse_a": f"{base.mse:.12g}", "mse_b": f"{rep.mse:.12g}",
                "mse_delta": f"{d['mse_delta']:.12g}",
                "resolve_iters_a": base.resolution_iters,
                "resolve_iters_b": rep.resolution_iters,
                "iter_ratio": f"{d['iter_ratio']:.6g}",
                "kmeans_iters_a": base.kmeans_iters,
                "kmeans_iters_b": rep.kmeans_iters,
            })
    return buf.getvalue()


def to_json(results: list[HeadToHeadResult]) -> str:
    doc = {"schema": JSON_SCHEMA, "rows": [], "aggregates": aggregate(results)}
    for r in results:
        doc["rows"].append({
            "family": r.spec.family, "n": r.spec.n, "b": r.spec.b,
            "k": r.spec.k, "seed": r.spec.seed, "params": r.spec.params,
            "input_sha256": r.input_sha256,
            "reports": {m: rep.to_json() for m, rep in r.reports.items()},
            "deltas": r.deltas, "error": r.error,
        })
    return json.dumps(doc, indent=2, sort_keys=True)


def default_suite(seeds: Optional[list[int]] = None) -> list[SyntheticSpec]:
    """Desk-scale default: every family at laptop-friendly sizes."""
    seeds = seeds if seeds is not None else [0, 1, 2]
    rows = []
    for family, n, b, k in [
        ("gaussian_mixture", 10_000, 4, 256),
        ("uniform", 10_000, 4, 256),
        ("dense_clumps", 10_000, 4, 256),
        ("skewed_mass", 10_000, 8, 512),
        ("duplicate_heavy", 10_000, 8, 512),
    ]:
        for seed in seeds:
            rows.append(SyntheticSpec(family=family, n=n, b=b, k=k, seed=seed))
    return rows
