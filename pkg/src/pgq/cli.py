"""Command-line surface: quantize, dequantize, bench, inspect.

Exit codes: 0 success, 1 runtime failure, 2 usage/format error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import traceback
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import bench as bench_mod
from .baseline import BaselineConfig
from .dense import ConsolidationConfig
from .engine import (LayerSpec, QuantizedLayer, compression_ratio,
                     dequantize as engine_dequantize, quantize_layer)
from .errors import FormatError, UsageError
from .finetune import FinetuneConfig
from .formats import (read_manifest, read_quantized, read_tensor,
                      write_quantized, write_tensor, TensorFile)

REPORT_SCHEMA = 1


def _add_method_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--method", choices=("baseline", "pg", "pg_full"), default="pg")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--kmeans-iters", type=int, default=15)
    p.add_argument("--resolve-iters", type=int, default=None,
                   help="resolution iteration cap (default: 100 baseline, 15 pg)")
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--c-sd", type=float, default=0.8)
    p.add_argument("--c-mc", type=float, default=2.0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--report", choices=("json", "csv"), default="json")


def _configs(args):
    baseline_cfg = BaselineConfig(
        max_resolution_iters=args.resolve_iters if args.resolve_iters else 100)
    finetune_cfg = FinetuneConfig(
        max_resolution_iters=args.resolve_iters if args.resolve_iters else 15)
    dense_cfg = ConsolidationConfig(epsilon=args.epsilon, c_sd=args.c_sd,
                                    c_mc=args.c_mc)
    return baseline_cfg, finetune_cfg, dense_cfg


def _layer_settings(layer: dict, args) -> dict:
    return {
        "method": layer.get("method", args.method),
        "seed": int(layer.get("seed", args.seed)),
        "kmeans_iters": int(layer.get("kmeans_iters", args.kmeans_iters)),
        "resolve_iters": layer.get("resolve_iters", args.resolve_iters),
        "original_bits": int(layer.get("original_bits", 32)),
        "epsilon": layer.get("epsilon", args.epsilon),
        "c_sd": float(layer.get("c_sd", args.c_sd)),
        "c_mc": float(layer.get("c_mc", args.c_mc)),
    }


def _quantize_one(layer: dict, args, out_dir: str) -> dict:
    tensor = read_tensor(layer["file"])
    spec = LayerSpec(name=tensor.name, kind=tensor.kind, rows=tensor.rows,
                     cols=tensor.cols, block_size=int(layer["block_size"]),
                     num_centroids=int(layer["num_centroids"]))
    cfg = _layer_settings(layer, args)
    method = cfg["method"]
    resolve = cfg["resolve_iters"]
    baseline_cfg = BaselineConfig(max_resolution_iters=int(resolve) if resolve else 100)
    finetune_cfg = FinetuneConfig(max_resolution_iters=int(resolve) if resolve else 15)
    dense_cfg = ConsolidationConfig(
        epsilon=cfg["epsilon"], c_sd=cfg["c_sd"], c_mc=cfg["c_mc"])
    q = quantize_layer(tensor.data, spec, method, seed=cfg["seed"],
                       kmeans_iters=cfg["kmeans_iters"],
                       original_bits=cfg["original_bits"],
                       baseline_cfg=baseline_cfg, finetune_cfg=finetune_cfg,
                       dense_cfg=dense_cfg)
    ratio = compression_ratio(q, cfg["original_bits"])
    report = q.report.to_json()
    report["compression_ratio"] = ratio
    report["original_bits_per_weight"] = cfg["original_bits"]
    out_path = os.path.join(out_dir, f"{_safe_name(spec.name)}.pgq")
    write_quantized(out_path, spec.name, spec.kind, spec.rows, spec.cols,
                    spec.block_size, q.codebook.centroids, q.assignment.index,
                    report)
    return {"layer": spec.name, "kind": spec.kind, "file": out_path,
            "rows": spec.rows, "cols": spec.cols,
            "block_size": spec.block_size, "num_centroids": spec.num_centroids,
            **report}


def _safe_name(name: str) -> str:
    return "".join(c if c.isalnum() or c in "._-" else "_" for c in name)


def _aggregate_layers(rows: list[dict]) -> dict:
    by_kind: dict[str, list[dict]] = {}
    for row in rows:
        by_kind.setdefault(row["kind"], []).append(row)
    per_kind = {}
    for kind, group in sorted(by_kind.items()):
        empties = [g["empty_clusters"] for g in group]
        per_kind[kind] = {
            "layers": len(group),
            "mean_empty_clusters": float(np.mean(empties)),
            "pct_layers_with_empty": 100.0 * float(np.mean([e > 0 for e in empties])),
        }
    total_orig = sum(g["original_bytes"] for g in rows)
    total_comp = sum(g["compressed_bytes"] for g in rows)
    return {
        "per_kind": per_kind,
        "pct_layers_with_empty": 100.0 * float(
            np.mean([g["empty_clusters"] > 0 for g in rows])),
        "total_compression_ratio": total_orig / total_comp if total_comp else 0.0,
    }


def cmd_quantize(args) -> int:
    manifest = read_manifest(args.manifest)
    for layer in manifest["layers"]:
        tensor = read_tensor(layer["file"])
        # surface bad block sizes as a manifest error before any work starts
        LayerSpec(name=tensor.name, kind=tensor.kind, rows=tensor.rows,
                  cols=tensor.cols, block_size=int(layer["block_size"]),
                  num_centroids=int(layer["num_centroids"]))
    os.makedirs(args.out, exist_ok=True)

    rows: list[dict] = []
    failures: list[dict] = []

    def one(layer: dict):
        try:
            return _quantize_one(layer, args, args.out), None
        except Exception as exc:
            return None, {"layer": layer.get("file"), "error": f"{type(exc).__name__}: {exc}"}

    layers = manifest["layers"]
    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            outcomes = list(pool.map(one, layers))
    else:
        outcomes = [one(layer) for layer in layers]
    for row, failure in outcomes:
        if failure:
            failures.append(failure)
            print(f"error: {failure['layer']}: {failure['error']}", file=sys.stderr)
        else:
            rows.append(row)

    report = {"schema": REPORT_SCHEMA, "layers": rows, "failures": failures}
    if rows:
        report["aggregate"] = _aggregate_layers(rows)
    if args.report == "json":
        path = os.path.join(args.out, "report.json")
        with open(path, "w", encoding="utf-8") as f:
            json.dump(report, f, indent=2, sort_keys=True)
    else:
        path = os.path.join(args.out, "report.csv")
        import csv as _csv
        cols = ["layer", "kind", "rows", "cols", "block_size", "num_centroids",
                "method", "seed", "empty_clusters", "resolution_iters",
                "kmeans_iters", "mse", "compression_ratio", "wall_time_ms"]
        with open(path, "w", encoding="utf-8", newline="") as f:
            wcsv = _csv.DictWriter(f, fieldnames=cols, extrasaction="ignore",
                                   lineterminator="\n")
            wcsv.writeheader()
            for row in rows:
                wcsv.writerow(row)
    print(f"quantized {len(rows)}/{len(layers)} layers -> {args.out}")
    return 1 if failures else 0


def cmd_dequantize(args) -> int:
    doc = read_quantized(args.file)
    blocks = doc["codebook"][doc["index"]]
    tensor = blocks.reshape(doc["cols"], doc["rows"]).T.copy()
    write_tensor(args.out, TensorFile(name=doc["name"], kind=doc["kind"],
                                      data=tensor))
    print(f"wrote {args.out} ({doc['rows']}x{doc['cols']})")
    return 0


def _print_summary(results) -> None:
    agg = bench_mod.aggregate(results)
    if not agg:
        print("no successful rows")
        return
    header = f"{'family/method':<36} {'runs':>4} {'empty':>8} {'0-rate':>7} " \
             f"{'res-iters':>9} {'mse':>12} {'wall ms':>10}"
    print(header)
    print("-" * len(header))
    for key, row in agg.items():
        print(f"{key:<36} {row['runs']:>4} {row['mean_empty_clusters']:>8.2f} "
              f"{row['zero_empty_rate']:>7.2f} {row['mean_resolution_iters']:>9.1f} "
              f"{row['mean_mse']:>12.5g} {row['mean_wall_time_ms']:>10.1f}")


def cmd_bench(args) -> int:
    if args.default:
        specs = bench_mod.default_suite()
        methods = ["baseline", "pg"]
    else:
        if not args.config:
            raise UsageError("bench needs a suite config path or --default")
        with open(args.config, "r", encoding="utf-8") as f:
            try:
                doc = json.load(f)
            except json.JSONDecodeError as exc:
                raise FormatError(f"bad suite config: {exc}") from exc
        methods = doc.get("methods", ["baseline", "pg"])
        specs = []
        for row in doc.get("rows", []):
            for seed in row.get("seeds", [0]):
                specs.append(bench_mod.SyntheticSpec(
                    family=row["family"], n=int(row["n"]), b=int(row["b"]),
                    k=int(row["k"]), seed=int(seed),
                    params=row.get("params", {})))
    baseline_cfg, finetune_cfg, dense_cfg = _configs(args)
    results = bench_mod.run_suite(specs, methods, kmeans_iters=args.kmeans_iters,
                                  jobs=args.jobs, baseline_cfg=baseline_cfg,
                                  finetune_cfg=finetune_cfg, dense_cfg=dense_cfg)
    os.makedirs(args.out, exist_ok=True)
    csv_path = os.path.join(args.out, "bench.csv")
    json_path = os.path.join(args.out, "bench.json")
    with open(csv_path, "w", encoding="utf-8", newline="") as f:
        f.write(bench_mod.to_csv(results))
    with open(json_path, "w", encoding="utf-8") as f:
        f.write(bench_mod.to_json(results))
    _print_summary(results)
    failed = [r for r in results if r.error]
    if failed:
        print(f"{len(failed)} row(s) failed", file=sys.stderr)
        return 1
    return 0


def cmd_inspect(args) -> int:
    with open(args.file, "rb") as f:
        magic = f.read(4)
    if magic == b"PGW1":
        t = read_tensor(args.file)
        print(json.dumps({"format": "PGW1", "name": t.name, "kind": t.kind,
                          "rows": t.rows, "cols": t.cols}, indent=2))
    elif magic == b"PGQ1":
        doc = read_quantized(args.file)
        print(json.dumps({"format": "PGQ1", "name": doc["name"],
                          "kind": doc["kind"], "rows": doc["rows"],
                          "cols": doc["cols"], "block_size": doc["block_size"],
                          "num_centroids": doc["num_centroids"],
                          "report": doc["report"]}, indent=2))
    else:
        raise FormatError(f"unrecognized magic {magic!r}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pgq",
        description="Product quantization of weight matrices with "
                    "partitioning-guided k-means")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("quantize", help="quantize all layers in a manifest")
    p.add_argument("manifest")
    p.add_argument("-o", "--out", required=True)
    _add_method_flags(p)
    p.set_defaults(func=cmd_quantize)

    p = sub.add_parser("dequantize", help="reconstruct a PGW1 tensor from a PGQ1 file")
    p.add_argument("file")
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=cmd_dequantize)

    p = sub.add_parser("bench", help="run the head-to-head benchmark suite")
    p.add_argument("config", nargs="?")
    p.add_argument("--default", action="store_true")
    p.add_argument("-o", "--out", default="bench-out")
    _add_method_flags(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("inspect", help="print metadata of a PGW1/PGQ1 file")
    p.add_argument("file")
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception:
        traceback.print_exc()
        return 1


if __name__ == "__main__":
    sys.exit(main())
