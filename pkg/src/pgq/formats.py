"""Binary file formats and the quantization manifest.

PGW1 (tensor file): magic "PGW1", u16 version, u16 name length, UTF-8 name,
u8 kind (0 embedding, 1 linear), u32 rows, u32 cols, then rows*cols float32
little-endian values in row-major order.

PGQ1 (quantized layer): magic "PGQ1", u16 version, the same name/kind/shape
header plus u32 block_size and u32 num_centroids, the codebook as k*b float32
little-endian values, the per-block centroid indices bit-packed LSB-first at
ceil(log2 k) bits each, and a trailing u32-length JSON report.

All integers are little-endian. Writes go through a temp file and rename so
partially written files never appear under the target name.
"""

from __future__ import annotations

import json
import math
import os
import struct
from dataclasses import dataclass
from typing import BinaryIO

import numpy as np

from .errors import FormatError

PGW_MAGIC = b"PGW1"
PGQ_MAGIC = b"PGQ1"
FORMAT_VERSION = 1

KIND_CODES = {"embedding": 0, "linear": 1}
KIND_NAMES = {v: k for k, v in KIND_CODES.items()}


@dataclass
class TensorFile:
    name: str
    kind: str
    data: np.ndarray  # (rows, cols) float32

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]


def index_bits(k: int) -> int:
    """Bits per packed index: ceil(log2 k), zero when k == 1."""
    return (k - 1).bit_length()


def pack_indices(index: np.ndarray, k: int) -> bytes:
    width = index_bits(k)
    if width == 0:
        return b""
    bits = ((index.astype(np.uint32)[:, None] >> np.arange(width, dtype=np.uint32)) & 1)
    return np.packbits(bits.astype(np.uint8).ravel(), bitorder="little").tobytes()


def unpack_indices(payload: bytes, n: int, k: int) -> np.ndarray:
    width = index_bits(k)
    if width == 0:
        return np.zeros(n, dtype=np.int32)
    bits = np.unpackbits(np.frombuffer(payload, dtype=np.uint8),
                         count=n * width, bitorder="little")
    vals = bits.reshape(n, width).astype(np.uint32) << np.arange(width, dtype=np.uint32)
    out = vals.sum(axis=1).astype(np.int32)
    if np.any(out >= k):
        raise FormatError("packed index out of range")
    return out


def _atomic_write(path: str, payload: bytes) -> None:
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "wb") as f:
        f.write(payload)
    os.replace(tmp, path)


def _read_exact(f: BinaryIO, count: int, what: str) -> bytes:
    data = f.read(count)
    if len(data) != count:
        raise FormatError(f"truncated file while reading {what}")
    return data


def _encode_header(magic: bytes, name: str, kind: str, rows: int, cols: int) -> bytes:
    if kind not in KIND_CODES:
        raise FormatError(f"unknown layer kind {kind!r}")
    name_bytes = name.encode("utf-8")
    if len(name_bytes) > 0xFFFF:
        raise FormatError("layer name too long")
    return (magic + struct.pack("<H", FORMAT_VERSION)
            + struct.pack("<H", len(name_bytes)) + name_bytes
            + struct.pack("<BII", KIND_CODES[kind], rows, cols))


def _decode_header(f: BinaryIO, magic: bytes) -> tuple[str, str, int, int]:
    got = _read_exact(f, 4, "magic")
    if got != magic:
        raise FormatError(f"bad magic {got!r}, expected {magic!r}")
    (version,) = struct.unpack("<H", _read_exact(f, 2, "version"))
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported version {version}")
    (name_len,) = struct.unpack("<H", _read_exact(f, 2, "name length"))
    name = _read_exact(f, name_len, "name").decode("utf-8")
    kind_code, rows, cols = struct.unpack("<BII", _read_exact(f, 9, "shape"))
    if kind_code not in KIND_NAMES:
        raise FormatError(f"unknown kind code {kind_code}")
    if rows < 1 or cols < 1:
        raise FormatError(f"bad shape {rows}x{cols}")
    return name, KIND_NAMES[kind_code], rows, cols


def write_tensor(path: str, tensor: TensorFile) -> None:
    data = np.ascontiguousarray(tensor.data, dtype="<f4")
    if data.ndim != 2:
        raise FormatError("tensor payload must be 2-D")
    payload = _encode_header(PGW_MAGIC, tensor.name, tensor.kind,
                             data.shape[0], data.shape[1]) + data.tobytes()
    _atomic_write(path, payload)


def read_tensor(path: str) -> TensorFile:
    with open(path, "rb") as f:
        name, kind, rows, cols = _decode_header(f, PGW_MAGIC)
        raw = _read_exact(f, rows * cols * 4, "payload")
        if f.read(1):
            raise FormatError("trailing bytes after payload")
    data = np.frombuffer(raw, dtype="<f4").reshape(rows, cols)
    if not np.all(np.isfinite(data)):
        raise FormatError(f"tensor {name!r} contains non-finite values")
    return TensorFile(name=name, kind=kind, data=data.copy())


def write_quantized(path: str, name: str, kind: str, rows: int, cols: int,
                    block_size: int, centroids: np.ndarray, index: np.ndarray,
                    report: dict) -> None:
    k = centroids.shape[0]
    header = _encode_header(PGQ_MAGIC, name, kind, rows, cols)
    header += struct.pack("<II", block_size, k)
    codebook = np.ascontiguousarray(centroids, dtype="<f4").tobytes()
    packed = pack_indices(np.asarray(index, dtype=np.int32), k)
    report_bytes = json.dumps(report, sort_keys=True).encode("utf-8")
    payload = header + codebook + packed + struct.pack("<I", len(report_bytes)) + report_bytes
    _atomic_write(path, payload)


def read_quantized(path: str) -> dict:
    with open(path, "rb") as f:
        name, kind, rows, cols = _decode_header(f, PGQ_MAGIC)
        block_size, k = struct.unpack("<II", _read_exact(f, 8, "quant header"))
        if block_size < 1 or rows % block_size != 0 or k < 1:
            raise FormatError(f"invalid block size {block_size} for shape {rows}x{cols}")
        n = rows // block_size * cols
        codebook = np.frombuffer(
            _read_exact(f, k * block_size * 4, "codebook"), dtype="<f4"
        ).reshape(k, block_size)
        packed_len = math.ceil(n * index_bits(k) / 8)
        index = unpack_indices(_read_exact(f, packed_len, "indices"), n, k)
        (report_len,) = struct.unpack("<I", _read_exact(f, 4, "report length"))
        report = json.loads(_read_exact(f, report_len, "report").decode("utf-8"))
        if f.read(1):
            raise FormatError("trailing bytes after report")
    return {"name": name, "kind": kind, "rows": rows, "cols": cols,
            "block_size": block_size, "num_centroids": k,
            "codebook": codebook.copy(), "index": index, "report": report}


MANIFEST_SCHEMA = 1
MANIFEST_LAYER_KEYS = {"file", "block_size", "num_centroids", "method", "seed",
                       "original_bits", "kmeans_iters", "resolve_iters",
                       "epsilon", "c_sd", "c_mc"}


def read_manifest(path: str) -> dict:
    """Parse and validate a quantization manifest (JSON)."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            doc = json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"cannot read manifest {path}: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("schema") != MANIFEST_SCHEMA:
        raise FormatError(f"manifest {path} missing schema = {MANIFEST_SCHEMA}")
    layers = doc.get("layers")
    if not isinstance(layers, list) or not layers:
        raise FormatError(f"manifest {path} has no layers")
    base = os.path.dirname(os.path.abspath(path))
    for i, layer in enumerate(layers):
        if not isinstance(layer, dict):
            raise FormatError(f"manifest layer {i} is not an object")
        unknown = set(layer) - MANIFEST_LAYER_KEYS
        if unknown:
            raise FormatError(f"manifest layer {i} has unknown keys {sorted(unknown)}")
        for key in ("file", "block_size", "num_centroids"):
            if key not in layer:
                raise FormatError(f"manifest layer {i} missing {key!r}")
        rel = layer["file"]
        layer["file"] = rel if os.path.isabs(rel) else os.path.join(base, rel)
        if not os.path.exists(layer["file"]):
            raise FormatError(f"manifest layer {i}: file not found: {rel}")
    return doc
