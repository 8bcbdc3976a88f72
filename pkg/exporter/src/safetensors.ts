/**
 * Minimal safetensors reader: an 8-byte little-endian header length, a JSON
 * header mapping tensor names to {dtype, shape, data_offsets}, then the raw
 * tensor data. Offsets are relative to the end of the header.
 */

export interface TensorEntry {
  name: string;
  dtype: string;
  shape: number[];
  /** values upcast/converted to float32, row-major */
  data: Float32Array;
  /** bit width of the source dtype, recorded for compression accounting */
  originalBits: number;
}

const DTYPE_BITS: Record<string, number> = {
  F64: 64,
  F32: 32,
  F16: 16,
  BF16: 16,
};

export function halfToFloat(h: number): number {
  const sign = (h & 0x8000) >> 15;
  const exp = (h & 0x7c00) >> 10;
  const frac = h & 0x03ff;
  let value: number;
  if (exp === 0) {
    value = frac * 2 ** -24; // subnormal
  } else if (exp === 0x1f) {
    value = frac ? NaN : Infinity;
  } else {
    value = (1 + frac * 2 ** -10) * 2 ** (exp - 15);
  }
  return sign ? -value : value;
}

function convert(dtype: string, raw: Uint8Array, count: number): Float32Array {
  const view = new DataView(raw.buffer, raw.byteOffset, raw.byteLength);
  const out = new Float32Array(count);
  switch (dtype) {
    case "F32":
      for (let i = 0; i < count; i++) out[i] = view.getFloat32(i * 4, true);
      return out;
    case "F64":
      for (let i = 0; i < count; i++) out[i] = view.getFloat64(i * 8, true);
      return out;
    case "F16":
      for (let i = 0; i < count; i++) out[i] = halfToFloat(view.getUint16(i * 2, true));
      return out;
    case "BF16": {
      const scratch = new DataView(new ArrayBuffer(4));
      for (let i = 0; i < count; i++) {
        scratch.setUint32(0, view.getUint16(i * 2, true) << 16, false);
        out[i] = scratch.getFloat32(0, false);
      }
      return out;
    }
    default:
      throw new Error(`unsupported dtype ${dtype}`);
  }
}

export function parseSafetensors(buffer: Uint8Array): TensorEntry[] {
  if (buffer.length < 8) {
    throw new Error("not a safetensors file: shorter than the header length");
  }
  const view = new DataView(buffer.buffer, buffer.byteOffset, buffer.byteLength);
  const headerLen = Number(view.getBigUint64(0, true));
  if (headerLen <= 0 || 8 + headerLen > buffer.length) {
    throw new Error("not a safetensors file: bad header length");
  }
  let header: Record<string, { dtype: string; shape: number[]; data_offsets: [number, number] }>;
  try {
    header = JSON.parse(new TextDecoder("utf-8").decode(buffer.subarray(8, 8 + headerLen)));
  } catch (err) {
    throw new Error(`not a safetensors file: header is not JSON (${err})`);
  }
  const dataStart = 8 + headerLen;
  const entries: TensorEntry[] = [];
  for (const [name, info] of Object.entries(header)) {
    if (name === "__metadata__") continue;
    const bits = DTYPE_BITS[info.dtype];
    if (bits === undefined) {
      throw new Error(`tensor ${name}: unsupported dtype ${info.dtype}`);
    }
    const [begin, end] = info.data_offsets;
    const count = info.shape.reduce((a, b) => a * b, 1);
    const bytes = (count * bits) / 8;
    if (end - begin !== bytes || dataStart + end > buffer.length) {
      throw new Error(`tensor ${name}: data offsets inconsistent with shape`);
    }
    const raw = buffer.subarray(dataStart + begin, dataStart + end);
    entries.push({
      name,
      dtype: info.dtype,
      shape: info.shape,
      data: convert(info.dtype, raw, count),
      originalBits: bits,
    });
  }
  entries.sort((a, b) => (a.name < b.name ? -1 : a.name > b.name ? 1 : 0));
  return entries;
}

/** Assemble a safetensors byte buffer (used by tests to build toy checkpoints). */
export function buildSafetensors(
  tensors: { name: string; dtype: "F32" | "F16" | "BF16"; shape: number[]; raw: Uint8Array }[],
): Uint8Array {
  const header: Record<string, unknown> = {};
  let offset = 0;
  for (const t of tensors) {
    header[t.name] = {
      dtype: t.dtype,
      shape: t.shape,
      data_offsets: [offset, offset + t.raw.length],
    };
    offset += t.raw.length;
  }
  const headerBytes = new TextEncoder().encode(JSON.stringify(header));
  const out = new Uint8Array(8 + headerBytes.length + offset);
  new DataView(out.buffer).setBigUint64(0, BigInt(headerBytes.length), true);
  out.set(headerBytes, 8);
  let pos = 8 + headerBytes.length;
  for (const t of tensors) {
    out.set(t.raw, pos);
    pos += t.raw.length;
  }
  return out;
}
