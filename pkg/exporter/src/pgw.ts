/**
 * PGW1 tensor-file writer, byte-compatible with the quantizer's parser:
 * magic "PGW1", u16 version, u16 name length, UTF-8 name, u8 kind
 * (0 embedding, 1 linear), u32 rows, u32 cols, float32 little-endian
 * row-major payload. All integers little-endian.
 */

export const PGW_VERSION = 1;

export type LayerKind = "embedding" | "linear";

const KIND_CODES: Record<LayerKind, number> = { embedding: 0, linear: 1 };

export function encodePgw(
  name: string,
  kind: LayerKind,
  rows: number,
  cols: number,
  values: Float32Array,
): Uint8Array {
  if (values.length !== rows * cols) {
    throw new Error(`payload length ${values.length} != ${rows}x${cols}`);
  }
  const nameBytes = new TextEncoder().encode(name);
  if (nameBytes.length > 0xffff) {
    throw new Error("layer name too long");
  }
  const size = 4 + 2 + 2 + nameBytes.length + 1 + 4 + 4 + values.length * 4;
  const out = new Uint8Array(size);
  const view = new DataView(out.buffer);
  out.set([0x50, 0x47, 0x57, 0x31], 0); // "PGW1"
  view.setUint16(4, PGW_VERSION, true);
  view.setUint16(6, nameBytes.length, true);
  out.set(nameBytes, 8);
  let pos = 8 + nameBytes.length;
  view.setUint8(pos, KIND_CODES[kind]);
  view.setUint32(pos + 1, rows, true);
  view.setUint32(pos + 5, cols, true);
  pos += 9;
  for (let i = 0; i < values.length; i++) {
    view.setFloat32(pos + i * 4, values[i], true);
  }
  return out;
}
