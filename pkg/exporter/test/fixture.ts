/**
 * Hand-assembled PGW1 fixture shared with the quantizer's test suite
 * (tests/test_formats.py builds the identical bytes): name "toy.linear",
 * linear kind, 4x2 payload. Both parsers/writers must agree byte for byte.
 */

export const GOLDEN_VALUES = [1.5, -2.0, 0.25, 3.0, -1.0, 0.5, 2.0, -0.125];

export function goldenBytes(): Uint8Array {
  const name = new TextEncoder().encode("toy.linear");
  const out = new Uint8Array(4 + 2 + 2 + name.length + 9 + GOLDEN_VALUES.length * 4);
  const view = new DataView(out.buffer);
  out.set([0x50, 0x47, 0x57, 0x31], 0); // "PGW1"
  view.setUint16(4, 1, true);
  view.setUint16(6, name.length, true);
  out.set(name, 8);
  let pos = 8 + name.length;
  view.setUint8(pos, 1); // linear
  view.setUint32(pos + 1, 4, true);
  view.setUint32(pos + 5, 2, true);
  pos += 9;
  GOLDEN_VALUES.forEach((v, i) => view.setFloat32(pos + i * 4, v, true));
  return out;
}
