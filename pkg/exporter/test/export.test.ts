import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";

import { afterEach, beforeEach, describe, expect, test } from "vitest";

import { exportCheckpoint } from "../src/export.js";
import { globToRegExp, matchRule, parseRules } from "../src/rules.js";
import { buildSafetensors } from "../src/safetensors.js";

let dir: string;
beforeEach(() => {
  dir = fs.mkdtempSync(path.join(os.tmpdir(), "pgq-export-"));
});
afterEach(() => {
  fs.rmSync(dir, { recursive: true, force: true });
});

function f32raw(rows: number, cols: number, seed = 1): Uint8Array {
  const out = new Uint8Array(rows * cols * 4);
  const view = new DataView(out.buffer);
  let state = seed >>> 0;
  for (let i = 0; i < rows * cols; i++) {
    state = (state * 1664525 + 1013904223) >>> 0; // LCG: deterministic filler
    view.setFloat32(i * 4, (state / 2 ** 32 - 0.5) * 2, true);
  }
  return out;
}

function toyCheckpoint(): string {
  const p = path.join(dir, "toy.safetensors");
  fs.writeFileSync(p, buildSafetensors([
    { name: "encoder.fc1.weight", dtype: "F32", shape: [16, 8], raw: f32raw(16, 8) },
    { name: "encoder.fc1.bias", dtype: "F32", shape: [16, 1], raw: f32raw(16, 1) },
  ]));
  return p;
}

const FC_RULES = parseRules([
  { pattern: "*.fc1.weight", kind: "linear", block_size: 4, num_centroids: 8 },
]);

describe("glob rules", () => {
  test("star and question mark", () => {
    expect(globToRegExp("*.fc?.weight").test("enc.layers.0.fc1.weight")).toBe(true);
    expect(globToRegExp("*.fc?.weight").test("enc.fc12.weight")).toBe(false);
    expect(globToRegExp("embed").test("embedding")).toBe(false);
  });

  test("overlapping rules are an error", () => {
    const rules = parseRules([
      { pattern: "*.weight", kind: "linear", block_size: 4, num_centroids: 8 },
      { pattern: "enc.*", kind: "linear", block_size: 8, num_centroids: 16 },
    ]);
    expect(() => matchRule("enc.fc1.weight", rules)).toThrow(/overlapping/);
    expect(matchRule("dec.fc1.weight", rules)?.blockSize).toBe(4);
    expect(matchRule("enc.norm.scale", rules)?.blockSize).toBe(8);
  });

  test("rule validation", () => {
    expect(() => parseRules([])).toThrow(/non-empty/);
    expect(() => parseRules([{ pattern: "x", kind: "conv", block_size: 4, num_centroids: 8 }]))
      .toThrow(/kind/);
    expect(() => parseRules([{ pattern: "x", kind: "linear", block_size: 0, num_centroids: 8 }]))
      .toThrow(/block_size/);
  });
});

describe("export", () => {
  test("toy checkpoint yields one PGW1 and a one-entry manifest", () => {
    const warnings: string[] = [];
    const outcome = exportCheckpoint(toyCheckpoint(), FC_RULES, dir,
      { method: "pg", seed: 3 }, (m) => warnings.push(m));
    expect(outcome.exported).toEqual(["encoder.fc1.weight"]);
    expect(outcome.skipped).toEqual(["encoder.fc1.bias"]);
    expect(warnings.some((w) => w.includes("encoder.fc1.bias"))).toBe(true);
    const manifest = JSON.parse(fs.readFileSync(outcome.manifestPath, "utf-8"));
    expect(manifest.schema).toBe(1);
    expect(manifest.layers).toEqual([{
      file: "encoder.fc1.weight.pgw",
      block_size: 4,
      num_centroids: 8,
      original_bits: 32,
      method: "pg",
      seed: 3,
    }]);
    const pgw = fs.readFileSync(path.join(dir, "encoder.fc1.weight.pgw"));
    expect(pgw.subarray(0, 4).toString("latin1")).toBe("PGW1");
  });

  test("export leaves the checkpoint untouched", () => {
    const ckpt = toyCheckpoint();
    const before = fs.readFileSync(ckpt);
    exportCheckpoint(ckpt, FC_RULES, dir, {}, () => {});
    expect(fs.readFileSync(ckpt).equals(before)).toBe(true);
  });

  test("matching a non-2-D tensor names it", () => {
    const p = path.join(dir, "bad.safetensors");
    fs.writeFileSync(p, buildSafetensors([
      { name: "enc.fc1.weight", dtype: "F32", shape: [2, 2, 2], raw: f32raw(4, 2) },
    ]));
    expect(() => exportCheckpoint(p, FC_RULES, dir, {}, () => {}))
      .toThrow(/non-2-D tensor enc\.fc1\.weight/);
  });

  test("unreadable checkpoint raises", () => {
    expect(() => exportCheckpoint(path.join(dir, "ghost.safetensors"), FC_RULES, dir))
      .toThrow(/cannot read/);
  });

  test("twelve-layer encoder with seven layer-type rules matches 73 tensors", () => {
    // embedding + 12 x (q, k, v, out projections and both fc layers) = 73
    const tensors = [
      { name: "embed_tokens.weight", dtype: "F32" as const, shape: [64, 16], raw: f32raw(64, 16) },
    ];
    for (let layer = 0; layer < 12; layer++) {
      for (const proj of ["q_proj", "k_proj", "v_proj", "out_proj"]) {
        tensors.push({
          name: `layers.${layer}.attn.${proj}.weight`, dtype: "F32",
          shape: [8, 8], raw: f32raw(8, 8, layer * 31 + proj.length),
        });
      }
      for (const fc of ["fc1", "fc2"]) {
        tensors.push({
          name: `layers.${layer}.${fc}.weight`, dtype: "F32",
          shape: [16, 4], raw: f32raw(16, 4, layer * 17 + fc.length),
        });
        tensors.push({
          name: `layers.${layer}.${fc}.bias`, dtype: "F32",
          shape: [16, 1], raw: f32raw(16, 1, layer),
        });
      }
    }
    const p = path.join(dir, "encoder12.safetensors");
    fs.writeFileSync(p, buildSafetensors(tensors));
    const rules = parseRules([
      { pattern: "embed_tokens.weight", kind: "embedding", block_size: 8, num_centroids: 16 },
      { pattern: "*.q_proj.weight", kind: "linear", block_size: 4, num_centroids: 16 },
      { pattern: "*.k_proj.weight", kind: "linear", block_size: 4, num_centroids: 16 },
      { pattern: "*.v_proj.weight", kind: "linear", block_size: 4, num_centroids: 16 },
      { pattern: "*.out_proj.weight", kind: "linear", block_size: 4, num_centroids: 16 },
      { pattern: "*.fc1.weight", kind: "linear", block_size: 8, num_centroids: 16 },
      { pattern: "*.fc2.weight", kind: "linear", block_size: 8, num_centroids: 16 },
    ]);
    const outcome = exportCheckpoint(p, rules, dir, {}, () => {});
    expect(outcome.exported.length).toBe(73);
    expect(outcome.skipped.length).toBe(24); // the biases
    const manifest = JSON.parse(fs.readFileSync(outcome.manifestPath, "utf-8"));
    expect(manifest.layers.length).toBe(73);
  });

  test("f16 checkpoints record 16 original bits", () => {
    const raw = new Uint8Array(16 * 8 * 2);
    const view = new DataView(raw.buffer);
    for (let i = 0; i < 16 * 8; i++) view.setUint16(i * 2, 0x3c00, true); // 1.0
    const p = path.join(dir, "half.safetensors");
    fs.writeFileSync(p, buildSafetensors([
      { name: "enc.fc1.weight", dtype: "F16", shape: [16, 8], raw },
    ]));
    const outcome = exportCheckpoint(p, FC_RULES, dir, {}, () => {});
    const manifest = JSON.parse(fs.readFileSync(outcome.manifestPath, "utf-8"));
    expect(manifest.layers[0].original_bits).toBe(16);
  });
});
