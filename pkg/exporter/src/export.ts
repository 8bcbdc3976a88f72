/**
 * Convert a checkpoint into PGW1 tensor files plus a draft quantization
 * manifest consumable by `pgq quantize`. The checkpoint is never modified.
 */

import * as fs from "node:fs";
import * as path from "node:path";

import { encodePgw } from "./pgw.js";
import { ExportRule, matchRule } from "./rules.js";
import { parseSafetensors, TensorEntry } from "./safetensors.js";

export interface ExportOptions {
  method?: string;
  seed?: number;
}

export interface ExportOutcome {
  manifestPath: string;
  exported: string[];
  skipped: string[];
}

export function safeFileName(name: string): string {
  return name.replace(/[^A-Za-z0-9._-]/g, "_");
}

interface ManifestLayer {
  file: string;
  block_size: number;
  num_centroids: number;
  original_bits: number;
  method?: string;
  seed?: number;
}

export function exportCheckpoint(
  checkpointPath: string,
  rules: ExportRule[],
  outDir: string,
  options: ExportOptions = {},
  warn: (msg: string) => void = (msg) => process.stderr.write(msg + "\n"),
): ExportOutcome {
  let raw: Uint8Array;
  try {
    raw = fs.readFileSync(checkpointPath);
  } catch (err) {
    throw new Error(`cannot read checkpoint ${checkpointPath}: ${err}`);
  }
  const tensors = parseSafetensors(raw);
  fs.mkdirSync(outDir, { recursive: true });

  const layers: ManifestLayer[] = [];
  const exported: string[] = [];
  const skipped: string[] = [];
  for (const tensor of tensors) {
    const rule = matchRule(tensor.name, rules);
    if (rule === null) {
      skipped.push(tensor.name);
      continue;
    }
    if (tensor.shape.length !== 2) {
      throw new Error(
        `pattern "${rule.pattern}" matched non-2-D tensor ${tensor.name} ` +
        `(shape [${tensor.shape.join(", ")}])`,
      );
    }
    const [rows, cols] = tensor.shape;
    if (rows % rule.blockSize !== 0) {
      warn(`warning: ${tensor.name}: rows ${rows} not divisible by ` +
        `block_size ${rule.blockSize}; the quantizer will reject this layer`);
    }
    const fileName = safeFileName(tensor.name) + ".pgw";
    fs.writeFileSync(
      path.join(outDir, fileName),
      encodePgw(tensor.name, rule.kind, rows, cols, tensor.data),
    );
    const layer: ManifestLayer = {
      file: fileName,
      block_size: rule.blockSize,
      num_centroids: rule.numCentroids,
      original_bits: tensor.originalBits,
    };
    if (options.method !== undefined) layer.method = options.method;
    if (options.seed !== undefined) layer.seed = options.seed;
    layers.push(layer);
    exported.push(tensor.name);
  }
  for (const name of skipped) {
    warn(`skipped (no rule): ${name}`);
  }
  if (layers.length === 0) {
    throw new Error("no parameters matched any rule");
  }
  const manifestPath = path.join(outDir, "manifest.json");
  fs.writeFileSync(
    manifestPath,
    JSON.stringify({ schema: 1, layers }, null, 1) + "\n",
  );
  return { manifestPath, exported, skipped };
}

export type { TensorEntry };
