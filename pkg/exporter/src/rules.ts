/**
 * Export rules: which checkpoint parameters to export and the quantization
 * settings to stamp into the manifest for each.
 */

import type { LayerKind } from "./pgw.js";

export interface ExportRule {
  /** glob over parameter names: `*` matches any run, `?` one character */
  pattern: string;
  kind: LayerKind;
  blockSize: number;
  numCentroids: number;
}

export function globToRegExp(pattern: string): RegExp {
  const escaped = pattern.replace(/[.+^${}()|[\]\\]/g, "\\$&");
  return new RegExp("^" + escaped.replace(/\*/g, ".*").replace(/\?/g, ".") + "$");
}

export function parseRules(doc: unknown): ExportRule[] {
  if (!Array.isArray(doc) || doc.length === 0) {
    throw new Error("rules must be a non-empty array");
  }
  return doc.map((raw, i) => {
    const r = raw as Record<string, unknown>;
    const pattern = r.pattern;
    const kind = r.kind;
    const blockSize = r.block_size;
    const numCentroids = r.num_centroids;
    if (typeof pattern !== "string" || !pattern) {
      throw new Error(`rule ${i}: missing pattern`);
    }
    if (kind !== "embedding" && kind !== "linear") {
      throw new Error(`rule ${i}: kind must be "embedding" or "linear"`);
    }
    if (!Number.isInteger(blockSize) || (blockSize as number) < 1) {
      throw new Error(`rule ${i}: block_size must be a positive integer`);
    }
    if (!Number.isInteger(numCentroids) || (numCentroids as number) < 1) {
      throw new Error(`rule ${i}: num_centroids must be a positive integer`);
    }
    return {
      pattern,
      kind,
      blockSize: blockSize as number,
      numCentroids: numCentroids as number,
    };
  });
}

/**
 * The single rule matching a parameter name, or null when skipped. Rules
 * must not overlap: two rules matching one name is an error.
 */
export function matchRule(name: string, rules: ExportRule[]): ExportRule | null {
  const hits = rules.filter((r) => globToRegExp(r.pattern).test(name));
  if (hits.length > 1) {
    throw new Error(
      `parameter ${name} matches overlapping rules: ` +
      hits.map((h) => `"${h.pattern}"`).join(", "),
    );
  }
  return hits[0] ?? null;
}
