#!/usr/bin/env node
/**
 * pgq-export: convert a safetensors checkpoint into PGW1 tensor files plus
 * a draft manifest for `pgq quantize`.
 *
 *   pgq-export model.safetensors --rules rules.json --out exported/
 *              [--method pg_full] [--seed 0]
 */

import * as fs from "node:fs";

import { exportCheckpoint, ExportOptions } from "./export.js";
import { parseRules } from "./rules.js";

function usage(): never {
  process.stderr.write(
    "usage: pgq-export <checkpoint.safetensors> --rules <rules.json> " +
    "--out <dir> [--method <m>] [--seed <n>]\n",
  );
  process.exit(2);
}

export function main(argv: string[]): number {
  let checkpoint: string | undefined;
  let rulesPath: string | undefined;
  let outDir: string | undefined;
  const options: ExportOptions = {};
  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i];
    if (arg === "--rules") rulesPath = argv[++i];
    else if (arg === "--out") outDir = argv[++i];
    else if (arg === "--method") options.method = argv[++i];
    else if (arg === "--seed") options.seed = Number(argv[++i]);
    else if (arg.startsWith("--")) usage();
    else if (checkpoint === undefined) checkpoint = arg;
    else usage();
  }
  if (!checkpoint || !rulesPath || !outDir) usage();
  try {
    const rules = parseRules(JSON.parse(fs.readFileSync(rulesPath, "utf-8")));
    const outcome = exportCheckpoint(checkpoint, rules, outDir, options);
    process.stdout.write(
      `exported ${outcome.exported.length} tensor(s) ` +
      `(${outcome.skipped.length} skipped) -> ${outcome.manifestPath}\n`,
    );
    return 0;
  } catch (err) {
    process.stderr.write(`error: ${err instanceof Error ? err.message : err}\n`);
    return 1;
  }
}

if (process.argv[1] && /cli\.(ts|js)$/.test(process.argv[1])) {
  process.exit(main(process.argv.slice(2)));
}
