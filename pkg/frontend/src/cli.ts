#!/usr/bin/env node
/**
 * Exporter CLI.
 *
 *   fracbnn-export generate --seed N --checkpoint ckpt.fckpt --manifest m.txt [--out model.fbm]
 *   fracbnn-export export   --manifest m.txt [--out model.fbm]
 *   fracbnn-export validate --manifest m.txt [--out model.fbm]
 */

import { writeFileSync } from "node:fs";

import { writeCheckpointFile } from "./checkpoint.js";
import { exportToFile } from "./export.js";
import { syntheticImages } from "./images.js";
import { readManifestFile, serializeManifest } from "./manifest.js";
import { generateCheckpoint, defaultTopology, manifestFor } from "./synthetic.js";
import { validateExport } from "./validate.js";

function parseArgs(argv: string[]): { command: string; flags: Map<string, string> } {
  const [command, ...rest] = argv;
  const flags = new Map<string, string>();
  for (let i = 0; i < rest.length; i += 2) {
    if (!rest[i].startsWith("--") || i + 1 >= rest.length) {
      throw new Error(`bad argument ${rest[i]}`);
    }
    flags.set(rest[i].slice(2), rest[i + 1]);
  }
  return { command: command ?? "", flags };
}

function need(flags: Map<string, string>, key: string): string {
  const v = flags.get(key);
  if (v === undefined) throw new Error(`missing required flag --${key}`);
  return v;
}

export function main(argv: string[]): number {
  const { command, flags } = parseArgs(argv);
  if (command === "generate") {
    const seed = Number(need(flags, "seed"));
    const ckptPath = need(flags, "checkpoint");
    const topology = defaultTopology(Number(flags.get("resolution") ?? 8),
                                     Number(flags.get("classes") ?? 10));
    writeCheckpointFile(ckptPath, generateCheckpoint(seed, topology));
    const manifest = manifestFor(topology, ckptPath, flags.get("out"));
    const manifestPath = need(flags, "manifest");
    writeFileSync(manifestPath, serializeManifest(manifest));
    console.log(`wrote ${ckptPath} and ${manifestPath}`);
    return 0;
  }
  if (command === "export") {
    const manifest = readManifestFile(need(flags, "manifest"));
    const result = exportToFile(manifest, flags.get("out"));
    console.log(`exported ${result.bytes.length} bytes to ` +
                `${flags.get("out") ?? manifest.output}`);
    return 0;
  }
  if (command === "validate") {
    const manifest = readManifestFile(need(flags, "manifest"));
    const outPath = flags.get("out") ?? manifest.output;
    const result = exportToFile(manifest, outPath);
    const images = syntheticImages(manifest.validationSeed,
                                   manifest.validationImages);
    const report = validateExport(result.model, outPath!, images);
    console.log(JSON.stringify(report, (key, value) =>
      key === "perImage" ? undefined : value));
    if (report.status !== "ok") {
      console.error(report.detail);
      return 0; // skip, not a failure
    }
    const pass = report.agreement === 1 && report.maxRelDeviation <= 1e-3;
    console.log(pass ? "validation PASSED" : "validation FAILED");
    return pass ? 0 : 1;
  }
  console.error("usage: fracbnn-export generate|export|validate --flag value ...");
  return 2;
}

const invokedDirectly = process.argv[1]?.endsWith("cli.js")
  || process.argv[1]?.endsWith("cli.ts");
if (invokedDirectly) {
  try {
    process.exit(main(process.argv.slice(2)));
  } catch (err) {
    console.error(`error: ${(err as Error).message}`);
    process.exit(2);
  }
}
