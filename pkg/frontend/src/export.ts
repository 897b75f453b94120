/** Top-level export: manifest -> converted parameters -> .fbm bytes. */

import { writeFileSync } from "node:fs";

import { readCheckpointFile } from "./checkpoint.js";
import { EngineModel, convertCheckpoint } from "./convert.js";
import { encodeModel } from "./fbm.js";
import { Manifest } from "./manifest.js";

export interface ExportResult {
  model: EngineModel;
  bytes: Buffer;
}

export function exportModel(manifest: Manifest): ExportResult {
  const ckpt = readCheckpointFile(manifest.checkpoint);
  const model = convertCheckpoint(ckpt, manifest);
  return { model, bytes: encodeModel(model) };
}

export function exportToFile(manifest: Manifest, outPath?: string): ExportResult {
  const path = outPath ?? manifest.output;
  if (path === undefined) {
    throw new Error("no output path: pass one or set `output` in the manifest");
  }
  const result = exportModel(manifest);
  writeFileSync(path, result.bytes);
  return result;
}
