/**
 * Export validation: run the engine's `infer` on exported models and
 * compare against the reference forward, image by image.
 *
 * The engine is reached only through its CLI (cmd_infer with --json) and
 * the .fbm/.ppm file formats. If the engine binary is unavailable the
 * validation is skipped with an explicit status.
 */

import { spawnSync } from "node:child_process";
import { mkdtempSync, rmSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { EngineModel } from "./convert.js";
import { argmax, referenceForward } from "./forward.js";
import { RgbImage, writePpm } from "./images.js";

export interface ImageComparison {
  engineClass: number;
  frameworkClass: number;
  maxAbsDeviation: number;
  relDeviation: number;
}

export interface ValidationReport {
  status: "ok" | "engine_unavailable";
  engineCommand: string;
  images: number;
  agreement: number;          // fraction of images with identical argmax
  maxRelDeviation: number;    // max |engine - framework| / max|logit|, per image
  perImage: ImageComparison[];
  detail?: string;
}

export function engineCommand(): string {
  return process.env.FRACBNN_CLI ?? "fracbnn";
}

export function engineAvailable(cmd: string = engineCommand()): boolean {
  const probe = spawnSync(cmd, ["--help"], { encoding: "utf-8" });
  return probe.error === undefined && probe.status === 0;
}

/** Load an exported model through the engine's validating loader (exit 0 = valid). */
export function engineValidatesModel(fbmPath: string, cmd: string = engineCommand()): boolean {
  const res = spawnSync(cmd, ["stats", "--model", fbmPath, "--json"], { encoding: "utf-8" });
  return res.error === undefined && res.status === 0;
}

export function engineInfer(fbmPath: string, ppmPath: string,
                            cmd: string = engineCommand()): Int32Array {
  const res = spawnSync(cmd, ["infer", "--model", fbmPath, "--image", ppmPath, "--json"],
                        { encoding: "utf-8" });
  if (res.error !== undefined || res.status !== 0) {
    throw new Error(`engine infer failed (exit ${res.status}): ${res.stderr}`);
  }
  const payload = JSON.parse(res.stdout) as { logits: number[] };
  return Int32Array.from(payload.logits);
}

export function validateExport(model: EngineModel, fbmPath: string,
                               images: RgbImage[],
                               cmd: string = engineCommand()): ValidationReport {
  if (!engineAvailable(cmd)) {
    return { status: "engine_unavailable", engineCommand: cmd, images: 0,
             agreement: 0, maxRelDeviation: NaN, perImage: [],
             detail: `engine command ${cmd} not runnable; validation skipped` };
  }
  const workDir = mkdtempSync(join(tmpdir(), "fbnn-validate-"));
  const perImage: ImageComparison[] = [];
  try {
    let agree = 0;
    let maxRel = 0;
    images.forEach((img, i) => {
      const ppmPath = join(workDir, `img${i}.ppm`);
      writeFileSync(ppmPath, writePpm(img));
      const engine = engineInfer(fbmPath, ppmPath, cmd);
      const framework = referenceForward(model, img);
      let maxAbs = 0;
      let scale = 1;
      for (let cls = 0; cls < engine.length; cls++) {
        maxAbs = Math.max(maxAbs, Math.abs(engine[cls] - framework[cls]));
        scale = Math.max(scale, Math.abs(engine[cls]), Math.abs(framework[cls]));
      }
      const rel = maxAbs / scale;
      const cmp: ImageComparison = {
        engineClass: argmax(engine),
        frameworkClass: argmax(framework),
        maxAbsDeviation: maxAbs,
        relDeviation: rel,
      };
      perImage.push(cmp);
      if (cmp.engineClass === cmp.frameworkClass) agree += 1;
      maxRel = Math.max(maxRel, rel);
    });
    return {
      status: "ok", engineCommand: cmd, images: images.length,
      agreement: images.length ? agree / images.length : 1,
      maxRelDeviation: maxRel, perImage,
    };
  } finally {
    rmSync(workDir, { recursive: true, force: true });
  }
}
