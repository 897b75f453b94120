/**
 * Export manifest: a plain-text key=value file (one pair per line,
 * '#' starts a comment).
 *
 * Required keys: checkpoint, topology, resolution, classes,
 * threshold_domain (popcount | signed), and one `layer.<name> = <prefix>`
 * mapping per parameterized engine layer. Optional: output, bn_epsilon
 * (default 1e-5), validation_seed, validation_images.
 */

import { readFileSync } from "node:fs";

export type ThresholdDomain = "popcount" | "signed";

export interface Manifest {
  checkpoint: string;
  output?: string;
  topology: string;
  resolution: number;
  classes: number;
  thresholdDomain: ThresholdDomain;
  bnEpsilon: number;
  layerMap: Map<string, string>;
  validationSeed: number;
  validationImages: number;
}

export function parseManifest(text: string): Manifest {
  const pairs = new Map<string, string>();
  const layerMap = new Map<string, string>();
  text.split("\n").forEach((line, i) => {
    const stripped = line.split("#")[0].trim();
    if (!stripped) return;
    const eq = stripped.indexOf("=");
    if (eq < 0) {
      throw new Error(`manifest line ${i + 1}: expected key = value, got "${stripped}"`);
    }
    const key = stripped.slice(0, eq).trim();
    const value = stripped.slice(eq + 1).trim();
    if (key.startsWith("layer.")) {
      layerMap.set(key.slice("layer.".length), value);
    } else {
      pairs.set(key, value);
    }
  });

  const need = (key: string): string => {
    const v = pairs.get(key);
    if (v === undefined) throw new Error(`manifest is missing required key ${key}`);
    return v;
  };
  const num = (key: string, fallback?: number): number => {
    const v = pairs.get(key);
    if (v === undefined) {
      if (fallback === undefined) throw new Error(`manifest is missing required key ${key}`);
      return fallback;
    }
    const parsed = Number(v);
    if (!Number.isFinite(parsed)) throw new Error(`manifest key ${key}: bad number ${v}`);
    return parsed;
  };

  const domain = need("threshold_domain");
  if (domain !== "popcount" && domain !== "signed") {
    throw new Error(`unknown threshold convention ${domain} (expected popcount or signed)`);
  }
  return {
    checkpoint: need("checkpoint"),
    output: pairs.get("output"),
    topology: need("topology"),
    resolution: num("resolution"),
    classes: num("classes"),
    thresholdDomain: domain,
    bnEpsilon: num("bn_epsilon", 1e-5),
    layerMap,
    validationSeed: num("validation_seed", 0),
    validationImages: num("validation_images", 16),
  };
}

export function readManifestFile(path: string): Manifest {
  return parseManifest(readFileSync(path, "utf-8"));
}

export function serializeManifest(m: Manifest): string {
  const lines = [
    "# fracbnn export manifest",
    `checkpoint = ${m.checkpoint}`,
    ...(m.output ? [`output = ${m.output}`] : []),
    `topology = ${m.topology}`,
    `resolution = ${m.resolution}`,
    `classes = ${m.classes}`,
    `threshold_domain = ${m.thresholdDomain}`,
    `bn_epsilon = ${m.bnEpsilon}`,
    `validation_seed = ${m.validationSeed}`,
    `validation_images = ${m.validationImages}`,
  ];
  for (const [layer, prefix] of m.layerMap) {
    lines.push(`layer.${layer} = ${prefix}`);
  }
  return lines.join("\n") + "\n";
}
