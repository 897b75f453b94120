/**
 * Checkpoint -> engine parameter conversion.
 *
 * This module owns all framework-convention knowledge:
 *  - weights binarize with sign (sign(0) = +1) and pack channel-major;
 *  - BatchNorm folds to an affine: scale = gamma / sqrt(var + eps),
 *    bias = beta - scale * mean;
 *  - real parameters round to Q16.16 with ties to even;
 *  - gating thresholds convert from the popcount domain when the
 *    checkpoint was trained against raw popcounts:
 *    delta_signed = 2 * delta_popcnt - N, N = kernel^2 * c_in, then floor
 *    to an integer (the gate compares integer base values strictly).
 */

import { Checkpoint, getTensor } from "./checkpoint.js";
import { I32_MAX, I32_MIN, toQ16 } from "./fixedpoint.js";
import { Manifest } from "./manifest.js";
import { binarizeWeights, packWeights } from "./packing.js";
import { Tensor, assertShape } from "./tensors.js";
import { Block, Topology, topologyByName } from "./topology.js";

export interface InputConvParams {
  kind: "input_conv";
  words: BigUint64Array;
  denseWeights: Float64Array; // bipolar, for the reference forward
  bnScale: Int32Array;
  bnBias: Int32Array;
}

export interface ConvUnitParams {
  kind: "conv_unit";
  words: BigUint64Array;
  denseWeights: Float64Array;
  actScale: Int32Array;
  delta: Int32Array;
  alpha: Int32Array;
  beta: Int32Array;
  gamma: Int32Array;
  bnScale: Int32Array;
  bnBias: Int32Array;
}

export interface PoolParams {
  kind: "global_pool";
}

export interface ClassifierParams {
  kind: "classifier";
  weight: Int8Array; // (classes, features) row-major
  bias: Int32Array;
}

export type LayerParams = InputConvParams | ConvUnitParams | PoolParams | ClassifierParams;

export interface EngineModel {
  topology: Topology;
  layers: LayerParams[];
}

function q16Array(t: Tensor, what: string): Int32Array {
  const out = new Int32Array(t.data.length);
  for (let i = 0; i < out.length; i++) {
    try {
      out[i] = toQ16(t.data[i]);
    } catch (err) {
      throw new Error(`${what}[${i}]: ${(err as Error).message}`);
    }
  }
  return out;
}

function foldBatchNorm(ckpt: Checkpoint, prefix: string, channels: number,
                       eps: number): { scale: Int32Array; bias: Int32Array } {
  const gamma = getTensor(ckpt, `${prefix}.bn.gamma`);
  const beta = getTensor(ckpt, `${prefix}.bn.beta`);
  const mean = getTensor(ckpt, `${prefix}.bn.mean`);
  const variance = getTensor(ckpt, `${prefix}.bn.var`);
  for (const [t, name] of [[gamma, "gamma"], [beta, "beta"], [mean, "mean"],
                           [variance, "var"]] as const) {
    assertShape(t, [channels], `${prefix}.bn.${name}`);
  }
  const scale = new Int32Array(channels);
  const bias = new Int32Array(channels);
  for (let c = 0; c < channels; c++) {
    const v = variance.data[c];
    if (!(v >= 0)) {
      throw new Error(`${prefix}.bn.var[${c}] must be non-negative, got ${v}`);
    }
    const s = gamma.data[c] / Math.sqrt(v + eps);
    scale[c] = toQ16(s);
    bias[c] = toQ16(beta.data[c] - s * mean.data[c]);
  }
  return { scale, bias };
}

function convertThresholds(t: Tensor, block: Block, domain: string): Int32Array {
  assertShape(t, [block.outChannels], `${block.name} thresholds`);
  const n = block.kernel * block.kernel * block.inChannels;
  const out = new Int32Array(block.outChannels);
  for (let c = 0; c < block.outChannels; c++) {
    let signed: number;
    if (domain === "popcount") {
      signed = 2 * t.data[c] - n;
    } else if (domain === "signed") {
      signed = t.data[c];
    } else {
      throw new Error(`unknown threshold convention ${domain}`);
    }
    out[c] = Math.min(I32_MAX, Math.max(I32_MIN, Math.floor(signed)));
  }
  return out;
}

function convertClassifier(ckpt: Checkpoint, prefix: string, block: Block): ClassifierParams {
  const weight = getTensor(ckpt, `${prefix}.weight`);
  const bias = getTensor(ckpt, `${prefix}.bias`);
  assertShape(weight, [block.outChannels, block.inChannels], `${prefix}.weight`);
  assertShape(bias, [block.outChannels], `${prefix}.bias`);
  const w8 = new Int8Array(weight.data.length);
  for (let i = 0; i < w8.length; i++) {
    const v = weight.data[i];
    const r = Math.round(v);
    if (Math.abs(v - r) > 1e-4 || r < -127 || r > 127) {
      throw new Error(
        `${prefix}.weight[${i}] = ${v}: classifier weights must be integer-valued ` +
        `int8 (quantization-aware checkpoint)`);
    }
    w8[i] = r;
  }
  return { kind: "classifier", weight: w8, bias: q16Array(bias, `${prefix}.bias`) };
}

export function convertCheckpoint(ckpt: Checkpoint, manifest: Manifest): EngineModel {
  const topology = topologyByName(manifest.topology, manifest.resolution,
                                  manifest.classes);
  const layers: LayerParams[] = [];
  for (const block of topology.blocks) {
    if (block.kind === "global_pool") {
      layers.push({ kind: "global_pool" });
      continue;
    }
    const prefix = manifest.layerMap.get(block.name);
    if (prefix === undefined) {
      throw new Error(`manifest maps no checkpoint prefix for layer ${block.name}`);
    }
    if (block.kind === "classifier") {
      layers.push(convertClassifier(ckpt, prefix, block));
      continue;
    }
    const weights = getTensor(ckpt, `${prefix}.conv.weight`);
    assertShape(weights, [block.outChannels, block.inChannels, block.kernel, block.kernel],
                `${prefix}.conv.weight`);
    const words = packWeights(weights, block.outChannels, block.inChannels, block.kernel);
    const dense = binarizeWeights(weights);
    const bn = foldBatchNorm(ckpt, prefix, block.outChannels, manifest.bnEpsilon);
    if (block.kind === "input_conv") {
      layers.push({ kind: "input_conv", words, denseWeights: dense,
                    bnScale: bn.scale, bnBias: bn.bias });
    } else {
      const actScaleT = getTensor(ckpt, `${prefix}.quant.scale`);
      assertShape(actScaleT, [block.inChannels], `${prefix}.quant.scale`);
      const actScale = q16Array(actScaleT, `${prefix}.quant.scale`);
      for (let c = 0; c < actScale.length; c++) {
        if (actScale[c] <= 0) {
          throw new Error(`${prefix}.quant.scale[${c}] rounds to a non-positive step`);
        }
      }
      const bprelu: Record<string, Int32Array> = {};
      for (const name of ["alpha", "beta", "gamma"]) {
        const t = getTensor(ckpt, `${prefix}.bprelu.${name}`);
        assertShape(t, [block.outChannels], `${prefix}.bprelu.${name}`);
        bprelu[name] = q16Array(t, `${prefix}.bprelu.${name}`);
      }
      layers.push({
        kind: "conv_unit", words, denseWeights: dense,
        actScale,
        delta: convertThresholds(getTensor(ckpt, `${prefix}.threshold`), block,
                                 manifest.thresholdDomain),
        alpha: bprelu.alpha, beta: bprelu.beta, gamma: bprelu.gamma,
        bnScale: bn.scale, bnBias: bn.bias,
      });
    }
  }
  return { topology, layers };
}
