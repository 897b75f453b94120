/**
 * Deterministic synthetic checkpoints: framework-style tensors with
 * realistic magnitudes, for exporter tests and validation without trained
 * weights. Thresholds are stored in the popcount domain to exercise the
 * domain conversion; classifier weights are integer-valued (the checkpoint
 * models a quantization-aware integer classifier).
 */

import { Checkpoint } from "./checkpoint.js";
import { Manifest } from "./manifest.js";
import { Tensor, makeRng, tensor, uniform } from "./tensors.js";
import { Topology, topologyByName } from "./topology.js";

function fill(shape: number[], fn: () => number): Tensor {
  const t = tensor(shape);
  for (let i = 0; i < t.data.length; i++) {
    t.data[i] = fn();
  }
  return t;
}

export function checkpointPrefixes(topology: Topology): Map<string, string> {
  const map = new Map<string, string>();
  let unit = 0;
  for (const block of topology.blocks) {
    if (block.kind === "input_conv") {
      map.set(block.name, "input");
    } else if (block.kind === "conv_unit") {
      unit += 1;
      map.set(block.name, `unit${unit}`);
    } else if (block.kind === "classifier") {
      map.set(block.name, "classifier");
    }
  }
  return map;
}

export function generateCheckpoint(seed: number, topology: Topology): Checkpoint {
  const rng = makeRng(seed * 2654435761 + 97);
  const ckpt: Checkpoint = new Map();
  const prefixes = checkpointPrefixes(topology);
  for (const block of topology.blocks) {
    const prefix = prefixes.get(block.name);
    if (block.kind === "global_pool" || prefix === undefined) {
      continue;
    }
    if (block.kind === "classifier") {
      ckpt.set(`${prefix}.weight`, fill([block.outChannels, block.inChannels],
                                        () => Math.round(uniform(rng, -31, 31))));
      ckpt.set(`${prefix}.bias`, fill([block.outChannels], () => uniform(rng, -4, 4)));
      continue;
    }
    const fanIn = block.kernel * block.kernel * block.inChannels;
    ckpt.set(`${prefix}.conv.weight`,
             fill([block.outChannels, block.inChannels, block.kernel, block.kernel],
                  () => uniform(rng, -1, 1)));
    const targetScale = block.kind === "input_conv"
      ? () => uniform(rng, 0.8, 1.2) / Math.sqrt(fanIn)
      : () => uniform(rng, 0.8, 1.2) / (3.6 * Math.sqrt(fanIn));
    // store BN in unfolded (gamma, beta, mean, var) form so the exporter's
    // folding is exercised
    const c = block.outChannels;
    const gamma = tensor([c]);
    const beta = tensor([c]);
    const mean = fill([c], () => uniform(rng, -1, 1));
    const variance = fill([c], () => uniform(rng, 0.5, 2));
    for (let i = 0; i < c; i++) {
      const scale = targetScale();
      const bias = uniform(rng, -0.3, 0.3);
      gamma.data[i] = scale * Math.sqrt(variance.data[i] + 1e-5);
      beta.data[i] = bias + scale * mean.data[i];
    }
    ckpt.set(`${prefix}.bn.gamma`, gamma);
    ckpt.set(`${prefix}.bn.beta`, beta);
    ckpt.set(`${prefix}.bn.mean`, mean);
    ckpt.set(`${prefix}.bn.var`, variance);
    if (block.kind === "conv_unit") {
      ckpt.set(`${prefix}.quant.scale`,
               fill([block.inChannels], () => uniform(rng, 0.45, 0.7)));
      ckpt.set(`${prefix}.bprelu.alpha`, fill([c], () => uniform(rng, -0.3, 0.3)));
      ckpt.set(`${prefix}.bprelu.beta`, fill([c], () => uniform(rng, 0.05, 0.95)));
      ckpt.set(`${prefix}.bprelu.gamma`, fill([c], () => uniform(rng, -0.3, 0.3)));
      // popcount-domain thresholds centered so roughly half the gates open
      const threshold = tensor([c]);
      for (let i = 0; i < c; i++) {
        const signed = uniform(rng, -0.5, 0.5) * Math.sqrt(fanIn);
        threshold.data[i] = (signed + fanIn) / 2;
      }
      ckpt.set(`${prefix}.threshold`, threshold);
    }
  }
  return ckpt;
}

export function manifestFor(topology: Topology, checkpointPath: string,
                            outputPath?: string): Manifest {
  return {
    checkpoint: checkpointPath,
    output: outputPath,
    topology: topology.name,
    resolution: topology.resolution,
    classes: topology.classes,
    thresholdDomain: "popcount",
    bnEpsilon: 1e-5,
    layerMap: checkpointPrefixes(topology),
    validationSeed: 0,
    validationImages: 16,
  };
}

export function defaultTopology(resolution = 8, classes = 10): Topology {
  return topologyByName("fracbnn_resnet20", resolution, classes);
}
