/**
 * Network topology descriptions matching the engine's serializable
 * topologies (tag 1 = fracbnn_resnet20; see docs/format.md).
 */

export type BlockKind = "input_conv" | "conv_unit" | "global_pool" | "classifier";

export interface Block {
  kind: BlockKind;
  name: string;
  inChannels: number;
  outChannels: number;
  kernel: number;
  stride: number;
  pad: number;
  hasShortcut: boolean;
  downsample: boolean;
}

export interface Topology {
  tag: number;
  name: string;
  resolution: number;
  classes: number;
  height: number;
  width: number;
  blocks: Block[];
}

function conv(name: string, kind: BlockKind, inCh: number, outCh: number,
              opts: Partial<Block> = {}): Block {
  return {
    kind, name,
    inChannels: inCh, outChannels: outCh,
    kernel: 3, stride: 1, pad: 1,
    hasShortcut: false, downsample: false,
    ...opts,
  };
}

/** 18 gated 3x3 conv units in three stages over a 96-channel binary input layer. */
export function fracbnnResnet20(resolution = 8, classes = 10): Topology {
  const length = Math.ceil(255 / resolution);
  const blocks: Block[] = [conv("input", "input_conv", 3 * length, 16)];
  const widths = [16, 32, 64];
  for (let s = 0; s < 3; s++) {
    for (let b = 0; b < 3; b++) {
      for (let u = 0; u < 2; u++) {
        const first = s > 0 && b === 0 && u === 0;
        blocks.push(conv(
          `stage${s + 1}.block${b + 1}.conv${u + 1}`, "conv_unit",
          first ? widths[s] / 2 : widths[s], widths[s],
          { stride: first ? 2 : 1, hasShortcut: true, downsample: first },
        ));
      }
    }
  }
  blocks.push(conv("pool", "global_pool", 64, 64));
  blocks.push(conv("classifier", "classifier", 64, classes));
  return { tag: 1, name: "fracbnn_resnet20", resolution, classes,
           height: 32, width: 32, blocks };
}

export function topologyByName(name: string, resolution: number, classes: number): Topology {
  if (name === "fracbnn_resnet20") {
    return fracbnnResnet20(resolution, classes);
  }
  throw new Error(`unknown topology ${name}`);
}
