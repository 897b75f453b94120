/**
 * Reference forward pass over converted engine parameters.
 *
 * Mirrors the numeric contract in docs/format.md exactly (integer
 * convolutions, Q16.16 round-to-nearest-even, saturating additions), so a
 * correct export makes the engine and this forward agree on every discrete
 * decision: sign bits, quantizer levels and gate openings. Activations are
 * held dense in position-major (H*W, C) layout; every value stays inside
 * float64's exact-integer range (guarded by the fixed-point helpers).
 */

import { ConvUnitParams, EngineModel, InputConvParams } from "./convert.js";
import { FRAC_BITS, divRoundHalfEven, satI32, shiftRoundHalfEven } from "./fixedpoint.js";
import { RgbImage } from "./images.js";

interface FeatureMap {
  height: number;
  width: number;
  channels: number;
  data: Float64Array; // (H*W, C) position-major
}

function featureMap(height: number, width: number, channels: number): FeatureMap {
  return { height, width, channels, data: new Float64Array(height * width * channels) };
}

export function thermometerEncode(img: RgbImage, resolution: number): FeatureMap {
  const length = Math.ceil(255 / resolution);
  const out = featureMap(img.height, img.width, 3 * length);
  const { data } = out;
  for (let pos = 0; pos < img.height * img.width; pos++) {
    for (let color = 0; color < 3; color++) {
      const p = img.data[pos * 3 + color];
      const ones = Math.floor(p / resolution + 0.5); // round half away from zero
      for (let i = 0; i < length; i++) {
        data[pos * out.channels + color * length + i] = i >= length - ones ? 1 : -1;
      }
    }
  }
  return out;
}

/** Weights (cOut, cIn, k, k) -> (oc, ky, kx, ci) matrix matching im2col order. */
function weightMatrix(dense: Float64Array, cOut: number, cIn: number, k: number): Float64Array {
  const mat = new Float64Array(cOut * k * k * cIn);
  for (let oc = 0; oc < cOut; oc++) {
    for (let ci = 0; ci < cIn; ci++) {
      for (let ky = 0; ky < k; ky++) {
        for (let kx = 0; kx < k; kx++) {
          mat[((oc * k + ky) * k + kx) * cIn + ci] =
            dense[((oc * cIn + ci) * k + ky) * k + kx];
        }
      }
    }
  }
  return mat;
}

/**
 * Integer convolution of a bipolar map with bipolar weights; padded taps
 * contribute 0 to the accumulated dot product.
 */
function conv2d(x: FeatureMap, wMat: Float64Array, cOut: number, k: number,
                stride: number, pad: number): FeatureMap {
  const ho = Math.floor((x.height + 2 * pad - k) / stride) + 1;
  const wo = Math.floor((x.width + 2 * pad - k) / stride) + 1;
  const c = x.channels;
  const cols = new Float64Array(k * k * c);
  const out = featureMap(ho, wo, cOut);
  for (let oh = 0; oh < ho; oh++) {
    for (let ow = 0; ow < wo; ow++) {
      cols.fill(0);
      for (let ky = 0; ky < k; ky++) {
        const ih = oh * stride + ky - pad;
        if (ih < 0 || ih >= x.height) continue;
        for (let kx = 0; kx < k; kx++) {
          const iw = ow * stride + kx - pad;
          if (iw < 0 || iw >= x.width) continue;
          const src = (ih * x.width + iw) * c;
          cols.set(x.data.subarray(src, src + c), (ky * k + kx) * c);
        }
      }
      const dst = (oh * wo + ow) * cOut;
      const kk = k * k * c;
      for (let oc = 0; oc < cOut; oc++) {
        let acc = 0;
        const base = oc * kk;
        for (let i = 0; i < kk; i++) {
          acc += cols[i] * wMat[base + i];
        }
        out.data[dst + oc] = acc;
      }
    }
  }
  return out;
}

function batchNorm(x: FeatureMap, scale: Int32Array, bias: Int32Array,
                   inputIsInteger: boolean): FeatureMap {
  const out = featureMap(x.height, x.width, x.channels);
  for (let i = 0; i < x.data.length; i++) {
    const c = i % x.channels;
    const prod = scale[c] * x.data[i];
    const scaled = inputIsInteger ? prod : shiftRoundHalfEven(prod, FRAC_BITS);
    out.data[i] = satI32(scaled + bias[c]);
  }
  return out;
}

function bprelu(x: FeatureMap, p: ConvUnitParams): FeatureMap {
  const out = featureMap(x.height, x.width, x.channels);
  for (let i = 0; i < x.data.length; i++) {
    const c = i % x.channels;
    const z = satI32(x.data[i] - p.alpha[c]);
    const y = z >= 0 ? z : shiftRoundHalfEven(p.beta[c] * z, FRAC_BITS);
    out.data[i] = satI32(y + p.gamma[c]);
  }
  return out;
}

function quantize(x: FeatureMap, actScale: Int32Array): { msb: FeatureMap; lsb: FeatureMap } {
  const msb = featureMap(x.height, x.width, x.channels);
  const lsb = featureMap(x.height, x.width, x.channels);
  for (let i = 0; i < x.data.length; i++) {
    const twoS = 2 * actScale[i % x.channels];
    const v = x.data[i];
    if (v >= 0) {
      msb.data[i] = 1;
      lsb.data[i] = v >= twoS ? 1 : -1;
    } else {
      msb.data[i] = -1;
      lsb.data[i] = v >= -twoS ? 1 : -1;
    }
  }
  return { msb, lsb };
}

function avgPool2(x: FeatureMap): FeatureMap {
  const out = featureMap(x.height / 2, x.width / 2, x.channels);
  const c = x.channels;
  for (let oh = 0; oh < out.height; oh++) {
    for (let ow = 0; ow < out.width; ow++) {
      for (let ch = 0; ch < c; ch++) {
        const sum =
          x.data[((2 * oh) * x.width + 2 * ow) * c + ch] +
          x.data[((2 * oh) * x.width + 2 * ow + 1) * c + ch] +
          x.data[((2 * oh + 1) * x.width + 2 * ow) * c + ch] +
          x.data[((2 * oh + 1) * x.width + 2 * ow + 1) * c + ch];
        out.data[(oh * out.width + ow) * c + ch] = satI32(divRoundHalfEven(sum, 4));
      }
    }
  }
  return out;
}

function duplicateChannels(x: FeatureMap): FeatureMap {
  const out = featureMap(x.height, x.width, 2 * x.channels);
  for (let pos = 0; pos < x.height * x.width; pos++) {
    for (let c = 0; c < x.channels; c++) {
      const v = x.data[pos * x.channels + c];
      out.data[pos * out.channels + c] = v;
      out.data[pos * out.channels + x.channels + c] = v;
    }
  }
  return out;
}

function addInto(a: FeatureMap, b: FeatureMap): void {
  for (let i = 0; i < a.data.length; i++) {
    a.data[i] = satI32(a.data[i] + b.data[i]);
  }
}

/** Run one image; returns int32 logits in the engine's Q16.16-scaled domain. */
export function referenceForward(model: EngineModel, img: RgbImage): Int32Array {
  const { topology } = model;
  if (img.height !== topology.height || img.width !== topology.width) {
    throw new Error(`image is ${img.width}x${img.height}, network expects ` +
                    `${topology.width}x${topology.height}`);
  }
  let plane = thermometerEncode(img, topology.resolution);
  let fixed: FeatureMap | null = null;
  let features: Float64Array | null = null;
  for (let i = 0; i < topology.blocks.length; i++) {
    const block = topology.blocks[i];
    const params = model.layers[i];
    if (params.kind === "input_conv") {
      const p = params as InputConvParams;
      const wMat = weightMatrix(p.denseWeights, block.outChannels, block.inChannels,
                                block.kernel);
      const conv = conv2d(plane, wMat, block.outChannels, block.kernel,
                          block.stride, block.pad);
      fixed = batchNorm(conv, p.bnScale, p.bnBias, true);
    } else if (params.kind === "conv_unit") {
      const p = params;
      const { msb, lsb } = quantize(fixed!, p.actScale);
      const wMat = weightMatrix(p.denseWeights, block.outChannels, block.inChannels,
                                block.kernel);
      const base = conv2d(msb, wMat, block.outChannels, block.kernel,
                          block.stride, block.pad);
      const upd = conv2d(lsb, wMat, block.outChannels, block.kernel,
                         block.stride, block.pad);
      const y = featureMap(base.height, base.width, base.channels);
      for (let j = 0; j < y.data.length; j++) {
        const oc = j % base.channels;
        const b = base.data[j];
        const gated = b > p.delta[oc] ? 2 * b + upd.data[j] : 2 * b;
        y.data[j] = satI32(gated * (1 << FRAC_BITS)); // into the Q16.16 domain
      }
      let act = bprelu(y, p);
      if (block.hasShortcut) {
        let sc = fixed!;
        if (block.downsample) {
          sc = duplicateChannels(avgPool2(sc));
        }
        addInto(act, sc);
      }
      fixed = batchNorm(act, p.bnScale, p.bnBias, false);
    } else if (params.kind === "global_pool") {
      const c = fixed!.channels;
      const sums = new Float64Array(c);
      for (let j = 0; j < fixed!.data.length; j++) {
        sums[j % c] += fixed!.data[j];
      }
      features = new Float64Array(c);
      for (let ch = 0; ch < c; ch++) {
        features[ch] = satI32(divRoundHalfEven(sums[ch], fixed!.height * fixed!.width));
      }
    } else if (params.kind === "classifier") {
      const logits = new Int32Array(topology.classes);
      for (let cls = 0; cls < topology.classes; cls++) {
        let acc = params.bias[cls];
        for (let f = 0; f < features!.length; f++) {
          acc += params.weight[cls * features!.length + f] * features![f];
        }
        logits[cls] = satI32(acc);
      }
      return logits;
    }
  }
  throw new Error("network has no classifier block");
}

export function argmax(logits: Int32Array): number {
  let best = 0;
  for (let i = 1; i < logits.length; i++) {
    if (logits[i] > logits[best]) best = i;
  }
  return best;
}
