/**
 * Weight binarization and channel-major bit packing (docs/format.md):
 * at each kernel tap, word k holds input channels [64k, 64k + 64) with
 * LSB-first lanes; bit 1 encodes +1, padding lanes stay zero.
 */

import { Tensor, assertShape } from "./tensors.js";

/** sign(w) with the engine's convention sign(0) = +1. */
export function signBit(w: number): 0 | 1 {
  return w >= 0 ? 1 : 0;
}

export function wordsPerPosition(channels: number): number {
  return Math.ceil(channels / 64);
}

/**
 * Pack one filter bank: weights (cOut, cIn, k, k) -> BigUint64Array of
 * cOut * k * k * ceil(cIn/64) words in (oc, ky, kx, word) order.
 */
export function packWeights(weights: Tensor, cOut: number, cIn: number,
                            kernel: number): BigUint64Array {
  assertShape(weights, [cOut, cIn, kernel, kernel], "conv weights");
  const wc = wordsPerPosition(cIn);
  const words = new BigUint64Array(cOut * kernel * kernel * wc);
  const d = weights.data;
  for (let oc = 0; oc < cOut; oc++) {
    for (let c = 0; c < cIn; c++) {
      const lane = BigInt(1) << BigInt(c % 64);
      const word = Math.floor(c / 64);
      for (let ky = 0; ky < kernel; ky++) {
        for (let kx = 0; kx < kernel; kx++) {
          const v = d[((oc * cIn + c) * kernel + ky) * kernel + kx];
          if (signBit(v)) {
            const idx = ((oc * kernel + ky) * kernel + kx) * wc + word;
            words[idx] |= lane;
          }
        }
      }
    }
  }
  return words;
}

/** Dense bipolar view of the binarized weights (for the reference forward). */
export function binarizeWeights(weights: Tensor): Float64Array {
  const out = new Float64Array(weights.data.length);
  for (let i = 0; i < out.length; i++) {
    out[i] = weights.data[i] >= 0 ? 1 : -1;
  }
  return out;
}
