/** RGB images: synthetic validation inputs and binary PPM (P6) output. */

import { makeRng, uniform } from "./tensors.js";

export interface RgbImage {
  width: number;
  height: number;
  data: Uint8Array; // H*W*3, row-major
}

export function writePpm(img: RgbImage): Buffer {
  const header = Buffer.from(`P6\n${img.width} ${img.height}\n255\n`, "ascii");
  return Buffer.concat([header, Buffer.from(img.data)]);
}

/** Smooth seeded test images: shared luminance plus small per-color offsets. */
export function syntheticImages(seed: number, count: number,
                                height = 32, width = 32): RgbImage[] {
  const rng = makeRng(seed * 7919 + 1);
  const images: RgbImage[] = [];
  for (let n = 0; n < count; n++) {
    const data = new Uint8Array(height * width * 3);
    const base = uniform(rng, 0.25, 0.75);
    const waves = Array.from({ length: 3 }, () => ({
      fy: uniform(rng, 0.2, 1.8), fx: uniform(rng, 0.2, 1.8),
      amp: uniform(rng, 0.08, 0.28),
      py: uniform(rng, 0, 2 * Math.PI), px: uniform(rng, 0, 2 * Math.PI),
    }));
    const chroma = [uniform(rng, -0.08, 0.08), uniform(rng, -0.08, 0.08),
                    uniform(rng, -0.08, 0.08)];
    for (let y = 0; y < height; y++) {
      for (let x = 0; x < width; x++) {
        let lum = base;
        for (const wv of waves) {
          lum += wv.amp * Math.sin(2 * Math.PI * wv.fy * y / height + wv.py)
                        * Math.cos(2 * Math.PI * wv.fx * x / width + wv.px);
        }
        for (let c = 0; c < 3; c++) {
          const v = lum + chroma[c] + 0.02 * (rng() - 0.5);
          data[(y * width + x) * 3 + c] =
            Math.max(0, Math.min(255, Math.round(v * 255)));
        }
      }
    }
    images.push({ width, height, data });
  }
  return images;
}
