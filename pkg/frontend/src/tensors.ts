/** Minimal dense tensor: float64 data with an explicit shape. */

export interface Tensor {
  shape: number[];
  data: Float64Array;
}

export function numel(shape: number[]): number {
  return shape.reduce((a, b) => a * b, 1);
}

export function tensor(shape: number[], data?: Float64Array | number[]): Tensor {
  const n = numel(shape);
  if (data === undefined) {
    return { shape: [...shape], data: new Float64Array(n) };
  }
  const arr = data instanceof Float64Array ? data : Float64Array.from(data);
  if (arr.length !== n) {
    throw new Error(`tensor data length ${arr.length} != shape ${shape.join("x")}`);
  }
  return { shape: [...shape], data: arr };
}

export function assertShape(t: Tensor, shape: number[], what: string): void {
  if (t.shape.length !== shape.length || t.shape.some((v, i) => v !== shape[i])) {
    throw new Error(`${what}: expected shape (${shape.join(", ")}), got (${t.shape.join(", ")})`);
  }
}

/** Seeded deterministic PRNG (sfc32); good enough for synthetic data. */
export function makeRng(seed: number): () => number {
  let a = 0x9e3779b9 ^ seed;
  let b = 0x243f6a88 + seed * 2654435761;
  let c = 0xb7e15162 ^ (seed << 13);
  let d = seed + 0x165667b1;
  return () => {
    a |= 0; b |= 0; c |= 0; d |= 0;
    const t = (a + b | 0) + d | 0;
    d = d + 1 | 0;
    a = b ^ (b >>> 9);
    b = c + (c << 3) | 0;
    c = (c << 21) | (c >>> 11);
    c = c + t | 0;
    return (t >>> 0) / 4294967296;
  };
}

export function uniform(rng: () => number, lo: number, hi: number): number {
  return lo + (hi - lo) * rng();
}
