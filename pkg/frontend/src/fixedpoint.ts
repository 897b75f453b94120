/**
 * Q16.16 fixed-point helpers mirroring the engine's numeric contract
 * (see docs/format.md): round-to-nearest-even multiplies and divisions,
 * int32 saturation on additions.
 *
 * All raw values are held in ordinary numbers; every operation guards the
 * exact-integer range of float64 so results are provably exact.
 */

export const FRAC_BITS = 16;
export const ONE = 1 << FRAC_BITS;
export const I32_MIN = -2147483648;
export const I32_MAX = 2147483647;

const EXACT_LIMIT = 2 ** 52;

function guardExact(v: number, what: string): void {
  if (!Number.isFinite(v) || Math.abs(v) > EXACT_LIMIT) {
    throw new Error(`${what}: value ${v} outside the exact integer range`);
  }
}

/** Round a real number to the nearest integer, ties to even. */
export function roundHalfEven(x: number): number {
  const f = Math.floor(x);
  const diff = x - f;
  if (diff > 0.5) return f + 1;
  if (diff < 0.5) return f;
  return f % 2 === 0 ? f : f + 1;
}

/** Real value -> Q16.16 raw int32 (ties to even), range-checked. */
export function toQ16(x: number): number {
  const raw = roundHalfEven(x * ONE);
  if (raw < I32_MIN || raw > I32_MAX) {
    throw new Error(`value ${x} out of Q16.16 range`);
  }
  return raw;
}

export function fromQ16(raw: number): number {
  return raw / ONE;
}

/** Arithmetic shift right with round-half-to-even, exact on guarded ints. */
export function shiftRoundHalfEven(v: number, bits: number): number {
  guardExact(v, "shiftRoundHalfEven");
  const div = 2 ** bits;
  const f = Math.floor(v / div);
  const rem = v - f * div;
  const half = div / 2;
  if (rem > half) return f + 1;
  if (rem < half) return f;
  return f % 2 === 0 ? f : f + 1;
}

/** Integer division with round-half-to-even. */
export function divRoundHalfEven(v: number, den: number): number {
  guardExact(v, "divRoundHalfEven");
  const f = Math.floor(v / den);
  const rem2 = 2 * (v - f * den);
  if (rem2 > den) return f + 1;
  if (rem2 < den) return f;
  return f % 2 === 0 ? f : f + 1;
}

/** Saturating int32, matching the engine's additions. */
export function satI32(v: number): number {
  guardExact(v, "satI32");
  if (v > I32_MAX) return I32_MAX;
  if (v < I32_MIN) return I32_MIN;
  return v;
}

/** Q16.16 * Q16.16 -> Q16.16 (64-bit-exact intermediate, guarded). */
export function mulQ16(a: number, b: number): number {
  const prod = a * b;
  guardExact(prod, "mulQ16 product");
  return satI32(shiftRoundHalfEven(prod, FRAC_BITS));
}
