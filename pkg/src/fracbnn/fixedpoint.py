"""Q16.16 fixed-point helpers.

All normalized (post-convolution) values in the engine live in signed
Q16.16: a 32-bit integer whose real value is raw / 2**16.  Multiplies go
through a 64-bit intermediate and round to nearest with ties to even;
additions saturate to the int32 range and bump a diagnostics counter
instead of wrapping.
"""

from __future__ import annotations

import os

import numpy as np

FRAC_BITS = 16
ONE = 1 << FRAC_BITS
I32_MIN = -(1 << 31)
I32_MAX = (1 << 31) - 1

_DEBUG = os.environ.get("FRACBNN_DEBUG", "") not in ("", "0")


class Diagnostics:
    """Per-run counters for saturation events (debug builds assert instead)."""

    def __init__(self):
        self.saturations = 0

    def record_saturation(self, count: int):
        if count:
            if _DEBUG:
                raise AssertionError(
                    f"fixed-point saturation ({count} elements) with FRACBNN_DEBUG set"
                )
            self.saturations += int(count)


def rshift_round_half_even(v: np.ndarray, bits: int) -> np.ndarray:
    """Arithmetic right shift of int64 values with round-half-to-even.

    Equivalent to round(v / 2**bits) under banker's rounding; exact for
    the 64-bit intermediates used by the Q16.16 multiplies.  `v` itself is
    left untouched; one scratch array is allocated.
    """
    if bits == 0:
        return v
    # floor(v >> bits) + adjustment, via the single-buffer identity
    # (v + half - 1 + lsb(v >> bits)) >> bits
    t = v >> bits
    t &= 1
    t += (1 << (bits - 1)) - 1
    t += v
    t >>= bits
    return t


def saturate_i32(v: np.ndarray, diag: Diagnostics | None = None) -> np.ndarray:
    """Clamp int64 values into int32, reporting clamped elements."""
    if v.size and (int(v.max()) > I32_MAX or int(v.min()) < I32_MIN):
        n = int(np.count_nonzero((v > I32_MAX) | (v < I32_MIN)))
        if diag is not None:
            diag.record_saturation(n)
        v = np.clip(v, I32_MIN, I32_MAX)
    return v.astype(np.int32)


def mul_q16(a: np.ndarray, b: np.ndarray, diag: Diagnostics | None = None) -> np.ndarray:
    """Q16.16 x Q16.16 -> Q16.16 with a 64-bit intermediate."""
    prod = a.astype(np.int64) * b.astype(np.int64)
    return saturate_i32(rshift_round_half_even(prod, FRAC_BITS), diag)


def from_float(x) -> np.ndarray:
    """Round real values to Q16.16 raw integers (ties to even).

    Used by generators and exporters only; the inference path never
    consumes floats.
    """
    scaled = np.asarray(x, dtype=np.float64) * ONE
    raw = np.rint(scaled)  # rint rounds half to even
    if np.any(raw > I32_MAX) or np.any(raw < I32_MIN):
        raise OverflowError("value out of Q16.16 range")
    return raw.astype(np.int32)


def to_float(raw) -> np.ndarray:
    return np.asarray(raw, dtype=np.float64) / ONE
