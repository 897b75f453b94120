"""Pure-numpy implementation of the hot convolution kernels.

Selected at import time when the compiled extension is unavailable (or
forced via FRACBNN_BACKEND=fallback).  Produces bit-identical results to
the native core: everything is integer arithmetic on the same packed
words.  The update phase computes the full LSB convolution and selects,
trading the sparsity win for vectorization.
"""

from __future__ import annotations

import numpy as np

NAME = "fallback"


def _tap_output_range(out_len: int, in_len: int, k_off: int, stride: int, pad: int):
    """Output index range [lo, hi) for which input index o*stride+k_off-pad is valid."""
    shift = k_off - pad
    lo = 0 if shift >= 0 else -(-(-shift) // stride)
    hi_in = (in_len - 1 - shift) // stride
    hi = min(out_len - 1, hi_in)
    return lo, hi + 1


def conv_base(xw, ww, c_in, stride, pad, out, oc_start, oc_end):
    """Binary convolution over packed words.

    xw: (H, W, Wc) uint64, ww: (C_out, k, k, Wc) uint64,
    out: (C_out, Ho, Wo) int32; fills output channels [oc_start, oc_end).
    Padded taps contribute nothing to the sum or the valid count.
    """
    h, w, _ = xw.shape
    k = ww.shape[1]
    ho, wo = out.shape[1], out.shape[2]
    wsel = ww[oc_start:oc_end]
    mismatches = np.zeros((oc_end - oc_start, ho, wo), dtype=np.int64)
    nvalid = np.zeros((ho, wo), dtype=np.int64)
    for ky in range(k):
        oh_lo, oh_hi = _tap_output_range(ho, h, ky, stride, pad)
        if oh_lo >= oh_hi:
            continue
        for kx in range(k):
            ow_lo, ow_hi = _tap_output_range(wo, w, kx, stride, pad)
            if ow_lo >= ow_hi:
                continue
            ih0 = oh_lo * stride + ky - pad
            iw0 = ow_lo * stride + kx - pad
            xs = xw[
                ih0 : ih0 + (oh_hi - oh_lo - 1) * stride + 1 : stride,
                iw0 : iw0 + (ow_hi - ow_lo - 1) * stride + 1 : stride,
            ]
            xor = xs[None, :, :, :] ^ wsel[:, ky, kx][:, None, None, :]
            mismatches[:, oh_lo:oh_hi, ow_lo:ow_hi] += (
                np.bitwise_count(xor).astype(np.int64).sum(axis=-1)
            )
            nvalid[oh_lo:oh_hi, ow_lo:ow_hi] += 1
    out[oc_start:oc_end] = (c_in * nvalid[None, :, :] - 2 * mismatches).astype(np.int32)


def frac_update(lsbw, ww, delta, c_in, stride, pad, base, out, mask, oc_start, oc_end):
    """Gated update phase: out = base<<1 (+ LSB dot where base > delta).

    base and out are (C_out, Ho, Wo) int32; mask is (C_out, Ho, Wo) uint8 and
    is set to 1 exactly where the gate opened.
    """
    upd = np.zeros_like(base)
    conv_base(lsbw, ww, c_in, stride, pad, upd, oc_start, oc_end)
    b = base[oc_start:oc_end].astype(np.int64)
    gate_open = b > delta[oc_start:oc_end, None, None]
    result = 2 * b + np.where(gate_open, upd[oc_start:oc_end].astype(np.int64), 0)
    out[oc_start:oc_end] = result.astype(np.int32)
    mask[oc_start:oc_end] = gate_open.astype(np.uint8)


def quantize_pack(raw, act_scale, msb_words, lsb_words):
    """Quantize Q16.16 values to {-3,-1,+1,+3}*s and pack both bit planes.

    Word arrays must arrive zeroed; ties round toward the more positive
    level and the MSB bit is the sign bit (>= 0).
    """
    from ..bitpack import bits_to_words

    two_s = (2 * act_scale.astype(np.int64))[:, None, None]
    msb = raw >= 0
    lsb = (raw >= two_s) | (~msb & (raw >= -two_s))
    msb_words[:] = bits_to_words(msb)
    lsb_words[:] = bits_to_words(lsb)
