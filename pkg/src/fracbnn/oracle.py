"""Slow, obviously-correct dense reference implementations.

Ground truth for every engine kernel and for whole-network forwards.
This module deliberately shares no kernel code with the engine: packed
words are unpacked with local bit extraction, convolution is textbook
im2col over dense +-1 (or 2-bit) integer tensors, and the fixed-point
helpers are reimplemented here at 64-bit width.  Only the plain data
holders (network/layer descriptions) are shared.

Single-threaded; speed is a non-goal.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError

_I32_MIN = -(1 << 31)
_I32_MAX = (1 << 31) - 1
_ONE = 1 << 16


# ----------------------------------------------------------------------
# dense helpers

def unpack_words(words: np.ndarray, channels: int) -> np.ndarray:
    """Extract bipolar values from packed words by shifting bits out one lane
    at a time; independent of the engine's vectorized unpack."""
    h, w, _ = words.shape
    out = np.empty((channels, h, w), dtype=np.int64)
    for c in range(channels):
        word = words[:, :, c // 64]
        bit = (word >> np.uint64(c % 64)) & np.uint64(1)
        out[c] = bit.astype(np.int64) * 2 - 1
    return out


def unpack_weight_words(words: np.ndarray, c_in: int) -> np.ndarray:
    """(C_out, k, k, Wc) packed filter words -> dense (C_out, C_in, k, k)."""
    co = words.shape[0]
    return np.stack([
        unpack_words(words[i], c_in) for i in range(co)
    ])


def _round_shift_half_even(v: np.ndarray, bits: int) -> np.ndarray:
    floor = v >> bits
    rem = v - (floor << bits)
    half = 1 << (bits - 1)
    up = (rem > half) | ((rem == half) & ((floor & 1) == 1))
    return floor + up


def _div_half_even(num: np.ndarray, den: int) -> np.ndarray:
    q = np.floor_divide(num, den)
    rem2 = (num - q * den) * 2
    return q + ((rem2 > den) | ((rem2 == den) & ((q & 1) == 1)))


def _sat32(v: np.ndarray) -> np.ndarray:
    return np.clip(v, _I32_MIN, _I32_MAX)


# ----------------------------------------------------------------------
# reference operations

def conv2d(x: np.ndarray, w: np.ndarray, stride: int = 1, pad: int = 0) -> np.ndarray:
    """Textbook direct convolution of dense integer tensors.

    x: (C, H, W), w: (C_out, C, k, k); zero-padded taps contribute 0.
    """
    c, h, wd = x.shape
    co, cw, k, k2 = w.shape
    if cw != c or k != k2:
        raise ShapeError(f"weight shape {w.shape} does not match input {x.shape}")
    ho = (h + 2 * pad - k) // stride + 1
    wo = (wd + 2 * pad - k) // stride + 1
    if ho < 1 or wo < 1:
        raise ShapeError("kernel does not fit input")
    padded = np.zeros((c, h + 2 * pad, wd + 2 * pad), dtype=np.int64)
    padded[:, pad : pad + h, pad : pad + wd] = x
    cols = np.empty((ho * wo, c * k * k), dtype=np.int64)
    col = 0
    for ky in range(k):
        for kx in range(k):
            patch = padded[:, ky : ky + ho * stride : stride, kx : kx + wo * stride : stride]
            cols[:, col * c : (col + 1) * c] = patch.reshape(c, -1).T
            col += 1
    wmat = w.transpose(0, 2, 3, 1).reshape(co, -1)  # (C_out, k*k*C) matching cols
    return (cols @ wmat.T).T.reshape(co, ho, wo)


def frac_conv(msb: np.ndarray, lsb: np.ndarray, w: np.ndarray, delta: np.ndarray,
              stride: int = 1, pad: int = 0):
    """Literal transcription of the gated dual-phase law.

    Returns (out, mask, sparsity); the gate compares the fully accumulated
    MSB convolution against the per-channel threshold.
    """
    base = conv2d(msb, w, stride, pad)
    update = conv2d(lsb, w, stride, pad)
    mask = base > np.asarray(delta, dtype=np.int64)[:, None, None]
    out = np.where(mask, (base << 1) + update, base << 1)
    sparsity = 1.0 - np.count_nonzero(mask) / mask.size
    return out, mask, sparsity


def sign_dense(raw: np.ndarray) -> np.ndarray:
    return np.where(np.asarray(raw) >= 0, 1, -1).astype(np.int64)


def quantize_dense(raw: np.ndarray, act_scale: np.ndarray) -> np.ndarray:
    """Nearest level in {-3,-1,+1,+3} * s by explicit distance comparison,
    ties resolved toward the more positive level."""
    raw = np.asarray(raw, dtype=np.int64)
    s = np.asarray(act_scale, dtype=np.int64)[:, None, None]
    levels = (3, 1, -1, -3)  # most positive first, so argmin ties pick it
    dists = np.stack([np.abs(raw - lv * s) for lv in levels])
    choice = np.argmin(dists, axis=0)
    return np.choose(choice, levels)


def batchnorm_int(x: np.ndarray, scale: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Integer-count input: scale*x is exact in the Q16.16 domain."""
    v = scale.astype(np.int64)[:, None, None] * x.astype(np.int64)
    return _sat32(v + bias.astype(np.int64)[:, None, None])


def batchnorm_fixed(x: np.ndarray, scale: np.ndarray, bias: np.ndarray) -> np.ndarray:
    prod = scale.astype(np.int64)[:, None, None] * x.astype(np.int64)
    v = _round_shift_half_even(prod, 16)
    return _sat32(v + bias.astype(np.int64)[:, None, None])


def bprelu_fixed(x: np.ndarray, alpha: np.ndarray, beta: np.ndarray,
                 gamma: np.ndarray) -> np.ndarray:
    z = _sat32(x.astype(np.int64) - alpha.astype(np.int64)[:, None, None])
    neg = _round_shift_half_even(beta.astype(np.int64)[:, None, None] * z, 16)
    return _sat32(np.where(z >= 0, z, neg) + gamma.astype(np.int64)[:, None, None])


def avgpool_fixed(x: np.ndarray, k: int = 2) -> np.ndarray:
    c, h, w = x.shape
    if h % k or w % k:
        raise ShapeError(f"dims ({h}, {w}) not divisible by {k}")
    sums = x.astype(np.int64).reshape(c, h // k, k, w // k, k).sum(axis=(2, 4))
    return _sat32(_div_half_even(sums, k * k))


def global_avgpool_fixed(x: np.ndarray) -> np.ndarray:
    c, h, w = x.shape
    return _sat32(_div_half_even(x.astype(np.int64).sum(axis=(1, 2)), h * w))


def thermometer_dense(img: np.ndarray, resolution: int) -> np.ndarray:
    """Direct evaluation of the thermometer index rule, bipolar output.

    Index i in [1, L] is 0 while i <= L - round(p/R) and 1 above; rounding
    is computed in floating point here, independent of the engine's
    integer formulation.
    """
    length = int(np.ceil(255 / resolution))
    p = img.astype(np.float64)
    n = np.floor(p / resolution + 0.5).astype(np.int64)  # round half up (p >= 0)
    h, w, _ = img.shape
    out = np.empty((3 * length, h, w), dtype=np.int64)
    for color in range(3):
        for i in range(1, length + 1):
            bit = i > (length - n[:, :, color])
            out[color * length + (i - 1)] = np.where(bit, 1, -1)
    return out


def linear_classifier_dense(features: np.ndarray, weight: np.ndarray,
                            bias: np.ndarray) -> np.ndarray:
    acc = weight.astype(np.int64) @ features.astype(np.int64) + bias.astype(np.int64)
    return _sat32(acc)


# ----------------------------------------------------------------------
# whole-network reference forward

def forward(model, image: np.ndarray, timings: list | None = None) -> np.ndarray:
    """Dense forward pass over a loaded model, mirroring the engine's layer
    order with independent dense arithmetic.  Returns int32 logits.
    When `timings` is a list, (layer name, seconds) pairs are appended."""
    from time import perf_counter

    from .model import INPUT_CONV, CONV_UNIT, GLOBAL_POOL, CLASSIFIER  # data-only constants

    x = thermometer_dense(image, model.spec.resolution)
    fixed = None
    feats = None
    for block, params in zip(model.spec.blocks, model.layers):
        t0 = perf_counter() if timings is not None else 0.0
        if block.kind == INPUT_CONV:
            w = unpack_weight_words(params.weights.words, block.in_channels)
            conv = conv2d(x, w, stride=block.stride, pad=block.pad)
            fixed = batchnorm_int(conv, params.bn_scale, params.bn_bias)
        elif block.kind == CONV_UNIT:
            p = params.channel
            q = quantize_dense(fixed, p.act_scale)
            msb = sign_dense(q)
            lsb = q - 2 * msb
            w = unpack_weight_words(params.weights.words, block.in_channels)
            out, _, _ = frac_conv(msb, lsb, w, p.delta, stride=block.stride, pad=block.pad)
            y = bprelu_fixed(_sat32(out.astype(np.int64) << 16),
                             p.bprelu_alpha, p.bprelu_beta, p.bprelu_gamma)
            if block.has_shortcut:
                sc = fixed
                if block.downsample:
                    sc = avgpool_fixed(sc, 2)
                    sc = np.concatenate([sc, sc], axis=0)
                y = _sat32(y + sc)
            fixed = batchnorm_fixed(y, p.bn_scale, p.bn_bias)
        elif block.kind == GLOBAL_POOL:
            feats = global_avgpool_fixed(fixed)
        elif block.kind == CLASSIFIER:
            logits = linear_classifier_dense(feats, params.weight, params.bias)
            if timings is not None:
                timings.append((block.name or block.kind, perf_counter() - t0))
            return logits.astype(np.int32)
        else:
            raise ShapeError(f"unknown block kind {block.kind!r}")
        if timings is not None:
            timings.append((block.name or block.kind, perf_counter() - t0))
    raise ShapeError("network has no classifier block")
