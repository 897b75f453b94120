"""Layer kernels: binary and fractional convolution, 2-bit quantization,
BatchNorm, BPReLU, pooling, shortcut ops and the integer classifier.

Every kernel is a pure function over immutable inputs and uses integer
arithmetic only, so results are bitwise identical across thread counts
and backends.  Convolutions run on packed words through the selected
backend; `threads` splits work across output channels with disjoint
writes.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import backend, bitpack
from .bitpack import PackedBitPlane, PackedWeights
from .errors import ShapeError
from .fixedpoint import (
    FRAC_BITS,
    I32_MAX,
    I32_MIN,
    Diagnostics,
    rshift_round_half_even,
    saturate_i32,
)

# Gating threshold sentinels reserved by the model format: the gate test is
# `base > delta`, so INT32 min opens every gate and INT32 max closes every gate.
DELTA_ALWAYS_OPEN = I32_MIN
DELTA_ALWAYS_CLOSED = I32_MAX


@dataclass(frozen=True)
class IntFeatureMap:
    """Signed 32-bit accumulator map of shape (C, H, W)."""

    values: np.ndarray

    def __post_init__(self):
        if self.values.ndim != 3 or self.values.dtype != np.int32:
            raise ShapeError(f"IntFeatureMap needs int32 (C, H, W), got "
                             f"{self.values.dtype} {self.values.shape}")

    @property
    def dims(self):
        return self.values.shape


@dataclass(frozen=True)
class FixedFeatureMap:
    """Q16.16 map of shape (C, H, W); `raw` holds the scaled int32 values."""

    raw: np.ndarray

    def __post_init__(self):
        if self.raw.ndim != 3 or self.raw.dtype != np.int32:
            raise ShapeError(f"FixedFeatureMap needs int32 (C, H, W), got "
                             f"{self.raw.dtype} {self.raw.shape}")

    @property
    def dims(self):
        return self.raw.shape

    def to_float(self) -> np.ndarray:
        return self.raw.astype(np.float64) / (1 << FRAC_BITS)


@dataclass(frozen=True)
class FracActivation:
    """2-bit activation as two bipolar planes; value = 2*msb + lsb in {-3,-1,1,3}."""

    msb: PackedBitPlane
    lsb: PackedBitPlane

    def __post_init__(self):
        if self.msb.dims != self.lsb.dims:
            raise ShapeError(f"msb dims {self.msb.dims} != lsb dims {self.lsb.dims}")

    @property
    def dims(self):
        return self.msb.dims


@dataclass(frozen=True)
class ChannelParams:
    """Per-channel parameters of one gated conv unit.

    All arrays except `act_scale` run over output channels; `act_scale` is
    the 2-bit quantizer step for the unit's input and runs over input
    channels.  `delta` is in the signed-dot domain; everything else is
    Q16.16 raw.
    """

    delta: np.ndarray
    bn_scale: np.ndarray
    bn_bias: np.ndarray
    bprelu_alpha: np.ndarray
    bprelu_beta: np.ndarray
    bprelu_gamma: np.ndarray
    act_scale: np.ndarray

    def __post_init__(self):
        n = len(self.delta)
        for name in ("bn_scale", "bn_bias", "bprelu_alpha", "bprelu_beta", "bprelu_gamma"):
            if len(getattr(self, name)) != n:
                raise ShapeError(f"{name} length != delta length {n}")
        if np.any(self.act_scale <= 0):
            raise ShapeError("act_scale must be positive")
        if np.any(self.bprelu_beta < 0):
            warnings.warn("negative BPReLU slope; the format stores it unconstrained",
                          stacklevel=2)


def _out_len(in_len: int, k: int, stride: int, pad: int) -> int:
    n = (in_len + 2 * pad - k) // stride + 1
    if n < 1 or (in_len + 2 * pad) < k:
        raise ShapeError(f"kernel {k} does not fit input extent {in_len} with pad {pad}")
    return n


def _check_conv_args(x: PackedBitPlane, w: PackedWeights, stride: int, pad: int):
    if x.channels != w.c_in:
        raise ShapeError(f"input channels {x.channels} != weight channels {w.c_in}")
    if w.kernel not in (1, 3):
        raise ShapeError(f"kernel size must be 1 or 3, got {w.kernel}")
    if stride not in (1, 2):
        raise ShapeError(f"stride must be 1 or 2, got {stride}")
    if pad not in (0, 1) or (pad == 1 and w.kernel != 3):
        raise ShapeError(f"pad {pad} only supported with 3x3 kernels")


def _split_ranges(n: int, parts: int):
    step = -(-n // parts)
    return [(i, min(i + step, n)) for i in range(0, n, step)]


def _run_channel_parallel(fn, c_out: int, threads: int):
    if threads <= 1 or c_out == 1:
        fn(0, c_out)
        return
    ranges = _split_ranges(c_out, min(threads, c_out))
    with ThreadPoolExecutor(max_workers=len(ranges)) as pool:
        futures = [pool.submit(fn, lo, hi) for lo, hi in ranges]
        for f in futures:
            f.result()


def binary_conv2d(x: PackedBitPlane, w: PackedWeights, stride: int = 1,
                  pad: int = 0, threads: int = 1) -> IntFeatureMap:
    """XNOR/popcount convolution in the signed-dot domain.

    out[c, i, j] sums the bipolar dot products over all in-bounds kernel
    taps; padded taps contribute 0 to both the sum and the valid count.
    """
    _check_conv_args(x, w, stride, pad)
    ho = _out_len(x.height, w.kernel, stride, pad)
    wo = _out_len(x.width, w.kernel, stride, pad)
    out = np.empty((w.c_out, ho, wo), dtype=np.int32)
    _run_channel_parallel(
        lambda lo, hi: backend.conv_base(x.words, w.words, x.channels, stride, pad,
                                         out, lo, hi),
        w.c_out, threads)
    return IntFeatureMap(out)


@dataclass(frozen=True)
class FracConvResult:
    output: IntFeatureMap
    update_mask: np.ndarray  # bool (C_out, Ho, Wo); True where the gate opened
    sparsity: float          # fraction of output elements whose update was skipped

    @property
    def updates_done(self) -> int:
        return int(np.count_nonzero(self.update_mask))


def frac_conv2d(x: FracActivation, w: PackedWeights, delta: np.ndarray,
                stride: int = 1, pad: int = 0, threads: int = 1) -> FracConvResult:
    """Two-phase gated convolution.

    The base phase convolves the MSB plane.  For each output element whose
    fully accumulated base value exceeds the channel threshold, the LSB dot
    product is added on top of base << 1; everywhere else the output is just
    base << 1.
    """
    delta = np.ascontiguousarray(delta, dtype=np.int32)
    if delta.shape != (w.c_out,):
        raise ShapeError(f"delta length {delta.shape} != out channels {w.c_out}")
    base = binary_conv2d(x.msb, w, stride=stride, pad=pad, threads=threads)
    out = np.empty_like(base.values)
    mask = np.empty(base.values.shape, dtype=np.uint8)
    _run_channel_parallel(
        lambda lo, hi: backend.frac_update(x.lsb.words, w.words, delta, x.lsb.channels,
                                           stride, pad, base.values, out, mask, lo, hi),
        w.c_out, threads)
    open_count = int(np.count_nonzero(mask))
    sparsity = 1.0 - open_count / mask.size
    return FracConvResult(IntFeatureMap(out), mask.astype(bool), sparsity)


def quantize2bit(x: FixedFeatureMap, act_scale: np.ndarray) -> FracActivation:
    """Quantize to the nearest level in {-3, -1, +1, +3} * s, ties toward positive.

    The MSB plane is the sign bit (zero maps to +1), which makes the
    decomposition 2*dot(msb) + dot(lsb) exact for the gated convolution.
    """
    act_scale = np.ascontiguousarray(act_scale, dtype=np.int32)
    c, h, w = x.dims
    if act_scale.shape != (c,):
        raise ShapeError(f"act_scale length {act_scale.shape} != channels {c}")
    if np.any(act_scale <= 0):
        raise ShapeError("act_scale must be positive")
    wc = bitpack.words_per_position(c)
    msb_words = np.zeros((h, w, wc), dtype=np.uint64)
    lsb_words = np.zeros((h, w, wc), dtype=np.uint64)
    backend.quantize_pack(x.raw, act_scale, msb_words, lsb_words)
    return FracActivation(
        msb=bitpack.PackedBitPlane(c, h, w, msb_words),
        lsb=bitpack.PackedBitPlane(c, h, w, lsb_words),
    )


def sign_binarize(x: FixedFeatureMap) -> PackedBitPlane:
    """Elementwise sign with sign(0) = +1, packed."""
    return bitpack.pack_bits((x.raw >= 0).astype(np.uint8))


def _per_channel(arr: np.ndarray, channels: int, name: str) -> np.ndarray:
    arr = np.asarray(arr, dtype=np.int64)
    if arr.shape != (channels,):
        raise ShapeError(f"{name} must have one entry per channel ({channels}), "
                         f"got shape {arr.shape}")
    return arr[:, None, None]


def batchnorm_apply(x: IntFeatureMap | FixedFeatureMap, bn_scale: np.ndarray,
                    bn_bias: np.ndarray, diag: Diagnostics | None = None) -> FixedFeatureMap:
    """Folded inference-time affine: y = scale[c] * x + bias[c] in Q16.16.

    Integer inputs multiply exactly (int * Q16.16 raw is already Q16.16);
    fixed inputs use a 64-bit intermediate rounded to nearest even.
    """
    if isinstance(x, IntFeatureMap):
        c = x.values.shape[0]
        scaled = np.multiply(_per_channel(bn_scale, c, "bn_scale"), x.values,
                             dtype=np.int64)
    elif isinstance(x, FixedFeatureMap):
        c = x.raw.shape[0]
        prod = np.multiply(_per_channel(bn_scale, c, "bn_scale"), x.raw,
                           dtype=np.int64)
        scaled = rshift_round_half_even(prod, FRAC_BITS)
    else:
        raise TypeError(f"unsupported input {type(x).__name__}")
    scaled += _per_channel(bn_bias, c, "bn_bias")
    return FixedFeatureMap(saturate_i32(scaled, diag))


def bprelu(x: FixedFeatureMap, alpha: np.ndarray, beta: np.ndarray,
           gamma: np.ndarray, diag: Diagnostics | None = None) -> FixedFeatureMap:
    """PReLU translated to the origin (alpha, gamma): y = PReLU(x - alpha) + gamma."""
    c = x.dims[0]
    # z is itself a Q16.16 intermediate, so it saturates like every other one;
    # this also keeps the slope product within int64.
    z = saturate_i32(np.subtract(x.raw, _per_channel(alpha, c, "alpha"),
                                 dtype=np.int64), diag)
    neg = rshift_round_half_even(np.multiply(_per_channel(beta, c, "beta"), z,
                                             dtype=np.int64), FRAC_BITS)
    np.copyto(neg, z, where=z >= 0)
    neg += _per_channel(gamma, c, "gamma")
    return FixedFeatureMap(saturate_i32(neg, diag))


def _div_round_half_even(num: np.ndarray, den: int) -> np.ndarray:
    q = np.floor_divide(num, den)
    rem2 = (num - q * den) * 2
    up = (rem2 > den) | ((rem2 == den) & ((q & 1) == 1))
    return q + up


def avgpool2d(x: FixedFeatureMap, k: int = 2, stride: int = 2,
              diag: Diagnostics | None = None) -> FixedFeatureMap:
    """Windowed arithmetic mean with round-to-nearest-even division."""
    if stride != k:
        raise ShapeError(f"only stride == k pooling is supported, got k={k} stride={stride}")
    c, h, w = x.dims
    if h % k or w % k:
        raise ShapeError(f"spatial dims ({h}, {w}) not divisible by pool size {k}")
    sums = x.raw.reshape(c, h // k, k, w // k, k).sum(axis=(2, 4), dtype=np.int64)
    return FixedFeatureMap(saturate_i32(_div_round_half_even(sums, k * k), diag))


def global_avgpool(x: FixedFeatureMap) -> np.ndarray:
    """Per-channel mean over all spatial positions, as Q16.16 raw int32."""
    c, h, w = x.dims
    sums = x.raw.sum(axis=(1, 2), dtype=np.int64)
    return saturate_i32(_div_round_half_even(sums, h * w))


def channel_duplicate(x: FixedFeatureMap) -> FixedFeatureMap:
    """Repeat the channel block once: out[c] = in[c mod C]."""
    return FixedFeatureMap(np.concatenate([x.raw, x.raw], axis=0))


def shortcut_add(a: FixedFeatureMap, b: FixedFeatureMap,
                 diag: Diagnostics | None = None) -> FixedFeatureMap:
    if a.dims != b.dims:
        raise ShapeError(f"shortcut shape mismatch: {a.dims} vs {b.dims}")
    return FixedFeatureMap(saturate_i32(np.add(a.raw, b.raw, dtype=np.int64), diag))


def int_to_fixed(x: IntFeatureMap, diag: Diagnostics | None = None) -> FixedFeatureMap:
    """Exact conversion of integer counts into the Q16.16 domain."""
    return FixedFeatureMap(saturate_i32(np.left_shift(x.values, FRAC_BITS,
                                                      dtype=np.int64), diag))


def linear_classifier(features: np.ndarray, weight: np.ndarray, bias: np.ndarray,
                      diag: Diagnostics | None = None) -> np.ndarray:
    """Integer matrix-vector classifier: logits = W @ f + bias.

    W is int8 (classes, C), bias int32.  Accumulation is exact in 64 bits;
    logits saturate to int32 with a diagnostic on overflow.
    """
    features = np.asarray(features, dtype=np.int64)
    weight = np.asarray(weight)
    bias = np.asarray(bias, dtype=np.int64)
    if weight.ndim != 2 or weight.shape[1] != features.shape[0]:
        raise ShapeError(f"classifier weight {weight.shape} does not match "
                         f"{features.shape[0]} features")
    if bias.shape != (weight.shape[0],):
        raise ShapeError(f"classifier bias shape {bias.shape} != ({weight.shape[0]},)")
    logits = weight.astype(np.int64) @ features + bias
    return saturate_i32(logits, diag)
