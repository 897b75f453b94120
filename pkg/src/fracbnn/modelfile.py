"""Bit-exact model serialization (.fbm) and the synthetic model generator.

Layout (all little-endian; see docs/format.md for the byte-level contract):

  magic 'FBNN' | version u16 | topology u16 | thermometer R u8 |
  class count u16 | layer count u16 | reserved u8 |
  layer records... | crc32 u32 (IEEE, over all preceding bytes)

Loading validates structure first (each failure names the byte offset and
layer index), then the checksum.  Weight words are stored exactly as the
engine packs them; padding lanes must be zero.
"""

from __future__ import annotations

import zlib

import numpy as np

from . import kernels
from .bitpack import PackedWeights, words_per_position
from .errors import (
    BadMagicError,
    CrcMismatchError,
    PaddingError,
    ShapeError,
    StructureError,
    UnsupportedVersionError,
)
from .fixedpoint import from_float
from .images import synthetic_images
from .kernels import ChannelParams
from .model import (
    CLASSIFIER,
    CONV_UNIT,
    GLOBAL_POOL,
    INPUT_CONV,
    ClassifierParams,
    ConvUnitParams,
    InputConvParams,
    LoadedModel,
    NetworkSpec,
    PoolParams,
    build_fracbnn_resnet20,
)

MAGIC = b"FBNN"
VERSION = 1

TOPOLOGIES = {1: ("fracbnn_resnet20", build_fracbnn_resnet20)}

_KIND_CODES = {INPUT_CONV: 1, CONV_UNIT: 2, GLOBAL_POOL: 3, CLASSIFIER: 4}


def _topology_tag(spec: NetworkSpec) -> int:
    for tag, (_, builder) in TOPOLOGIES.items():
        if builder(spec.resolution, spec.classes) == spec:
            return tag
    raise ShapeError("model spec does not match any serializable topology")


# ----------------------------------------------------------------------
# writing

class _Writer:
    def __init__(self):
        self.chunks = []

    def u8(self, v):
        self.chunks.append(bytes([v]))

    def u16(self, v):
        self.chunks.append(int(v).to_bytes(2, "little"))

    def words(self, arr: np.ndarray):
        self.chunks.append(np.ascontiguousarray(arr, dtype="<u8").tobytes())

    def i32s(self, arr: np.ndarray):
        self.chunks.append(np.ascontiguousarray(arr, dtype="<i4").tobytes())

    def i8s(self, arr: np.ndarray):
        self.chunks.append(np.ascontiguousarray(arr, dtype="i1").tobytes())

    def payload(self) -> bytes:
        return b"".join(self.chunks)


def save(m: LoadedModel) -> bytes:
    """Serialize a model; save -> load is the bitwise identity."""
    spec = m.spec
    w = _Writer()
    w.chunks.append(MAGIC)
    w.u16(VERSION)
    w.u16(_topology_tag(spec))
    w.u8(spec.resolution)
    w.u16(spec.classes)
    w.u16(len(spec.blocks))
    w.u8(0)
    for block, params in zip(spec.blocks, m.layers):
        w.u8(_KIND_CODES[block.kind])
        if block.kind == INPUT_CONV:
            w.u16(block.in_channels)
            w.u16(block.out_channels)
            w.u8(block.kernel)
            w.u8(block.stride)
            w.u8(block.pad)
            w.words(params.weights.words)
            w.i32s(params.bn_scale)
            w.i32s(params.bn_bias)
        elif block.kind == CONV_UNIT:
            w.u16(block.in_channels)
            w.u16(block.out_channels)
            w.u8(block.kernel)
            w.u8(block.stride)
            w.u8(block.pad)
            w.u8((1 if block.has_shortcut else 0) | (2 if block.downsample else 0))
            w.words(params.weights.words)
            p = params.channel
            w.i32s(p.act_scale)
            w.i32s(p.delta)
            w.i32s(p.bprelu_alpha)
            w.i32s(p.bprelu_beta)
            w.i32s(p.bprelu_gamma)
            w.i32s(p.bn_scale)
            w.i32s(p.bn_bias)
        elif block.kind == GLOBAL_POOL:
            pass
        elif block.kind == CLASSIFIER:
            w.u16(block.in_channels)
            w.u16(spec.classes)
            w.i8s(params.weight)
            w.i32s(params.bias)
    payload = w.payload()
    return payload + zlib.crc32(payload).to_bytes(4, "little")


def save_file(m: LoadedModel, path):
    with open(path, "wb") as fh:
        fh.write(save(m))


# ----------------------------------------------------------------------
# loading

class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0
        self.layer = None  # layer index for error context

    def _take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise StructureError(f"truncated stream reading {what}",
                                 offset=self.pos, layer=self.layer)
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u8(self, what: str) -> int:
        return self._take(1, what)[0]

    def u16(self, what: str) -> int:
        return int.from_bytes(self._take(2, what), "little")

    def words(self, count: int, what: str) -> np.ndarray:
        raw = self._take(count * 8, what)
        return np.frombuffer(raw, dtype="<u8").astype(np.uint64)

    def i32s(self, count: int, what: str) -> np.ndarray:
        raw = self._take(count * 4, what)
        return np.frombuffer(raw, dtype="<i4").astype(np.int32)

    def i8s(self, count: int, what: str) -> np.ndarray:
        raw = self._take(count, what)
        return np.frombuffer(raw, dtype="i1").astype(np.int8)


def _expect(cond: bool, message: str, r: _Reader):
    if not cond:
        raise StructureError(message, offset=r.pos, layer=r.layer)


def _check_padding(words: np.ndarray, channels: int, r: _Reader):
    tail = channels % 64
    if tail:
        pad_mask = np.uint64(~((1 << tail) - 1) & 0xFFFFFFFFFFFFFFFF)
        if np.any(words[..., -1] & pad_mask):
            raise PaddingError("nonzero bits in weight padding lanes",
                               offset=r.pos, layer=r.layer)


def _read_weights(r: _Reader, block) -> PackedWeights:
    wc = words_per_position(block.in_channels)
    count = block.out_channels * block.kernel * block.kernel * wc
    words = r.words(count, "weight words").reshape(
        block.out_channels, block.kernel, block.kernel, wc)
    _check_padding(words, block.in_channels, r)
    return PackedWeights(block.in_channels, block.kernel, words)


def load(data: bytes) -> LoadedModel:
    """Parse and fully validate a serialized model."""
    r = _Reader(data)
    magic = r._take(4, "magic")
    if magic != MAGIC:
        raise BadMagicError(f"bad magic {magic!r}", offset=0)
    version = r.u16("version")
    if version != VERSION:
        raise UnsupportedVersionError(f"unsupported format version {version}", offset=4)
    topology = r.u16("topology tag")
    if topology not in TOPOLOGIES:
        raise StructureError(f"unknown topology tag {topology}", offset=6)
    resolution = r.u8("thermometer resolution")
    classes = r.u16("class count")
    layer_count = r.u16("layer count")
    r.u8("reserved byte")

    try:
        spec = TOPOLOGIES[topology][1](resolution, classes)
    except Exception as exc:
        raise StructureError(f"invalid topology parameters: {exc}", offset=8) from None
    _expect(layer_count == len(spec.blocks),
            f"layer count {layer_count} != topology's {len(spec.blocks)}", r)

    layers = []
    for i, block in enumerate(spec.blocks):
        r.layer = i
        kind = r.u8("layer kind")
        _expect(kind == _KIND_CODES[block.kind],
                f"layer kind {kind} != expected {_KIND_CODES[block.kind]}", r)
        if block.kind == INPUT_CONV:
            _expect(r.u16("c_in") == block.in_channels, "input channel mismatch", r)
            _expect(r.u16("c_out") == block.out_channels, "output channel mismatch", r)
            _expect(r.u8("kernel") == block.kernel, "kernel size mismatch", r)
            _expect(r.u8("stride") == block.stride, "stride mismatch", r)
            _expect(r.u8("pad") == block.pad, "pad mismatch", r)
            weights = _read_weights(r, block)
            layers.append(InputConvParams(
                weights,
                r.i32s(block.out_channels, "bn_scale"),
                r.i32s(block.out_channels, "bn_bias"),
            ))
        elif block.kind == CONV_UNIT:
            _expect(r.u16("c_in") == block.in_channels, "input channel mismatch", r)
            _expect(r.u16("c_out") == block.out_channels, "output channel mismatch", r)
            _expect(r.u8("kernel") == block.kernel, "kernel size mismatch", r)
            _expect(r.u8("stride") == block.stride, "stride mismatch", r)
            _expect(r.u8("pad") == block.pad, "pad mismatch", r)
            flags = r.u8("flags")
            expected = (1 if block.has_shortcut else 0) | (2 if block.downsample else 0)
            _expect(flags == expected, f"flags {flags} != expected {expected}", r)
            weights = _read_weights(r, block)
            act_scale = r.i32s(block.in_channels, "act_scale")
            delta = r.i32s(block.out_channels, "delta")
            alpha = r.i32s(block.out_channels, "alpha")
            beta = r.i32s(block.out_channels, "beta")
            gamma = r.i32s(block.out_channels, "gamma")
            bn_scale = r.i32s(block.out_channels, "bn_scale")
            bn_bias = r.i32s(block.out_channels, "bn_bias")
            _expect(bool(np.all(act_scale > 0)), "act_scale must be positive", r)
            layers.append(ConvUnitParams(weights, ChannelParams(
                delta=delta, bn_scale=bn_scale, bn_bias=bn_bias,
                bprelu_alpha=alpha, bprelu_beta=beta, bprelu_gamma=gamma,
                act_scale=act_scale)))
        elif block.kind == GLOBAL_POOL:
            layers.append(PoolParams())
        elif block.kind == CLASSIFIER:
            feats = r.u16("feature count")
            _expect(feats == block.in_channels, "classifier feature mismatch", r)
            ncls = r.u16("class count")
            _expect(ncls == classes, "classifier class mismatch", r)
            weight = r.i8s(feats * ncls, "classifier weights").reshape(ncls, feats)
            bias = r.i32s(ncls, "classifier bias")
            layers.append(ClassifierParams(weight, bias))
    r.layer = None
    crc_stored = int.from_bytes(r._take(4, "crc32"), "little")
    _expect(r.pos == len(data), f"{len(data) - r.pos} trailing bytes", r)
    crc_actual = zlib.crc32(data[:-4])
    if crc_stored != crc_actual:
        raise CrcMismatchError(
            f"crc mismatch: stored {crc_stored:#010x}, computed {crc_actual:#010x}",
            offset=len(data) - 4)
    try:
        return LoadedModel(spec, tuple(layers))
    except ShapeError as exc:
        raise StructureError(str(exc), offset=len(data)) from None


def load_file(path) -> LoadedModel:
    with open(path, "rb") as fh:
        return load(fh.read())


# ----------------------------------------------------------------------
# synthetic models

def _bipolar(rng: np.random.Generator, shape) -> np.ndarray:
    return (rng.integers(0, 2, size=shape) * 2 - 1).astype(np.int8)


def generate_synthetic(seed: int, topology: str = "fracbnn_resnet20",
                       resolution: int = 8, classes: int = 10,
                       calibration_images: int = 4) -> LoadedModel:
    """Deterministic pseudo-random model that is valid under all invariants.

    Gating thresholds are calibrated per channel to the median base value
    observed on a seeded calibration set, so measured update sparsity lands
    near one half.  Identical seeds produce byte-identical files.
    """
    builders = {name: b for _, (name, b) in TOPOLOGIES.items()}
    if topology not in builders:
        raise ValueError(f"unsupported topology {topology!r}")
    spec = builders[topology](resolution, classes)
    rng = np.random.default_rng(seed)

    # Parameter draws first, in a fixed order, so calibration does not
    # disturb the stream.
    layers: list = []
    for block in spec.blocks:
        if block.kind == INPUT_CONV:
            dense = _bipolar(rng, (block.out_channels, block.in_channels,
                                   block.kernel, block.kernel))
            fan_in = (block.kernel ** 2) * block.in_channels
            scale = rng.uniform(0.8, 1.2, block.out_channels) / np.sqrt(fan_in)
            bias = rng.uniform(-0.25, 0.25, block.out_channels)
            layers.append(InputConvParams(PackedWeights.from_dense(dense),
                                          from_float(scale), from_float(bias)))
        elif block.kind == CONV_UNIT:
            dense = _bipolar(rng, (block.out_channels, block.in_channels,
                                   block.kernel, block.kernel))
            fan_in = (block.kernel ** 2) * block.in_channels
            act_scale = from_float(rng.uniform(0.45, 0.7, block.in_channels))
            # conv output magnitude ~ 2 * 1.8 * sqrt(fan_in); scale back to O(1)
            bn_scale = from_float(rng.uniform(0.8, 1.2, block.out_channels)
                                  / (3.6 * np.sqrt(fan_in)))
            bn_bias = from_float(rng.uniform(-0.3, 0.3, block.out_channels))
            alpha = from_float(rng.uniform(-0.3, 0.3, block.out_channels))
            beta = from_float(rng.uniform(0.05, 0.95, block.out_channels))
            gamma = from_float(rng.uniform(-0.3, 0.3, block.out_channels))
            delta = np.zeros(block.out_channels, dtype=np.int32)  # calibrated below
            layers.append(ConvUnitParams(PackedWeights.from_dense(dense), ChannelParams(
                delta=delta, bn_scale=bn_scale, bn_bias=bn_bias,
                bprelu_alpha=alpha, bprelu_beta=beta, bprelu_gamma=gamma,
                act_scale=act_scale)))
        elif block.kind == GLOBAL_POOL:
            layers.append(PoolParams())
        elif block.kind == CLASSIFIER:
            weight = rng.integers(-31, 32, (classes, block.in_channels)).astype(np.int8)
            bias = rng.integers(-4 << 16, 4 << 16, classes).astype(np.int32)
            layers.append(ClassifierParams(weight, bias))

    _calibrate_deltas(spec, layers, seed, calibration_images)
    return LoadedModel(spec, tuple(layers))


def _calibrate_deltas(spec: NetworkSpec, layers: list, seed: int, n_images: int):
    """Sequential per-layer calibration: set each unit's thresholds to the
    channelwise median of its base-phase values, then continue downstream
    with the gates in place."""
    from .encoding import ThermometerConfig, encode_image_thermometer

    imgs = synthetic_images(seed + 1, n_images, spec.height, spec.width)
    cfg = ThermometerConfig(spec.resolution)
    states = [encode_image_thermometer(img, cfg) for img in imgs]
    fixed = [None] * n_images
    for block, params in zip(spec.blocks, layers):
        if block.kind == INPUT_CONV:
            for i, plane in enumerate(states):
                conv = kernels.binary_conv2d(plane, params.weights,
                                             stride=block.stride, pad=block.pad)
                fixed[i] = kernels.batchnorm_apply(conv, params.bn_scale, params.bn_bias)
        elif block.kind == CONV_UNIT:
            p = params.channel
            acts = [kernels.quantize2bit(f, p.act_scale) for f in fixed]
            bases = [kernels.binary_conv2d(a.msb, params.weights,
                                           stride=block.stride, pad=block.pad)
                     for a in acts]
            pooled = np.concatenate([b.values.reshape(b.dims[0], -1) for b in bases],
                                    axis=1)
            p.delta[:] = np.median(pooled, axis=1).astype(np.int32)
            for i, act in enumerate(acts):
                res = kernels.frac_conv2d(act, params.weights, p.delta,
                                          stride=block.stride, pad=block.pad)
                y = kernels.bprelu(kernels.int_to_fixed(res.output),
                                   p.bprelu_alpha, p.bprelu_beta, p.bprelu_gamma)
                if block.has_shortcut:
                    sc = fixed[i]
                    if block.downsample:
                        sc = kernels.channel_duplicate(kernels.avgpool2d(sc, 2, 2))
                    y = kernels.shortcut_add(y, sc)
                fixed[i] = kernels.batchnorm_apply(y, p.bn_scale, p.bn_bias)
        else:
            break
