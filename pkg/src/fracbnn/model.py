"""Network graph definition and the forward executor.

The reference topology is a CIFAR-scale residual network of gated binary
conv units: an always-binary input layer over thermometer channels, three
stages of units at 16/32/64 channels, global average pooling and an
integer classifier.  Each unit runs
quantize -> gated conv -> BPReLU -> shortcut add -> BatchNorm, with
stride-2 units downsampling their shortcut by 2x2 average pooling plus
channel duplication.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .bitpack import PackedWeights
from .encoding import ThermometerConfig, encode_image_thermometer
from .errors import ShapeError
from .fixedpoint import Diagnostics
from .kernels import ChannelParams, FixedFeatureMap

INPUT_CONV = "input_conv"
CONV_UNIT = "conv_unit"
GLOBAL_POOL = "global_pool"
CLASSIFIER = "classifier"


@dataclass(frozen=True)
class BlockSpec:
    kind: str
    in_channels: int
    out_channels: int
    kernel: int = 3
    stride: int = 1
    pad: int = 1
    has_shortcut: bool = False
    downsample: bool = False
    name: str = ""

    def __post_init__(self):
        if self.downsample:
            if self.stride != 2 or self.out_channels != 2 * self.in_channels:
                raise ShapeError(
                    f"{self.name or self.kind}: downsample requires stride 2 and "
                    f"doubled channels, got stride {self.stride}, "
                    f"{self.in_channels}->{self.out_channels}")


@dataclass(frozen=True)
class NetworkSpec:
    blocks: tuple[BlockSpec, ...]
    height: int
    width: int
    resolution: int
    classes: int

    def __post_init__(self):
        self.shape_trace()  # validates composition

    @property
    def input_channels(self) -> int:
        return 3 * ThermometerConfig(self.resolution).length

    def shape_trace(self):
        """Per-block output shapes; raises if consecutive blocks do not compose."""
        if not self.blocks or self.blocks[0].kind != INPUT_CONV:
            raise ShapeError("network must start with the input conv layer")
        if self.blocks[-1].kind != CLASSIFIER:
            raise ShapeError("network must end with the classifier")
        c, h, w = self.input_channels, self.height, self.width
        trace = []
        for i, b in enumerate(self.blocks):
            if b.kind in (INPUT_CONV, CONV_UNIT):
                if i > 0 and b.kind == INPUT_CONV:
                    raise ShapeError("input conv layer must be first")
                if b.in_channels != c:
                    raise ShapeError(f"{b.name or b.kind}: expects {b.in_channels} "
                                     f"channels, gets {c}")
                h = (h + 2 * b.pad - b.kernel) // b.stride + 1
                w = (w + 2 * b.pad - b.kernel) // b.stride + 1
                if h < 1 or w < 1:
                    raise ShapeError(f"{b.name or b.kind}: empty spatial output")
                c = b.out_channels
                trace.append((c, h, w))
            elif b.kind == GLOBAL_POOL:
                trace.append((c,))
                h = w = 1
            elif b.kind == CLASSIFIER:
                if b.in_channels != c:
                    raise ShapeError(f"classifier expects {b.in_channels} features, gets {c}")
                trace.append((self.classes,))
            else:
                raise ShapeError(f"unknown block kind {b.kind!r}")
        return trace


def build_fracbnn_resnet20(resolution: int = 8, classes: int = 10) -> NetworkSpec:
    """The reference 32x32 topology: 18 gated 3x3 conv units in three stages.

    Matches the classic 20-layer residual CIFAR network weight-for-weight
    (two conv units per residual block, 3 blocks per stage at 16/32/64
    channels), with every conv wrapped in its own shortcut unit and the
    input layer binarized over the thermometer channels.
    """
    cfg = ThermometerConfig(resolution)
    blocks = [BlockSpec(INPUT_CONV, 3 * cfg.length, 16, name="input")]
    widths = (16, 32, 64)
    for s, width in enumerate(widths):
        for b in range(3):
            for u in range(2):
                first = s > 0 and b == 0 and u == 0
                blocks.append(BlockSpec(
                    CONV_UNIT,
                    in_channels=width // 2 if first else width,
                    out_channels=width,
                    stride=2 if first else 1,
                    has_shortcut=True,
                    downsample=first,
                    name=f"stage{s + 1}.block{b + 1}.conv{u + 1}",
                ))
    blocks.append(BlockSpec(GLOBAL_POOL, widths[-1], widths[-1], name="pool"))
    blocks.append(BlockSpec(CLASSIFIER, widths[-1], classes, name="classifier"))
    return NetworkSpec(tuple(blocks), height=32, width=32,
                       resolution=resolution, classes=classes)


# ----------------------------------------------------------------------
# loaded parameter containers (serialization lives in modelfile)

@dataclass(frozen=True)
class InputConvParams:
    weights: PackedWeights
    bn_scale: np.ndarray
    bn_bias: np.ndarray


@dataclass(frozen=True)
class ConvUnitParams:
    weights: PackedWeights
    channel: ChannelParams


@dataclass(frozen=True)
class PoolParams:
    pass


@dataclass(frozen=True)
class ClassifierParams:
    weight: np.ndarray  # int8 (classes, features)
    bias: np.ndarray    # int32 (classes,)


@dataclass(frozen=True)
class LoadedModel:
    spec: NetworkSpec
    layers: tuple

    def __post_init__(self):
        if len(self.layers) != len(self.spec.blocks):
            raise ShapeError(f"{len(self.layers)} parameter records for "
                             f"{len(self.spec.blocks)} blocks")
        for block, params in zip(self.spec.blocks, self.layers):
            self._check_layer(block, params)

    @staticmethod
    def _check_layer(block: BlockSpec, params):
        name = block.name or block.kind
        if block.kind == INPUT_CONV:
            ok = (isinstance(params, InputConvParams)
                  and params.weights.c_in == block.in_channels
                  and params.weights.c_out == block.out_channels
                  and params.weights.kernel == block.kernel
                  and params.bn_scale.shape == (block.out_channels,)
                  and params.bn_bias.shape == (block.out_channels,))
        elif block.kind == CONV_UNIT:
            ok = (isinstance(params, ConvUnitParams)
                  and params.weights.c_in == block.in_channels
                  and params.weights.c_out == block.out_channels
                  and params.weights.kernel == block.kernel
                  and params.channel.delta.shape == (block.out_channels,)
                  and params.channel.act_scale.shape == (block.in_channels,))
        elif block.kind == GLOBAL_POOL:
            ok = isinstance(params, PoolParams)
        elif block.kind == CLASSIFIER:
            ok = (isinstance(params, ClassifierParams)
                  and params.weight.shape[1] == block.in_channels)
        else:
            ok = False
        if not ok:
            raise ShapeError(f"model does not match network spec at layer {name!r}")


# ----------------------------------------------------------------------
# instrumented forward

@dataclass(frozen=True)
class LayerStats:
    name: str
    kind: str
    base_bmacs: int
    update_bmacs_max: int = 0
    update_bmacs_done: int = 0
    sparsity: float | None = None


@dataclass(frozen=True)
class RunStats:
    layers: tuple[LayerStats, ...]
    saturations: int

    @property
    def mean_sparsity(self) -> float:
        vals = [s.sparsity for s in self.layers if s.sparsity is not None]
        return float(np.mean(vals)) if vals else 1.0

    @property
    def effective_bitwidth(self) -> float:
        """1 + (1 - mean update sparsity): 1.0 all gates closed, 2.0 all open."""
        return 1.0 + (1.0 - self.mean_sparsity)

    @property
    def base_bmacs(self) -> int:
        return sum(s.base_bmacs for s in self.layers)

    @property
    def update_bmacs_done(self) -> int:
        return sum(s.update_bmacs_done for s in self.layers)

    def to_dict(self) -> dict:
        return {
            "schema": "fracbnn.run_stats/1",
            "effective_bitwidth": round(self.effective_bitwidth, 6),
            "mean_sparsity": round(self.mean_sparsity, 6),
            "base_bmacs": self.base_bmacs,
            "update_bmacs_done": self.update_bmacs_done,
            "saturations": self.saturations,
            "layers": [
                {
                    "name": s.name,
                    "kind": s.kind,
                    "base_bmacs": s.base_bmacs,
                    "update_bmacs_max": s.update_bmacs_max,
                    "update_bmacs_done": s.update_bmacs_done,
                    "sparsity": None if s.sparsity is None else round(s.sparsity, 6),
                }
                for s in self.layers
            ],
        }


@dataclass(frozen=True)
class ForwardResult:
    logits: np.ndarray
    stats: RunStats

    @property
    def predicted_class(self) -> int:
        return int(np.argmax(self.logits))


def forward(model: LoadedModel, image: np.ndarray, threads: int = 1,
            timings: list | None = None) -> ForwardResult:
    """Run one image through the engine; returns logits plus run statistics.

    Logits are Q16.16-scaled class scores (the classifier consumes the raw
    fixed-point pooled features).  Deterministic for any thread count.
    When `timings` is a list, (layer name, seconds) pairs are appended.
    """
    from time import perf_counter

    spec = model.spec
    image = np.asarray(image)
    if image.shape != (spec.height, spec.width, 3):
        raise ShapeError(f"image shape {image.shape} does not match network input "
                         f"({spec.height}, {spec.width}, 3)")
    diag = Diagnostics()
    cfg = ThermometerConfig(spec.resolution)
    plane = encode_image_thermometer(image, cfg)

    stats: list[LayerStats] = []
    fixed: FixedFeatureMap | None = None
    features = None
    logits = None
    for block, params in zip(spec.blocks, model.layers):
        name = block.name or block.kind
        t0 = perf_counter() if timings is not None else 0.0
        if block.kind == INPUT_CONV:
            conv = kernels.binary_conv2d(plane, params.weights, stride=block.stride,
                                         pad=block.pad, threads=threads)
            fixed = kernels.batchnorm_apply(conv, params.bn_scale, params.bn_bias, diag)
            nominal = (block.kernel ** 2) * block.in_channels * int(np.prod(conv.dims))
            stats.append(LayerStats(name, block.kind, base_bmacs=nominal))
        elif block.kind == CONV_UNIT:
            p = params.channel
            act = kernels.quantize2bit(fixed, p.act_scale)
            res = kernels.frac_conv2d(act, params.weights, p.delta,
                                      stride=block.stride, pad=block.pad, threads=threads)
            y = kernels.bprelu(kernels.int_to_fixed(res.output, diag),
                               p.bprelu_alpha, p.bprelu_beta, p.bprelu_gamma, diag)
            if block.has_shortcut:
                sc = fixed
                if block.downsample:
                    sc = kernels.channel_duplicate(kernels.avgpool2d(sc, 2, 2, diag))
                y = kernels.shortcut_add(y, sc, diag)
            fixed = kernels.batchnorm_apply(y, p.bn_scale, p.bn_bias, diag)
            per_elem = (block.kernel ** 2) * block.in_channels
            n_out = int(np.prod(res.output.dims))
            stats.append(LayerStats(
                name, block.kind,
                base_bmacs=per_elem * n_out,
                update_bmacs_max=per_elem * n_out,
                update_bmacs_done=per_elem * res.updates_done,
                sparsity=res.sparsity,
            ))
        elif block.kind == GLOBAL_POOL:
            features = kernels.global_avgpool(fixed)
            stats.append(LayerStats(name, block.kind, base_bmacs=0))
        elif block.kind == CLASSIFIER:
            logits = kernels.linear_classifier(features, params.weight, params.bias, diag)
            stats.append(LayerStats(name, block.kind, base_bmacs=0))
        if timings is not None:
            timings.append((name, perf_counter() - t0))
    return ForwardResult(logits, RunStats(tuple(stats), diag.saturations))


# ----------------------------------------------------------------------
# static op/parameter accounting

@dataclass(frozen=True)
class OpCounts:
    """Nominal operation and parameter counts (one BMAC per XNOR+popcount lane,
    padded taps included, matching standard MAC accounting)."""

    params_bits: int          # binary conv weight bits, input layer included
    params_classifier_bits: int
    bmacs_input: int          # always-executed input layer BMACs
    bmacs_base: int           # base (MSB) phase of all gated conv units
    bmacs_update_max: int     # update (LSB) phase with every gate open
    imacs: int                # integer classifier MACs

    def total_bmacs(self, sparsity: float) -> float:
        """All binary MACs executed per image at a given update sparsity.

        Includes the input layer on top of the gated units' base phase, so
        sparsity 1.0 gives the always-executed work and 0.0 the full 2-bit
        cost.
        """
        return self.bmacs_input + self.bmacs_base + (1.0 - sparsity) * self.bmacs_update_max


def count_ops(spec: NetworkSpec) -> OpCounts:
    params_bits = 0
    params_cls = 0
    bmacs_input = 0
    bmacs_base = 0
    bmacs_update = 0
    imacs = 0
    c, h, w = spec.input_channels, spec.height, spec.width
    for block in spec.blocks:
        if block.kind in (INPUT_CONV, CONV_UNIT):
            h = (h + 2 * block.pad - block.kernel) // block.stride + 1
            w = (w + 2 * block.pad - block.kernel) // block.stride + 1
            weight_bits = (block.kernel ** 2) * block.in_channels * block.out_channels
            nominal = weight_bits * h * w
            params_bits += weight_bits
            if block.kind == INPUT_CONV:
                bmacs_input += nominal
            else:
                bmacs_base += nominal
                bmacs_update += nominal
            c = block.out_channels
        elif block.kind == CLASSIFIER:
            imacs += c * spec.classes
            params_cls += 8 * c * spec.classes + 32 * spec.classes
    return OpCounts(params_bits, params_cls, bmacs_input, bmacs_base, bmacs_update, imacs)
