"""Input-image encoders producing binarized channel planes.

Thermometer encoding is the primary path: a pixel of intensity p becomes
a length-L unary vector with round(p/R) ones filling the top indices,
L = ceil(255/R).  Bit-plane encoding (each pixel as its 8 binary digits,
MSB first) is kept as the comparison baseline, and a naive 3-channel
sign encoder supports the dot-product correlation experiment.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import bitpack
from .bitpack import PackedBitPlane
from .errors import EncodingError


@dataclass(frozen=True)
class ThermometerConfig:
    """Resolution R = intensity represented by each '1'; length L = ceil(255/R)."""

    resolution: int = 8

    def __post_init__(self):
        if not 1 <= self.resolution <= 255:
            raise EncodingError(f"resolution must be in [1, 255], got {self.resolution}")

    @property
    def length(self) -> int:
        return -(-255 // self.resolution)


def _ones_count(p: np.ndarray, resolution: int) -> np.ndarray:
    # round(p / R), half away from zero; p is never negative here
    return (2 * p.astype(np.int64) + resolution) // (2 * resolution)


def thermometer_encode_pixel(p: int, cfg: ThermometerConfig) -> np.ndarray:
    """Encode one intensity as a {0,1} vector of length L.

    Exactly round(p/R) ones, occupying the top of the vector.
    """
    if not 0 <= p <= 255:
        raise EncodingError(f"pixel intensity {p} outside [0, 255]")
    n = int(_ones_count(np.asarray(p), cfg.resolution))
    length = cfg.length
    vec = np.zeros(length, dtype=np.uint8)
    vec[length - n :] = 1
    return vec


def _check_image(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3 or img.shape[0] < 1 or img.shape[1] < 1:
        raise EncodingError(f"expected a (H, W, 3) image, got shape {img.shape}")
    if img.dtype != np.uint8:
        if np.any(img < 0) or np.any(img > 255):
            raise EncodingError("pixel intensities outside [0, 255]")
        img = img.astype(np.uint8)
    return img


def encode_image_thermometer(img: np.ndarray, cfg: ThermometerConfig) -> PackedBitPlane:
    """Encode an 8-bit RGB image to a packed plane of 3*L bipolar channels.

    Channel layout is [R thermometer bits, G, B]; zeros of the thermometer
    vectors map to -1 (bit 0), ones to +1 (bit 1).
    """
    img = _check_image(img)
    h, w, _ = img.shape
    length = cfg.length
    n = _ones_count(img, cfg.resolution)  # (H, W, 3)
    j = np.arange(length)
    # bit set iff index j >= L - n, i.e. the top n positions
    bits = j[None, None, None, :] >= (length - n)[..., None]  # (H, W, 3, L)
    bits = bits.transpose(2, 3, 0, 1).reshape(3 * length, h, w)
    return bitpack.pack_bits(bits.astype(np.uint8))


def encode_image_bitplane(img: np.ndarray) -> PackedBitPlane:
    """Encode each color channel as its 8 binary digits, MSB first (24 channels)."""
    img = _check_image(img)
    h, w, _ = img.shape
    shifts = np.arange(7, -1, -1)
    bits = (img[..., None] >> shifts) & 1  # (H, W, 3, 8)
    bits = bits.transpose(2, 3, 0, 1).reshape(24, h, w)
    return bitpack.pack_bits(bits.astype(np.uint8))


def encode_image_rgb_sign(img: np.ndarray) -> PackedBitPlane:
    """Naive 3-channel bipolar encoding: sign of the intensity around mid-gray."""
    img = _check_image(img)
    bits = (img >= 128).transpose(2, 0, 1)
    return bitpack.pack_bits(bits.astype(np.uint8))


ENCODERS = {
    "thermometer": encode_image_thermometer,
    "bitplane": lambda img, cfg=None: encode_image_bitplane(img),
    "rgb_sign": lambda img, cfg=None: encode_image_rgb_sign(img),
}


def make_encoder(name: str, cfg: ThermometerConfig | None = None) -> Callable[[np.ndarray], PackedBitPlane]:
    if name == "thermometer":
        th = cfg or ThermometerConfig()
        return lambda img: encode_image_thermometer(img, th)
    if name in ENCODERS:
        enc = ENCODERS[name]
        return lambda img: enc(img)
    raise EncodingError(f"unknown encoder {name!r}")


@dataclass(frozen=True)
class CorrelationResult:
    r: float
    n_pairs: int
    degenerate: bool = False


def draw_correlation_kernels(rng: np.random.Generator, channels: int, count: int,
                             kind: str = "gaussian") -> np.ndarray:
    """Seeded random 3x3 kernel sets for the correlation experiment.

    'gaussian' models a conventionally trained (float) layer; 'sign_committed'
    models a layer trained with weight binarization, whose latent weights
    cluster away from zero (random sign times magnitude in [0.8, 1.2]).
    """
    if kind == "gaussian":
        return rng.standard_normal((count, channels, 3, 3))
    if kind == "sign_committed":
        signs = rng.choice([-1.0, 1.0], size=(count, channels, 3, 3))
        return signs * rng.uniform(0.8, 1.2, size=(count, channels, 3, 3))
    raise ValueError(f"unknown kernel kind {kind!r}")


def correlation_experiment(
    images: Sequence[np.ndarray],
    kernels: np.ndarray,
    encoder: Callable[[np.ndarray], PackedBitPlane],
    windows_per_image: int = 50,
    seed: int = 0,
) -> CorrelationResult:
    """Pearson correlation of window dot products before/after binarizing weights.

    Every (window, kernel) pair contributes the point
    (dot(x, w), dot(x, sign(w))) where x is the encoded bipolar window and
    sign keeps zero weights at zero, so a single-tap kernel correlates
    exactly.  At least 1000 pairs are required; a zero-variance axis yields
    a degenerate result instead of a correlation.
    """
    kernels = np.asarray(kernels, dtype=np.float64)
    if kernels.ndim != 4 or kernels.shape[2:] != (3, 3):
        raise ValueError(f"kernels must be (n, C, 3, 3), got {kernels.shape}")
    n_pairs = len(images) * windows_per_image * kernels.shape[0]
    if n_pairs < 1000:
        raise ValueError(f"need >= 1000 (window, kernel) pairs, would sample {n_pairs}")

    rng = np.random.default_rng(seed)
    flat_k = kernels.reshape(kernels.shape[0], -1)
    flat_b = np.sign(flat_k)
    rows = []
    for img in images:
        dense = bitpack.unpack(encoder(np.asarray(img))).astype(np.float64)
        c, h, w = dense.shape
        if c * 9 != flat_k.shape[1]:
            raise ValueError(f"kernel channels {kernels.shape[1]} != encoder channels {c}")
        ys = rng.integers(0, h - 2, windows_per_image)
        xs = rng.integers(0, w - 2, windows_per_image)
        for y, x in zip(ys, xs):
            rows.append(dense[:, y : y + 3, x : x + 3].ravel())
    windows = np.stack(rows)
    d_real = (windows @ flat_k.T).ravel()
    d_bin = (windows @ flat_b.T).ravel()
    if d_real.std() == 0.0 or d_bin.std() == 0.0:
        return CorrelationResult(r=float("nan"), n_pairs=n_pairs, degenerate=True)
    r = float(np.corrcoef(d_real, d_bin)[0, 1])
    return CorrelationResult(r=r, n_pairs=n_pairs)
