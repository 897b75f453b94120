"""Packed bipolar tensors and XNOR/popcount dot-product primitives.

A bipolar tensor holds only the values -1 and +1.  We store it packed
along the channel dimension: at each spatial position (h, w), word k
holds channels [64k, 64k + 64), LSB first, with bit 1 encoding +1 and
bit 0 encoding -1.  Bits at lane indices >= C in the last word of each
position are always zero; the dot-product kernels rely on that.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError

WORD_BITS = 64


def words_per_position(channels: int) -> int:
    return -(-channels // WORD_BITS)


class PackedBitPlane:
    """Bipolar (C, H, W) tensor packed channelwise into 64-bit words.

    `words` has shape (H, W, ceil(C/64)) and dtype uint64.  Instances are
    treated as immutable after construction; any number of readers may use
    one concurrently.
    """

    __slots__ = ("channels", "height", "width", "words")

    def __init__(self, channels: int, height: int, width: int, words: np.ndarray):
        wc = words_per_position(channels)
        if channels < 1 or height < 1 or width < 1:
            raise ShapeError(f"invalid plane dims ({channels}, {height}, {width})")
        if words.shape != (height, width, wc) or words.dtype != np.uint64:
            raise ShapeError(
                f"words array must be uint64 of shape {(height, width, wc)}, "
                f"got {words.dtype} {words.shape}"
            )
        tail = channels % WORD_BITS
        if tail:
            pad_mask = np.uint64(~((1 << tail) - 1) & 0xFFFFFFFFFFFFFFFF)
            if np.any(words[:, :, -1] & pad_mask):
                raise ShapeError("padding lanes above the channel count must be zero")
        self.channels = channels
        self.height = height
        self.width = width
        self.words = np.ascontiguousarray(words)

    @property
    def dims(self) -> tuple[int, int, int]:
        return (self.channels, self.height, self.width)

    @property
    def words_per_position(self) -> int:
        return self.words.shape[2]

    def __eq__(self, other):
        return (
            isinstance(other, PackedBitPlane)
            and self.dims == other.dims
            and bool(np.array_equal(self.words, other.words))
        )

    def __repr__(self):
        return f"PackedBitPlane(C={self.channels}, H={self.height}, W={self.width})"


def bits_to_words(bits: np.ndarray) -> np.ndarray:
    """(C, H, W) channel bits {0,1} -> (H, W, ceil(C/64)) uint64 words,
    LSB-first lanes, padding lanes zero."""
    c, h, w = bits.shape
    hwc = np.ascontiguousarray(bits.transpose(1, 2, 0).astype(np.uint8))
    packed8 = np.packbits(hwc, axis=-1, bitorder="little")
    wc = words_per_position(c)
    if packed8.shape[-1] != wc * 8:
        padded = np.zeros((h, w, wc * 8), dtype=np.uint8)
        padded[:, :, : packed8.shape[-1]] = packed8
        packed8 = padded
    return np.ascontiguousarray(packed8).view("<u8").reshape(h, w, wc)


def pack_bits(bits: np.ndarray) -> PackedBitPlane:
    """Pack a (C, H, W) array of {0, 1} channel bits (1 encodes +1)."""
    c, h, w = bits.shape
    return PackedBitPlane(c, h, w, bits_to_words(bits))


def pack(values: np.ndarray, dims: tuple[int, int, int] | None = None) -> PackedBitPlane:
    """Pack a bipolar (C, H, W) tensor; every element must be -1 or +1."""
    values = np.asarray(values)
    if values.ndim != 3:
        raise ShapeError(f"expected a (C, H, W) tensor, got shape {values.shape}")
    if dims is not None and tuple(values.shape) != tuple(dims):
        raise ShapeError(f"dims {dims} do not match value shape {values.shape}")
    bad = (values != 1) & (values != -1)
    if np.any(bad):
        idx = tuple(int(i) for i in np.argwhere(bad)[0])
        raise ValueError(f"non-bipolar element {values[idx]} at index {idx}")
    return pack_bits((values == 1))


def unpack(plane: PackedBitPlane) -> np.ndarray:
    """Exact inverse of pack: returns an int8 (C, H, W) tensor of +-1."""
    h, w = plane.height, plane.width
    as_bytes = plane.words.reshape(h, w, -1).view(np.uint8)
    bits = np.unpackbits(as_bytes, axis=-1, bitorder="little", count=plane.channels)
    return (bits.astype(np.int8) * 2 - 1).transpose(2, 0, 1)


def lane_mask(valid: int) -> int:
    if not 1 <= valid <= WORD_BITS:
        raise ValueError(f"valid lane count must be in [1, 64], got {valid}")
    return (1 << valid) - 1


def dot_words(a: int, b: int, valid: int) -> int:
    """Bipolar dot product of two packed words over `valid` lanes.

    Both words must have zero bits at lanes >= valid.  Returns
    2 * popcount(XNOR(a, b) & mask) - valid, which lies in
    [-valid, +valid] and has the parity of valid.
    """
    mask = lane_mask(valid)
    matches = ((~(a ^ b)) & mask).bit_count()
    return 2 * matches - valid


def dot_planes_at(x: PackedBitPlane, w: PackedBitPlane, position: tuple[int, int]) -> int:
    """Channelwise dot product of two planes at one shared spatial position."""
    if x.channels != w.channels:
        raise ShapeError(f"channel mismatch: {x.channels} vs {w.channels}")
    h, wcol = position
    # Padding lanes are zero in both planes, so XOR never sets them and no
    # per-word mask is needed.
    xor = x.words[h, wcol] ^ w.words[h, wcol]
    mismatches = int(np.bitwise_count(xor).sum())
    return x.channels - 2 * mismatches


@dataclass(frozen=True)
class PackedWeights:
    """A per-output-channel set of packed kernel planes.

    `words` has shape (C_out, k, k, ceil(C_in/64)); each output channel's
    slice is the packed (C_in, k, k) plane of that filter.
    """

    c_in: int
    kernel: int
    words: np.ndarray

    def __post_init__(self):
        co, kh, kw, wc = self.words.shape
        if kh != self.kernel or kw != self.kernel or wc != words_per_position(self.c_in):
            raise ShapeError(f"weight word array shape {self.words.shape} inconsistent")
        if self.words.dtype != np.uint64:
            raise ShapeError("weight words must be uint64")

    @property
    def c_out(self) -> int:
        return self.words.shape[0]

    @classmethod
    def from_planes(cls, planes: list[PackedBitPlane]) -> "PackedWeights":
        if not planes:
            raise ShapeError("empty weight plane list")
        c_in, k, k2 = planes[0].dims
        if k != k2:
            raise ShapeError("weight planes must be square")
        for p in planes:
            if p.dims != (c_in, k, k):
                raise ShapeError("weight planes must share dims")
        words = np.stack([p.words for p in planes])
        return cls(c_in, k, np.ascontiguousarray(words))

    @classmethod
    def from_dense(cls, values: np.ndarray) -> "PackedWeights":
        """Pack a dense bipolar (C_out, C_in, k, k) weight tensor."""
        if values.ndim != 4 or values.shape[2] != values.shape[3]:
            raise ShapeError(f"expected (C_out, C_in, k, k), got {values.shape}")
        return cls.from_planes([pack(values[i]) for i in range(values.shape[0])])

    def plane(self, oc: int) -> PackedBitPlane:
        return PackedBitPlane(self.c_in, self.kernel, self.kernel, self.words[oc].copy())
