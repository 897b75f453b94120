"""Packed-tensor file format (.fbtn): 16-byte header + words.

Header: magic 'FBTN', then C, H, W as little-endian u32; payload is the
plane's words (H * W * ceil(C/64) little-endian u64).
"""

from __future__ import annotations

import numpy as np

from .bitpack import PackedBitPlane, words_per_position
from .errors import BadMagicError, StructureError

MAGIC = b"FBTN"


def save_plane(plane: PackedBitPlane) -> bytes:
    header = MAGIC + b"".join(
        int(v).to_bytes(4, "little") for v in (plane.channels, plane.height, plane.width)
    )
    return header + np.ascontiguousarray(plane.words, dtype="<u8").tobytes()


def save_plane_file(plane: PackedBitPlane, path):
    with open(path, "wb") as fh:
        fh.write(save_plane(plane))


def load_plane(data: bytes) -> PackedBitPlane:
    if len(data) < 16:
        raise StructureError("tensor file shorter than its header", offset=len(data))
    if data[:4] != MAGIC:
        raise BadMagicError(f"bad tensor magic {data[:4]!r}", offset=0)
    c, h, w = (int.from_bytes(data[4 + 4 * i : 8 + 4 * i], "little") for i in range(3))
    if c < 1 or h < 1 or w < 1:
        raise StructureError(f"invalid tensor dims ({c}, {h}, {w})", offset=4)
    wc = words_per_position(c)
    need = 16 + h * w * wc * 8
    if len(data) != need:
        raise StructureError(f"tensor payload is {len(data)} bytes, expected {need}",
                             offset=16)
    words = np.frombuffer(data[16:], dtype="<u8").astype(np.uint64).reshape(h, w, wc)
    try:
        return PackedBitPlane(c, h, w, words)
    except Exception as exc:
        raise StructureError(f"invalid packed plane: {exc}", offset=16) from None


def load_plane_file(path) -> PackedBitPlane:
    with open(path, "rb") as fh:
        return load_plane(fh.read())
