"""Image I/O (binary PPM only) and deterministic synthetic test images."""

from __future__ import annotations

import numpy as np

from .errors import FormatError


def read_ppm(data: bytes) -> np.ndarray:
    """Parse a binary P6 PPM with maxval 255 into a (H, W, 3) uint8 array."""
    pos = 0

    def skip_separators(pos: int) -> int:
        while pos < len(data):
            ch = data[pos : pos + 1]
            if ch in b" \t\r\n":
                pos += 1
            elif ch == b"#":
                while pos < len(data) and data[pos : pos + 1] != b"\n":
                    pos += 1
            else:
                break
        return pos

    def read_token(pos: int) -> tuple[bytes, int]:
        pos = skip_separators(pos)
        start = pos
        while pos < len(data) and data[pos : pos + 1] not in b" \t\r\n#":
            pos += 1
        if start == pos:
            raise FormatError("unexpected end of PPM header", offset=start)
        return data[start:pos], pos

    magic, pos = read_token(pos)
    if magic != b"P6":
        raise FormatError(f"not a binary PPM (P6), magic {magic!r}", offset=0)
    fields = []
    for _ in range(3):
        tok, pos = read_token(pos)
        try:
            fields.append(int(tok))
        except ValueError:
            raise FormatError(f"non-numeric PPM header field {tok!r}", offset=pos) from None
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise FormatError(f"invalid PPM dimensions {width}x{height}", offset=pos)
    if maxval != 255:
        raise FormatError(f"unsupported PPM maxval {maxval} (must be 255)", offset=pos)
    if pos >= len(data) or data[pos : pos + 1] not in b" \t\r\n":
        raise FormatError("missing whitespace after PPM maxval", offset=pos)
    pos += 1
    need = width * height * 3
    raw = data[pos : pos + need]
    if len(raw) != need:
        raise FormatError(
            f"truncated PPM payload: need {need} bytes, have {len(raw)}", offset=pos
        )
    return np.frombuffer(raw, dtype=np.uint8).reshape(height, width, 3)


def read_ppm_file(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return read_ppm(fh.read())


def write_ppm(img: np.ndarray) -> bytes:
    img = np.asarray(img, dtype=np.uint8)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) image, got {img.shape}")
    h, w, _ = img.shape
    return b"P6\n%d %d\n255\n" % (w, h) + img.tobytes()


def write_ppm_file(img: np.ndarray, path):
    with open(path, "wb") as fh:
        fh.write(write_ppm(img))


def synthetic_images(seed: int, count: int, height: int = 32, width: int = 32) -> np.ndarray:
    """Deterministic natural-looking test images: smooth shared luminance
    plus small per-color chroma and pixel noise, quantized to [0, 255].

    Returns (count, H, W, 3) uint8.
    """
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:height, 0:width]
    out = np.empty((count, height, width, 3), dtype=np.uint8)
    for i in range(count):
        lum = rng.uniform(0.25, 0.75)
        for _ in range(3):
            fy = rng.uniform(0.2, 1.8)
            fx = rng.uniform(0.2, 1.8)
            amp = rng.uniform(0.08, 0.28)
            lum = lum + amp * np.sin(2 * np.pi * fy * yy / height + rng.uniform(0, 2 * np.pi)) \
                            * np.cos(2 * np.pi * fx * xx / width + rng.uniform(0, 2 * np.pi))
        for c in range(3):
            chan = lum + rng.uniform(-0.08, 0.08) + 0.02 * rng.standard_normal((height, width))
            out[i, :, :, c] = np.clip(np.round(chan * 255), 0, 255).astype(np.uint8)
    return out
