"""Exception types shared across the engine.

The CLI maps these onto its exit-code contract: IO errors -> 1,
format errors -> 2, shape errors -> 3.
"""


class FracbnnError(Exception):
    """Base class for all engine errors."""


class ShapeError(FracbnnError):
    """Tensor or parameter dimensions do not compose."""


class EncodingError(FracbnnError):
    """Invalid input to an image encoder (out-of-range pixel, bad config)."""


class FormatError(FracbnnError):
    """A serialized artifact (.fbm, .fbtn, .ppm) is malformed.

    Carries the byte offset of the failure and, for model files, the index
    of the layer record being parsed when the problem was detected.
    """

    def __init__(self, message, *, offset=None, layer=None):
        detail = message
        if offset is not None:
            detail += f" (byte offset {offset}"
            detail += f", layer {layer})" if layer is not None else ")"
        elif layer is not None:
            detail += f" (layer {layer})"
        super().__init__(detail)
        self.offset = offset
        self.layer = layer


class BadMagicError(FormatError):
    """Stream does not start with the expected magic bytes."""


class UnsupportedVersionError(FormatError):
    """Recognized container but unknown format version."""


class CrcMismatchError(FormatError):
    """Payload checksum does not validate."""


class StructureError(FormatError):
    """Truncated stream or layer records that do not compose."""


class PaddingError(FormatError):
    """Packed weight words carry nonzero bits in padding lanes."""
