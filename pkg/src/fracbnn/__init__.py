"""fracbnn: bit-exact inference for binary networks with fractional activations.

Packed XNOR/popcount convolution kernels (compiled core with a numpy
fallback), two-phase gated convolution over 2-bit activations, thermometer
input encoding, Q16.16 fixed-point normalization layers, and a dense
reference oracle everything is verified against.
"""

from . import backend
from .bitpack import PackedBitPlane, PackedWeights, pack, unpack
from .encoding import ThermometerConfig, encode_image_thermometer
from .kernels import ChannelParams, FracActivation, FixedFeatureMap, IntFeatureMap
from .model import LoadedModel, NetworkSpec, build_fracbnn_resnet20, count_ops, forward
from .modelfile import generate_synthetic, load, load_file, save, save_file

__version__ = "0.1.0"

__all__ = [
    "backend",
    "PackedBitPlane",
    "PackedWeights",
    "pack",
    "unpack",
    "ThermometerConfig",
    "encode_image_thermometer",
    "ChannelParams",
    "FracActivation",
    "FixedFeatureMap",
    "IntFeatureMap",
    "LoadedModel",
    "NetworkSpec",
    "build_fracbnn_resnet20",
    "count_ops",
    "forward",
    "generate_synthetic",
    "load",
    "load_file",
    "save",
    "save_file",
    "__version__",
]
