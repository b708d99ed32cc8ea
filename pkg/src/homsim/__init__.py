"""Two-photon interference simulator and analysis toolkit."""

from ._kernels import COMPILED
from .params import DarkState, DetectorParams, EmitterParams, SetupParams

__version__ = "0.1.0"

__all__ = [
    "COMPILED",
    "DarkState",
    "DetectorParams",
    "EmitterParams",
    "SetupParams",
    "__version__",
]
