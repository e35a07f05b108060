"""End-to-end stereo disparity estimation on the CPU.

The pipeline embeds a rectified stereo pair, compresses concatenated
left/right descriptors into per-disparity matching signatures, regularizes
the stacked signatures with a 3D hourglass network into a cost volume, and
converts the volume into disparities with either an expectation estimator
or a windowed maximum-posterior estimator.
"""

from .tensor import Tensor, DimensionError
from .config import NetConfig, TrainConfig, desk_config, paper_config

__all__ = [
    "Tensor",
    "DimensionError",
    "NetConfig",
    "TrainConfig",
    "desk_config",
    "paper_config",
]

__version__ = "0.1.0"
