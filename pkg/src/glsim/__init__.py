"""GLSim: ViT inference with global-local similarity crop selection.

Pure-numpy forward passes, discriminative feature selection mechanisms,
crop extraction, the CLS aggregator head, and an analytical FLOPs model
for comparing token-selection costs.
"""

from glsim.config import ArchConfig, PRESETS, grid_dims
from glsim.errors import DecodeError, GLSimError, InvalidConfigError, NumericError

__all__ = [
    "ArchConfig",
    "PRESETS",
    "grid_dims",
    "GLSimError",
    "InvalidConfigError",
    "NumericError",
    "DecodeError",
]

__version__ = "0.1.0"
