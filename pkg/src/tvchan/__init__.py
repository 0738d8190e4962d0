"""Tensor-based estimation of time-varying mmWave MIMO-OFDM channels."""
__version__ = "0.1.0"

from .acquisition import ReceivedTensor, add_noise, assemble_noiseless, generate_context
from .als import AlsConfig, als_estimate
from .channel import PathSet, SystemConfig, channel_set, desk_config, paper_config, sample_paths
from .crb import fim
from .esprit import SmoothingPlan, check_uniqueness, estimate

__all__ = [
    "AlsConfig", "PathSet", "ReceivedTensor", "SmoothingPlan", "SystemConfig", "add_noise", "als_estimate",
    "assemble_noiseless", "channel_set", "check_uniqueness", "desk_config", "estimate", "fim",
    "generate_context", "paper_config", "sample_paths",
]
