"""Continued-fraction value decomposition for cooperative multi-agent Q-learning."""

from .config import ConfigError, RunConfig, load_config
from .diffcore import ShapeError, Tape, Tensor, grad_check
from .mixer import CFNMixer, MixerConfig, VDNMixer
from .trainer import Learner, run_training

__version__ = "0.1.0"

__all__ = [
    "CFNMixer",
    "ConfigError",
    "Learner",
    "MixerConfig",
    "RunConfig",
    "ShapeError",
    "Tape",
    "Tensor",
    "VDNMixer",
    "grad_check",
    "load_config",
    "run_training",
]
