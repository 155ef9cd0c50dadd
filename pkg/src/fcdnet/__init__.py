"""Multivariate time-series forecasting with frequency-derived dependency graphs."""

from .model import FCDNet, ModelConfig
from .training import TrainConfig, evaluate, train

__all__ = ["FCDNet", "ModelConfig", "TrainConfig", "evaluate", "train"]
__version__ = "0.1.0"
