"""Fairness-constrained multi-user beamforming.

Closed-form MISO beamforming baselines (MRT, ZF, SLNR, weighted SLNR),
a set-transformer beamforming network trained unsupervised with a
hinge-Lagrangian loss and adaptive dual ascent, and sweep drivers that
trace the sum-rate versus Jain-fairness Pareto front.
"""

__version__ = "0.1.0"

from .channel import ChannelSample, Dataset, ScenarioConfig
from .fairness import DualState
from .metrics import BeamformerSet, RateReport
from .network import Model, ModelConfig
from .trainer import TrainConfig

__all__ = [
    "BeamformerSet", "ChannelSample", "Dataset", "DualState", "Model",
    "ModelConfig", "RateReport", "ScenarioConfig", "TrainConfig", "__version__",
]
