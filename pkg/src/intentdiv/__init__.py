"""Intent-aware whole-page diversification with a simulated A/B harness."""

from .core import (Candidate, DiversifierConfig, IntentDistribution, IntentSpace,
                   PosteriorMode, RankedSlate, TieBreak, diversify, posterior_update,
                   sparse_posterior_update)
from .intent_model import IntentModelParams, TrainConfig, predict_intents, train
from .simulator import SimConfig, run_experiment

__all__ = [
    "Candidate", "DiversifierConfig", "IntentDistribution", "IntentSpace", "PosteriorMode",
    "RankedSlate", "TieBreak", "diversify", "posterior_update", "sparse_posterior_update",
    "IntentModelParams", "TrainConfig", "predict_intents", "train", "SimConfig",
    "run_experiment",
]
__version__ = "0.1.0"
