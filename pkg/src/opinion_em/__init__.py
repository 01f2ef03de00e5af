"""Learnable bounded-confidence opinion dynamics: trace generation, online EM
inference of latent opinions and signs, and likelihood-based scenario selection."""
__version__ = "0.1.0"

from .em import FitConfig, FitResult, complete_log_likelihood, fit
from .estimator import OpinionDynamicsEM
from .generator import GenConfig, GroundTruth, generate_trace
from .metrics import EvalReport, evaluate
from .model import MacroParams, Scenario, scenario
from .selection import SelectionReport, model_select
from .state import LatentState
from .trace import Trace

__all__ = [
    "EvalReport", "FitConfig", "FitResult", "GenConfig", "GroundTruth", "LatentState",
    "MacroParams", "OpinionDynamicsEM", "Scenario", "SelectionReport", "Trace",
    "complete_log_likelihood", "evaluate", "fit", "generate_trace", "model_select", "scenario",
]
