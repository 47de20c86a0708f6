"""Benchmark environments sharing one interface."""
from .base import Environment, GbmContexts, MarkovContexts, SdmdpEnv, exact_dp_value
from .hybrid import HybridEnv, HybridInstance, HybridSolver
from .maritime import InfeasibleLeg, MaritimeEnv, MaritimeInstance, MaritimeSolver
from .options import ExerciseOfDeadLeg, OptionInstance, OptionLeg, OptionsEnv, StoppingSolver

__all__ = [
    "Environment", "GbmContexts", "MarkovContexts", "SdmdpEnv", "exact_dp_value",
    "HybridEnv", "HybridInstance", "HybridSolver",
    "InfeasibleLeg", "MaritimeEnv", "MaritimeInstance", "MaritimeSolver",
    "ExerciseOfDeadLeg", "OptionInstance", "OptionLeg", "OptionsEnv", "StoppingSolver",
]
