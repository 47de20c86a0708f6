"""Planning for structurally decomposed MDPs.

Top-K perfect-information bounds and value-clipped Monte Carlo tree search
for resource-allocation problems whose state splits into an action-free
stochastic context and an action-driven capacity.
"""
from .allocation import (AllocationPlan, NoFeasibleAllocation, RankedContexts, ValueBounds,
                         hindsight_value, rank_contexts, solve_topk, value_bounds, value_for_k)
from .core import (AdmissibleWindow, ProblemSpec, State, admissible_window, consumption,
                   extreme_actions, reward, step, validate_spec)
from .mcts import MctsConfig, SearchResult, enforce_budget, search

__version__ = "0.1.0"

__all__ = [
    "AllocationPlan", "NoFeasibleAllocation", "RankedContexts", "ValueBounds", "hindsight_value",
    "rank_contexts", "solve_topk", "value_bounds", "value_for_k",
    "AdmissibleWindow", "ProblemSpec", "State", "admissible_window", "consumption",
    "extreme_actions", "reward", "step", "validate_spec",
    "MctsConfig", "SearchResult", "enforce_budget", "search",
]
