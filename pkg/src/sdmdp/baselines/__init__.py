"""Instance-specific comparison methods."""
from .belief_vi import BeliefGrid, BeliefPolicy, NonConvergence, belief_value_iteration, initial_belief
from .longstaff import LsRegression, LsResult, TooFewItmPaths, european_mc, longstaff_schwartz
from .scenario_dp import InfeasibleInstance, ScenarioPolicy, ScenarioTree, scenario_dp_bunkering

BASELINE_NAMES = {
    "maritime": "scenario-dp",
    "hybrid": "belief-vi",
    "hybrid-expanded": "belief-vi",
    "options": "ls-baseline",
    "options-basket": "ls-baseline",
}

__all__ = [
    "BASELINE_NAMES", "BeliefGrid", "BeliefPolicy", "NonConvergence", "belief_value_iteration",
    "initial_belief", "LsRegression", "LsResult", "TooFewItmPaths", "european_mc", "longstaff_schwartz",
    "InfeasibleInstance", "ScenarioPolicy", "ScenarioTree", "scenario_dp_bunkering",
]
