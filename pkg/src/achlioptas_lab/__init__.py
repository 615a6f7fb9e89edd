"""Simulation and numerical-limit laboratory for Achlioptas-type random
graph processes: union-find process engine, rule library, recorded
observables, rule-induced coagulation ODE systems, and scripted
desk-scale experiments."""

__version__ = "0.1.0"

from .forest import ForestState, MergeOutcome
from .rules import (OfferedTuple, RuleDecision, RuleSpec, classify, decide,
                    make_rule, truncate_profile)
from .engine import RunConfig, Trajectory, ensemble, run, sample_tuple, step
from .rng import SplitMix64, derive_seed

__all__ = [
    "ForestState", "MergeOutcome", "OfferedTuple", "RuleDecision", "RuleSpec",
    "RunConfig", "SplitMix64", "Trajectory", "classify", "decide",
    "derive_seed", "ensemble", "make_rule", "run", "sample_tuple", "step",
    "truncate_profile", "__version__",
]
