"""Optimal portfolio selection under Poisson-timed discrete trading.

A solver library and experiment CLI for a market where rebalancing is only
possible at the arrival times of an inhomogeneous Poisson process whose
intensity blows up at the horizon.  The dynamic programming fixed point is
computed by monotone value iteration; closed-form Merton and dual-density
references bracket the answer, and a Monte Carlo layer checks policies by
simulation.
"""

from .arrivals import IntensityProfile
from .benchmark import DualDensityParams, merton_policy, merton_value, supersolution
from .dp import (DPSolver, PolicySurface, SolveResult, SolverConfig, ValueSurface,
                 finite_horizon_value, value_iterate)
from .gridops import BACKEND
from .market import JumpSpec, MarketModel, PiecewiseConstant, SizeLaw, validate_assumptions
from .utility import UtilitySpec, log_utility, power_utility

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "DPSolver", "DualDensityParams", "IntensityProfile", "JumpSpec",
    "MarketModel", "PiecewiseConstant", "PolicySurface", "SizeLaw", "SolveResult",
    "SolverConfig", "UtilitySpec", "ValueSurface", "finite_horizon_value",
    "log_utility", "merton_policy", "merton_value", "power_utility",
    "supersolution", "validate_assumptions", "value_iterate",
]
