"""Simulator and analytics for a resolver that takes up DNSSEC only when attacked."""

from .analytics import independence_bound, p_round_fail, success_curve, time_to_success
from .resolver import Mode, ResolverConfig, TDWNResolver
from .sim import Scenario, Simulation, run

__all__ = [
    "Mode",
    "ResolverConfig",
    "Scenario",
    "Simulation",
    "TDWNResolver",
    "independence_bound",
    "p_round_fail",
    "run",
    "success_curve",
    "time_to_success",
]
