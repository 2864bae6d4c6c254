"""Proximal point solver for bilevel equilibrium problems.

Find ``x`` in the solution set ``S(f, K)`` of an inner equilibrium problem with
``h(x, y) >= 0`` for every ``y`` in ``S(f, K)``, by solving a sequence of
regularized equilibrium problems built from a generalized proximal distance.
"""

__version__ = "0.1.0"

from .bifunctions import (Bifunction, Polynomial, explicit, from_objective, from_operator,
                          regularize, verify_standard_assumptions, zero_bifunction)
from .bilevel import (Schedule, SolveReport, TraceRow, audit_descent, estimate_hypothesis_H,
                      monitor_fejer, solve_bep, stopping_check)
from .distances import (ProximalPair, build_bregman_pair, build_entropy_pair, build_euclidean_pair,
                        verify_proximal_pair)
from .errors import BepError, DiagnosticError, InvalidInputError, NumericalError
from .geometry import FeasibleSet
from .inner import InnerSolveOptions, ep_residual, solve_ep
from .oracle import GridSpec, brute_force_bep, brute_force_ep
from .orgmodel import (Organization, VRQuantities, build_bep, demo_organization, detect_traps,
                       followers_payoff, leader_payoff, worthwhile_delta)
from .problems import PRESETS, Problem, preset

__all__ = [
    "Bifunction", "Polynomial", "explicit", "from_objective", "from_operator", "regularize",
    "verify_standard_assumptions", "zero_bifunction",
    "Schedule", "SolveReport", "TraceRow", "audit_descent", "estimate_hypothesis_H",
    "monitor_fejer", "solve_bep", "stopping_check",
    "ProximalPair", "build_bregman_pair", "build_entropy_pair", "build_euclidean_pair",
    "verify_proximal_pair",
    "BepError", "DiagnosticError", "InvalidInputError", "NumericalError",
    "FeasibleSet", "InnerSolveOptions", "ep_residual", "solve_ep",
    "GridSpec", "brute_force_bep", "brute_force_ep",
    "Organization", "VRQuantities", "build_bep", "demo_organization", "detect_traps",
    "followers_payoff", "leader_payoff", "worthwhile_delta",
    "PRESETS", "Problem", "preset",
]
