"""Optimisation core: rate/energy functions, the dual decomposition loop and the convex-concave procedure."""

from .ccp import CcpSettings, SelectionProblem, ccp_solve, ccp_subproblem, evaluate_selection
from .dual import DualSettings, Instance, inner_dual_subproblem, solve_dual
from .functions import block_vertices, linearized_penalty, optimal_power, penalty, rate

__all__ = [
    "CcpSettings", "SelectionProblem", "ccp_solve", "ccp_subproblem", "evaluate_selection",
    "DualSettings", "Instance", "inner_dual_subproblem", "solve_dual",
    "block_vertices", "linearized_penalty", "optimal_power", "penalty", "rate",
]
