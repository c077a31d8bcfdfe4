"""Distributed Lagrangian and method-of-multipliers solvers over
communication graphs, with spectral convergence certification."""

from .fixtures import FIXTURES, get_fixture
from .netgraph import GraphSpec, build_incidence, check_connected, kron_lift, laplacian
from .problem import (
    LiftedProblem,
    LocalProblem,
    MultiplierState,
    StationaryPoint,
    lift_problem,
)
from .solvers import FirstOrderConfig, run_first_order, step_a1, step_a2
from .multipliers import MoMConfig, run_a3
from .oracle import lifted_multipliers, solve_centralized

__all__ = [
    "FIXTURES",
    "FirstOrderConfig",
    "GraphSpec",
    "LiftedProblem",
    "LocalProblem",
    "MoMConfig",
    "MultiplierState",
    "StationaryPoint",
    "build_incidence",
    "check_connected",
    "get_fixture",
    "kron_lift",
    "laplacian",
    "lift_problem",
    "lifted_multipliers",
    "run_a3",
    "run_first_order",
    "solve_centralized",
    "step_a1",
    "step_a2",
]
