"""Nash equilibrium seeking in quadratic games under delayed information exchange."""

from .game import (
    QuadraticGame,
    best_response,
    build_matrices,
    nash_equilibrium,
    payoff,
    verify_nash,
)
from .seeking import SeekingConfig, Trajectory, init_state, run, simulate, step
from .stability import analyze, build_H, companion_system, delta1, delta2, spectral_radius
from .topology import Graph, build_estimation_matrices, is_connected, laplacian, make_graph

__version__ = "0.1.0"
