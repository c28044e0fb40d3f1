"""Cell-transmission road network, SO-DTA LP and fixed-route baseline."""

from .network import CellNetwork, NetworkError, build_network, bind_classes
from .sodta import SodtaSolution, UnreachableError, build_sodta, solve_sodta
from .baseline import simulate_fixed_routes, shortest_path_baseline, min_hop_route

__all__ = [
    "CellNetwork",
    "NetworkError",
    "build_network",
    "bind_classes",
    "SodtaSolution",
    "UnreachableError",
    "build_sodta",
    "solve_sodta",
    "simulate_fixed_routes",
    "shortest_path_baseline",
    "min_hop_route",
]
