"""Exact, Monte Carlo and multiscale diagnostics for random walks in random environment."""

__version__ = "0.1.0"

from .environment import Environment, EnvironmentLaw, law_from_json, realize_site, restrict_to_slab
from .errors import RWREError
from .geometry import BoxTriple, Direction, Frame, HyperplaneFamily, build_rotation
from .oracle import RuinProblem, gambler_ruin_exact
from .solver import AbsorbingProblem, solve_exit_distribution

__all__ = [
    "AbsorbingProblem", "BoxTriple", "Direction", "Environment", "EnvironmentLaw", "Frame",
    "HyperplaneFamily", "RWREError", "RuinProblem", "build_rotation", "gambler_ruin_exact",
    "law_from_json", "realize_site", "restrict_to_slab", "solve_exit_distribution",
]
