"""Entry-exit maps and relaxation-oscillation analysis for slow-fast ODEs."""
from .entry_exit import jump_jacobian, jump_map, leg_jacobian, transit_leg
from .orbit import classify, find_singular_orbit, planar_lambda, return_map
from .system import LegSpec, ManifoldChain, SlowFastSystem, check_assumptions, from_expressions

__version__ = "0.1.0"

__all__ = [
    "SlowFastSystem", "LegSpec", "ManifoldChain", "from_expressions", "check_assumptions",
    "transit_leg", "leg_jacobian", "jump_map", "jump_jacobian",
    "return_map", "find_singular_orbit", "classify", "planar_lambda",
]
