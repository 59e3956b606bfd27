"""Numerical laboratory for Kochergin special flows over irrational rotations."""

__version__ = "0.1.0"

from .rotation import Rotation, cf_expand, in_class_D, orbit_point, parse_alpha  # noqa: E402
from .roof import RoofFunction, birkhoff_sum, dk_bounds_check, make_roof  # noqa: E402
from .flow import FlowPoint, ProductPoint, flow, trajectory  # noqa: E402
from .coding import Partition, SymbolicWord, atom_index, build_partition, code_orbit  # noqa: E402
from .fbar import Matching, fbar_distance, fbar_exhaustive  # noqa: E402

__all__ = [
    "Rotation", "cf_expand", "in_class_D", "orbit_point", "parse_alpha",
    "RoofFunction", "birkhoff_sum", "dk_bounds_check", "make_roof",
    "FlowPoint", "ProductPoint", "flow", "trajectory",
    "Partition", "SymbolicWord", "atom_index", "build_partition", "code_orbit",
    "Matching", "fbar_distance", "fbar_exhaustive",
]
