"""Stabilized cut finite elements for the Laplace-Beltrami problem on embedded curves and surfaces."""
from .assembly import FormConfig, LinearSystem, build_system
from .cutcell import DiscreteManifold, clip_polyline, marching_tets
from .errors import CutFEMError
from .geometry import ManifoldSpec, closest_point
from .mesh import BoxSpec, build_background, extract_active
from .solver import CgConfig, cg_solve, condition_number, lambda_extremes

__all__ = [
    "BoxSpec", "CgConfig", "CutFEMError", "DiscreteManifold", "FormConfig", "LinearSystem",
    "ManifoldSpec", "build_background", "build_system", "cg_solve", "clip_polyline",
    "closest_point", "condition_number", "extract_active", "lambda_extremes", "marching_tets",
]
