"""Positivity-preserving entropy-stable spectral collocation solver with
implicit dual time stepping for the regularized compressible Navier-Stokes
equations on Cartesian LGL meshes."""

from .gas import GasParameters
from .mesh import Mesh, make_mesh
from .sbp import LglOperatorSet, build_lgl_operators
from .timestepping import DualTimeConfig, PdeProblem, pseudo_converge

__all__ = [
    "GasParameters", "Mesh", "make_mesh", "LglOperatorSet",
    "build_lgl_operators", "DualTimeConfig", "PdeProblem", "pseudo_converge",
]

__version__ = "0.1.0"
