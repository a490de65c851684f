"""Robin-Robin loosely coupled splitting for a parabolic-parabolic interface problem."""

from .mesh import Horizontal, Slanted, build_mesh
from .splitting import PhysicsParams, ResidualInjection, build_forms

__version__ = "0.1.0"

__all__ = ["Horizontal", "Slanted", "build_mesh", "PhysicsParams", "ResidualInjection",
           "build_forms"]
