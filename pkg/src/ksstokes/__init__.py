"""Keller-Segel chemotaxis coupled to Stokes-Boussinesq flow on a rectangle.

Two backends (finite-difference vorticity / stream function and a two-basis
Galerkin truncation), a diagnostics engine and an experiment harness.
"""

from .config import RunConfig, load_config
from .errors import BlowupSuspected, CFLViolation, InvalidArgument, NumericalError
from .geometry import Domain, Grid, ScalarField, VectorField, build_grid
from .harness import RunResult, find_gstar, find_mass_threshold, run, sweep_g

__version__ = "0.1.0"

__all__ = ["RunConfig", "load_config", "BlowupSuspected", "CFLViolation", "InvalidArgument",
           "NumericalError", "Domain", "Grid", "ScalarField", "VectorField", "build_grid", "RunResult",
           "find_gstar", "find_mass_threshold", "run", "sweep_g"]
