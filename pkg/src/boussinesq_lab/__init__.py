"""Pseudo-spectral lab for the damped Boussinesq system with large data."""

from .fields import GridSpec, SpectralField, load_field, save_field
from .initial_data import DataParams2D, DataParams3D, build_a0_2d, build_a0_3d, default_grid, make_linear_data
from .linear_flow import LinearFlow, compute_e0_f0
from .simulation import SimConfig, SimState, run, step

__all__ = [
    "GridSpec",
    "SpectralField",
    "load_field",
    "save_field",
    "DataParams2D",
    "DataParams3D",
    "build_a0_2d",
    "build_a0_3d",
    "default_grid",
    "make_linear_data",
    "LinearFlow",
    "compute_e0_f0",
    "SimConfig",
    "SimState",
    "run",
    "step",
]
