"""Exact solutions used to validate and exercise the interpolation pipeline."""

from .heat import heat_field, heat_gaussian, heat_kernel, heat_rescaling
from .simple_wave import SimpleWaveProblem, paper_simple_wave, simple_wave_solution, velocity_field
from .sod import RiemannState, sod_exact, sod_state, star_state, wave_speeds
from .wedge import (
    WedgeProblem,
    shock_relation_residuals,
    wedge_geometry_maps,
    wedge_lambda,
    wedge_mach_field,
    wedge_phi,
    wedge_shock_angle,
    wedge_theta,
)
from .zkb import zkb_exponents, zkb_field, zkb_gaussian, zkb_profile, zkb_rescaling, zkb_support_radius

__all__ = [
    "heat_kernel",
    "heat_field",
    "heat_gaussian",
    "heat_rescaling",
    "zkb_exponents",
    "zkb_profile",
    "zkb_field",
    "zkb_gaussian",
    "zkb_rescaling",
    "zkb_support_radius",
    "SimpleWaveProblem",
    "simple_wave_solution",
    "velocity_field",
    "paper_simple_wave",
    "RiemannState",
    "sod_exact",
    "sod_state",
    "star_state",
    "wave_speeds",
    "WedgeProblem",
    "wedge_shock_angle",
    "wedge_mach_field",
    "shock_relation_residuals",
    "wedge_lambda",
    "wedge_theta",
    "wedge_phi",
    "wedge_geometry_maps",
]
