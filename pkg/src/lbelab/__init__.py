"""Test-particle kinetics in an ideal gas: linear Boltzmann Monte Carlo, Kramers and
Smoluchowski solvers, and their quantum counterparts."""

__version__ = "0.1.0"

from .physics import (CrossSectionModel, PhysicalParams, correction_factor, friction_coefficient,
                      friction_coefficient_closed_form, position_diffusion_coefficient, structure_factor)

__all__ = [
    "__version__",
    "CrossSectionModel",
    "PhysicalParams",
    "correction_factor",
    "friction_coefficient",
    "friction_coefficient_closed_form",
    "position_diffusion_coefficient",
    "structure_factor",
]
