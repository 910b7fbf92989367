"""Mass-conserving periodic-state solver for N-DOP type ecosystem models."""

from .grid import (Grid, TracerField, build_grid, mass, project_zero_mass,
                   auto_layer_thicknesses)
from .reactions import (InsolationSpec, PO4DOPModel, PO4DOPParams, ReactionModel,
                        check_bounds, check_mass_identity, sinking_weights,
                        uptake_G)
from .solver import (SolveConfig, SolveReport, TracerState, equation_residuals,
                     fixed_point_solve,
                     linearized_solve, naive_spinup, period_map, residual_report,
                     solve_linear_periodic_shifted, solve_sum_zero_mean,
                     two_box_oracle)
from .transport import (DiffusivityField, TransportOperator, VelocityField,
                        assemble_transport, check_operator_properties,
                        overturning_velocity, uniform_diffusivity,
                        verify_velocity, zero_velocity)

__version__ = "0.1.0"

__all__ = [
    "Grid", "TracerField", "build_grid", "mass", "project_zero_mass",
    "auto_layer_thicknesses",
    "InsolationSpec", "PO4DOPModel", "PO4DOPParams", "ReactionModel",
    "check_bounds", "check_mass_identity", "sinking_weights", "uptake_G",
    "SolveConfig", "SolveReport", "TracerState", "equation_residuals",
    "fixed_point_solve",
    "linearized_solve", "naive_spinup", "period_map", "residual_report",
    "solve_linear_periodic_shifted", "solve_sum_zero_mean", "two_box_oracle",
    "DiffusivityField", "TransportOperator", "VelocityField",
    "assemble_transport", "check_operator_properties", "overturning_velocity",
    "uniform_diffusivity", "verify_velocity", "zero_velocity",
    "__version__",
]
