"""Numerical local isometric embedding of surfaces near a degenerate geodesic curve."""

from .errors import EmbeddingError
from .grid import Grid, GridField
from .metric import (GeodesicMetric, check_alpha_surface, christoffel, factor_K0, flat_annulus, gauss_curvature,
                     kg_family, test_family)
from .coords import x_transform
from .darboux import ScaledState, initial_coefficient, scaled_residual, unscaled_darboux, z_from_state
from .linearize import ReducedOperator, gateaux_coefficients, reduce
from .friedrichs import SymmetricSystem, admissibility, enlarged_theta, solve_bvp, tangential_norm
from .assemble import SystemParams, build_system, calibrate_epsilons, lift_phi, lower_U
from .iterate import NewtonOptions, run_solve
from .reconstruct import assemble_embedding, developing_map, flat_metric, pullback_residual
from .toolchain import RunConfig, VerificationReport, regularity_budget, run_pipeline

__version__ = "0.1.0"
