"""Simulator and rate-function toolkit for a random walk driven by a
speeded-up symmetric exclusion process on the discrete circle."""

from .dynamics import (LocalFunction, TiltAccumulators, Trajectory,
                       environment_view, read_trajectory_dump,
                       recover_walker_counts, replacement_error, simulate,
                       write_trajectory_dump)
from .fields import (PathField, block_average, empirical_density, energy_norm,
                     l1_distance, moving_average, record_path_field,
                     weak_distance)
from .hydro import (HydroSolution, SpaceTimeGrid, StabilityError,
                    evaluate_frame, solve_heat, solve_perturbed)
from .ldp import (IExResult, IRwResult, I_ex, I_rw, RateBreakdown, WalkerPath,
                  a_star, a_star_alt, contract_rate, entropy_h, j_functional,
                  J_functional, luxemburg_norm, phi, phi_star,
                  pointwise_rw_cost)
from .model import (LocalRate, TorusLattice, canonical_average,
                    evaluate_local_rate, grand_canonical_average,
                    mean_field_velocity, sample_canonical,
                    sample_product_profile, sample_tilted_initial,
                    tilted_site_probabilities)
from .profiles import DensityProfile
from .rng import RngStream, subkey
from .tilt import TestFunctionH, TiltParams, TimeFunction

__version__ = "0.1.0"
