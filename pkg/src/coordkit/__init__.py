"""Empirical coordination toolkit."""
from .binary import (GameParams, coordination_bounds, dc_constraint, gamma_star, game_family,
                     game_target, game_utility, hb)
from .constraint import (AuxKernelW, CausalInstance, CausalOptions, CausalStructure,
                         ConstraintReport, StrictInstance, StrictOptions, Verdict,
                         analytic_bounds, causal_residual, causal_upper_bound,
                         decomposition_check, maximize_causal, maximize_strict,
                         objective_causal, objective_strict, rate_margin,
                         time_sharing_certificate)
from .errors import (ConfigurationError, CoordkitError, DomainError,
                     InfeasibleConfigurationError, InstanceFormatError)
from .prob import (AlphabetProfile, FiniteDist, Kernel, SymbolBlock, compose_chain, entropy,
                   empirical_counts, empirical_distribution, is_typical, marginal_conditional,
                   mutual_information, tv_distance)
from .region import (FamilySpec, RegionGrid, UtilityOptions, UtilitySpec,
                     boundary_bisection_family, certified_mixture, channel_capacity,
                     distortion_cost_region, expected_utility, max_utility_generic, membership)
from .sim import (CodeConfig, Codebooks, TrialResult, build_codebooks, concatenation_check,
                  monte_carlo, plan_rates, run_trial)

__version__ = "0.1.0"
