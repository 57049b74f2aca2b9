"""Tracking utility-maximising rates on time-varying Gaussian multiple-access channels."""

from .capacity import (
    GaussianMacRegion,
    PowerProfile,
    SubsetPolytope,
    awgn_capacity,
    expansion_face_witness,
    rank,
    region_distance,
)
from .channel import ChannelTrace, FadingConfig, generate_trace
from .errors import AssumptionError, ConfigError, DomainError, NonConvergenceError
from .policies import (
    avg_case_params,
    build_renewal_schedule,
    renewal_ratio,
    run_approximate_policy,
    run_improved_policy,
    solve_c,
    worst_case_params,
)
from .solver import decomposition_greedy, gp_step, greedy_oracle, linear_greedy, nb_block
from .utility import UtilityConstants, UtilityModel

__version__ = "0.1.0"
