"""Exact and approximate sampling of contingency tables with fixed sufficient statistics.

Log-affine models are given by an integer configuration matrix ``A`` and
positive odds ``x``. Tables are drawn from the conditional distribution on
the fiber ``{u >= 0 : A u = b}`` either directly, one count at a time along
the Markov lattice, or with a Metropolis chain driven by a Markov basis.
"""

from .analysis import (
    EmpiricalDistribution,
    EssReport,
    chi_square,
    effective_sample_size,
    empirical_distribution,
    total_variation,
    tv_squared,
)
from .errors import FiberSampleError, NumericalError, ValidationError
from .fiber import FiberOracle, conditional_probability, enumerate_fiber, in_semigroup, umvue, z_value
from .metropolis import ChainConfig, ChainResult, Move, basis_no_three_way, basis_two_way, metropolis_step, run_chain
from .mle import (
    DecomposableStructure,
    IpsConfig,
    MleResult,
    decomposable_mle,
    ips_solve,
    quasi_independence_mu13,
    two_way_independence_mle,
)
from .model import ConfigurationMatrix, ModelSpec, degree, make_model, sufficient_statistics, validate_matrix
from .sampler import (
    Decomposable,
    DrawResult,
    ExactUmvue,
    Ips,
    SamplePath,
    TwoWayRational,
    draw_batch,
    draw_table,
    draw_tables,
    path_probability,
    step_probabilities,
)

__version__ = "0.1.0"

__all__ = [
    "ChainConfig", "ChainResult", "ConfigurationMatrix", "Decomposable", "DecomposableStructure",
    "DrawResult", "EmpiricalDistribution", "EssReport", "ExactUmvue", "FiberOracle", "FiberSampleError",
    "Ips", "IpsConfig", "MleResult", "ModelSpec", "Move", "NumericalError", "SamplePath",
    "TwoWayRational", "ValidationError", "basis_no_three_way", "basis_two_way", "chi_square",
    "conditional_probability", "decomposable_mle", "degree", "draw_batch", "draw_table", "draw_tables",
    "effective_sample_size", "empirical_distribution", "enumerate_fiber", "in_semigroup", "ips_solve",
    "make_model", "metropolis_step", "path_probability", "quasi_independence_mu13", "run_chain",
    "step_probabilities", "sufficient_statistics", "total_variation", "tv_squared",
    "two_way_independence_mle", "umvue", "validate_matrix", "z_value",
]
