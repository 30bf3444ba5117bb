"""Directed polymers / self-avoiding walks on random-conductance trees.

A library plus batch CLI for the partition-function martingale Z_n over
seed-keyed random environments, the annealed/quenched critical-point
calculus (weak vs strong disorder, fractional-moment bound, second-moment
closed form), exhaustive small-tree oracles, and reproducible Monte Carlo
experiments.
"""

__version__ = "0.1.0"

from .engine import (
    PopulationSummary,
    Susceptibility,
    WorkBudgetError,
    ZnProfile,
    compute_profile,
    free_energy,
    population_dynamics,
    susceptibility,
)
from .environment import EdgeCodeError, Environment, edge_code
from .laws import (
    Constant,
    ConductanceLaw,
    Exponential,
    FiniteDiscrete,
    Gaussian,
    LawSpecError,
    TransformDivergenceError,
    TwoPoint,
    parse_law,
)
from .theory import (
    CriticalParams,
    RegimeError,
    annealed_critical_point,
    beta_c,
    critical_params,
    f_criterion,
    fractional_moment_bound,
    log_r,
    log_r_derivatives,
    quenched_critical_point,
    r_theta,
    second_moment_closed_form,
    theta_1,
    theta_c,
)

__all__ = [
    "__version__",
    "ConductanceLaw",
    "TwoPoint",
    "FiniteDiscrete",
    "Gaussian",
    "Exponential",
    "Constant",
    "parse_law",
    "LawSpecError",
    "TransformDivergenceError",
    "Environment",
    "edge_code",
    "EdgeCodeError",
    "CriticalParams",
    "RegimeError",
    "annealed_critical_point",
    "f_criterion",
    "beta_c",
    "r_theta",
    "log_r",
    "log_r_derivatives",
    "theta_c",
    "theta_1",
    "quenched_critical_point",
    "fractional_moment_bound",
    "second_moment_closed_form",
    "critical_params",
    "ZnProfile",
    "Susceptibility",
    "PopulationSummary",
    "WorkBudgetError",
    "compute_profile",
    "susceptibility",
    "free_energy",
    "population_dynamics",
]
