"""Autoregressive order selection: APE, information criteria and two-stage rules,
with population oracles and a Monte Carlo harness for prediction efficiency."""

__version__ = "0.1.0"

from .errors import (
    ArselectError, BoundsError, ConfigurationError, DegenerateFitError, DegeneratePopulationError,
    DomainError, EstimationError, InputError, InvalidSpecError,
)
from .procgen import ProcessSpec, SeriesWindow, simulate, theoretical_autocov
from .arfit import OrderFits, fit_at, advance, residual_variance
from .criteria import (
    CriterionSpec, DeltaRule, PenaltyRule, FitCache, SelectionRecord, select,
    penalty_of_delta, delta_of_penalty,
)
from .oracle import PopulationModel, projection, projection_bias, L_n, L_n_D, k_star, rn_diagnostic
from .montecarlo import ExperimentPlan, EfficiencyTable, estimate_re, run_replication, run_independent_realization
