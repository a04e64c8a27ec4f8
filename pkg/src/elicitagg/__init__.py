"""Elicit posterior predictives from Bayesian agents and pool them exactly."""

from .errors import AggregationError, ConfigError, DomainError, InversionDomainError, PreconditionError
from .families import Belief, DirichletHyper, Family, FamilySpec, Hyper, batch_update, posterior_update
from .mechanisms import MechKind, Mechanism, decode, elicit, match_probability, probe_injectivity
from .aggregation import aggregate_end_to_end, oracle_global, pool
from .scoring import BRIER_MEAN, LOG, TWO_SAMPLE, ScoreRule, brier_moments, expected_score, score
from .simharness import ScenarioConfig, load_config, parse_config, run_scenario

__version__ = "0.1.0"
