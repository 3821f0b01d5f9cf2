"""Conjugate mixture models for fusing observations from two sensor spaces.

Objects live in a latent space S and are seen through two known maps, a
stereo camera pair (F) and a microphone pair measuring interaural time
differences (G).  The package fits the objects' positions, noise models and
mixing weights with generalized EM and selects their number with a BIC-type
score.
"""

from .em import FitReport, Posteriors, e_step, fit, object_stats, update_covariances, update_priors
from .initialize import InitOptions, initialize, osc_init, psc_init
from .mappings import Box, ItdConfig, ItdMap, MapPair, StereoDomain, StereoMap
from .model import Assignment, ModelParams, ObservationSet, log_likelihood
from .objective import grad_q, lipschitz_L, q_direct, q_simplified
from .search import SearchOptions, choose, local_search
from .select import BicScore, bic_score, model_dimension, select_n
from .sim import Scenario, error_report, preset_maps, scenario_preset, simulate

__version__ = "0.1.0"

__all__ = [
    "Assignment", "BicScore", "Box", "FitReport", "InitOptions", "ItdConfig", "ItdMap",
    "MapPair", "ModelParams", "ObservationSet", "Posteriors", "Scenario", "SearchOptions",
    "StereoDomain", "StereoMap", "bic_score", "choose", "e_step", "error_report", "fit",
    "grad_q", "initialize", "lipschitz_L", "local_search", "log_likelihood",
    "model_dimension", "object_stats", "osc_init", "preset_maps", "psc_init", "q_direct",
    "q_simplified", "scenario_preset", "select_n", "simulate", "update_covariances",
    "update_priors",
]
