"""Design-weighted survey imputation with replication variance estimation."""

from .design import DesignKind, DesignSpec, SurveySample, draw_pps, draw_srs, horvitz_thompson
from .errors import (
    ConvergenceError,
    DegenerateDesignError,
    NoRespondentsError,
    ReplicateFailureError,
    SchemaError,
    SurveyImputeError,
)
from .imputation import (
    Method,
    nni_bias_corrected,
    nni_estimate,
    pmm_estimate,
    pseudo_values,
    sri_estimate,
)
from .matching import match_scalar, match_vector
from .meanmodel import MeanModel, fit_mean_model
from .popgen import PopulationKind, PopulationSpec, apply_response_model, generate_population
from .repvar import ReplicationScheme, confidence_interval, estimate, replication_variance

__version__ = "0.1.0"

__all__ = [
    "ConvergenceError",
    "DegenerateDesignError",
    "DesignKind",
    "DesignSpec",
    "MeanModel",
    "Method",
    "NoRespondentsError",
    "PopulationKind",
    "PopulationSpec",
    "ReplicateFailureError",
    "ReplicationScheme",
    "SchemaError",
    "SurveyImputeError",
    "SurveySample",
    "apply_response_model",
    "confidence_interval",
    "draw_pps",
    "draw_srs",
    "estimate",
    "fit_mean_model",
    "generate_population",
    "horvitz_thompson",
    "match_scalar",
    "match_vector",
    "nni_bias_corrected",
    "nni_estimate",
    "pmm_estimate",
    "pseudo_values",
    "replication_variance",
    "sri_estimate",
]
