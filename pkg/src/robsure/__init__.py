"""Robust SURE-based estimation of the latent signal dimension."""

from .decomposition import RobustScatter, SureDimension
from .estimators import (
    EstimatorKind,
    FixedPointConfig,
    LocationScatterPair,
    estimate_pair,
    hr_pair,
    mean_cov,
    spatial_median,
    sscm,
    tyler_shape,
)
from .numerics import EigenSystem, inv_sqrt, projection_onto_top_k, sym_eigen
from .sure import (
    CriterionKind,
    SelectionRule,
    SureCurve,
    changepoint_select,
    estimate_dimension,
    select_dimension,
    sure1_curve,
    sure2_curve,
    sure3_curve,
)

__version__ = "0.1.0"

__all__ = [
    "RobustScatter",
    "SureDimension",
    "EstimatorKind",
    "CriterionKind",
    "SelectionRule",
    "FixedPointConfig",
    "LocationScatterPair",
    "EigenSystem",
    "SureCurve",
    "estimate_pair",
    "mean_cov",
    "spatial_median",
    "sscm",
    "tyler_shape",
    "hr_pair",
    "sym_eigen",
    "inv_sqrt",
    "projection_onto_top_k",
    "sure1_curve",
    "sure2_curve",
    "sure3_curve",
    "select_dimension",
    "changepoint_select",
    "estimate_dimension",
]
