"""Randomization-based inference for completely randomized and matched-pair 2^K factorial designs."""

from .errors import EnumerationCapError, PairfactError
from .estimators import (
    EstimateReport,
    cov_estimator_mp,
    cr_bias,
    estimate,
    estimate_cr,
    estimate_mp,
    is_psd,
    mp_bias,
    neyman_cov_cr,
    true_cov_cr,
    true_cov_mp,
    true_var_mp_k1,
)
from .model_matrix import ModelMatrix, build_model_matrix
from .oracle import compare_designs, exact_cr_moments, exact_mp_moments, verify_cr, verify_mp
from .population import (
    Pairing,
    ScienceTable,
    pair_effects,
    pair_means,
    population_effect,
    treatment_variance,
    unit_effects,
)
from .randomization import (
    Assignment,
    ObservedData,
    draw_complete,
    draw_matched_pair,
    enumerate_complete,
    enumerate_matched_pair,
    observe,
)

__version__ = "0.1.0"
