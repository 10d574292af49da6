"""Point estimates, true covariances, and covariance estimators.

Functions taking a :class:`ScienceTable` compute randomization-distribution
truths and need every potential outcome.  Functions taking
:class:`ObservedData` are estimators and see only what an experiment reveals.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import PairfactError
from .model_matrix import ModelMatrix
from .population import (
    Pairing,
    ScienceTable,
    between_pair_scatter,
    effect_scatter,
    pair_means,
    treatment_means,
    treatment_variances,
)
from .randomization import ObservedData

SYMMETRY_TOL = 1e-12
PSD_TOL = 1e-10


def symmetrize(mat: np.ndarray) -> np.ndarray:
    """Return (M + M^T) / 2; asymmetry above 1e-12 (relative) is a bug."""
    mat = np.asarray(mat, dtype=np.float64)
    scale = max(1.0, float(np.max(np.abs(mat), initial=0.0)))
    if np.max(np.abs(mat - mat.T), initial=0.0) > SYMMETRY_TOL * scale:
        raise RuntimeError("covariance assembly produced an asymmetric matrix")
    return (mat + mat.T) / 2


def is_psd(mat: np.ndarray, tol: float = PSD_TOL) -> bool:
    """Smallest eigenvalue >= -tol * trace."""
    mat = np.asarray(mat, dtype=np.float64)
    lo = float(np.linalg.eigvalsh((mat + mat.T) / 2).min())
    return lo >= -tol * max(float(np.trace(mat)), 0.0)


def _weighted_outer_sum(m: ModelMatrix, weights: np.ndarray) -> np.ndarray:
    """sum_l w_l lambda_l^T lambda_l = H^T diag(w) H."""
    h = m.as_float()
    return (h.T * weights) @ h


def _check(k: int, m: ModelMatrix) -> None:
    if k != m.k:
        raise PairfactError(f"data has K={k} but model matrix has K={m.k}")


@dataclass(frozen=True)
class EstimateReport:
    design: str
    k: int
    n: int
    r: int
    point: np.ndarray = field(repr=False)
    covariance_estimate: np.ndarray = field(repr=False)
    effect_names: tuple[str, ...] = ()


# -- complete randomization ---------------------------------------------------


def estimate_cr(obs: ObservedData, m: ModelMatrix) -> np.ndarray:
    """Contrast of per-treatment observed means."""
    _check(obs.k, m)
    obs.replicates()
    means = np.array([g.mean() for g in obs.by_treatment()])
    return m.contrast(means)


def neyman_cov_cr(obs: ObservedData, m: ModelMatrix) -> np.ndarray:
    """Neymanian covariance estimator under complete randomization."""
    _check(obs.k, m)
    r = obs.replicates()
    if r < 2:
        raise PairfactError("Neymanian CR estimator undefined for r=1")
    s2 = np.array([np.var(g, ddof=1) for g in obs.by_treatment()])
    return symmetrize(m.scale**2 / r * _weighted_outer_sum(m, s2))


def true_cov_cr(st: ScienceTable, m: ModelMatrix) -> np.ndarray:
    """Randomization covariance of the CR estimator."""
    _check(st.k, m)
    r = st.replicates()
    n = st.n
    if n < 2:
        raise PairfactError("true CR covariance needs N >= 2")
    first = m.scale**2 / r * _weighted_outer_sum(m, treatment_variances(st))
    return symmetrize(first - effect_scatter(st, m) / (n * (n - 1)))


def cr_bias(st: ScienceTable, m: ModelMatrix) -> np.ndarray:
    """Bias of the Neymanian CR estimator, sum_i (tau_i - tau)(tau_i - tau)^T / (N^2 - N)."""
    _check(st.k, m)
    n = st.n
    if n < 2:
        raise PairfactError("CR bias needs N >= 2")
    return symmetrize(effect_scatter(st, m) / (n * n - n))


# -- matched pairs ------------------------------------------------------------------


def estimate_mp(obs: ObservedData, m: ModelMatrix) -> np.ndarray:
    """Mean over pairs of the within-pair contrasts."""
    _check(obs.k, m)
    return pair_estimates(obs, m).mean(axis=0)


def pair_estimates(obs: ObservedData, m: ModelMatrix) -> np.ndarray:
    """Per-pair effect estimates, shape (r, 2^K)."""
    _check(obs.k, m)
    return m.contrast(obs.pair_table())


def cov_estimator_mp(obs: ObservedData, m: ModelMatrix) -> np.ndarray:
    """Between-pair scatter of the pair estimates divided by r(r-1)."""
    tau_j = pair_estimates(obs, m)
    r = tau_j.shape[0]
    if r < 2:
        raise PairfactError("MP covariance estimator requires >= 2 pairs")
    d = tau_j - tau_j.mean(axis=0)
    return symmetrize(d.T @ d / (r * (r - 1)))


def pair_variance_terms(st: ScienceTable, p: Pairing) -> np.ndarray:
    """Delta_l per treatment: within-pair part of (N-1) S^2(z_l), over 2^K - 1."""
    size = st.n_treatments
    between = ((pair_means(st, p) - treatment_means(st)) ** 2).sum(axis=0)
    return ((st.n - 1) * treatment_variances(st) - size * between) / (size - 1)


def true_cov_mp(st: ScienceTable, p: Pairing, m: ModelMatrix) -> np.ndarray:
    """Randomization covariance of the matched-pair estimator."""
    _check(st.k, m)
    p.validate(st.n, st.k)
    size = st.n_treatments
    r = p.r
    delta = pair_variance_terms(st, p)
    sigma = effect_scatter(st, m) - size * between_pair_scatter(st, p, m)
    first = m.scale**2 / r**2 * _weighted_outer_sum(m, delta)
    return symmetrize(first - sigma / (size * (size - 1) * r**2))


def true_var_mp_k1(st: ScienceTable, p: Pairing) -> float:
    """Treatment-control variance of the matched-pair difference in means.

    Uses the per-pair form (1/4r^2) sum_j {Y_j1(+1) - Y_j2(-1) - Y_j2(+1) + Y_j1(-1)}^2.
    """
    if st.k != 1:
        raise PairfactError(f"treatment-control variance requires K=1, got K={st.k}")
    p.validate(st.n, st.k)
    y = st.outcomes
    total = 0.0
    for j1, j2 in p.blocks:
        d = y[j1, 1] - y[j2, 0] - y[j2, 1] + y[j1, 0]
        total += d * d
    return total / (4 * p.r**2)


def mp_bias(st: ScienceTable, p: Pairing, m: ModelMatrix) -> np.ndarray:
    """Bias of the MP covariance estimator; positive semi-definite."""
    _check(st.k, m)
    p.validate(st.n, st.k)
    r = p.r
    if r < 2:
        raise PairfactError("MP covariance estimator requires >= 2 pairs")
    return symmetrize(between_pair_scatter(st, p, m) / (r * (r - 1)))


def estimate(obs: ObservedData, m: ModelMatrix, design: str) -> EstimateReport:
    """Point estimate plus covariance estimate for ``design`` in {"cr", "mp"}."""
    design = design.lower()
    if design == "cr":
        point = estimate_cr(obs, m)
        cov = neyman_cov_cr(obs, m)
        r = obs.replicates()
    elif design == "mp":
        point = estimate_mp(obs, m)
        cov = cov_estimator_mp(obs, m)
        r = obs.pair_table().shape[0]
    else:
        raise PairfactError(f"unknown design {design!r}; expected 'cr' or 'mp'")
    return EstimateReport(
        design=design,
        k=obs.k,
        n=obs.n,
        r=r,
        point=point,
        covariance_estimate=cov,
        effect_names=tuple(m.effect_names),
    )
