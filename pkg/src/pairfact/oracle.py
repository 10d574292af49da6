"""Exact-enumeration verification of the closed-form results.

The randomization distribution of an estimator is finite, so its mean and
covariance can be computed exactly by visiting every assignment.  Moments are
accumulated in two passes (mean first, then centered second moments) with
compensated summation inside each range.  The assignment space may be split
into disjoint rank ranges processed by a thread pool; partial sums are merged
in range order, so results are bit-stable for a fixed partitioning.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from . import kernels
from .errors import PairfactError
from .estimators import (
    cr_bias,
    is_psd,
    mp_bias,
    true_cov_cr,
    true_cov_mp,
)
from .model_matrix import ModelMatrix
from .population import Pairing, ScienceTable, population_effect
from .randomization import (
    _check_cap,
    count_complete,
    count_matched_pair,
    unrank_complete,
    unrank_matched_pair,
)


@dataclass(frozen=True)
class EnumerationMoments:
    """Exact moments of (effect estimate, covariance estimate) over a design."""

    count: int
    mean: np.ndarray = field(repr=False)
    cov: np.ndarray = field(repr=False)
    mean_cov_estimate: np.ndarray | None = field(repr=False)


@dataclass(frozen=True)
class IdentityCheck:
    name: str
    max_abs_error: float
    scale: float
    tolerance: float
    passed: bool
    skipped: bool = False
    note: str = ""

    @property
    def rel_error(self) -> float:
        return self.max_abs_error / self.scale


@dataclass(frozen=True)
class VerificationReport:
    design: str
    assignment_count: int
    expected_count: int
    checks: tuple[IdentityCheck, ...]
    moments: EnumerationMoments | None = field(default=None, repr=False)

    @property
    def passed(self) -> bool:
        return self.assignment_count == self.expected_count and all(
            c.passed for c in self.checks if not c.skipped
        )


def compare(name: str, actual, expected, tol: float) -> IdentityCheck:
    """Max-abs error, judged relative to max(1, max|expected|)."""
    actual = np.asarray(actual, dtype=np.float64)
    expected = np.asarray(expected, dtype=np.float64)
    if actual.shape != expected.shape:
        return IdentityCheck(name, float("inf"), 1.0, tol, False, note="shape mismatch")
    err = float(np.max(np.abs(actual - expected), initial=0.0))
    scale = max(1.0, float(np.max(np.abs(expected), initial=0.0)))
    return IdentityCheck(name, err, scale, tol, err <= tol * scale)


def skipped(name: str, tol: float, note: str) -> IdentityCheck:
    return IdentityCheck(name, 0.0, 1.0, tol, True, skipped=True, note=note)


# -- enumeration -------------------------------------------------------------------


def _ranges(total: int, parts: int) -> list[tuple[int, int]]:
    parts = max(1, min(parts, total))
    edges = np.linspace(0, total, parts + 1).round().astype(np.int64)
    return [(int(a), int(b - a)) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def _two_pass(total, unrank, first, second, workers, partitions):
    ranges = _ranges(total, partitions or workers)
    states = [unrank(start) for start, _ in ranges]

    def run(fn, args):
        if workers > 1 and len(args) > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                return list(pool.map(lambda a: fn(*a), args))
        return [fn(*a) for a in args]

    parts = run(first, [(s, c) for s, (_, c) in zip(states, ranges)])
    sum_tau = np.sum([p[0] for p in parts], axis=0)
    sum_cov = np.sum([p[1] for p in parts], axis=0)
    mean = sum_tau / total
    outer = run(lambda s, c: second(s, c, mean), [(s, c) for s, (_, c) in zip(states, ranges)])
    cov = np.sum(outer, axis=0) / total
    return mean, (cov + cov.T) / 2, sum_cov / total


def exact_cr_moments(
    st: ScienceTable,
    m: ModelMatrix,
    cap: int | None = None,
    backend: str | None = None,
    workers: int = 1,
    partitions: int | None = None,
) -> EnumerationMoments:
    """Exact mean/covariance of the CR estimator and mean of its Neymanian estimator."""
    r = st.replicates()
    total = count_complete(st.n, st.k)
    _check_cap(total, cap)
    Y = np.ascontiguousarray(st.outcomes)
    Hs = m.scale * m.as_float()
    mean, cov, mean_est = _two_pass(
        total,
        lambda start: unrank_complete(start, st.n, st.k),
        lambda s, c: kernels.cr_first_moments(Y, Hs, r, s, c, backend),
        lambda s, c, mu: kernels.cr_second_moments(Y, Hs, r, s, c, mu, backend),
        workers,
        partitions,
    )
    return EnumerationMoments(total, mean, cov, mean_est if r >= 2 else None)


def exact_mp_moments(
    st: ScienceTable,
    p: Pairing,
    m: ModelMatrix,
    cap: int | None = None,
    backend: str | None = None,
    workers: int = 1,
    partitions: int | None = None,
) -> EnumerationMoments:
    """Exact mean/covariance of the MP estimator and mean of its covariance estimator."""
    p.validate(st.n, st.k)
    total = count_matched_pair(p.r, st.k)
    _check_cap(total, cap)
    Y = np.ascontiguousarray(st.outcomes)
    Hs = m.scale * m.as_float()
    blocks = p.as_array()
    mean, cov, mean_est = _two_pass(
        total,
        lambda start: unrank_matched_pair(start, p.r, st.k),
        lambda s, c: kernels.mp_first_moments(Y, Hs, blocks, s, c, backend),
        lambda s, c, mu: kernels.mp_second_moments(Y, Hs, blocks, s, c, mu, backend),
        workers,
        partitions,
    )
    return EnumerationMoments(total, mean, cov, mean_est if p.r >= 2 else None)


def exact_moments(assignments: Iterable, statistic: Callable) -> tuple[np.ndarray, np.ndarray, int]:
    """Mean and covariance of ``statistic(a)`` over an explicit assignment stream.

    Slow generic path for arbitrary estimators; returns (mean, cov, count).
    """
    values = np.array([np.atleast_1d(statistic(a)) for a in assignments], dtype=np.float64)
    if values.size == 0:
        raise PairfactError("empty assignment stream")
    mean = values.mean(axis=0)
    d = values - mean
    return mean, d.T @ d / values.shape[0], values.shape[0]


# -- verification --------------------------------------------------------------------


def verify_cr(st: ScienceTable, m: ModelMatrix, tol: float = 1e-10, **kw) -> VerificationReport:
    """Check unbiasedness, covariance, and Neymanian bias for complete randomization."""
    mom = exact_cr_moments(st, m, **kw)
    checks = [
        compare("cr: estimator mean = tau", mom.mean, population_effect(st, m), tol),
        compare("cr: estimator covariance = closed form", mom.cov, true_cov_cr(st, m), tol),
    ]
    if mom.mean_cov_estimate is None:
        checks.append(skipped("cr: Neymanian estimator mean = covariance + bias", tol, "r=1"))
    else:
        bias = cr_bias(st, m)
        checks.append(
            compare(
                "cr: Neymanian estimator mean = covariance + bias",
                mom.mean_cov_estimate,
                true_cov_cr(st, m) + bias,
                tol,
            )
        )
        checks.append(_psd_check("cr: bias is PSD", bias, tol))
    return VerificationReport("cr", mom.count, count_complete(st.n, st.k), tuple(checks), mom)


def verify_mp(
    st: ScienceTable, p: Pairing, m: ModelMatrix, tol: float = 1e-10, **kw
) -> VerificationReport:
    """Check unbiasedness, covariance, and covariance-estimator bias for matched pairs."""
    mom = exact_mp_moments(st, p, m, **kw)
    truth = true_cov_mp(st, p, m)
    checks = [
        compare("mp: estimator mean = tau", mom.mean, population_effect(st, m), tol),
        compare("mp: estimator covariance = closed form", mom.cov, truth, tol),
    ]
    if mom.mean_cov_estimate is None:
        checks.append(skipped("mp: covariance estimator mean = covariance + bias", tol, "r=1"))
    else:
        bias = mp_bias(st, p, m)
        checks.append(
            compare(
                "mp: covariance estimator mean = covariance + bias",
                mom.mean_cov_estimate,
                truth + bias,
                tol,
            )
        )
        checks.append(_psd_check("mp: bias is PSD", bias, tol))
    return VerificationReport("mp", mom.count, count_matched_pair(p.r, st.k), tuple(checks), mom)


def _psd_check(name: str, mat: np.ndarray, tol: float) -> IdentityCheck:
    lo = float(np.linalg.eigvalsh(mat).min())
    return IdentityCheck(name, max(0.0, -lo), max(1.0, float(np.trace(mat))), tol, is_psd(mat, tol))


# -- design comparison ------------------------------------------------------------


@dataclass(frozen=True)
class ComparisonReport:
    effect_names: tuple[str, ...]
    cov_cr: np.ndarray = field(repr=False)
    cov_mp: np.ndarray = field(repr=False)
    difference: np.ndarray = field(repr=False)
    ratios: tuple = ()
    verdicts: tuple[str, ...] = ()


def variance_ratio(mp: float, cr: float, atol: float = 1e-12):
    """MP variance over CR variance; 0/0 is "undefined", x/0 is "infinite"."""
    if abs(cr) <= atol:
        return "undefined" if abs(mp) <= atol else "infinite"
    return mp / cr


def compare_designs(st: ScienceTable, p: Pairing, m: ModelMatrix) -> ComparisonReport:
    """Side-by-side true covariances of the CR and MP estimators.

    ``difference`` is CR minus MP.  Verdicts are "gain" when pairing lowers
    the variance of an effect, "loss" when it raises it.
    """
    cr = true_cov_cr(st, m)
    mp = true_cov_mp(st, p, m)
    ratios, verdicts = [], []
    scale = max(1.0, float(np.max(np.abs(cr), initial=0.0)), float(np.max(np.abs(mp), initial=0.0)))
    for a in range(m.size):
        v_cr, v_mp = float(cr[a, a]), float(mp[a, a])
        ratios.append(variance_ratio(v_mp, v_cr))
        if abs(v_mp - v_cr) <= 1e-12 * scale:
            verdicts.append("equal")
        else:
            verdicts.append("gain" if v_mp < v_cr else "loss")
    return ComparisonReport(
        effect_names=tuple(m.effect_names),
        cov_cr=cr,
        cov_mp=mp,
        difference=cr - mp,
        ratios=tuple(ratios),
        verdicts=tuple(verdicts),
    )
