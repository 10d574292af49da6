"""Exit criteria.  Each test is one criterion; the terminal summary prints
one PASS/FAIL line per criterion (see conftest.py)."""

import json
import time

import numpy as np

from pairfact import (
    Pairing,
    ScienceTable,
    build_model_matrix,
    mp_bias,
    population_effect,
    true_cov_cr,
    true_cov_mp,
    true_var_mp_k1,
)
from pairfact.cli import main
from pairfact.estimators import cr_bias
from pairfact.kernels import cr_batch, mp_batch
from pairfact.oracle import compare, exact_cr_moments, exact_mp_moments
from pairfact.population import (
    between_pair_scatter,
    effect_scatter,
    pair_means,
    treatment_means,
    within_pair_scatter,
    within_pair_variances,
)
from pairfact.randomization import draw_complete_many, draw_matched_pair_many

from conftest import DATA, random_pairing, random_table

TOL = 1e-10
CR_SHAPES = [(1, 2), (1, 4), (1, 6), (2, 4), (2, 8)]
TABLES_PER_SHAPE = 5  # 25 tables in total


def _criterion_tables():
    rng = np.random.default_rng(20261015)
    for k, n in CR_SHAPES:
        for _ in range(TABLES_PER_SHAPE):
            yield random_table(rng, k, n), random_pairing(rng, n, k), build_model_matrix(k)


def _ok(check):
    assert check.passed, f"{check.name}: max abs error {check.max_abs_error:.3e}"


def test_criterion_1_model_matrix():
    t0 = time.perf_counter()
    h2 = build_model_matrix(2).entries
    np.testing.assert_array_equal(
        h2, [[1, -1, -1, 1], [1, -1, 1, -1], [1, 1, -1, -1], [1, 1, 1, 1]]
    )
    for k in range(1, 7):
        h = build_model_matrix(k).entries.astype(np.int64)
        np.testing.assert_array_equal(h.T @ h, (1 << k) * np.eye(1 << k, dtype=np.int64))
    assert time.perf_counter() - t0 < 1.0


def test_criterion_2_cr_unbiased_and_covariance():
    t0 = time.perf_counter()
    count = 0
    for st_, _, m in _criterion_tables():
        mom = exact_cr_moments(st_, m)
        _ok(compare("mean", mom.mean, population_effect(st_, m), TOL))
        _ok(compare("cov", mom.cov, true_cov_cr(st_, m), TOL))
        count += 1
    assert count >= 20
    assert time.perf_counter() - t0 < 30.0


def test_criterion_3_neyman_cr_bias():
    checked = 0
    for st_, _, m in _criterion_tables():
        if st_.replicates() < 2:
            continue  # Neymanian estimator needs r >= 2
        mom = exact_cr_moments(st_, m)
        bias = cr_bias(st_, m)
        np.testing.assert_allclose(bias, effect_scatter(st_, m) / (st_.n**2 - st_.n), rtol=1e-12)
        _ok(compare("bias", mom.mean_cov_estimate - true_cov_cr(st_, m), bias, TOL))
        lo = np.linalg.eigvalsh(bias).min()
        assert lo >= -1e-10 * np.trace(bias)
        checked += 1
    assert checked >= 10


def test_criterion_4_mp_covariance_values():
    st_ = ScienceTable(2, np.repeat(np.arange(1.0, 9.0)[:, None], 4, axis=1))
    m = build_model_matrix(2)
    for blocks, diag in [
        (((0, 1, 2, 3), (4, 5, 6, 7)), [0, 5 / 6, 5 / 6, 5 / 6]),
        (((0, 1, 6, 7), (2, 3, 4, 5)), [0, 7 / 2, 7 / 2, 7 / 2]),
    ]:
        p = Pairing(blocks)
        closed = true_cov_mp(st_, p, m)
        _ok(compare("closed form", closed, np.diag(diag), TOL))
        mom = exact_mp_moments(st_, p, m)
        assert mom.count == 576
        _ok(compare("enumeration", mom.cov, np.diag(diag), TOL))


def test_criterion_5_decomposition_identities():
    rng = np.random.default_rng(5)
    for _ in range(100):
        k = int(rng.integers(1, 4))
        r = int(rng.integers(1, 6))
        n = r << k
        st_, m = random_table(rng, k, n), build_model_matrix(k)
        p = random_pairing(rng, n, k)
        size = 1 << k
        lhs = (size - 1) * within_pair_variances(st_, p).sum(axis=0) + size * (
            (pair_means(st_, p) - treatment_means(st_)) ** 2
        ).sum(axis=0)
        _ok(compare("variance", lhs, (n - 1) * np.var(st_.outcomes, axis=0, ddof=1), TOL))
        lhs = within_pair_scatter(st_, p, m) + size * between_pair_scatter(st_, p, m)
        _ok(compare("effect", lhs, effect_scatter(st_, m), TOL))


def test_criterion_6_k1_reduction():
    rng = np.random.default_rng(6)
    m = build_model_matrix(1)
    for _ in range(100):
        r = int(rng.integers(1, 8))
        st_ = random_table(rng, 1, 2 * r)
        p = random_pairing(rng, 2 * r, 1)
        _ok(compare("k=1", true_cov_mp(st_, p, m)[1, 1], true_var_mp_k1(st_, p), TOL))


def test_criterion_7_mp_estimator_bias():
    checked = 0
    for st_, p, m in _criterion_tables():
        if p.r < 2:
            continue
        mom = exact_mp_moments(st_, p, m)
        _ok(compare("mean", mom.mean, population_effect(st_, m), TOL))
        _ok(compare("cov", mom.cov, true_cov_mp(st_, p, m), TOL))
        _ok(compare("bias", mom.mean_cov_estimate - true_cov_mp(st_, p, m), mp_bias(st_, p, m), TOL))
        checked += 1
    assert checked >= 10
    # homogeneous pairs: every pair effect equals tau, so the estimator is unbiased
    st_ = ScienceTable(2, np.repeat(np.arange(1.0, 9.0)[:, None], 4, axis=1))
    p, m = Pairing(((0, 1, 6, 7), (2, 3, 4, 5))), build_model_matrix(2)
    assert np.all(mp_bias(st_, p, m) == 0.0)
    mom = exact_mp_moments(st_, p, m)
    _ok(compare("unbiased", mom.mean_cov_estimate, true_cov_mp(st_, p, m), TOL))


def _mc_check(samples, mean, cov):
    """Sample mean and covariance within 5 Monte Carlo standard errors."""
    n = samples.shape[0]
    mu = samples.mean(axis=0)
    se_mu = samples.std(axis=0) / np.sqrt(n)
    assert np.all(np.abs(mu - mean) <= 5 * se_mu + 1e-12)
    d = samples - mu
    prods = d[:, :, None] * d[:, None, :]
    est = prods.mean(axis=0)
    se = prods.std(axis=0) / np.sqrt(n)
    assert np.all(np.abs(est - cov) <= 5 * se + 1e-12)


def test_criterion_8_sampling_matches_enumeration():
    t0 = time.perf_counter()
    rng = np.random.default_rng(8)
    st_, p, m = random_table(rng, 2, 8), random_pairing(rng, 8, 2), build_model_matrix(2)
    Hs = m.scale * m.as_float()
    draws = draw_complete_many(8, 2, 100_000, seed=81)
    tau, _ = cr_batch(st_.outcomes, Hs, 2, draws)
    mom = exact_cr_moments(st_, m)
    _mc_check(tau, mom.mean, mom.cov)
    draws = draw_matched_pair_many(p, 2, 100_000, seed=82)
    tau, _ = mp_batch(st_.outcomes, Hs, p.as_array(), draws[:, p.as_array()])
    mom = exact_mp_moments(st_, p, m)
    _mc_check(tau, mom.mean, mom.cov)
    assert time.perf_counter() - t0 < 60.0


def test_criterion_9_cli_verify(tmp_path, capsys):
    table = DATA / "n8_k2_table.csv"
    expected = DATA / "n8_k2_expected.json"
    code = main(["verify", "--table", str(table), "--expected", str(expected), "--json"])
    report = json.loads(capsys.readouterr().out)
    assert code == 0 and report["passed"]
    assert all(c["passed"] for r in report["reports"] for c in r["checks"])
    assert all(c["passed"] for c in report["fixture_checks"])

    lines = table.read_text().splitlines()
    fields = lines[3].split(",")
    fields[-1] = str(float(fields[-1]) + 1.0)  # unit 3, Y(+1,+1)
    lines[3] = ",".join(fields)
    corrupted = tmp_path / "corrupted.csv"
    corrupted.write_text("\n".join(lines) + "\n")
    code = main(["verify", "--table", str(corrupted), "--expected", str(expected), "--json"])
    report = json.loads(capsys.readouterr().out)
    assert code == 2 and not report["passed"]
    # the enumeration identities still hold; only the fixture comparison fails
    assert all(r["passed"] for r in report["reports"])
