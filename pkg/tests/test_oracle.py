import numpy as np
import pytest

from pairfact import (
    EnumerationCapError,
    Pairing,
    ScienceTable,
    build_model_matrix,
    compare_designs,
    enumerate_complete,
    estimate_cr,
    observe,
    verify_cr,
    verify_mp,
)
from pairfact.oracle import exact_cr_moments, exact_moments, exact_mp_moments, variance_ratio

from conftest import brute_cr_assignments, brute_moments, random_pairing, random_table


def test_verify_cr_constant(backend, m2):
    rep = verify_cr(ScienceTable(2, np.full((8, 4), 2.0)), m2, backend=backend)
    assert rep.passed
    assert all(c.max_abs_error == 0.0 for c in rep.checks)


def test_verify_cr_table8(table8, m2, backend):
    rep = verify_cr(table8, m2, tol=1e-10, backend=backend)
    assert rep.passed and rep.assignment_count == 2520
    np.testing.assert_allclose(rep.moments.cov, np.diag([0, 3, 3, 3]), atol=1e-12)
    assert len([c for c in rep.checks if not c.skipped]) == 4


def test_verify_cr_k1_random(backend):
    st_ = random_table(np.random.default_rng(1), 1, 4)
    rep = verify_cr(st_, build_model_matrix(1), backend=backend)
    assert rep.passed and rep.assignment_count == 6


def test_verify_cr_r1_skips_neyman(backend, m2):
    st_ = random_table(np.random.default_rng(2), 2, 4)
    rep = verify_cr(st_, m2, backend=backend)
    assert rep.passed
    assert [c.skipped for c in rep.checks] == [False, False, True]


def test_verify_mp(table8, pairing_good, m2, backend):
    rep = verify_mp(table8, pairing_good, m2, backend=backend)
    assert rep.passed and rep.assignment_count == 576
    np.testing.assert_allclose(rep.moments.cov, np.diag([0, 5 / 6, 5 / 6, 5 / 6]), atol=1e-12)


def test_verify_mp_k1_two_pairs(backend):
    rng = np.random.default_rng(9)
    st_ = random_table(rng, 1, 4)
    rep = verify_mp(st_, random_pairing(rng, 4, 1), build_model_matrix(1), backend=backend)
    assert rep.passed and rep.assignment_count == 4


def test_verify_mp_r1_skipped(backend, m2):
    st_ = random_table(np.random.default_rng(3), 2, 4)
    rep = verify_mp(st_, Pairing(((0, 1, 2, 3),)), m2, backend=backend)
    assert rep.passed
    assert rep.checks[-1].skipped and rep.checks[-1].note == "r=1"


def test_verify_detects_wrong_closed_form(table8, m2, monkeypatch):
    import pairfact.oracle as oracle

    monkeypatch.setattr(oracle, "true_cov_cr", lambda st, m: np.eye(4))
    assert not verify_cr(table8, m2).passed


def test_matches_brute_force(backend):
    rng = np.random.default_rng(11)
    st_ = random_table(rng, 1, 6)
    m = build_model_matrix(1)
    mom = exact_cr_moments(st_, m, backend=backend)

    def stat(y, t):
        from pairfact.randomization import ObservedData

        return estimate_cr(ObservedData(1, t, y), m)

    mean, cov = brute_moments(st_, brute_cr_assignments(6, 1), stat)
    np.testing.assert_allclose(mom.mean, mean, rtol=1e-12)
    np.testing.assert_allclose(mom.cov, cov, rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("workers,partitions", [(1, 1), (1, 7), (3, 3), (2, 5)])
def test_range_partitioning(backend, workers, partitions):
    rng = np.random.default_rng(12)
    st_ = random_table(rng, 2, 8)
    p = random_pairing(rng, 8, 2)
    m = build_model_matrix(2)
    ref = exact_cr_moments(st_, m, backend=backend)
    got = exact_cr_moments(st_, m, backend=backend, workers=workers, partitions=partitions)
    np.testing.assert_allclose(got.cov, ref.cov, rtol=1e-12, atol=1e-13)
    np.testing.assert_allclose(got.mean_cov_estimate, ref.mean_cov_estimate, rtol=1e-12, atol=1e-13)
    ref = exact_mp_moments(st_, p, m, backend=backend)
    got = exact_mp_moments(st_, p, m, backend=backend, workers=workers, partitions=partitions)
    np.testing.assert_allclose(got.cov, ref.cov, rtol=1e-12, atol=1e-13)
    # bit-stable for a fixed partitioning
    again = exact_mp_moments(st_, p, m, backend=backend, workers=workers, partitions=partitions)
    np.testing.assert_array_equal(got.cov, again.cov)


def test_cap(table8, m2):
    with pytest.raises(EnumerationCapError):
        verify_cr(table8, m2, cap=2519)


def test_generic_exact_moments(table8, m2):
    mean, cov, count = exact_moments(
        enumerate_complete(8, 2), lambda a: estimate_cr(observe(table8, a), m2)
    )
    assert count == 2520
    np.testing.assert_allclose(mean, [9, 0, 0, 0], atol=1e-12)
    np.testing.assert_allclose(cov, np.diag([0, 3, 3, 3]), atol=1e-12)


def test_compare_designs(table8, pairing_good, pairing_bad, m2):
    good = compare_designs(table8, pairing_good, m2)
    assert good.verdicts == ("equal", "gain", "gain", "gain")
    assert good.ratios[0] == "undefined"
    assert good.ratios[1] == pytest.approx((5 / 6) / 3)
    np.testing.assert_allclose(good.difference, np.diag([0, 3 - 5 / 6, 3 - 5 / 6, 3 - 5 / 6]), atol=1e-12)
    bad = compare_designs(table8, pairing_bad, m2)
    assert bad.verdicts[1:] == ("loss",) * 3
    assert bad.ratios[1] == pytest.approx(3.5 / 3)
    const = compare_designs(ScienceTable(2, np.ones((8, 4))), pairing_good, m2)
    assert const.ratios == ("undefined",) * 4


def test_variance_ratio():
    assert variance_ratio(0.0, 0.0) == "undefined"
    assert variance_ratio(1.0, 0.0) == "infinite"
    assert variance_ratio(1.0, 2.0) == 0.5
