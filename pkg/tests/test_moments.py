import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from photocorr import fock, moments
from photocorr.errors import SeriesDivergenceError, TruncationError, UndefinedMomentError
from photocorr.moments import MomentReport


def _g(stats, m_max):
    return moments.moments_from_statistics(stats, m_max)


def _brute_factorial_moment(p, m):
    # plain Python sum of n!/(n-m)! p_n
    return sum(math.perm(n, m) * float(pn) for n, pn in enumerate(p))


# --- single-order and full reports


def test_spec_values():
    assert _g(fock.fock_state(1, 3), 2).g(2) == 0.0
    assert _g(fock.thermal_state(1.0, 200), 2).g(2) == pytest.approx(2.0, rel=1e-13)
    p = fock.poisson_state(2.0, 80)
    assert _brute_factorial_moment(p.probs, 3) == pytest.approx(8.0, rel=1e-12)
    assert _g(p, 3).g(3) * p.mean ** 3 == pytest.approx(8.0, rel=1e-12)


def test_thermal_report_is_factorials():
    rep = _g(fock.thermal_state(1.0, 200), 5)
    np.testing.assert_allclose(rep.values, [1, 2, 6, 24, 120], rtol=1e-12)
    assert rep.source == "analytic"
    assert rep.mean_photon_number == pytest.approx(1.0, rel=1e-13)


@pytest.mark.parametrize("k", [1, 2, 3, 4, 7])
def test_fock_formula(k):
    rep = _g(fock.fock_state(k, 10), 8)
    want = [math.perm(k, m) / k ** m for m in range(1, 9)]
    np.testing.assert_allclose(rep.values, want, atol=1e-15)


def test_displaced_single_photon_closed_form():
    a2 = 4.0
    stats = fock.displaced_fock_state(1, 2.0, 120)
    rep = _g(stats, 6)
    want = [a2 ** (m - 1) * (m * m + a2) / (1 + a2) ** m for m in range(1, 7)]
    np.testing.assert_allclose(rep.values, want, rtol=1e-10)
    assert rep.g(2) == pytest.approx(1.28, rel=1e-10)


def test_errors():
    with pytest.raises(UndefinedMomentError):
        _g(fock.fock_state(0, 4), 2)
    with pytest.raises(TruncationError):
        _g(fock.fock_state(1, 2), 3)
    with pytest.raises(ValueError):
        MomentReport(np.array([0.9, 2.0]))
    with pytest.raises(ValueError):
        MomentReport(np.array([1.0, -0.1]))


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0.0, 1.0), min_size=3, max_size=12).filter(lambda v: sum(v[1:]) > 1e-3))
def test_moments_match_brute_force(weights):
    p = np.array(weights) / sum(weights)
    stats = fock.PhotonStatistics(p)
    m_max = len(p) - 1
    rep = _g(stats, m_max)
    mean = _brute_factorial_moment(p, 1)
    for m in range(1, m_max + 1):
        want = _brute_factorial_moment(p, m) / mean ** m
        assert rep.g(m) == pytest.approx(want, rel=1e-10, abs=1e-13)


# --- moment generating function and parity


def test_mgf_normalization_and_parity_values():
    stats = fock.thermal_state(0.4, 120)
    assert moments.mgf_from_statistics(stats, 0.0).value == pytest.approx(1.0, abs=1e-12)
    assert moments.parity(fock.poisson_state(1.0, 60)).value == pytest.approx(math.exp(-2), rel=1e-12)
    assert moments.parity(fock.fock_state(1, 3)).value == -1.0
    assert moments.parity(fock.thermal_state(1.0, 200)).value == pytest.approx(1 / 3, rel=1e-12)
    assert moments.parity(fock.fock_state(0, 3)).value == 1.0


def test_parity_from_moments_poisson():
    stats = fock.poisson_state(1.0, 60)
    rep = _g(stats, 30)
    val = moments.parity(rep)
    assert abs(val.value - math.exp(-2)) <= val.bound + 1e-12


def test_mgf_paths_agree_or_refuse():
    for stats in (fock.poisson_state(2.0, 80), fock.thermal_state(0.3, 120), fock.fock_state(3, 40)):
        rep = _g(stats, 40)
        for mu in (0.25, 0.5, 1.0, 1.5, 2.0):
            direct = moments.mgf_from_statistics(stats, mu)
            try:
                series = moments.mgf_from_moments(rep, mu)
            except SeriesDivergenceError:
                continue
            assert abs(direct.value - series.value) <= direct.bound + series.bound + 1e-12


def test_divergent_thermal_series_refused():
    rep = _g(fock.thermal_state(1.0, 200), 20)
    with pytest.raises(SeriesDivergenceError):
        moments.mgf_from_moments(rep, 2.0)


def test_mu_range():
    with pytest.raises(ValueError):
        moments.mgf_from_statistics(fock.fock_state(1, 2), 2.5)


# --- criteria


def test_moment_matrix_examples():
    v = moments.moment_matrix_test(_g(fock.poisson_state(1.5, 80), 2), 2)
    assert abs(v.details["determinant"]) <= 1e-9
    assert not v.nonclassical
    v = moments.moment_matrix_test(_g(fock.fock_state(1, 4), 2), 2)
    assert v.details["determinant"] == pytest.approx(-1.0, abs=1e-15)
    assert v.statistic == pytest.approx((1 - math.sqrt(5)) / 2, rel=1e-12)
    assert v.nonclassical
    v = moments.moment_matrix_test(_g(fock.thermal_state(1.0, 200), 4), 3)
    assert min(v.details["eigenvalues"]) >= 0
    assert not v.nonclassical


def test_moment_matrix_is_hankel():
    rep = MomentReport(np.array([1.0, 2.0, 6.0, 24.0]))
    np.testing.assert_array_equal(moments.moment_matrix(rep, 3), [[1, 1, 2], [1, 2, 6], [2, 6, 24]])
    with pytest.raises(ValueError):
        moments.moment_matrix(rep, 4)


def test_monotonicity_examples():
    assert moments.monotonicity_test(_g(fock.fock_state(1, 4), 2)).nonclassical
    assert not moments.monotonicity_test(_g(fock.thermal_state(1.0, 200), 6)).nonclassical


def test_monotonicity_displaced_single_photon():
    a2 = 4.0
    rep = _g(fock.displaced_fock_state(1, 2.0, 200), 12)
    closed = [a2 ** (m - 1) * (m * m + a2) / (1 + a2) ** m for m in range(1, 13)]
    slacks = np.diff(closed)
    v = moments.monotonicity_test(rep)
    assert v.nonclassical
    assert v.details["order"] == int(np.argmin(slacks)) + 1
    assert min(slacks) < 0 and slacks[0] > 0


def test_schwarz_examples():
    assert not moments.schwarz_test(_g(fock.fock_state(1, 4), 3), 2, 1).nonclassical
    v = moments.schwarz_test(_g(fock.fock_state(2, 4), 3), 2, 1)
    assert v.statistic == pytest.approx(-0.25, abs=1e-15)
    assert v.nonclassical
    v = moments.schwarz_test(_g(fock.poisson_state(0.8, 60), 6), 3, 2)
    assert abs(v.statistic) < 1e-12 and not v.nonclassical


def test_significance_uses_uncertainties():
    # fock-like values but with large errors: not significant
    rep = MomentReport(np.array([1.0, 0.9]), np.array([0.0, 0.2]), 1.0, "measured")
    assert not moments.monotonicity_test(rep).nonclassical
    rep = MomentReport(np.array([1.0, 0.9]), np.array([0.0, 0.01]), 1.0, "measured")
    v = moments.monotonicity_test(rep)
    assert v.nonclassical and v.significance == pytest.approx(10.0)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.05, 4.0), st.sampled_from(["thermal", "poisson"]))
def test_classical_states_never_flagged(mean, kind):
    stats = fock.make_state(kind, 400, mean=mean)
    rep = _g(stats, 8)
    assert not any(v.nonclassical for v in moments.all_criteria(rep))
