import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm
from scipy.stats import poisson

from photocorr import fock
from photocorr.errors import TruncationError
from photocorr.moments import factorial_moments, moments_from_statistics


def test_fock_one_is_a_unit_vector():
    assert fock.fock_state(1, 4).probs.tolist() == [0.0, 1.0, 0.0, 0.0, 0.0]


def test_thermal_unit_mean_is_geometric_halves():
    p = fock.thermal_state(1.0, 60).probs
    np.testing.assert_allclose(p, 0.5 ** (np.arange(61) + 1), rtol=1e-15)


def test_displaced_fock_at_origin_is_fock():
    p = fock.displaced_fock_state(1, 0.0, 10).probs
    np.testing.assert_array_equal(p, fock.fock_state(1, 10).probs)


def test_poisson_matches_scipy_pmf():
    p = fock.poisson_state(2.7, 50)
    np.testing.assert_allclose(p.probs, poisson.pmf(np.arange(51), 2.7), rtol=1e-12, atol=1e-300)
    assert p.tail_bound <= 1e-12


def test_truncation_errors():
    with pytest.raises(TruncationError):
        fock.thermal_state(5.0, 10)
    with pytest.raises(TruncationError):
        fock.fock_state(3, 2)
    with pytest.raises(TruncationError):
        fock.displaced_fock_amplitudes(1, 3.0, 10)


def test_make_state_requires_parameters():
    with pytest.raises(ValueError):
        fock.make_state("thermal", 10)
    with pytest.raises(ValueError):
        fock.make_state("squeezed", 10, mean=1.0)
    assert fock.make_state("vacuum", 3).probs[0] == 1.0


# --- displacement operator


def test_displacement_identity_at_zero():
    np.testing.assert_array_equal(fock.displacement_matrix(0.0, 6), np.eye(7))


def test_displacement_vacuum_column_is_poisson():
    d = fock.displacement_matrix(1.0, 30)
    m = np.arange(31)
    want = np.exp(-1.0) / np.array([math.factorial(int(k)) for k in m], dtype=float)
    np.testing.assert_allclose(np.abs(d[:, 0]) ** 2, want, rtol=1e-12)


@pytest.mark.parametrize("alpha", [0.3, 1.0, 1.5 - 0.7j, 2.0j, -2.0])
def test_displacement_unitary_on_low_rows(alpha):
    d = fock.displacement_matrix(alpha, 60)
    gram = d.conj().T @ d
    assert np.max(np.abs(gram[:21, :21] - np.eye(21))) < 1e-10


def test_displacement_matches_matrix_exponential():
    alpha = 0.8 + 0.6j
    big = 120
    a = fock.annihilation_matrix(big).astype(complex)
    gen = alpha * a.conj().T - np.conj(alpha) * a
    ref = expm(gen)[:13, :13]
    np.testing.assert_allclose(fock.displacement_matrix(alpha, 12), ref, atol=1e-12)


def test_displacement_survives_large_photon_numbers():
    d = fock.displacement_matrix(3.0, 400, n_cols=200)
    assert np.all(np.isfinite(d))
    np.testing.assert_allclose(np.sum(np.abs(d[:, 180]) ** 2), 1.0, atol=1e-10)


# --- twin beams


def test_single_mode_twin_beam_is_geometric():
    b = math.asinh(0.1)  # sinh^2 B = 0.01
    joint = fock.two_mode_squeezed_joint([1.0], b, 40)
    x = 0.01 / 1.01
    diag = np.diag(joint.probs)
    np.testing.assert_allclose(diag, (1 - x) * x ** np.arange(41), rtol=1e-12)
    assert abs(diag[0] - 0.990) < 1e-3
    assert np.count_nonzero(joint.probs - np.diag(diag)) == 0


def test_unsqueezed_twin_beam_is_vacuum():
    joint = fock.two_mode_squeezed_joint([1.0], 0.0, 5)
    assert joint.probs[0, 0] == 1.0
    assert joint.tail_bound == 0.0


def _marginal_g2(modes: int, mean: float) -> float:
    lam = np.full(modes, 1 / math.sqrt(modes))
    # equal modes: sinh^2(B / sqrt(K)) = mean / K
    b = math.asinh(math.sqrt(mean / modes)) * math.sqrt(modes)
    joint = fock.two_mode_squeezed_joint(lam, b, 40, tol=1e-10)
    return moments_from_statistics(joint.signal(), 2).g(2)


def test_many_equal_modes_marginal_is_one_plus_inverse_k():
    assert abs(_marginal_g2(200, 0.1) - (1 + 1 / 200)) < 1e-9


def test_marginal_tends_to_poisson():
    assert abs(_marginal_g2(2000, 0.1) - 1.0) <= 1e-3


def test_pair_distribution_of_two_modes_is_a_convolution():
    lam = np.array([0.8, 0.6])
    b = 0.5
    x = np.tanh(b * lam) ** 2
    n = np.arange(30)
    ref = np.convolve((1 - x[0]) * x[0] ** n, (1 - x[1]) * x[1] ** n)[:30]
    np.testing.assert_allclose(fock.pair_number_distribution(lam, b, 29), ref, rtol=1e-13)


# --- oracle and properties


@pytest.mark.parametrize("make", [lambda: fock.thermal_state(0.7, 80), lambda: fock.poisson_state(1.3, 60),
                                  lambda: fock.fock_state(4, 6)])
def test_normal_ordered_oracle_agrees(make):
    stats = make()
    fm = factorial_moments(stats, 4)
    for m in range(1, 5):
        assert fock.normal_ordered_moment_oracle(stats, m) == pytest.approx(fm[m], rel=1e-11)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.0, 6.0))
def test_catalog_states_normalized_with_right_mean(mean):
    for make in (fock.poisson_state, fock.thermal_state):
        s = make(mean, 400)
        assert abs(s.probs.sum() - 1.0) < 1e-12
        assert abs(s.mean - mean) < 1e-9 * max(1.0, mean)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.0, 2.0), st.floats(0.0, 2 * math.pi), st.integers(0, 5))
def test_displaced_fock_normalized(r, phi, k):
    amps = fock.displaced_fock_amplitudes(k, r * np.exp(1j * phi), 80)
    assert abs(np.sum(np.abs(amps.amps) ** 2) - 1.0) < 1e-12
