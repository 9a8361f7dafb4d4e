import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from photocorr import fock, homodyne
from photocorr.errors import UndefinedMomentError


def test_transfer_rows():
    c = homodyne.build_transfer_matrix(3).coeffs
    np.testing.assert_array_equal(c[1, :2], [1, 2])
    np.testing.assert_array_equal(c[2, :3], [3, 12, 6])
    assert np.all(np.triu(c, 1) == 0)


def test_vacuum_quadrature_moments_are_double_factorials():
    for k in range(8):
        assert homodyne.fock_quadrature_moment(0, k) == pytest.approx(math.prod(range(2 * k - 1, 0, -2)), rel=1e-12)


def test_gaussian_and_coherent_closed_forms():
    th = homodyne.exact_quadrature_moments("thermal", 1.0, 2)
    assert th[1] == 3.0 and th[2] == 27.0
    co = homodyne.exact_quadrature_moments("coherent", 1.0, 2)
    assert co[1] == 3.0 and co[2] == 21.0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 12), st.integers(0, 6))
def test_transfer_matches_ladder_oracle(n, k):
    c = homodyne.build_transfer_matrix(6).coeffs
    pred = sum(c[k, m] * math.perm(n, m) for m in range(7))
    assert pred == pytest.approx(homodyne.fock_quadrature_moment(n, k), rel=1e-12)


def test_inversion_recovers_normal_moments():
    t = homodyne.build_transfer_matrix(5)
    for state, g in (("thermal", [math.factorial(m) for m in range(6)]), ("coherent", [1.0] * 6)):
        q = homodyne.exact_quadrature_moments(state, 0.7, 5)
        normal = t.invert(q)
        np.testing.assert_allclose(normal, [g[m] * 0.7 ** m for m in range(6)], rtol=1e-9)


def test_sampled_moments_converge():
    batch = homodyne.sample_quadratures("coherent", 1.0, 400_000, 3)
    exact = homodyne.exact_quadrature_moments("coherent", 1.0, 2)
    assert np.mean(batch.samples ** 2) == pytest.approx(exact[1], rel=0.01)
    assert np.mean(batch.samples ** 4) == pytest.approx(exact[2], rel=0.03)
    rep = homodyne.moments_from_quadratures(batch, 3)
    for m in (2, 3):
        assert abs(rep.g(m) - 1.0) <= 3 * rep.sigma(m)


def test_thermal_block_moments():
    qm = homodyne.simulate_block_moments("thermal", 1.0, 200_000, 10, 4, 3)
    rep = homodyne.moments_from_block_quadratures(qm, 3).report
    assert abs(rep.g(2) - 2.0) <= 3 * rep.sigma(2)
    assert abs(rep.g(3) - 6.0) <= 3 * rep.sigma(3)


def test_block_moments_independent_of_workers():
    a = homodyne.simulate_block_moments("coherent", 1.0, 2_500_000, 2, 9, 3, workers=1)
    b = homodyne.simulate_block_moments("coherent", 1.0, 2_500_000, 2, 9, 3, workers=4)
    np.testing.assert_array_equal(a, b)


def test_vacuum_is_undefined():
    qm = homodyne.exact_quadrature_moments("thermal", 0.0, 2)
    with pytest.raises(UndefinedMomentError):
        homodyne.moments_from_block_quadratures(np.vstack([qm, qm]), 2)


def test_batch_round_trip(tmp_path):
    batch = homodyne.sample_quadratures("thermal", 0.5, 50, 1)
    batch.to_csv(tmp_path / "q.csv")
    back = homodyne.QuadratureBatch.from_csv(tmp_path / "q.csv")
    np.testing.assert_array_equal(back.samples, batch.samples)
    assert back.label == "thermal" and back.seed == 1


def test_invalid_inputs():
    with pytest.raises(ValueError):
        homodyne.sample_quadratures("squeezed", 1.0, 10, 1)
    with pytest.raises(ValueError):
        homodyne.sample_quadratures("thermal", -1.0, 10, 1)
    with pytest.raises(ValueError):
        homodyne.QuadratureBatch([1.0, np.nan])
