import math

import numpy as np
import pytest

from photocorr import fock, phasespace
from photocorr.errors import TruncationError
from photocorr.moments import MomentReport, moments_from_statistics


def _laguerre_wigner_fock1(a):
    # W of |1> at |alpha| = a: -(2/pi) (1 - 4 a^2) exp(-2 a^2)
    return -2 / math.pi * (1 - 4 * a * a) * math.exp(-2 * a * a)


def test_fock1_origin():
    rep = phasespace.displaced_fock_moments(1, 0.0, 21)
    assert phasespace.wigner_from_moments(rep, m_max=21).value == -2 / math.pi
    assert phasespace.q_from_moments(rep, m_max=21).value == 0.0
    assert phasespace.chi_squared_fock(1, rep, m_max=20).value == 1.0


@pytest.mark.parametrize("a", [0.2, 0.5, 0.8])
def test_fock1_wigner_closed_form(a):
    rep = phasespace.displaced_fock_moments(1, a, 25)
    w = phasespace.wigner_from_moments(rep, m_max=25)
    assert w.converged
    assert w.value == pytest.approx(_laguerre_wigner_fock1(a), abs=1e-6)
    q = phasespace.q_from_moments(rep, m_max=25)
    assert q.value == pytest.approx(a * a * math.exp(-a * a) / math.pi, abs=1e-8)


@pytest.mark.parametrize("beta", [0.0, 0.7, 1.3])
def test_coherent_state_functions(beta):
    n_max = 80
    state = fock.displaced_fock_amplitudes(0, beta, n_max)
    for a in (0.0, 0.4, 1.1):
        stats = phasespace.displaced_statistics(state, a)
        d2 = (a - beta) ** 2
        if stats.mean > 1e-12:
            rep = moments_from_statistics(stats.padded(max(stats.n_max, 30)), 30)
            assert phasespace.q_from_moments(rep, m_max=30).value == pytest.approx(math.exp(-d2) / math.pi, abs=1e-8)
        assert phasespace.wigner_oracle(stats) == pytest.approx(2 / math.pi * math.exp(-2 * d2), abs=1e-12)
        assert phasespace.q_oracle(stats) == pytest.approx(math.exp(-d2) / math.pi, abs=1e-12)


def test_low_order_is_flagged_far_out():
    w = phasespace.wigner_from_moments(phasespace.displaced_fock_moments(1, 1.5, 6), m_max=6)
    assert not w.converged
    assert w.residual > 1e-4


def test_convergence_flag_rules():
    assert phasespace.convergence_flag([1.0, 0.5, 0.1, 1e-5])
    assert not phasespace.convergence_flag([1.0, 0.1, 0.2, 1e-5])
    assert not phasespace.convergence_flag([1.0, 0.5, 0.01])
    assert phasespace.convergence_flag([1.0, 0.0, 0.0])
    assert not phasespace.convergence_flag([1.0, 0.5])


def test_grid_agrees_with_oracles_and_writes_csv(tmp_path):
    one = fock.fock_state(1, 1)
    alphas = [0.0, 0.3, 0.6 + 0.2j]
    grid = phasespace.reconstruct_grid(one, alphas, [6, 21])
    assert len(grid.points) == 6
    for p in grid.select(21):
        stats = phasespace.displaced_statistics(one, p.alpha)
        assert p.converged
        assert p.wigner.value == pytest.approx(phasespace.wigner_oracle(stats), abs=1e-6)
        assert p.chi2.value == pytest.approx(phasespace.chi_squared_oracle(stats, 1), abs=1e-6)
    grid.to_csv(tmp_path / "g.csv")
    lines = [l for l in (tmp_path / "g.csv").read_text().splitlines() if not l.startswith("#")]
    assert lines[0].split(",") == list(phasespace.ReconstructionGrid.HEADER)
    assert len(lines) == 7


def test_vacuum_grid_point():
    grid = phasespace.reconstruct_grid(fock.fock_state(0, 1), [0.0], [4])
    assert grid.points[0].wigner.value == pytest.approx(2 / math.pi)
    assert grid.points[0].q.value == pytest.approx(1 / math.pi)


def test_errors():
    rep = MomentReport(np.ones(3), None, 0.5)
    with pytest.raises(ValueError):
        phasespace.wigner_from_moments(rep, m_max=5)
    with pytest.raises(ValueError):
        phasespace.wigner_from_moments([1.0, 1.0])
    with pytest.raises(TruncationError):
        phasespace.displaced_statistics(fock.fock_state(1, 1), 3.0, n_max=5)
