import math

import numpy as np
import pytest

from photocorr import fock, pdc
from photocorr.detection import DetectorModel
from photocorr.errors import HeraldError, ResolutionError


def _mode_means(spectrum):
    return np.sinh(spectrum.strength * spectrum.weights) ** 2


def test_double_gaussian_schmidt_number():
    jsa = pdc.double_gaussian_jsa(1.0, 0.25, points=256)
    sp = pdc.schmidt_decompose(jsa)
    assert sp.K == pytest.approx(pdc.double_gaussian_schmidt_number(1.0, 0.25), rel=1e-3)
    assert pdc.double_gaussian_schmidt_number(1.0, 0.25) == pytest.approx(17 / 8)


def test_decomposition_recovers_hermite_weights():
    lam = np.array([0.8, 0.5, 0.3, 0.1])
    lam = lam / np.linalg.norm(lam)
    sp = pdc.schmidt_decompose(pdc.schmidt_mode_jsa(lam, points=300))
    np.testing.assert_allclose(sp.weights[:4], lam, atol=1e-6)


def test_grid_checks():
    with pytest.raises(ResolutionError):
        pdc.schmidt_decompose(pdc.double_gaussian_jsa(1.0, 0.25, points=128, extent=1.5))
    with pytest.raises(ResolutionError):
        pdc.schmidt_decompose(pdc.double_gaussian_jsa(1.0, 0.05, points=24, extent=4.0))


@pytest.mark.parametrize("K", [1, 3, 25])
@pytest.mark.parametrize("mean", [0.01, 0.3, 2.0])
def test_equal_modes_car_is_exact(K, mean):
    sp = pdc.SchmidtSpectrum.equal(K).with_mean(mean)
    assert sp.mean_photon_number == pytest.approx(mean, rel=1e-12)
    assert pdc.car(sp) == pytest.approx(1 + 1 / K + 1 / mean, rel=1e-9)


def test_unequal_spectrum_against_mode_sums():
    w = 0.6 ** np.arange(8)
    sp = pdc.SchmidtSpectrum(w / np.linalg.norm(w)).with_mean(0.4)
    mu = _mode_means(sp)
    total = mu.sum()
    g11 = 1 + np.sum(mu * (1 + mu)) / total ** 2
    g20 = 1 + np.sum(mu ** 2) / total ** 2
    assert pdc.joint_moment(sp, 1, 1).exact == pytest.approx(g11, rel=1e-10)
    assert pdc.joint_moment(sp, 2, 0).exact == pytest.approx(g20, rel=1e-10)
    assert pdc.joint_moment(sp, 0, 2).exact == pytest.approx(g20, rel=1e-10)


def test_pair_distribution_matches_brute_force_convolution():
    w = np.array([0.8, 0.6])
    sp = pdc.SchmidtSpectrum(w).with_strength(0.9)
    p = pdc.pair_statistics(sp).probs
    x = np.tanh(0.9 * w) ** 2
    brute = np.zeros(p.size)
    for a in range(p.size):
        for b in range(p.size - a):
            brute[a + b] += (1 - x[0]) * x[0] ** a * (1 - x[1]) * x[1] ** b
    np.testing.assert_allclose(p, brute, atol=1e-15)


def test_closed_forms_exact_for_equal_modes():
    sp = pdc.SchmidtSpectrum.equal(4)
    for mean in (0.1, 1.0):
        for w, v in ((1, 1), (2, 0), (2, 1)):
            assert pdc.joint_moment(sp.with_mean(mean), w, v).relative_gap < 1e-12


def test_low_power_closed_forms_converge():
    w = 0.6 ** np.arange(8)
    sp = pdc.SchmidtSpectrum(w / np.linalg.norm(w))
    for order in ((1, 1), (2, 0), (2, 1)):
        gaps = [pdc.joint_moment(sp.with_mean(m), *order).relative_gap for m in (0.1, 0.01, 0.001)]
        assert gaps[0] > gaps[1] > gaps[2]
        assert gaps[2] < 5 * 0.001


def _herald_oracle(p, eta, kind, k=1):
    n = np.arange(p.size)
    if kind == "click":
        w = 1 - (1 - eta) ** n
    else:
        w = np.array([math.comb(int(j), k) * eta ** k * (1 - eta) ** (j - k) if j >= k else 0.0 for j in n])
    q = p * w
    q = q / q.sum()
    return (q @ (n * (n - 1))) / (q @ n) ** 2


@pytest.mark.parametrize("kind", ["click", "pnr"])
@pytest.mark.parametrize("eta", [1.0, 0.5, 0.1])
def test_heralded_state_against_direct_conditioning(kind, eta):
    x = 0.2
    n = np.arange(200)
    p = (1 - x) * x ** n
    joint = fock.JointPhotonStatistics(np.diag(p), x ** 200)
    setup = pdc.HeraldSetup(DetectorModel(kind, eta), "click" if kind == "click" else 1)
    assert pdc.heralded_g2(joint, setup) == pytest.approx(_herald_oracle(p, eta, kind), rel=1e-12)


def test_ideal_heralds():
    assert pdc.g2h_point("SM", 10.0, 1.0, "pnr") == 0.0
    assert pdc.g2h_point("MM", 10.0, 1.0, "pnr") == 0.0
    # SM: <n> = 1 / (CAR - 2); the click-heralded state is a shifted geometric, g2 = 2x
    x = (1 / 8) / (1 + 1 / 8)
    assert pdc.g2h_point("SM", 10.0, 1.0, "click") == pytest.approx(2 * x, rel=1e-12)
    # MM: Poisson pairs conditioned on n >= 1 keep <n(n-1)> = mu^2 / P(click)
    mu = 1 / 9
    pc = 1 - math.exp(-mu)
    mean = mu / pc
    assert pdc.g2h_point("MM", 10.0, 1.0, "click") == pytest.approx(mu ** 2 / pc / mean ** 2, rel=1e-10)


def test_unattainable_car_and_dead_herald():
    with pytest.raises(ValueError):
        pdc.mean_from_car(2.0, 1.0)
    joint = fock.JointPhotonStatistics(np.diag([1.0, 0.0, 0.0]), 0.0)
    with pytest.raises(HeraldError):
        pdc.herald_state(joint, pdc.HeraldSetup(DetectorModel("click", 1.0)))


def test_twin_beam_with_uncertainties():
    v = pdc.twin_beam_nonclassicality(2.4, 2.0, 2.0, sigmas=(0.1, 0.05, 0.05))
    assert v.nonclassical and v.significance == pytest.approx(0.4 / math.hypot(0.1, 0.05 / 2, 0.05 / 2))
    # 2.8 sigma above the bound is not enough
    v = pdc.twin_beam_nonclassicality(2.3, 2.0, 2.0, sigmas=(0.1, 0.05, 0.05))
    assert not v.nonclassical


def test_jsa_csv_round_trip(tmp_path):
    jsa = pdc.double_gaussian_jsa(1.0, 0.5, points=16, extent=3.0)
    jsa.to_csv(tmp_path / "jsa.csv")
    back = pdc.JointSpectralAmplitude.from_csv(tmp_path / "jsa.csv")
    np.testing.assert_allclose(back.amplitude, jsa.amplitude, rtol=1e-15)


def test_invalid_spectra():
    with pytest.raises(ValueError):
        pdc.SchmidtSpectrum(np.array([0.6, 0.8]))
    with pytest.raises(ValueError):
        pdc.SchmidtSpectrum(np.array([0.5, 0.5]))
