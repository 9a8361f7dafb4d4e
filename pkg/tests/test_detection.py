import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from photocorr import detection, fock
from photocorr.detection import ClickRecord, DetectorModel, NetworkSpec
from photocorr.errors import ConditioningError, UndefinedMomentError


def _brute_patterns(stats, spec, n_cap=4):
    """Enumerate every routing of up to n_cap photons (lost = extra output)."""
    det = spec.detection_probabilities()
    dark = spec.dark_counts()
    n_out = spec.n_outputs
    dest = np.append(det, 1 - det.sum())
    out = np.zeros(2 ** n_out)
    for n in range(min(stats.n_max, n_cap) + 1):
        for route in itertools.product(range(n_out + 1), repeat=n):
            pr = stats.probs[n] * math.prod(dest[r] for r in route)
            hit = {r for r in route if r < n_out}
            # dark counts on the remaining detectors
            free = [o for o in range(n_out) if o not in hit]
            for on in itertools.product((0, 1), repeat=len(free)):
                pd = math.prod(dark[o] if b else 1 - dark[o] for o, b in zip(free, on))
                pattern = sum(1 << o for o in hit) + sum(1 << o for o, b in zip(free, on) if b)
                out[pattern] += pr * pd
    return out


def test_single_photon_never_coincides():
    spec = NetworkSpec.hbt(0.5, (1.0, 1.0))
    p = detection.pattern_probabilities(fock.fock_state(1, 1), spec)
    assert p[3] == 0.0
    rec = detection.simulate_network(fock.fock_state(1, 1), spec, 20_000, 1)
    assert rec.counts[3] == 0


def test_two_photons_on_eight_outputs():
    spec = NetworkSpec.symmetric(8)
    p = detection.pattern_probabilities(fock.fock_state(2, 2), spec)
    two = sum(p[i] for i in range(256) if bin(i).count("1") == 2)
    assert two == pytest.approx(7 / 8, abs=1e-14)
    routings = list(itertools.product(range(8), repeat=2))
    assert sum(a != b for a, b in routings) / len(routings) == 7 / 8


def test_vacuum_gives_silence():
    spec = NetworkSpec.symmetric(4)
    p = detection.pattern_probabilities(fock.fock_state(0, 1), spec)
    assert p[0] == 1.0 and p[1:].sum() == 0.0
    rec = detection.simulate_network(fock.fock_state(0, 1), spec, 1000, 3)
    assert rec.counts[0] == 1000


@pytest.mark.parametrize("dark", [0.0, 0.05])
def test_exact_patterns_match_enumeration(dark):
    spec = NetworkSpec(1, ((0.6,), (0.3, 0.8)),
                       tuple(DetectorModel("click", e, dark) for e in (0.9, 0.5, 0.7, 1.0)))
    stats = fock.PhotonStatistics(np.array([0.4, 0.3, 0.2, 0.1]))
    np.testing.assert_allclose(detection.pattern_probabilities(stats, spec), _brute_patterns(stats, spec),
                               atol=1e-14)


def test_simulation_matches_exact_patterns():
    spec = NetworkSpec(1, ((0.6,), (0.3, 0.8)),
                       tuple(DetectorModel("click", e, 0.02) for e in (0.9, 0.5, 0.7, 1.0)))
    stats = fock.thermal_state(0.8, 80)
    trials = 400_000
    rec = detection.simulate_network(stats, spec, trials, 5)
    p = detection.pattern_probabilities(stats, spec)
    z = (rec.frequencies() - p) / np.sqrt(p * (1 - p) / trials)
    assert np.max(np.abs(z)) < 5


def test_determinism_and_worker_independence():
    spec = NetworkSpec.symmetric(8, DetectorModel("click", 0.7))
    stats = fock.thermal_state(0.5, 80)
    a = detection.simulate_network(stats, spec, 300_000, 11, workers=1, chunk=50_000)
    b = detection.simulate_network(stats, spec, 300_000, 11, workers=4, chunk=50_000)
    c = detection.simulate_network(stats, spec, 300_000, 12, workers=1, chunk=50_000)
    np.testing.assert_array_equal(a.counts, b.counts)
    assert not np.array_equal(a.counts, c.counts)


# --- estimators


def test_poisson_factorizes_exactly():
    spec = NetworkSpec(1, ((0.3,), (0.45, 0.6)), tuple(DetectorModel("click", e) for e in (0.4, 0.9, 0.6, 0.8)))
    p = detection.pattern_probabilities(fock.poisson_state(0.9, 60), spec)
    rec = ClickRecord(np.round(p * 1e15).astype(np.int64), int(np.round(p * 1e15).sum()), 4)
    for m in (2, 3, 4):
        assert detection.estimate_gm_mfold(rec, m).value == pytest.approx(1.0, rel=1e-9)
    assert detection.estimate_g2_hbt(rec, (1, 3)).value == pytest.approx(1.0, rel=1e-9)


def test_hbt_poisson_within_errors():
    rec = detection.simulate_network(fock.poisson_state(0.02, 40), NetworkSpec.hbt(0.5, (0.8, 0.8)),
                                     4_000_000, 9)
    est = detection.estimate_g2_hbt(rec)
    assert abs(est.value - 1.0) <= 3 * est.stderr
    assert est.faint


def test_two_photons_never_triple():
    rec = detection.simulate_network(fock.fock_state(2, 2), NetworkSpec.symmetric(8), 50_000, 4)
    est = detection.estimate_gm_mfold(rec, 3, detectors=(0, 1, 2))
    assert est.value == 0.0
    assert detection.estimate_gm_mfold(rec, 3).value == 0.0


def test_poisson_fourfold_at_moderate_intensity():
    rec = detection.simulate_network(fock.poisson_state(0.2, 40), NetworkSpec.symmetric(8), 2_000_000, 17)
    est = detection.estimate_gm_mfold(rec, 4)
    assert est.details["coincidence"] * rec.trials > 20
    assert abs(est.value - 1.0) <= 3 * est.stderr


def test_standard_error_is_calibrated():
    spec = NetworkSpec.hbt(0.5, (0.6, 0.6))
    stats = fock.thermal_state(0.1, 80)
    ests = [detection.estimate_g2_hbt(detection.simulate_network(stats, spec, 40_000, s)) for s in range(40)]
    spread = np.std([e.value for e in ests], ddof=1)
    mean_se = np.mean([e.stderr for e in ests])
    assert 0.7 < spread / mean_se < 1.4


def test_bright_light_flagged_not_faint():
    rec = detection.simulate_network(fock.thermal_state(2.0, 120), NetworkSpec.hbt(), 20_000, 2)
    assert not detection.estimate_g2_hbt(rec).faint


def test_estimator_errors():
    rec = detection.simulate_network(fock.fock_state(0, 1), NetworkSpec.hbt(), 100, 1)
    with pytest.raises(UndefinedMomentError):
        detection.estimate_g2_hbt(rec)
    with pytest.raises(ValueError):
        detection.estimate_gm_mfold(rec, 3)


# --- convolution and inversion


def _brute_convolution(bins, eta, n):
    out = np.zeros(bins + 1)
    for route in itertools.product(range(bins + 1), repeat=n):
        pr = math.prod(eta / bins if r < bins else 1 - eta for r in route)
        out[len({r for r in route if r < bins})] += pr
    return out


def test_convolution_examples():
    for bins in (1, 4, 8):
        assert detection.convolution_matrix(bins, 1.0, 3)[1, 1] == 1.0
    c = detection.convolution_matrix(8, 1.0, 2)
    assert c[2, 2] == pytest.approx(7 / 8, abs=1e-15) and c[1, 2] == pytest.approx(1 / 8, abs=1e-15)
    c0 = detection.convolution_matrix(5, 0.0, 6)
    np.testing.assert_array_equal(c0[0], np.ones(7))


@pytest.mark.parametrize("bins,eta", [(3, 0.7), (4, 0.25), (2, 1.0)])
def test_convolution_matches_enumeration(bins, eta):
    c = detection.convolution_matrix(bins, eta, 4)
    for n in range(5):
        np.testing.assert_allclose(c[:, n], _brute_convolution(bins, eta, n), atol=1e-15)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 16), st.floats(0.0, 1.0), st.integers(0, 40))
def test_convolution_columns_are_distributions(bins, eta, n_max):
    c = detection.convolution_matrix(bins, eta, n_max)
    assert np.all(c >= 0)
    np.testing.assert_allclose(c.sum(axis=0), 1.0, atol=1e-12)


def test_deconvolution_round_trip():
    p = fock.poisson_state(0.5, 60)
    clicks = detection.convolve_statistics(p, 8, 0.6)
    for method in ("nnls", "lstsq"):
        out = detection.deconvolve_statistics(clicks, 8, 0.6, 8, method=method)
        tv = 0.5 * (np.abs(out.statistics.probs - p.probs[:9]).sum() + (1 - p.probs[:9].sum()))
        assert tv <= 1e-6


def test_deconvolution_identity_limit():
    clicks = detection.convolve_statistics(fock.fock_state(1, 1), 64, 1.0)
    out = detection.deconvolve_statistics(clicks, 64, 1.0, 5)
    np.testing.assert_allclose(out.statistics.probs, [0, 1, 0, 0, 0, 0], atol=1e-12)


def test_deconvolution_refuses_dead_detector():
    with pytest.raises(ConditioningError):
        detection.deconvolve_statistics(np.array([1.0, 0.0, 0.0]), 2, 0.0, 2)


def test_sampled_deconvolution_unbiased_raw_biased_low():
    spec = NetworkSpec.symmetric(8, DetectorModel("click", 0.25))
    rec = detection.simulate_network(fock.thermal_state(1.0, 120), spec, 300_000, 8)
    hist = rec.click_count_histogram()
    g, s = detection.bootstrap_deconvolved_moments(hist, 8, 0.25, 30, 2, 60, 9)
    assert abs(g[1] - 2.0) <= 3 * s[1]
    raw = detection.raw_click_statistics(hist)
    from photocorr.moments import moments_from_statistics
    assert moments_from_statistics(raw, 2).g(2) < 2.0 - 3 * s[1]


# --- serialization


def test_click_record_round_trips(tmp_path):
    rec = detection.simulate_network(fock.thermal_state(0.3, 60), NetworkSpec.symmetric(4), 5000, 6)
    rec.to_csv(tmp_path / "r.csv")
    back = ClickRecord.from_csv(tmp_path / "r.csv")
    np.testing.assert_array_equal(back.counts, rec.counts)
    assert back.trials == rec.trials
    again = ClickRecord.from_json(rec.to_json())
    np.testing.assert_array_equal(again.counts, rec.counts)
    merged = rec.merge(rec)
    assert merged.trials == 2 * rec.trials


def test_network_spec_json(tmp_path):
    spec = NetworkSpec(1, ((0.6,), (0.3, 0.8)), tuple(DetectorModel("click", e, 0.01) for e in (0.9, 0.5, 0.7, 1.0)))
    path = tmp_path / "net.json"
    path.write_text(json.dumps(spec.to_dict()))
    assert NetworkSpec.from_json(path) == spec
    np.testing.assert_allclose(spec.output_probabilities().sum(), 1.0)


def test_invalid_models():
    with pytest.raises(ValueError):
        DetectorModel("click", 1.2)
    with pytest.raises(ValueError):
        DetectorModel("click", 0.5, 1.0)
    with pytest.raises(ValueError):
        NetworkSpec(0, ((1.0,),))
    with pytest.raises(ValueError):
        NetworkSpec.symmetric(6)
