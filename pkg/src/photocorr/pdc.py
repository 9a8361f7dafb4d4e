"""Twin beams from parametric down-conversion.

Schmidt decomposition of a joint spectral amplitude, joint normalized moments
g^(w,v) of the strictly pair-correlated signal/idler state, the low-power
closed forms, and heralded-state quality versus the herald detector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np
from scipy.optimize import brentq
from scipy.special import eval_hermite, gammaln
from scipy.stats import binom

from . import _io
from ._rng import map_chunks
from .detection import DetectorModel
from .errors import HeraldError, ResolutionError, TruncationError
from .fock import JointPhotonStatistics, PhotonStatistics, pair_number_distribution
from .moments import ANALYTIC_TOL, SIGNIFICANCE, NonclassicalityVerdict, moments_from_statistics

DEFAULT_TAIL_TOL = 1e-14
EDGE_TOL = 1e-4


@dataclass(frozen=True)
class JointSpectralAmplitude:
    """f(omega_s, omega_i) sampled on a uniform rectangular grid."""

    omega_s: np.ndarray
    omega_i: np.ndarray
    amplitude: np.ndarray

    def __post_init__(self):
        ws = np.asarray(self.omega_s, dtype=float)
        wi = np.asarray(self.omega_i, dtype=float)
        f = np.asarray(self.amplitude, dtype=complex)
        if f.shape != (ws.size, wi.size):
            raise ValueError("amplitude must be shaped (len(omega_s), len(omega_i))")
        if not np.all(np.isfinite(f)):
            raise ValueError("amplitude must be finite")
        if np.linalg.norm(f) == 0:
            raise ValueError("amplitude must not vanish identically")
        for w in (ws, wi):
            if w.size > 2 and not np.allclose(np.diff(w), w[1] - w[0], rtol=1e-9, atol=0):
                raise ValueError("frequency grids must be uniform")
        object.__setattr__(self, "omega_s", ws)
        object.__setattr__(self, "omega_i", wi)
        object.__setattr__(self, "amplitude", f)

    @property
    def spacing(self) -> tuple[float, float]:
        ds = self.omega_s[1] - self.omega_s[0] if self.omega_s.size > 1 else 1.0
        di = self.omega_i[1] - self.omega_i[0] if self.omega_i.size > 1 else 1.0
        return float(ds), float(di)

    @classmethod
    def from_function(cls, func: Callable, omega_s, omega_i) -> "JointSpectralAmplitude":
        ws, wi = np.asarray(omega_s, float), np.asarray(omega_i, float)
        return cls(ws, wi, func(ws[:, None], wi[None, :]))

    def to_csv(self, path) -> None:
        rows = ((s, i, self.amplitude[a, b].real, self.amplitude[a, b].imag)
                for a, s in enumerate(self.omega_s) for b, i in enumerate(self.omega_i))
        _io.write_csv(path, ["omega_s", "omega_i", "re", "im"], rows)

    @classmethod
    def from_csv(cls, path) -> "JointSpectralAmplitude":
        _, _, rows = _io.read_csv(path)
        data = np.array(rows, dtype=float)
        ws, wi = np.unique(data[:, 0]), np.unique(data[:, 1])
        f = np.zeros((ws.size, wi.size), dtype=complex)
        f[np.searchsorted(ws, data[:, 0]), np.searchsorted(wi, data[:, 1])] = data[:, 2] + 1j * data[:, 3]
        return cls(ws, wi, f)


@dataclass(frozen=True)
class SchmidtSpectrum:
    """Descending Schmidt weights lambda_q with sum lambda_q^2 = 1."""

    weights: np.ndarray
    strength: float = 0.0
    residual: float = 0.0
    resolution_error: float = 0.0

    def __post_init__(self):
        lam = np.asarray(self.weights, dtype=float).ravel()
        if lam.size == 0 or np.any(lam < 0):
            raise ValueError("weights must be non-negative and non-empty")
        if np.any(np.diff(lam) > 1e-15):
            raise ValueError("weights must be in descending order")
        if abs(float(lam @ lam) - 1.0) > 1e-9:
            raise ValueError("weights must satisfy sum(weights**2) == 1")
        if self.strength < 0:
            raise ValueError("process strength must be >= 0")
        lam.setflags(write=False)
        object.__setattr__(self, "weights", lam)

    @property
    def K(self) -> float:
        return float(1.0 / np.sum(self.weights ** 4))

    @property
    def K_bound(self) -> float:
        """Largest K compatible with the dropped residual mass spread over many modes."""
        s4 = float(np.sum(self.weights ** 4)) * (1.0 - self.residual) ** 2
        return 1.0 / s4 if s4 > 0 else float("inf")

    @property
    def mean_photon_number(self) -> float:
        return mean_photon_number(self.weights, self.strength)

    def with_strength(self, strength: float) -> "SchmidtSpectrum":
        return SchmidtSpectrum(self.weights, strength, self.residual, self.resolution_error)

    def with_mean(self, mean: float) -> "SchmidtSpectrum":
        return self.with_strength(strength_for_mean(self.weights, mean))

    @classmethod
    def equal(cls, modes: int, strength: float = 0.0) -> "SchmidtSpectrum":
        return cls(np.full(modes, 1.0 / math.sqrt(modes)), strength)


# ---------------------------------------------------------------------------
# Schmidt decomposition


def _schmidt_weights(f: np.ndarray) -> np.ndarray:
    s = np.linalg.svd(f, compute_uv=False)
    return s / math.sqrt(float(s @ s))


def schmidt_decompose(jsa: JointSpectralAmplitude, cutoff: float = 1e-8,
                      resolution_tol: float = 1e-3, edge_tol: float = EDGE_TOL) -> SchmidtSpectrum:
    """SVD-based Schmidt weights of a sampled JSA.

    On a uniform grid the spacing factors cancel in the normalization. Modes
    with lambda below `cutoff * lambda_max` are dropped; their squared-weight
    mass is reported as `residual`. The grid is judged too coarse when K
    changes by more than `resolution_tol` (relative) on the grid subsampled
    by two, and too narrow when |f| at the boundary exceeds `edge_tol` of its
    peak.
    """
    f = jsa.amplitude
    mag = np.abs(f)
    edge = max(mag[0].max(), mag[-1].max(), mag[:, 0].max(), mag[:, -1].max())
    if edge > edge_tol * mag.max():
        raise ResolutionError(f"amplitude at the grid boundary is {edge / mag.max():.2e} of its peak")
    lam = _schmidt_weights(f)
    keep = lam >= cutoff * lam[0]
    residual = float(np.sum(lam[~keep] ** 2))
    kept = lam[keep] / math.sqrt(float(lam[keep] @ lam[keep]))
    k_full = 1.0 / float(np.sum(kept ** 4))
    if min(f.shape) >= 4:
        half = _schmidt_weights(f[::2, ::2])
        half = half[half >= cutoff * half[0]]
        k_half = 1.0 / float(np.sum((half / np.linalg.norm(half)) ** 4))
        drift = abs(k_half - k_full) / k_full
    else:
        drift = float("inf")
    if drift > resolution_tol:
        raise ResolutionError(f"Schmidt number changes by {drift:.2e} when the grid is halved; "
                              f"refine the grid")
    return SchmidtSpectrum(np.sort(kept)[::-1], 0.0, residual, drift)


def double_gaussian_jsa(sum_width: float, diff_width: float, points: int = 256,
                        extent: float = 8.0) -> JointSpectralAmplitude:
    """f = exp(-(x+y)^2 / (4 s_+^2) - (x-y)^2 / (4 s_-^2)) on a square grid.

    `extent` sets the half-width of the grid in units of the widest scale.
    """
    half = extent * max(sum_width, diff_width)
    w = np.linspace(-half, half, points)
    return JointSpectralAmplitude.from_function(
        lambda x, y: np.exp(-(x + y) ** 2 / (4 * sum_width ** 2) - (x - y) ** 2 / (4 * diff_width ** 2)),
        w, w)


def double_gaussian_schmidt_number(sum_width: float, diff_width: float) -> float:
    """K = (A + B) / (2 sqrt(A B)) for f = exp(-A (x+y)^2 - B (x-y)^2)."""
    a = 1.0 / (4 * sum_width ** 2)
    b = 1.0 / (4 * diff_width ** 2)
    return (a + b) / (2.0 * math.sqrt(a * b))


def hermite_function(n: int, x: np.ndarray) -> np.ndarray:
    logn = -0.5 * (n * math.log(2.0) + gammaln(n + 1) + 0.5 * math.log(math.pi))
    return math.exp(logn) * eval_hermite(n, x) * np.exp(-x * x / 2)


def schmidt_mode_jsa(weights: Iterable[float], points: int = 200, extent: float = 10.0
                     ) -> JointSpectralAmplitude:
    """f = sum_q lambda_q psi_q(x) psi_q(y) built from Hermite functions."""
    lam = np.asarray(list(weights), dtype=float)
    w = np.linspace(-extent, extent, points)
    f = sum(l * np.outer(hermite_function(q, w), hermite_function(q, w)) for q, l in enumerate(lam))
    return JointSpectralAmplitude(w, w, f)


# ---------------------------------------------------------------------------
# strength, pair statistics and joint moments


def mean_photon_number(weights, strength: float) -> float:
    lam = np.asarray(weights, dtype=float)
    return float(np.sum(np.sinh(strength * lam) ** 2))


def strength_for_mean(weights, mean: float) -> float:
    """Invert <n> = sum sinh^2(B lambda_q) for B by bracketed root finding."""
    if mean < 0:
        raise ValueError("mean photon number must be non-negative")
    if mean == 0:
        return 0.0
    lam = np.asarray(weights, dtype=float)
    hi = 1.0
    while mean_photon_number(lam, hi) < mean:
        hi *= 2.0
    return float(brentq(lambda b: mean_photon_number(lam, b) - mean, 0.0, hi, xtol=1e-16, rtol=1e-15))


def pair_statistics(spectrum: SchmidtSpectrum, tol: float = DEFAULT_TAIL_TOL,
                    n_max: int | None = None, n_cap: int = 4096) -> PhotonStatistics:
    """Total pair-number distribution; the cutoff grows until the tail is below `tol`."""
    lam = spectrum.weights
    if n_max is None:
        n_max = 16
        while True:
            p = pair_number_distribution(lam, spectrum.strength, n_max)
            if 1.0 - p.sum() <= tol or n_max >= n_cap:
                break
            n_max *= 2
    p = pair_number_distribution(lam, spectrum.strength, n_max)
    tail = max(0.0, 1.0 - float(p.sum()))
    if tail > tol:
        raise TruncationError(f"pair statistics leave {tail:.2e} above n_max={n_max}")
    return PhotonStatistics(p, min(1.0, tail + 1e-15))


def joint_statistics(spectrum: SchmidtSpectrum, tol: float = DEFAULT_TAIL_TOL) -> JointPhotonStatistics:
    p = pair_statistics(spectrum, tol)
    return JointPhotonStatistics(np.diag(p.probs), p.tail_bound)


@dataclass(frozen=True)
class JointMoment:
    w: int
    v: int
    exact: float
    approximate: float | None
    mean_photon_number: float

    @property
    def relative_gap(self) -> float:
        if self.approximate is None:
            return float("nan")
        return abs(self.exact - self.approximate) / abs(self.exact)


def exact_joint_moment(pairs: PhotonStatistics, w: int, v: int) -> float:
    """g^(w,v) = sum P(n) (n)_w (n)_v / <n>^(w+v) for n_s = n_i = n."""
    n = np.arange(pairs.probs.size, dtype=float)
    p = pairs.probs / pairs.probs.sum()
    mean = float(n @ p)
    if mean <= 0:
        raise ValueError("joint moments need <n> > 0")
    ff_w = np.prod([n - j for j in range(w)], axis=0) if w else np.ones_like(n)
    ff_v = np.prod([n - j for j in range(v)], axis=0) if v else np.ones_like(n)
    return float((p * ff_w * ff_v).sum() / mean ** (w + v))


def approximate_joint_moment(spectrum: SchmidtSpectrum, w: int, v: int, mean: float) -> float | None:
    """Low-power closed forms; None where no closed form is available."""
    inv_k = 1.0 / spectrum.K
    s6 = float(np.sum(spectrum.weights ** 6))
    key = (w, v) if w >= v else (v, w)
    if key == (1, 0):
        return 1.0
    if key == (1, 1):
        return 1.0 / mean + 1.0 + inv_k
    if key == (2, 0):
        return 1.0 + inv_k
    if key == (2, 1):
        return (1.0 + 2.0 / mean) * (1.0 + inv_k) + 2.0 * (inv_k + s6)
    return None


def joint_moment(spectrum: SchmidtSpectrum, w: int, v: int, tol: float = DEFAULT_TAIL_TOL) -> JointMoment:
    """Exact g^(w,v) alongside the low-power approximation."""
    if w < 0 or v < 0 or w + v < 1:
        raise ValueError("need w, v >= 0 and w + v >= 1")
    pairs = pair_statistics(spectrum, tol)
    mean = spectrum.mean_photon_number
    exact = exact_joint_moment(pairs, w, v)
    return JointMoment(w, v, exact, approximate_joint_moment(spectrum, w, v, mean), mean)


def car(spectrum: SchmidtSpectrum) -> float:
    return joint_moment(spectrum, 1, 1).exact


# ---------------------------------------------------------------------------
# heralding


@dataclass(frozen=True)
class HeraldSetup:
    """Herald detector and the outcome conditioned on ("click" or a photon number)."""

    detector: DetectorModel = field(default_factory=DetectorModel)
    outcome: object = "click"

    def __post_init__(self):
        if self.outcome == "click":
            if self.detector.kind != "click":
                object.__setattr__(self, "detector", DetectorModel("click", self.detector.efficiency,
                                                                   self.detector.dark_count))
        else:
            k = int(self.outcome)
            if k < 0:
                raise ValueError("photon-number outcome must be >= 0")
            object.__setattr__(self, "outcome", k)

    def povm(self, n_max: int) -> np.ndarray:
        """Probability of the outcome given n idler photons, n = 0..n_max."""
        n = np.arange(n_max + 1)
        eta = self.detector.efficiency
        dark = self.detector.dark_count
        if self.outcome == "click":
            return 1.0 - (1.0 - dark) * (1.0 - eta) ** n
        return binom.pmf(self.outcome, n, eta)


def herald_state(joint: JointPhotonStatistics, setup: HeraldSetup) -> PhotonStatistics:
    """Signal statistics conditioned on the herald outcome."""
    w = setup.povm(joint.shape[1] - 1)
    rho = joint.probs @ w
    success = float(rho.sum())
    if success <= 0:
        raise HeraldError("the herald outcome has zero probability")
    return PhotonStatistics(rho / success)


def heralded_g2(joint: JointPhotonStatistics, setup: HeraldSetup) -> float:
    stats = herald_state(joint, setup)
    if stats.n_max < 2:
        stats = stats.padded(2)
    return moments_from_statistics(stats, 2).g(2)


def _regime_pairs(regime: str, mean: float, tol: float) -> PhotonStatistics:
    if regime == "SM":
        x = mean / (1.0 + mean)
        n_max = max(8, int(math.ceil(math.log(tol) / math.log(x)))) if x > 0 else 1
        n = np.arange(n_max + 1)
        return PhotonStatistics((1.0 - x) * x ** n, x ** (n_max + 1))
    if regime == "MM":
        n_max = 8
        while True:
            n = np.arange(n_max + 1)
            p = np.exp(n * math.log(mean) - mean - gammaln(n + 1)) if mean > 0 else (n == 0).astype(float)
            if 1.0 - p.sum() <= tol:
                return PhotonStatistics(p, max(0.0, 1.0 - float(p.sum())))
            n_max *= 2
    raise ValueError("regime must be 'SM' or 'MM'")


def mean_from_car(car_value: float, K: float) -> float:
    """<n> = 1 / (CAR - 1 - 1/K)."""
    excess = car_value - 1.0 - (0.0 if math.isinf(K) else 1.0 / K)
    if excess <= 0:
        raise ValueError(f"CAR {car_value} is not attainable for K={K} (needs CAR > {1 + 1 / K})")
    return 1.0 / excess


def g2h_point(regime, car_value: float, efficiency: float, kind: str = "click",
              outcome: int = 1, tol: float = DEFAULT_TAIL_TOL) -> float:
    if isinstance(regime, SchmidtSpectrum):
        spectrum = regime.with_mean(mean_from_car(car_value, regime.K))
        pairs = pair_statistics(spectrum, tol)
    else:
        K = 1.0 if regime == "SM" else math.inf
        pairs = _regime_pairs(regime, mean_from_car(car_value, K), tol)
    joint = JointPhotonStatistics(np.diag(pairs.probs), pairs.tail_bound)
    det = DetectorModel(kind, efficiency)
    setup = HeraldSetup(det, "click" if kind == "click" else outcome)
    return heralded_g2(joint, setup)


def g2h_curve(regime, car_values, efficiency: float, kind: str = "click",
              workers: int | None = None) -> np.ndarray:
    """Rows (CAR, g2_h) for a single-mode ("SM"), multimode ("MM") or given spectrum."""
    cars = [float(c) for c in car_values]
    vals = map_chunks(g2h_point, [(regime, c, efficiency, kind) for c in cars], workers)
    return np.column_stack([cars, vals])


def twin_beam_nonclassicality(g11: float, g20: float, g02: float,
                              sigmas: tuple[float, float, float] | None = None) -> NonclassicalityVerdict:
    """Classical twin beams obey g^(1,1) <= sqrt(g^(2,0) g^(0,2))."""
    bound = math.sqrt(g20 * g02)
    slack = bound - g11
    sigma = 0.0
    if sigmas is not None:
        s11, s20, s02 = sigmas
        d20 = 0.5 * bound / g20 if g20 > 0 else 0.0
        d02 = 0.5 * bound / g02 if g02 > 0 else 0.0
        sigma = math.sqrt(s11 ** 2 + (d20 * s20) ** 2 + (d02 * s02) ** 2)
    if sigma > 0:
        flag = slack < -SIGNIFICANCE * sigma and slack < -ANALYTIC_TOL
        sig = -slack / sigma
    else:
        flag, sig = slack < -ANALYTIC_TOL, None
    return NonclassicalityVerdict("twin-beam", slack, bool(flag), sig,
                                  {"g11": g11, "bound": bound, "sigma": sigma})
