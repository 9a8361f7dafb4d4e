"""Photon-number-resolving trace analysis for transition-edge sensors.

The chain is: traces -> windowed, baseline-corrected areas -> histogram ->
Gaussian-mixture fit -> peak areas as photon statistics -> moments with
Monte-Carlo uncertainties.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.optimize import least_squares
from scipy.signal import find_peaks, peak_widths

from . import _io
from ._rng import chunk_sizes, map_chunks, spawn_generators
from .errors import FitError, UndefinedMomentError
from .fock import PhotonStatistics
from .moments import MomentReport

FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))
MAGIC = b"TES1"
_HEADER = struct.Struct("<4sIId")
CHUNK_TRACES = 4096
CHUNK_TRIALS = 2048


@dataclass(frozen=True)
class TesTraceSet:
    sample_rate: float
    traces: np.ndarray
    label: str = ""

    def __post_init__(self):
        t = np.array(self.traces, dtype=np.float32)
        if t.ndim != 2:
            raise ValueError("traces must be a 2-D array (trace, sample)")
        if not self.sample_rate > 0:
            raise ValueError("sample_rate must be positive")
        t.setflags(write=False)
        object.__setattr__(self, "traces", t)
        object.__setattr__(self, "sample_rate", float(self.sample_rate))

    @property
    def count(self) -> int:
        return self.traces.shape[0]

    @property
    def length(self) -> int:
        return self.traces.shape[1]

    def to_csv(self, path) -> None:
        comments = [f"sample_rate={_io.fmt(self.sample_rate)}", f"label={self.label}"]
        header = [f"s{i}" for i in range(self.length)]
        rows = ([repr(float(v)) for v in row] for row in self.traces)
        _io.write_csv(path, header, rows, comments)

    @classmethod
    def from_csv(cls, path) -> "TesTraceSet":
        comments, header, rows = _io.read_csv(path)
        meta = _io.parse_comments(comments)
        data = np.array(rows, dtype=np.float64).astype(np.float32).reshape(len(rows), len(header))
        return cls(float(meta["sample_rate"]), data, meta.get("label", ""))

    def to_binary(self, path) -> None:
        head = _HEADER.pack(MAGIC, self.count, self.length, self.sample_rate)
        Path(path).write_bytes(head + self.traces.astype("<f4").tobytes(order="C"))

    @classmethod
    def from_binary(cls, path, label: str = "") -> "TesTraceSet":
        raw = Path(path).read_bytes()
        if len(raw) < _HEADER.size:
            raise ValueError("file too short for a TES1 header")
        magic, count, length, rate = _HEADER.unpack_from(raw)
        if magic != MAGIC:
            raise ValueError("not a TES1 trace file")
        body = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size)
        if body.size != count * length:
            raise ValueError(f"expected {count * length} samples, found {body.size}")
        return cls(rate, body.reshape(count, length).astype(np.float32), label)


@dataclass(frozen=True)
class AreaHistogram:
    edges: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=float)
        c = np.asarray(self.counts, dtype=float)
        if e.ndim != 1 or c.shape != (e.size - 1,):
            raise ValueError("need len(edges) == len(counts) + 1")
        if np.any(np.diff(e) <= 0):
            raise ValueError("bin edges must be strictly increasing")
        if np.any(c < 0):
            raise ValueError("counts must be non-negative")
        object.__setattr__(self, "edges", e)
        object.__setattr__(self, "counts", c)

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)


@dataclass(frozen=True)
class MixtureFit:
    """Peaks gamma_n * exp(-alpha_n (A - beta_n)^2), n = 0..n_peaks-1."""

    gamma: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    residual: float
    resolution: float
    covariance: np.ndarray = field(repr=False, default=None)
    nfev: int = 0

    @property
    def n_peaks(self) -> int:
        return self.gamma.size

    @property
    def peak_areas(self) -> np.ndarray:
        return self.gamma * np.sqrt(np.pi / self.alpha)

    def evaluate(self, a) -> np.ndarray:
        return mixture_model(np.asarray(a, dtype=float), self.gamma, self.alpha, self.beta)


@dataclass(frozen=True)
class StatisticsWithErrors:
    statistics: PhotonStatistics
    errors: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.errors, dtype=float)
        if e.shape != self.statistics.probs.shape or np.any(e < 0):
            raise ValueError("errors must be non-negative, one per photon number")
        object.__setattr__(self, "errors", e)

    def truncated(self, n_max: int) -> "StatisticsWithErrors":
        p = self.statistics.probs[: n_max + 1]
        return StatisticsWithErrors(PhotonStatistics(p / p.sum()), self.errors[: n_max + 1] / p.sum())


# ---------------------------------------------------------------------------
# synthesis and integration


def pulse_template(length: int, onset: int = 20, rise: float = 2.0, decay: float = 15.0) -> np.ndarray:
    """Double-exponential pulse with unit peak height."""
    t = np.arange(length, dtype=float) - onset
    out = np.where(t >= 0, np.exp(-np.clip(t, 0, None) / decay) - np.exp(-np.clip(t, 0, None) / rise), 0.0)
    peak = out.max()
    return out / peak if peak > 0 else out


def noise_for_resolution(template: np.ndarray, window: tuple[int, int], resolution: float,
                         baseline: tuple[int, int] | None = None) -> float:
    """White-noise sigma giving FWHM/spacing = `resolution` for the area estimator."""
    start, end = window
    b0, b1 = baseline if baseline is not None else (0, start)
    w, nb = end - start, b1 - b0
    spacing = float(template[start:end].sum())
    var_per_sigma2 = w + (w * w / nb if nb > 0 else 0.0)
    return resolution * spacing / FWHM_PER_SIGMA / math.sqrt(var_per_sigma2)


def _synth_chunk(cdf, template, sigma, size, rng):
    n = np.searchsorted(cdf, rng.random(size), side="right")
    n = np.minimum(n, cdf.size - 1)
    noise = rng.standard_normal((size, template.size))
    return n, (n[:, None] * template[None, :] + sigma * noise).astype(np.float32)


def synthesize_traces(stats: PhotonStatistics, template: np.ndarray, noise_sigma: float, count: int,
                      seed: int, sample_rate: float = 1.0e6, workers: int | None = None,
                      return_numbers: bool = False):
    """Traces n * template + white noise with n drawn from `stats`."""
    if count < 1:
        raise ValueError("count must be >= 1")
    if noise_sigma < 0:
        raise ValueError("noise sigma must be non-negative")
    template = np.asarray(template, dtype=float)
    cdf = np.cumsum(stats.normalized().probs)
    cdf[-1] = 1.0
    sizes = chunk_sizes(count, CHUNK_TRACES)
    rngs = spawn_generators(seed, len(sizes))
    parts = map_chunks(_synth_chunk, [(cdf, template, noise_sigma, s, r) for s, r in zip(sizes, rngs)],
                       workers)
    traces = TesTraceSet(sample_rate, np.concatenate([p[1] for p in parts]), "synthetic")
    if return_numbers:
        return traces, np.concatenate([p[0] for p in parts])
    return traces


def integrate_areas(traces: TesTraceSet, window: tuple[int, int],
                    baseline: tuple[int, int] | None = None) -> np.ndarray:
    """Sum of samples in [start, end) minus the per-trace baseline.

    The baseline is the mean of the pre-window samples (or of `baseline`);
    with no pre-window samples it is zero.
    """
    start, end = int(window[0]), int(window[1])
    if not 0 <= start < end <= traces.length:
        raise ValueError(f"window {window} is empty or outside the trace length {traces.length}")
    data = traces.traces.astype(np.float64)
    area = data[:, start:end].sum(axis=1)
    b0, b1 = baseline if baseline is not None else (0, start)
    if b1 > b0:
        area -= (end - start) * data[:, b0:b1].mean(axis=1)
    return area


def histogram_areas(areas, bins="fd") -> AreaHistogram:
    counts, edges = np.histogram(np.asarray(areas, dtype=float), bins=bins)
    return AreaHistogram(edges, counts)


# ---------------------------------------------------------------------------
# mixture fit


def mixture_model(a, gamma, alpha, beta) -> np.ndarray:
    return np.sum(gamma[:, None] * np.exp(-alpha[:, None] * (a[None, :] - beta[:, None]) ** 2), axis=0)


def _initial_guess(hist: AreaHistogram, n_peaks: int, spacing: float | None):
    x, y = hist.centers, hist.counts
    width = float(np.median(hist.widths))
    smooth = np.convolve(y, np.ones(3) / 3, mode="same")
    idx, props = find_peaks(smooth, prominence=max(1.0, 0.01 * smooth.max()))
    order = np.argsort(props["prominences"])[::-1] if idx.size else np.array([], dtype=int)
    top = np.sort(idx[order[:n_peaks]])
    if top.size:
        fwhm = peak_widths(smooth, top, rel_height=0.5)[0] * width
        sig = max(float(np.median(fwhm)) / FWHM_PER_SIGMA, width)
    else:
        sig = float(np.std(np.repeat(x, y.astype(int)))) if y.sum() else width
    pos = x[top]
    if n_peaks == 1:
        beta = np.array([pos[0] if pos.size else float(x[np.argmax(y)])])
    else:
        if spacing is None:
            if pos.size >= 2:
                spacing = float(np.median(np.diff(pos)))
            else:
                raise FitError("cannot seed peak spacing from fewer than two maxima; pass spacing")
        # assign photon numbers relative to the leftmost maximum, then fit a uniform comb
        nums = np.round((pos - pos[0]) / spacing) if pos.size else np.zeros(1)
        if pos.size >= 2 and np.unique(nums).size >= 2:
            slope, icpt = np.polyfit(nums, pos, 1)
        else:
            slope, icpt = spacing, (pos[0] if pos.size else 0.0)
        beta = icpt + slope * np.arange(n_peaks)
    gamma = np.interp(beta, x, smooth, left=0.0, right=0.0)
    gamma = np.maximum(gamma, 1e-3 * max(float(y.max()), 1.0))
    alpha = np.full(n_peaks, 1.0 / (2.0 * sig * sig))
    return gamma, alpha, beta


def fit_mixture(hist: AreaHistogram, n_peaks: int, spacing: float | None = None,
                initial: tuple | None = None, max_nfev: int = 20000) -> MixtureFit:
    """Poisson-weighted nonlinear least-squares fit of a Gaussian comb.

    Peak centres may move by less than half a spacing from their seeds, which
    keeps the photon-number assignment fixed. Parameter covariance is the
    scaled inverse Gauss-Newton Hessian at the optimum.
    """
    if n_peaks < 1:
        raise ValueError("n_peaks must be >= 1")
    if hist.counts.sum() <= 0:
        raise ValueError("histogram is empty")
    x, y = hist.centers, hist.counts
    g0, a0, b0 = (np.asarray(v, dtype=float) for v in initial) if initial else _initial_guess(hist, n_peaks, spacing)
    span = float(np.median(np.diff(b0))) if n_peaks > 1 else float(x[-1] - x[0])
    wgt = 1.0 / np.sqrt(np.maximum(y, 1.0))

    def unpack(p):
        return p[:n_peaks], p[n_peaks:2 * n_peaks], p[2 * n_peaks:]

    def resid(p):
        g, a, b = unpack(p)
        return (mixture_model(x, g, a, b) - y) * wgt

    def jac(p):
        g, a, b = unpack(p)
        d = x[None, :] - b[:, None]
        e = np.exp(-a[:, None] * d * d)
        jg = e
        ja = -g[:, None] * d * d * e
        jb = 2.0 * g[:, None] * a[:, None] * d * e
        return (np.vstack([jg, ja, jb]) * wgt[None, :]).T

    p0 = np.concatenate([g0, a0, b0])
    lo = np.concatenate([np.zeros(n_peaks), a0 * 1e-3, b0 - 0.45 * abs(span)])
    hi = np.concatenate([np.full(n_peaks, np.inf), a0 * 1e3, b0 + 0.45 * abs(span)])
    p0 = np.clip(p0, lo, hi)
    res = least_squares(resid, p0, jac=jac, bounds=(lo, hi), method="trf", x_scale="jac",
                        max_nfev=max_nfev)
    if res.status <= 0:
        raise FitError(f"mixture fit did not converge: {res.message}")
    g, a, b = unpack(res.x)
    if np.any(np.diff(b) <= 0):
        raise FitError("peak centres are not strictly increasing (overlapping peaks)")
    if np.any(a <= 0):
        raise FitError("non-positive peak width parameter")
    dof = max(1, y.size - res.x.size)
    chi2 = float(np.sum(res.fun ** 2))
    cov = np.linalg.pinv(res.jac.T @ res.jac) * (chi2 / dof)
    if n_peaks >= 2:
        ref = 1 if n_peaks > 1 else 0
        resolution = FWHM_PER_SIGMA / math.sqrt(2.0 * a[ref]) / float(b[1] - b[0])
    else:
        resolution = float("nan")
    return MixtureFit(g.copy(), a.copy(), b.copy(), chi2 / dof, float(resolution), cov, int(res.nfev))


def extract_statistics(fit: MixtureFit) -> StatisticsWithErrors:
    """p_n = A_n / sum A_n with A_n = gamma_n sqrt(pi / alpha_n); errors by the delta method."""
    areas = fit.peak_areas
    total = float(areas.sum())
    if total <= 0:
        raise UndefinedMomentError("all fitted peak weights are zero")
    p = areas / total
    n = fit.n_peaks
    # dA/dgamma, dA/dalpha (beta does not enter the area)
    da = np.zeros((n, 3 * n))
    da[np.arange(n), np.arange(n)] = np.sqrt(np.pi / fit.alpha)
    da[np.arange(n), n + np.arange(n)] = -areas / (2.0 * fit.alpha)
    dp = (np.eye(n) - p[:, None]) / total @ da
    if fit.covariance is None:
        err = np.zeros(n)
    else:
        err = np.sqrt(np.clip(np.einsum("ij,jk,ik->i", dp, fit.covariance, dp), 0.0, None))
    return StatisticsWithErrors(PhotonStatistics(p), err)


# ---------------------------------------------------------------------------
# Monte-Carlo moment errors


def _mc_chunk(p, err, m_max, size, rng):
    draws = np.clip(p[None, :] + err[None, :] * rng.standard_normal((size, p.size)), 0.0, None)
    tot = draws.sum(axis=1)
    n = np.arange(p.size, dtype=float)
    ok = tot > 0
    q = draws[ok] / tot[ok, None]
    mean = q @ n
    ok2 = mean > 0
    q, mean = q[ok2], mean[ok2]
    g = np.empty((q.shape[0], m_max))
    ff = np.ones_like(n)
    for m in range(1, m_max + 1):
        ff = ff * (n - (m - 1))
        g[:, m - 1] = (q @ ff) / mean ** m
    g[:, 0] = 1.0
    return g, size - q.shape[0]


def moments_with_mc_errors(stats: StatisticsWithErrors, m_max: int, trials: int, seed: int,
                           workers: int | None = None, max_discard: float = 0.01) -> MomentReport:
    """Ensemble mean and spread of g^(m) under Gaussian perturbation of every bin.

    Each trial clips negative draws at zero and renormalizes. Trials whose
    perturbed mean photon number vanishes are discarded and counted.
    """
    if trials < 100:
        raise ValueError("need at least 100 Monte-Carlo trials")
    p = stats.statistics.probs
    if m_max < 1 or m_max > p.size - 1:
        raise ValueError(f"m_max must lie in 1..{p.size - 1}")
    sizes = chunk_sizes(trials, CHUNK_TRIALS)
    rngs = spawn_generators(seed, len(sizes))
    parts = map_chunks(_mc_chunk, [(p, stats.errors, m_max, s, r) for s, r in zip(sizes, rngs)], workers)
    g = np.concatenate([x[0] for x in parts])
    dropped = sum(x[1] for x in parts)
    if dropped > max_discard * trials:
        raise UndefinedMomentError(f"{dropped} of {trials} perturbed ensembles had zero mean photon number")
    mean = g.mean(axis=0)
    mean[0] = 1.0
    std = g.std(axis=0, ddof=1) if g.shape[0] > 1 else np.zeros(m_max)
    return MomentReport(mean, std, float(p @ np.arange(p.size)), "monte-carlo")


@dataclass(frozen=True)
class PipelineResult:
    areas: np.ndarray
    histogram: AreaHistogram
    fit: MixtureFit
    statistics: StatisticsWithErrors
    moments: MomentReport


def analyze_traces(traces: TesTraceSet, window: tuple[int, int], n_peaks: int, m_max: int,
                   mc_trials: int, seed: int, bins="fd", spacing: float | None = None,
                   baseline: Sequence[int] | None = None, workers: int | None = None) -> PipelineResult:
    areas = integrate_areas(traces, window, baseline)
    hist = histogram_areas(areas, bins)
    fit = fit_mixture(hist, n_peaks, spacing)
    stats = extract_statistics(fit)
    report = moments_with_mc_errors(stats, m_max, mc_trials, seed, workers)
    return PipelineResult(areas, hist, fit, stats, report)
