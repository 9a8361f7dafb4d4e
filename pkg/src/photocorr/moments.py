"""Normalized factorial moments, the moment generating function and
nonclassicality criteria built on them."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import SeriesDivergenceError, TruncationError, UndefinedMomentError
from .fock import PhotonStatistics

ANALYTIC_TOL = 1e-9
SIGNIFICANCE = 3.0
SOURCES = ("analytic", "monte-carlo", "measured")


@dataclass(frozen=True)
class MomentReport:
    """g^(m) for m = 1..m_max with per-order standard deviations.

    `values[0]` is g^(1) and is always exactly 1. Orders are looked up with
    `g(m)`, which also answers g^(0) = 1.
    """

    values: np.ndarray
    uncertainties: np.ndarray | None = None
    mean_photon_number: float = float("nan")
    source: str = "analytic"

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 1 or v.size == 0:
            raise ValueError("values must hold at least g^(1)")
        if v[0] != 1.0:
            raise ValueError("g^(1) must be exactly 1")
        if np.any(v < 0):
            raise ValueError("normalized moments must be non-negative")
        u = np.zeros_like(v) if self.uncertainties is None else np.array(self.uncertainties, dtype=float)
        if u.shape != v.shape:
            raise ValueError("uncertainties must match values")
        if np.any(u < 0):
            raise ValueError("uncertainties must be non-negative")
        if self.source not in SOURCES:
            raise ValueError(f"source must be one of {SOURCES}")
        v.setflags(write=False)
        u.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "uncertainties", u)
        object.__setattr__(self, "mean_photon_number", float(self.mean_photon_number))

    @property
    def m_max(self) -> int:
        return self.values.size

    def g(self, m: int) -> float:
        if m == 0:
            return 1.0
        if not 1 <= m <= self.m_max:
            raise IndexError(f"order {m} not in report (m_max={self.m_max})")
        return float(self.values[m - 1])

    def sigma(self, m: int) -> float:
        if m == 0:
            return 0.0
        return float(self.uncertainties[m - 1])

    def series(self) -> np.ndarray:
        """g^(0..m_max)."""
        return np.concatenate(([1.0], self.values))

    def sigmas(self) -> np.ndarray:
        return np.concatenate(([0.0], self.uncertainties))


@dataclass(frozen=True)
class NonclassicalityVerdict:
    criterion: str
    statistic: float
    nonclassical: bool
    significance: float | None = None
    details: dict = field(default_factory=dict)


class SeriesValue(NamedTuple):
    value: float
    bound: float


# ---------------------------------------------------------------------------
# moments from statistics


def falling_factorial(n: np.ndarray, m: int) -> np.ndarray:
    out = np.ones_like(n, dtype=float)
    for j in range(m):
        out = out * (n - j)
    return out


def factorial_moments(stats: PhotonStatistics, m_max: int) -> np.ndarray:
    """<:N^m:> = sum_n n!/(n-m)! p_n for m = 0..m_max."""
    n = np.arange(stats.n_max + 1, dtype=float)
    out = np.empty(m_max + 1)
    ff = np.ones_like(n)
    out[0] = stats.probs.sum()
    for m in range(1, m_max + 1):
        ff = ff * (n - (m - 1))
        out[m] = ff @ stats.probs
    return out


def moments_from_statistics(stats: PhotonStatistics, m_max: int) -> MomentReport:
    if m_max < 1:
        raise ValueError("m_max must be >= 1")
    if m_max > stats.n_max:
        raise TruncationError(f"m_max={m_max} exceeds the truncation n_max={stats.n_max}")
    fm = factorial_moments(stats, m_max)
    mean = fm[1]
    if mean <= 0:
        raise UndefinedMomentError("normalized moments are undefined for the vacuum (<n> = 0)")
    g = fm[1:] / mean ** np.arange(1, m_max + 1)
    g[0] = 1.0
    return MomentReport(g, None, mean, "analytic")


def report_from_series(g, mean: float, uncertainties=None, source: str = "analytic") -> MomentReport:
    """Build a report from g^(1..m_max) (or g^(0..m_max) if it starts with two ones)."""
    g = np.asarray(g, dtype=float)
    return MomentReport(g, uncertainties, mean, source)


# ---------------------------------------------------------------------------
# moment generating function


def mgf_from_statistics(stats: PhotonStatistics, mu: float) -> SeriesValue:
    """M(mu) = sum_n (1 - mu)^n p_n; the bound covers the truncated tail."""
    _check_mu(mu)
    n = np.arange(stats.n_max + 1)
    return SeriesValue(float(((1.0 - mu) ** n) @ stats.probs), stats.tail_bound)


def mgf_from_moments(report: MomentReport, mu: float, mean: float | None = None) -> SeriesValue:
    """M(mu) = sum_m g^(m)/m! (-mu <n>)^m from a moment report.

    The terms must be shrinking where the series is cut: if the last term is
    not smaller than the one before it, the remainder cannot be bounded and
    `SeriesDivergenceError` is raised. Otherwise the remainder is estimated
    as a geometric tail from the last term ratio, plus a rounding allowance.
    """
    _check_mu(mu)
    mean = report.mean_photon_number if mean is None else float(mean)
    if not np.isfinite(mean):
        raise ValueError("a mean photon number is required for the moment path")
    g = report.series()
    terms = np.array([g[m] / math.factorial(m) * (-mu * mean) ** m for m in range(g.size)])
    value = float(terms.sum())
    return SeriesValue(value, float(series_remainder(terms)))


def series_remainder(terms: np.ndarray) -> float:
    mags = np.abs(terms)
    rounding = 8 * np.finfo(float).eps * float(mags.max(initial=0.0)) * max(1, terms.size)
    if terms.size < 2:
        raise SeriesDivergenceError("need at least two series terms to bound the remainder")
    last, prev = mags[-1], mags[-2]
    if last == 0 and prev == 0:
        return float(rounding)
    if last >= prev:
        raise SeriesDivergenceError(
            f"series terms are not decreasing at the truncation order ({prev:.3e} -> {last:.3e})")
    ratio = last / prev
    return float(last * ratio / (1.0 - ratio)) + rounding


def moment_generating_function(source, mu: float, mean: float | None = None) -> SeriesValue:
    if isinstance(source, PhotonStatistics):
        return mgf_from_statistics(source, mu)
    if isinstance(source, MomentReport):
        return mgf_from_moments(source, mu, mean)
    raise TypeError("source must be PhotonStatistics or MomentReport")


def parity(source, mean: float | None = None) -> SeriesValue:
    """<(-1)^N> = M(2)."""
    return moment_generating_function(source, 2.0, mean)


def _check_mu(mu):
    if not 0.0 <= mu <= 2.0:
        raise ValueError("mu must lie in [0, 2]")


# ---------------------------------------------------------------------------
# nonclassicality criteria


def _decide(slack: float, sigma: float) -> tuple[bool, float | None]:
    """Fire when slack < -3 sigma (or < -1e-9 for exact inputs)."""
    if sigma > 0:
        return bool(slack < -SIGNIFICANCE * sigma and slack < -ANALYTIC_TOL), float(-slack / sigma)
    return bool(slack < -ANALYTIC_TOL), None


def _has_errors(report: MomentReport) -> bool:
    return bool(np.any(report.uncertainties > 0))


def moment_matrix(report: MomentReport, size: int) -> np.ndarray:
    """Hankel matrix [g^(i+j)], i, j = 0..size-1, with g^(0) = 1."""
    need = 2 * size - 2
    if size < 1:
        raise ValueError("matrix size must be >= 1")
    if need > report.m_max:
        raise ValueError(f"a {size}x{size} moment matrix needs orders up to {need}, "
                         f"report has {report.m_max}")
    g = report.series()
    i = np.arange(size)
    return g[i[:, None] + i[None, :]]


def moment_matrix_test(report: MomentReport, size: int) -> NonclassicalityVerdict:
    mat = moment_matrix(report, size)
    evals, evecs = np.linalg.eigh(mat)
    lam, v = float(evals[0]), evecs[:, 0]
    det = float(np.linalg.det(mat))
    sigma = 0.0
    if _has_errors(report):
        # first-order eigenvalue perturbation; each order enters on one anti-diagonal
        s = report.sigmas()
        i = np.arange(size)
        coeff = np.zeros(2 * size - 1)
        np.add.at(coeff, (i[:, None] + i[None, :]).ravel(), np.outer(v, v).ravel())
        sigma = float(np.sqrt(np.sum((coeff * s[: coeff.size]) ** 2)))
    flag, sig = _decide(lam, sigma)
    return NonclassicalityVerdict(
        "moment-matrix", lam, flag, sig,
        {"size": size, "determinant": det, "eigenvalues": evals.tolist(), "sigma": sigma})


def monotonicity_test(report: MomentReport) -> NonclassicalityVerdict:
    """Classical light has g^(m+1) >= g^(m); report the most negative slack."""
    if report.m_max < 2:
        raise ValueError("monotonicity needs at least g^(2)")
    worst = None
    for m in range(1, report.m_max):
        slack = report.g(m + 1) - report.g(m)
        sigma = math.hypot(report.sigma(m + 1), report.sigma(m))
        flag, sig = _decide(slack, sigma)
        key = (flag, sig if sig is not None else -slack)
        if worst is None or key > worst[0]:
            worst = (key, m, slack, flag, sig, sigma)
    _, m, slack, flag, sig, sigma = worst
    return NonclassicalityVerdict("monotonicity", slack, flag, sig,
                                  {"order": m, "sigma": sigma})


def schwarz_test(report: MomentReport, h: int, m: int) -> NonclassicalityVerdict:
    """Classical light has g^(h-m) g^(h+m) >= [g^(h)]^2."""
    if m < 1 or h - m < 0:
        raise ValueError("need m >= 1 and h >= m")
    if h + m > report.m_max:
        raise ValueError(f"order {h + m} not available (m_max={report.m_max})")
    lo, mid, hi = report.g(h - m), report.g(h), report.g(h + m)
    slack = lo * hi - mid ** 2
    sigma = math.sqrt((hi * report.sigma(h - m)) ** 2 + (lo * report.sigma(h + m)) ** 2
                      + (2 * mid * report.sigma(h)) ** 2)
    flag, sig = _decide(slack, sigma)
    return NonclassicalityVerdict("schwarz", slack, flag, sig,
                                  {"h": h, "m": m, "lhs": lo * hi, "rhs": mid ** 2, "sigma": sigma})


def all_criteria(report: MomentReport) -> list[NonclassicalityVerdict]:
    """Every single-beam criterion the report has enough orders for."""
    out = []
    for size in range(2, report.m_max // 2 + 2):
        if 2 * size - 2 <= report.m_max:
            out.append(moment_matrix_test(report, size))
    if report.m_max >= 2:
        out.append(monotonicity_test(report))
    for h in range(1, report.m_max):
        for m in range(1, h + 1):
            if h + m <= report.m_max:
                out.append(schwarz_test(report, h, m))
    return out
