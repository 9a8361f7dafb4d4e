"""Phase-space functions from the normalized moments of displaced states.

With rho_n(alpha) the photon statistics of the state displaced by -alpha,

    W(alpha)      = (2/pi) sum_m (-2)^m / m! g^(m) <n>^m
    Q(alpha)      = (1/pi) sum_m (-1)^m / m! g^(m) <n>^m
    |chi(alpha)|^2 = sum_m (-1)^m / (k! m!) g^(m+k) <n>^(m+k)     (Fock |k>)

where g^(m) and <n> belong to rho_n(alpha). Every series is truncated at a
user-chosen order and returned with its last-term residual and a
convergence flag.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _io
from ._rng import map_chunks
from .errors import TruncationError
from .fock import FockAmplitudeVector, PhotonStatistics, displacement_matrix
from .moments import MomentReport, moments_from_statistics

UNITARITY_TOL = 1e-8
CONVERGENCE_THRESHOLD = 1e-4


@dataclass(frozen=True)
class SeriesResult:
    value: float
    residual: float
    converged: bool
    terms: np.ndarray

    @property
    def m_max(self) -> int:
        return self.terms.size - 1


# ---------------------------------------------------------------------------
# displaced statistics


def _output_cutoff(n_in: int, alpha: complex) -> int:
    a = abs(alpha)
    return n_in + int(math.ceil(a * a + 12.0 * a + 40.0))


def displaced_statistics(state, alpha: complex, n_max: int | None = None,
                         tol: float = UNITARITY_TOL) -> PhotonStatistics:
    """Statistics rho_n(alpha) = <n| D^dag(alpha) rho D(alpha) |n>.

    `state` is a pure FockAmplitudeVector or a diagonal PhotonStatistics.
    The output cutoff defaults to one generous enough for |alpha|; a
    unitarity deficit above `tol` raises TruncationError.
    """
    if isinstance(state, FockAmplitudeVector):
        n_in = state.n_max
    elif isinstance(state, PhotonStatistics):
        n_in = state.n_max
    else:
        raise TypeError("state must be a FockAmplitudeVector or PhotonStatistics")
    n_out = _output_cutoff(n_in, alpha) if n_max is None else int(n_max)
    d = displacement_matrix(-complex(alpha), n_out, n_cols=n_in + 1)
    if isinstance(state, FockAmplitudeVector):
        amps = d @ state.amps
        probs = np.abs(amps) ** 2
        norm_in = float(np.sum(np.abs(state.amps) ** 2))
    else:
        probs = (np.abs(d) ** 2) @ state.probs
        norm_in = float(state.probs.sum())
    deficit = max(0.0, norm_in - float(probs.sum()))
    if deficit > tol:
        raise TruncationError(f"displaced state leaks {deficit:.2e} above n_max={n_out} (tol {tol:g})")
    return PhotonStatistics(np.clip(probs, 0.0, 1.0), min(1.0, deficit + state.tail_bound))


# ---------------------------------------------------------------------------
# series


def _as_series(moments, mean: float | None) -> tuple[np.ndarray, float]:
    if isinstance(moments, MomentReport):
        g = moments.series()
        mean = moments.mean_photon_number if mean is None else mean
    else:
        g = np.concatenate(([1.0], np.asarray(moments, dtype=float)))
    if mean is None or not np.isfinite(mean):
        raise ValueError("the mean photon number of the displaced state is required")
    return g, float(mean)


def convergence_flag(terms: np.ndarray, threshold: float = CONVERGENCE_THRESHOLD) -> bool:
    """Last three term magnitudes strictly decreasing (or zero) and the last below threshold."""
    mags = np.abs(np.asarray(terms, dtype=float))
    if mags.size < 3:
        return False
    a, b, c = mags[-3:]
    if c == 0.0 and b == 0.0:
        return True
    return bool(a > b > c and c < threshold)


def _summed(terms: np.ndarray, prefactor: float) -> SeriesResult:
    return SeriesResult(prefactor * float(terms.sum()), prefactor * float(abs(terms[-1])),
                        convergence_flag(terms), terms)


def _moment_terms(g: np.ndarray, mean: float, m_max: int, kernel) -> np.ndarray:
    if m_max + 1 > g.size:
        raise ValueError(f"moments up to order {m_max} required, {g.size - 1} supplied")
    return np.array([kernel(m) * g[m] * mean ** m for m in range(m_max + 1)])


def wigner_from_moments(moments, mean: float | None = None, m_max: int | None = None) -> SeriesResult:
    g, mean = _as_series(moments, mean)
    m_max = g.size - 1 if m_max is None else m_max
    terms = _moment_terms(g, mean, m_max, lambda m: (-2.0) ** m / math.factorial(m))
    return _summed(terms, 2.0 / math.pi)


def q_from_moments(moments, mean: float | None = None, m_max: int | None = None) -> SeriesResult:
    g, mean = _as_series(moments, mean)
    m_max = g.size - 1 if m_max is None else m_max
    terms = _moment_terms(g, mean, m_max, lambda m: (-1.0) ** m / math.factorial(m))
    return _summed(terms, 1.0 / math.pi)


def chi_squared_fock(n: int, moments, mean: float | None = None, m_max: int | None = None) -> SeriesResult:
    """|chi(alpha)|^2 of the Fock state |n>; needs moments to order m_max + n."""
    g, mean = _as_series(moments, mean)
    m_max = g.size - 1 - n if m_max is None else m_max
    if m_max + n > g.size - 1:
        raise ValueError(f"moments up to order {m_max + n} required, {g.size - 1} supplied")
    nf = math.factorial(n)
    terms = np.array([(-1.0) ** m / (nf * math.factorial(m)) * g[m + n] * mean ** (m + n)
                      for m in range(m_max + 1)])
    return _summed(terms, 1.0)


# ---------------------------------------------------------------------------
# oracles on the displaced statistics


def wigner_oracle(stats: PhotonStatistics) -> float:
    return 2.0 / math.pi * float(((-1.0) ** np.arange(stats.probs.size)) @ stats.probs)


def q_oracle(stats: PhotonStatistics) -> float:
    return float(stats.probs[0]) / math.pi


def chi_squared_oracle(stats: PhotonStatistics, n: int) -> float:
    return float(stats.probs[n]) if n <= stats.n_max else 0.0


def displaced_fock_moments(k: int, alpha: complex, order: int) -> MomentReport:
    """Exact moments of |k> displaced by -alpha, up to `order`."""
    from .fock import fock_state

    stats = displaced_statistics(fock_state(k, max(k, 1)), alpha)
    if stats.n_max < order:
        stats = stats.padded(order)
    return moments_from_statistics(stats, order)


# ---------------------------------------------------------------------------
# grids


@dataclass(frozen=True)
class GridPoint:
    alpha: complex
    m_max: int
    wigner: SeriesResult
    q: SeriesResult
    chi2: SeriesResult | None

    @property
    def residual(self) -> float:
        parts = [self.wigner.residual, self.q.residual]
        if self.chi2 is not None:
            parts.append(self.chi2.residual)
        return max(parts)

    @property
    def converged(self) -> bool:
        ok = self.wigner.converged and self.q.converged
        return ok and (self.chi2 is None or self.chi2.converged)


@dataclass(frozen=True)
class ReconstructionGrid:
    points: tuple

    HEADER = ("re_alpha", "im_alpha", "m_max", "W", "Q", "chi2", "residual", "converged")

    def rows(self):
        for p in self.points:
            chi = p.chi2.value if p.chi2 is not None else float("nan")
            yield (p.alpha.real, p.alpha.imag, p.m_max, p.wigner.value, p.q.value, chi,
                   p.residual, bool(p.converged))

    def to_csv(self, path, comments: Sequence[str] = ()) -> None:
        _io.write_csv(path, list(self.HEADER), self.rows(), comments)

    def select(self, m_max: int) -> list[GridPoint]:
        return [p for p in self.points if p.m_max == m_max]


def _fock_index(state) -> int | None:
    """Photon number if `state` is a single Fock state, else None."""
    if isinstance(state, FockAmplitudeVector):
        p = np.abs(state.amps) ** 2
    else:
        p = state.probs
    idx = np.flatnonzero(p > 1e-15)
    return int(idx[0]) if idx.size == 1 and abs(p[idx[0]] - 1.0) < 1e-12 else None


def _grid_point(state, alpha: complex, m_list: Sequence[int], fock_n: int | None):
    order = max(m_list) + (fock_n or 0)
    stats = displaced_statistics(state, alpha)
    if stats.n_max < order:
        stats = stats.padded(order)
    if stats.mean > 0:
        rep = moments_from_statistics(stats, order)
    else:
        # vacuum in the displaced frame: every term beyond m = 0 vanishes
        rep = MomentReport(np.ones(order), None, 0.0)
    out = []
    for m in m_list:
        chi = chi_squared_fock(fock_n, rep, m_max=m) if fock_n is not None else None
        out.append(GridPoint(complex(alpha), int(m), wigner_from_moments(rep, m_max=m),
                             q_from_moments(rep, m_max=m), chi))
    return out


def reconstruct_grid(state, alphas: Sequence[complex], m_max_list: Sequence[int],
                     workers: int | None = None) -> ReconstructionGrid:
    """W, Q and (for Fock input) |chi|^2 at every alpha for every truncation order."""
    m_list = [int(m) for m in m_max_list]
    fock_n = _fock_index(state)
    parts = map_chunks(_grid_point, [(state, complex(a), m_list, fock_n) for a in alphas], workers)
    return ReconstructionGrid(tuple(p for chunk in parts for p in chunk))
