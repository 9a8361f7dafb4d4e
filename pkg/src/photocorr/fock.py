"""Truncated Fock-space numerics.

Photon-number distributions of the canonical states, displacement-operator
matrix elements, two-mode squeezed (twin-beam) pair statistics, and a
ladder-operator oracle for normally ordered moments.

Every constructor takes an explicit cutoff `n_max` and computes a rigorous
bound on the probability mass it leaves above the cutoff. A cutoff that is
too small for the requested tolerance raises `TruncationError` instead of
returning silently wrong statistics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import eval_genlaguerre, gammaln

from .errors import TruncationError

DEFAULT_TAIL_TOL = 1e-12
_NORM_SLACK = 1e-9


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class PhotonStatistics:
    """Photon-number distribution p(n), n = 0..n_max.

    `tail_bound` is an upper bound on the probability mass above `n_max`.
    """

    probs: np.ndarray
    tail_bound: float = 0.0

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 1 or p.size == 0:
            raise ValueError("probs must be a non-empty 1-D sequence")
        if not np.all(np.isfinite(p)):
            raise ValueError("probs must be finite")
        if np.any(p < -1e-15) or np.any(p > 1 + 1e-15):
            raise ValueError("every probability must lie in [0, 1]")
        p = np.clip(p, 0.0, 1.0)
        tail = float(self.tail_bound)
        if not (0.0 <= tail <= 1.0):
            raise ValueError("tail_bound must lie in [0, 1]")
        total = float(p.sum())
        if total > 1 + _NORM_SLACK or total < 1 - tail - _NORM_SLACK:
            raise ValueError(
                f"probabilities sum to {total!r}, inconsistent with tail_bound {tail!r}")
        object.__setattr__(self, "probs", _frozen(p))
        object.__setattr__(self, "tail_bound", tail)

    @property
    def n_max(self) -> int:
        return self.probs.size - 1

    @property
    def mean(self) -> float:
        return float(np.arange(self.probs.size) @ self.probs)

    def normalized(self) -> "PhotonStatistics":
        return PhotonStatistics(self.probs / self.probs.sum(), 0.0)

    def padded(self, n_max: int) -> "PhotonStatistics":
        """Same distribution on a longer photon-number axis."""
        if n_max < self.n_max:
            raise ValueError("padded() cannot shorten the distribution")
        p = np.zeros(n_max + 1)
        p[: self.probs.size] = self.probs
        return PhotonStatistics(p, self.tail_bound)

    def __len__(self):
        return self.probs.size


@dataclass(frozen=True)
class FockAmplitudeVector:
    """Pure state sum_n c_n |n>, truncated at n_max with a norm-deficit bound."""

    amps: np.ndarray
    tail_bound: float = 0.0

    def __post_init__(self):
        a = np.asarray(self.amps, dtype=complex)
        if a.ndim != 1 or a.size == 0:
            raise ValueError("amps must be a non-empty 1-D sequence")
        norm = float(np.sum(np.abs(a) ** 2))
        tail = float(self.tail_bound)
        if norm > 1 + _NORM_SLACK or norm < 1 - tail - _NORM_SLACK:
            raise ValueError(f"squared norm {norm!r} inconsistent with tail_bound {tail!r}")
        object.__setattr__(self, "amps", _frozen(a, complex))
        object.__setattr__(self, "tail_bound", tail)

    @property
    def n_max(self) -> int:
        return self.amps.size - 1

    def statistics(self) -> PhotonStatistics:
        return PhotonStatistics(np.abs(self.amps) ** 2, self.tail_bound)


@dataclass(frozen=True)
class JointPhotonStatistics:
    """Joint distribution p(n_s, n_i) of signal and idler photon numbers."""

    probs: np.ndarray
    tail_bound: float = 0.0

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 2:
            raise ValueError("joint probs must be a matrix")
        if np.any(p < -1e-15):
            raise ValueError("joint probabilities must be non-negative")
        p = np.clip(p, 0.0, None)
        tail = float(self.tail_bound)
        total = float(p.sum())
        if total > 1 + _NORM_SLACK or total < 1 - tail - _NORM_SLACK:
            raise ValueError(f"joint mass {total!r} inconsistent with tail_bound {tail!r}")
        object.__setattr__(self, "probs", _frozen(p))
        object.__setattr__(self, "tail_bound", tail)

    @property
    def shape(self) -> tuple[int, int]:
        return self.probs.shape

    def signal(self) -> PhotonStatistics:
        return PhotonStatistics(self.probs.sum(axis=1), self.tail_bound)

    def idler(self) -> PhotonStatistics:
        return PhotonStatistics(self.probs.sum(axis=0), self.tail_bound)


# ---------------------------------------------------------------------------
# displacement operator


def displacement_matrix(alpha: complex, n_max: int, n_cols: int | None = None) -> np.ndarray:
    """Matrix elements <m|D(alpha)|n> for m <= n_max, n < n_cols.

    Uses the associated-Laguerre closed form with log-factorial prefactors,
    so elements stay finite well past n = 170 where n! overflows. The entries
    are exact (not a truncation of the operator), hence the matrix is unitary
    only up to the mass that leaks above `n_max`.
    """
    if n_max < 0:
        raise ValueError("n_max must be >= 0")
    n_cols = n_max + 1 if n_cols is None else int(n_cols)
    alpha = complex(alpha)
    rows = np.arange(n_max + 1)[:, None]
    cols = np.arange(n_cols)[None, :]
    if alpha == 0:
        return (rows == cols).astype(complex)

    x = abs(alpha) ** 2
    lo = np.minimum(rows, cols)
    d = np.abs(rows - cols)
    lag = eval_genlaguerre(lo, d, x)
    log_pref = 0.5 * (gammaln(lo + 1.0) - gammaln(lo + d + 1.0)) + d * np.log(abs(alpha)) - 0.5 * x
    with np.errstate(divide="ignore"):
        log_abs = log_pref + np.log(np.abs(lag))
    mag = np.where(lag == 0, 0.0, np.exp(log_abs)) * np.sign(lag)
    unit = alpha / abs(alpha)
    # below the diagonal alpha^d, above it (-alpha*)^d
    phase = np.where(rows >= cols, unit ** d, (-np.conj(unit)) ** d)
    return mag * phase


def displaced_fock_amplitudes(k: int, alpha: complex, n_max: int,
                              tol: float = DEFAULT_TAIL_TOL) -> FockAmplitudeVector:
    """Amplitudes of D(alpha)|k> on 0..n_max."""
    if k < 0:
        raise ValueError("photon number k must be >= 0")
    amps = displacement_matrix(alpha, n_max, n_cols=k + 1)[:, k]
    deficit = max(0.0, 1.0 - float(np.sum(np.abs(amps) ** 2)))
    if deficit > tol:
        raise TruncationError(
            f"n_max={n_max} leaves {deficit:.3e} of D(alpha)|{k}> above the cutoff (tol {tol:g})")
    return FockAmplitudeVector(amps, deficit)


# ---------------------------------------------------------------------------
# state catalog


def _poisson_tail_bound(mean: float, n_max: int) -> float:
    """Chernoff bound on P(X >= n_max + 1) for X ~ Poisson(mean)."""
    a = n_max + 1
    if mean == 0:
        return 0.0
    if a <= mean:
        return 1.0
    log_b = -mean + a * (1.0 + np.log(mean / a))
    return float(min(1.0, np.exp(log_b)))


def fock_state(k: int, n_max: int) -> PhotonStatistics:
    if k < 0:
        raise ValueError("photon number k must be >= 0")
    if k > n_max:
        raise TruncationError(f"Fock state |{k}> does not fit below n_max={n_max}")
    p = np.zeros(n_max + 1)
    p[k] = 1.0
    return PhotonStatistics(p, 0.0)


def poisson_state(mean: float, n_max: int, tol: float = DEFAULT_TAIL_TOL) -> PhotonStatistics:
    if mean < 0:
        raise ValueError("mean photon number must be >= 0")
    n = np.arange(n_max + 1)
    if mean == 0:
        p = (n == 0).astype(float)
    else:
        p = np.exp(-mean + n * np.log(mean) - gammaln(n + 1.0))
    tail = _poisson_tail_bound(mean, n_max)
    if tail > tol:
        raise TruncationError(
            f"Poisson(mean={mean}) needs a larger n_max than {n_max}: tail bound {tail:.3e} > {tol:g}")
    return PhotonStatistics(p, tail)


def thermal_state(mean: float, n_max: int, tol: float = DEFAULT_TAIL_TOL) -> PhotonStatistics:
    if mean < 0:
        raise ValueError("mean photon number must be >= 0")
    x = mean / (1.0 + mean)
    n = np.arange(n_max + 1)
    p = (1.0 - x) * x ** n
    tail = float(x ** (n_max + 1))
    if tail > tol:
        raise TruncationError(
            f"thermal(mean={mean}) needs a larger n_max than {n_max}: tail {tail:.3e} > {tol:g}")
    return PhotonStatistics(p, tail)


def displaced_fock_state(k: int, alpha: complex, n_max: int,
                         tol: float = DEFAULT_TAIL_TOL) -> PhotonStatistics:
    return displaced_fock_amplitudes(k, alpha, n_max, tol).statistics()


def make_state(kind: str, n_max: int, *, k: int | None = None, mean: float | None = None,
               alpha: complex = 0.0, tol: float = DEFAULT_TAIL_TOL) -> PhotonStatistics:
    """Photon statistics of a catalog state.

    kind is one of "fock" (needs k), "poisson" / "coherent" / "thermal" (need
    mean), "displaced_fock" (needs k and alpha), or "vacuum".
    """
    kind = kind.lower()
    if kind == "vacuum":
        return fock_state(0, n_max)
    if kind == "fock":
        _require(k, "k", kind)
        return fock_state(int(k), n_max)
    if kind in ("poisson", "coherent"):
        _require(mean, "mean", kind)
        return poisson_state(float(mean), n_max, tol)
    if kind == "thermal":
        _require(mean, "mean", kind)
        return thermal_state(float(mean), n_max, tol)
    if kind == "displaced_fock":
        _require(k, "k", kind)
        return displaced_fock_state(int(k), alpha, n_max, tol)
    raise ValueError(f"unknown state kind {kind!r}")


def _require(value, name, kind):
    if value is None:
        raise ValueError(f"state kind {kind!r} requires {name}")


# ---------------------------------------------------------------------------
# twin beams


def two_mode_squeezed_joint(weights, strength: float, n_max: int,
                            tol: float = DEFAULT_TAIL_TOL) -> JointPhotonStatistics:
    """Joint signal/idler statistics of a multimode two-mode squeezed vacuum.

    Mode q carries squeezing r_q = strength * weights[q]; its pair number is
    geometric with ratio tanh^2(r_q). Modes are independent, so the total pair
    number is the convolution of the per-mode distributions, and signal and
    idler photon numbers are always equal.
    """
    lam = np.asarray(weights, dtype=float).ravel()
    if lam.size == 0:
        raise ValueError("at least one mode weight is required")
    if np.any(lam < 0):
        raise ValueError("mode weights must be non-negative")
    if abs(float(np.sum(lam ** 2)) - 1.0) > 1e-9:
        raise ValueError("mode weights must satisfy sum(weights**2) == 1")
    if strength < 0:
        raise ValueError("process strength must be >= 0")

    pairs = pair_number_distribution(lam, strength, n_max)
    tail = max(0.0, 1.0 - float(pairs.sum())) + 4 * lam.size * np.finfo(float).eps
    if tail > tol and strength > 0:
        raise TruncationError(
            f"two-mode squeezed state leaves {tail:.3e} above n_max={n_max} (tol {tol:g})")
    if strength == 0:
        tail = 0.0
    return JointPhotonStatistics(np.diag(pairs), min(tail, 1.0))


def pair_number_distribution(weights, strength: float, n_max: int) -> np.ndarray:
    """Distribution of the total pair number, exact on 0..n_max."""
    lam = np.asarray(weights, dtype=float).ravel()
    n = np.arange(n_max + 1)
    total = np.zeros(n_max + 1)
    total[0] = 1.0
    for w in lam[lam > 0]:
        x = np.tanh(strength * w) ** 2
        if x == 0:
            continue
        mode = (1.0 - x) * x ** n
        total = np.convolve(total, mode)[: n_max + 1]
    return total


# ---------------------------------------------------------------------------
# brute-force normal-ordering oracle


def annihilation_matrix(n_max: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, n_max + 1, dtype=float)), k=1)


def normal_ordered_moment_oracle(stats: PhotonStatistics, m: int) -> float:
    """<a^dag^m a^m> of a diagonal state, built from explicit ladder matrices."""
    if m < 1:
        raise ValueError("order m must be >= 1")
    if m > stats.n_max:
        raise TruncationError(f"order {m} exceeds the truncation n_max={stats.n_max}")
    a = annihilation_matrix(stats.n_max)
    am = np.linalg.matrix_power(a, m)
    op = am.conj().T @ am
    return float(np.real(np.trace(op @ np.diag(stats.probs))))
