"""Phase-randomized homodyne detection and quadrature-moment inversion.

Quadratures are normalized so the vacuum variance is 1, i.e. q = a e^{-i theta}
+ a^dag e^{i theta}. Phase-averaged even moments are linear in the normally
ordered moments, <q^{2k}> = sum_m c[k, m] <:N^m:>.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from . import _io
from ._rng import chunk_sizes, default_workers, map_chunks
from .errors import OracleMismatchError, UndefinedMomentError
from .fock import annihilation_matrix
from .moments import MomentReport

CHUNK_SAMPLES = 1 << 20
ORACLE_TOL = 1e-8
STATES = ("coherent", "thermal")


@dataclass(frozen=True)
class QuadratureBatch:
    samples: np.ndarray
    label: str = ""
    seed: int | None = None

    def __post_init__(self):
        s = np.array(self.samples, dtype=float).ravel()
        if s.size < 1:
            raise ValueError("a batch needs at least one sample")
        if not np.all(np.isfinite(s)):
            raise ValueError("quadrature samples must be finite")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    @property
    def count(self) -> int:
        return self.samples.size

    def to_csv(self, path) -> None:
        comments = [f"state={self.label}", f"seed={self.seed if self.seed is not None else ''}",
                    f"count={self.count}"]
        _io.write_csv(path, ["q"], ((v,) for v in self.samples), comments)

    @classmethod
    def from_csv(cls, path) -> "QuadratureBatch":
        comments, _, rows = _io.read_csv(path)
        meta = _io.parse_comments(comments)
        seed = meta.get("seed") or None
        return cls(np.array([float(r[0]) for r in rows]), meta.get("state", ""),
                   int(seed) if seed is not None else None)


@dataclass(frozen=True)
class TransferMatrix:
    """Lower-triangular c[k, m], k, m = 0..k_max."""

    coeffs: np.ndarray

    @property
    def k_max(self) -> int:
        return self.coeffs.shape[0] - 1

    def forward(self, normal_moments) -> np.ndarray:
        """<:N^m:>, m = 0..k_max  ->  <q^{2k}>, k = 0..k_max."""
        return self.coeffs @ np.asarray(normal_moments, dtype=float)

    def invert(self, quadrature_moments) -> np.ndarray:
        """<q^{2k}>  ->  <:N^m:> by forward substitution."""
        q = np.asarray(quadrature_moments, dtype=float)
        return solve_triangular(self.coeffs[: q.shape[0], : q.shape[0]], q, lower=True)


def transfer_coefficient(k: int, m: int) -> int:
    if m > k:
        return 0
    return math.factorial(2 * k) // (math.factorial(k - m) * math.factorial(m) ** 2 * 2 ** (k - m))


def fock_quadrature_moment(n: int, k: int) -> float:
    """<n| q^{2k} |n> with q = a + a^dag, by ladder-operator matrix powers.

    Fock states are phase invariant, so this equals the phase average.
    """
    dim = n + k + 2
    a = annihilation_matrix(dim - 1)
    q = a + a.T
    v = np.zeros(dim)
    v[n] = 1.0
    for _ in range(k):
        v = q @ v
    # <n|q^2k|n> = |q^k |n>|^2
    return float(v @ v)


def build_transfer_matrix(k_max: int, check_n_max: int = 10) -> TransferMatrix:
    """Closed-form coefficients, accepted only if they pass the Fock-state oracle."""
    if k_max < 0:
        raise ValueError("k_max must be >= 0")
    c = np.array([[transfer_coefficient(k, m) for m in range(k_max + 1)] for k in range(k_max + 1)],
                 dtype=float)
    for n in range(check_n_max + 1):
        ff = np.array([math.perm(n, m) for m in range(k_max + 1)], dtype=float)
        pred = c @ ff
        for k in range(k_max + 1):
            ref = fock_quadrature_moment(n, k)
            if abs(pred[k] - ref) > ORACLE_TOL * max(1.0, abs(ref)):
                raise OracleMismatchError(f"transfer row k={k} fails on |{n}>: {pred[k]} vs {ref}")
    c.setflags(write=False)
    return TransferMatrix(c)


# ---------------------------------------------------------------------------
# sampling


def _check_state(state: str, mean: float):
    if state not in STATES:
        raise ValueError(f"state must be one of {STATES}")
    if mean < 0:
        raise ValueError("mean photon number must be non-negative")


def _draw(state: str, mean: float, size: int, rng: np.random.Generator) -> np.ndarray:
    if state == "coherent":
        theta = rng.uniform(0.0, 2.0 * np.pi, size)
        return 2.0 * math.sqrt(mean) * np.cos(theta) + rng.standard_normal(size)
    return math.sqrt(2.0 * mean + 1.0) * rng.standard_normal(size)


def _children(seed, count: int) -> list[np.random.SeedSequence]:
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return ss.spawn(count)


def _gen(ss: np.random.SeedSequence) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(ss))


def sample_quadratures(state: str, mean: float, count: int, seed: int,
                       workers: int | None = None) -> QuadratureBatch:
    """Phase-randomized quadrature samples for a coherent or thermal state."""
    _check_state(state, mean)
    if count < 1:
        raise ValueError("count must be >= 1")
    sizes = chunk_sizes(count, CHUNK_SAMPLES)
    kids = _children(seed, len(sizes))
    parts = map_chunks(lambda s, ss: _draw(state, mean, s, _gen(ss)), list(zip(sizes, kids)), workers)
    return QuadratureBatch(np.concatenate(parts), state, seed)


def power_sums(q: np.ndarray, k_max: int) -> np.ndarray:
    """sum q^{2k} for k = 0..k_max."""
    q2 = q * q
    out = np.empty(k_max + 1)
    out[0] = q.size
    p = np.ones_like(q2)
    for k in range(1, k_max + 1):
        p = p * q2
        out[k] = p.sum()
    return out


def _chunk_power_sums(state, mean, size, ss, k_max):
    return power_sums(_draw(state, mean, size, _gen(ss)), k_max)


def simulate_block_moments(state: str, mean: float, samples_per_block: int, blocks: int, seed: int,
                           k_max: int, workers: int | None = None) -> np.ndarray:
    """Phase-averaged <q^{2k}> per block, streamed without storing samples.

    Returns a (blocks, k_max + 1) array. Block b uses the b-th child of the
    master seed, and every chunk within a block its own grandchild.
    """
    _check_state(state, mean)
    workers = default_workers() if workers is None else workers
    sizes = chunk_sizes(samples_per_block, CHUNK_SAMPLES)
    jobs = []
    for block_ss in _children(seed, blocks):
        for size, ss in zip(sizes, block_ss.spawn(len(sizes))):
            jobs.append((state, mean, size, ss, k_max))
    sums = np.array(map_chunks(_chunk_power_sums, jobs, workers))
    sums = sums.reshape(blocks, len(sizes), k_max + 1).sum(axis=1)
    return sums / samples_per_block


# ---------------------------------------------------------------------------
# inversion


@dataclass(frozen=True)
class BlockMoments:
    report: MomentReport
    block_values: np.ndarray
    quadrature_moments: np.ndarray


def moments_from_block_quadratures(qmoments: np.ndarray, m_max: int,
                                   transfer: TransferMatrix | None = None) -> BlockMoments:
    """g^(m) per block from its phase-averaged quadrature moments; mean +- block spread."""
    qmoments = np.atleast_2d(np.asarray(qmoments, dtype=float))
    if qmoments.shape[1] < m_max + 1:
        raise ValueError(f"need quadrature moments up to order {2 * m_max}")
    transfer = transfer or build_transfer_matrix(m_max)
    normal = np.array([transfer.invert(row[: m_max + 1]) for row in qmoments])
    n1 = normal[:, 1]
    if np.any(n1 <= 0):
        raise UndefinedMomentError("estimated <:N:> <= 0; signal indistinguishable from vacuum")
    g = normal[:, 1:] / n1[:, None] ** np.arange(1, m_max + 1)
    g[:, 0] = 1.0
    mean = g.mean(axis=0)
    mean[0] = 1.0
    spread = g.std(axis=0, ddof=1) if g.shape[0] > 1 else np.zeros(m_max)
    # a noisy high order can average below zero; the report holds non-negative values
    report = MomentReport(np.clip(mean, 0.0, None), spread, float(n1.mean()), "monte-carlo")
    return BlockMoments(report, g, qmoments)


def moments_from_quadratures(batch: QuadratureBatch, m_max: int, block_count: int = 20,
                             transfer: TransferMatrix | None = None) -> MomentReport:
    """Split the batch into equal blocks, invert each, report mean +- block std."""
    if block_count < 1:
        raise ValueError("block_count must be >= 1")
    per = batch.count // block_count
    if per < 1:
        raise ValueError("fewer samples than blocks")
    data = batch.samples[: per * block_count].reshape(block_count, per)
    qm = np.array([power_sums(row, m_max) / per for row in data])
    return moments_from_block_quadratures(qm, m_max, transfer).report


def exact_quadrature_moments(state: str, mean: float, k_max: int) -> np.ndarray:
    """Population <q^{2k}>: thermal is Gaussian, coherent via normal-ordered moments."""
    _check_state(state, mean)
    if state == "thermal":
        var = 2.0 * mean + 1.0
        return np.array([var ** k * _double_factorial(2 * k - 1) for k in range(k_max + 1)])
    normal = np.array([mean ** m for m in range(k_max + 1)])
    return build_transfer_matrix(k_max).forward(normal)


def _double_factorial(n: int) -> int:
    return math.prod(range(n, 0, -2)) if n > 0 else 1
