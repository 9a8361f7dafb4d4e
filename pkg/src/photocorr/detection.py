"""Monte-Carlo simulation of HBT and multiplexed click-detector networks.

Photons are routed independently through a binary beam-splitter tree, which
is exact for inputs that are diagonal in the Fock basis. Loss is folded into
the routing as an extra "lost" output, dark counts are independent Bernoulli
events OR-ed with the photon clicks.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.optimize import nnls

from . import _io
from ._rng import chunk_sizes, map_chunks, spawn_generators
from .errors import ConditioningError, UndefinedMomentError
from .fock import PhotonStatistics

CHUNK_TRIALS = 1 << 18
FAINT_CLICK_PROBABILITY = 0.01
MAX_DETECTORS = 16


@dataclass(frozen=True)
class DetectorModel:
    kind: str = "click"
    efficiency: float = 1.0
    dark_count: float = 0.0

    def __post_init__(self):
        if self.kind not in ("click", "pnr"):
            raise ValueError("detector kind must be 'click' or 'pnr'")
        if not 0.0 <= self.efficiency <= 1.0:
            raise ValueError("efficiency must lie in [0, 1]")
        if not 0.0 <= self.dark_count < 1.0:
            raise ValueError("dark-count probability must lie in [0, 1)")


@dataclass(frozen=True)
class NetworkSpec:
    """Binary beam-splitter tree of `depth + 1` stages and 2**(depth+1) outputs.

    `transmissions[s]` lists the 2**s splitters of stage s. Splitter l sends a
    photon to its first child with probability T and to its second with 1 - T;
    outputs are numbered 0..2**(depth+1)-1 in tree order.
    """

    depth: int
    transmissions: tuple = ()
    detectors: tuple = ()

    def __post_init__(self):
        if self.depth < 0:
            raise ValueError("depth must be >= 0")
        n_out = 2 ** (self.depth + 1)
        if n_out > MAX_DETECTORS:
            raise ValueError(f"at most {MAX_DETECTORS} outputs are supported")
        ts = self.transmissions
        if not ts:
            ts = tuple((0.5,) * 2 ** s for s in range(self.depth + 1))
        ts = tuple(tuple(float(t) for t in stage) for stage in ts)
        if len(ts) != self.depth + 1 or any(len(st) != 2 ** s for s, st in enumerate(ts)):
            raise ValueError("transmissions must list 2**s splitters for each stage s")
        if any(not 0.0 < t < 1.0 for st in ts for t in st):
            raise ValueError("transmissions must lie in the open interval (0, 1)")
        dets = self.detectors
        if isinstance(dets, DetectorModel):
            dets = (dets,) * n_out
        elif not dets:
            dets = (DetectorModel(),) * n_out
        dets = tuple(dets)
        if len(dets) != n_out:
            raise ValueError(f"need {n_out} detector models, got {len(dets)}")
        object.__setattr__(self, "transmissions", ts)
        object.__setattr__(self, "detectors", dets)

    @property
    def n_outputs(self) -> int:
        return 2 ** (self.depth + 1)

    @classmethod
    def hbt(cls, transmission: float = 0.5, efficiencies=(1.0, 1.0), dark_count: float = 0.0):
        e1, e2 = efficiencies
        return cls(0, ((transmission,),),
                   (DetectorModel("click", e1, dark_count), DetectorModel("click", e2, dark_count)))

    @classmethod
    def symmetric(cls, n_outputs: int, detector: DetectorModel | None = None):
        depth = int(round(math.log2(n_outputs))) - 1
        if depth < 0 or 2 ** (depth + 1) != n_outputs:
            raise ValueError("n_outputs must be a power of two >= 2")
        return cls(depth, (), detector or DetectorModel())

    def output_probabilities(self) -> np.ndarray:
        """Probability that a photon reaches each output (before detection)."""
        q = np.ones(1)
        for stage in self.transmissions:
            t = np.asarray(stage)
            q = np.stack([q * t, q * (1.0 - t)], axis=1).ravel()
        return q

    def detection_probabilities(self) -> np.ndarray:
        """Per-output probability that a photon is routed there and absorbed."""
        eta = np.array([d.efficiency for d in self.detectors])
        return self.output_probabilities() * eta

    def dark_counts(self) -> np.ndarray:
        return np.array([d.dark_count for d in self.detectors])

    def to_dict(self) -> dict:
        return {
            "depth": self.depth,
            "transmissions": [list(st) for st in self.transmissions],
            "detectors": [{"kind": d.kind, "efficiency": d.efficiency, "dark_count": d.dark_count}
                          for d in self.detectors],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "NetworkSpec":
        dets = data.get("detectors", ())
        if isinstance(dets, dict):
            dets = DetectorModel(**dets)
        else:
            dets = tuple(DetectorModel(**d) for d in dets)
        return cls(int(data["depth"]), tuple(tuple(s) for s in data.get("transmissions", ())), dets)

    @classmethod
    def from_json(cls, path) -> "NetworkSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class ClickRecord:
    """Histogram of click patterns; bit o of a pattern index is detector o."""

    counts: np.ndarray
    trials: int
    n_detectors: int

    def __post_init__(self):
        c = np.array(self.counts, dtype=np.int64)
        if c.shape != (2 ** self.n_detectors,):
            raise ValueError("counts must have one entry per click pattern")
        if np.any(c < 0) or int(c.sum()) != int(self.trials):
            raise ValueError("counts must be non-negative and sum to trials")
        c.setflags(write=False)
        object.__setattr__(self, "counts", c)
        object.__setattr__(self, "trials", int(self.trials))

    def bits(self) -> np.ndarray:
        """(patterns, detectors) 0/1 matrix."""
        idx = np.arange(self.counts.size)
        return ((idx[:, None] >> np.arange(self.n_detectors)) & 1).astype(np.int64)

    def click_numbers(self) -> np.ndarray:
        return self.bits().sum(axis=1)

    def frequencies(self) -> np.ndarray:
        return self.counts / self.trials

    def marginals(self) -> np.ndarray:
        return self.frequencies() @ self.bits()

    def click_count_distribution(self) -> np.ndarray:
        """Probability of k clicked detectors, k = 0..n_detectors."""
        return np.bincount(self.click_numbers(), weights=self.frequencies(),
                           minlength=self.n_detectors + 1)

    def click_count_histogram(self) -> np.ndarray:
        return np.bincount(self.click_numbers(), weights=self.counts,
                           minlength=self.n_detectors + 1).astype(np.int64)

    def merge(self, other: "ClickRecord") -> "ClickRecord":
        if other.n_detectors != self.n_detectors:
            raise ValueError("detector counts differ")
        return ClickRecord(self.counts + other.counts, self.trials + other.trials, self.n_detectors)

    def to_csv(self, path, comments: Sequence[str] = ()) -> None:
        rows = [(i, int(c)) for i, c in enumerate(self.counts)]
        meta = [f"trials={self.trials}", f"n_detectors={self.n_detectors}", *comments]
        _io.write_csv(path, ["pattern", "count"], rows, meta)

    @classmethod
    def from_csv(cls, path) -> "ClickRecord":
        comments, _, rows = _io.read_csv(path)
        meta = _io.parse_comments(comments)
        counts = np.array([int(r[1]) for r in rows], dtype=np.int64)
        return cls(counts, int(meta["trials"]), int(meta["n_detectors"]))

    def to_json(self) -> str:
        return json.dumps({"trials": self.trials, "n_detectors": self.n_detectors,
                           "counts": self.counts.tolist()}, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ClickRecord":
        d = json.loads(text)
        return cls(np.asarray(d["counts"]), d["trials"], d["n_detectors"])


@dataclass(frozen=True)
class CountEstimate:
    value: float
    stderr: float
    trials: int
    max_click_probability: float = float("nan")
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.stderr >= 0:
            raise ValueError("standard error must be non-negative")

    @property
    def faint(self) -> bool:
        return self.max_click_probability <= FAINT_CLICK_PROBABILITY


# ---------------------------------------------------------------------------
# simulation


def _simulate_chunk(cdf: np.ndarray, route: np.ndarray, dark: np.ndarray, size: int,
                    rng: np.random.Generator) -> np.ndarray:
    n_det = dark.size
    n = np.searchsorted(cdf, rng.random(size), side="right")
    n = np.minimum(n, cdf.size - 1)
    hits = np.zeros((size, n_det), dtype=bool)
    busy = np.flatnonzero(n)
    if busy.size:
        routed = rng.multinomial(n[busy], route)
        hits[busy] = routed[:, :n_det] > 0
    if np.any(dark > 0):
        hits |= rng.random((size, n_det)) < dark
    pattern = hits.astype(np.int64) @ (1 << np.arange(n_det, dtype=np.int64))
    return np.bincount(pattern, minlength=2 ** n_det)


def simulate_network(stats: PhotonStatistics, spec: NetworkSpec, trials: int, seed: int,
                     workers: int | None = None, chunk: int = CHUNK_TRIALS) -> ClickRecord:
    """Sample `trials` detection windows; the result depends only on the seed."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    p = stats.normalized().probs
    cdf = np.cumsum(p)
    cdf[-1] = 1.0
    det = spec.detection_probabilities()
    route = np.append(det, max(0.0, 1.0 - det.sum()))
    route /= route.sum()
    dark = spec.dark_counts()
    sizes = chunk_sizes(trials, chunk)
    rngs = spawn_generators(seed, len(sizes))
    parts = map_chunks(_simulate_chunk, [(cdf, route, dark, s, r) for s, r in zip(sizes, rngs)], workers)
    return ClickRecord(np.sum(parts, axis=0), trials, spec.n_outputs)


def pattern_probabilities(stats: PhotonStatistics, spec: NetworkSpec) -> np.ndarray:
    """Exact click-pattern distribution by inclusion-exclusion over silent sets."""
    p = stats.normalized().probs
    n = np.arange(p.size)
    det = spec.detection_probabilities()
    dark = spec.dark_counts()
    n_det = spec.n_outputs
    idx = np.arange(2 ** n_det)
    bits = (idx[:, None] >> np.arange(n_det)) & 1
    # silent[V] = P(no detector in V clicks)
    silent = np.array([(p @ (1.0 - det @ b) ** n) * np.prod(np.where(b, 1.0 - dark, 1.0))
                       for b in bits])
    full = idx[-1]
    out = np.empty(idx.size)
    for s in idx:
        total = 0.0
        sub = s
        while True:
            total += (-1) ** bin(sub).count("1") * silent[(full ^ s) | sub]
            if sub == 0:
                break
            sub = (sub - 1) & s
        out[s] = total
    return np.clip(out, 0.0, None)


# ---------------------------------------------------------------------------
# coincidence estimators


def _elementary_symmetric(x: np.ndarray, m: int) -> float:
    e = np.zeros(m + 1)
    e[0] = 1.0
    for v in x:
        e[1:] = e[1:] + v * e[:-1]
    return float(e[m])


def estimate_gm_mfold(record: ClickRecord, m: int | None = None,
                      detectors: Sequence[int] | None = None) -> CountEstimate:
    """g^(m) as an m-fold coincidence probability over the product of singles.

    With `detectors` the ratio uses that subset only. Otherwise every m-subset
    of the network is pooled: the numerator is E[C(clicks, m)] and the
    denominator the elementary symmetric polynomial e_m of the marginals.
    The standard error is the delta-method value, evaluated exactly on the
    pattern histogram.
    """
    if detectors is not None:
        detectors = tuple(int(d) for d in detectors)
        if len(set(detectors)) != len(detectors) or not detectors:
            raise ValueError("detectors must be distinct")
        if any(not 0 <= d < record.n_detectors for d in detectors):
            raise ValueError("detector index out of range")
        m = len(detectors) if m is None else m
        if m != len(detectors):
            raise ValueError("m must equal the number of chosen detectors")
    if m is None or m < 1:
        raise ValueError("m must be >= 1")
    if m > record.n_detectors:
        raise ValueError(f"m={m} exceeds the {record.n_detectors} detectors of the network")

    w = record.frequencies()
    bits = record.bits().astype(float)
    marg = w @ bits
    pool = list(range(record.n_detectors)) if detectors is None else list(detectors)
    if np.any(marg[pool] <= 0):
        raise UndefinedMomentError("a chosen detector never clicked")

    if detectors is None:
        k = bits.sum(axis=1)
        f = np.array([math.comb(int(c), m) for c in k], dtype=float)
        denom = _elementary_symmetric(marg, m)
        grad = np.array([_elementary_symmetric(np.delete(marg, o), m - 1)
                         for o in range(record.n_detectors)])
    else:
        f = np.prod(bits[:, pool], axis=1)
        denom = float(np.prod(marg[pool]))
        grad = np.zeros(record.n_detectors)
        grad[pool] = denom / marg[pool]
    num = float(w @ f)
    value = num / denom
    phi = f / denom - (num / denom ** 2) * (bits @ grad)
    var = float(w @ (phi - w @ phi) ** 2) / record.trials
    return CountEstimate(value, math.sqrt(max(var, 0.0)), record.trials,
                         float(marg[pool].max()),
                         {"m": m, "coincidence": num, "singles_product": denom,
                          "detectors": pool})


def estimate_g2_hbt(record: ClickRecord, detectors: tuple[int, int] = (0, 1)) -> CountEstimate:
    """P_c / (P_D1 P_D2); an unbiased g^(2) only for faint light."""
    return estimate_gm_mfold(record, 2, detectors)


# ---------------------------------------------------------------------------
# click statistics of uniformly multiplexed detectors


def convolution_matrix(bins: int, efficiency: float, n_max: int) -> np.ndarray:
    """C[k, n]: probability that n photons click k of `bins` equally likely bins.

    Built photon by photon (lost, into an already clicked bin, or into a new
    one), which keeps every term positive.
    """
    if bins < 1:
        raise ValueError("bins must be >= 1")
    if not 0.0 <= efficiency <= 1.0:
        raise ValueError("efficiency must lie in [0, 1]")
    if n_max < 0:
        raise ValueError("n_max must be >= 0")
    k = np.arange(bins + 1)
    stay = (1.0 - efficiency) + efficiency * k / bins
    step = efficiency * (bins - k) / bins
    col = np.zeros(bins + 1)
    col[0] = 1.0
    out = np.empty((bins + 1, n_max + 1))
    out[:, 0] = col
    for n in range(1, n_max + 1):
        new = col * stay
        new[1:] += col[:-1] * step[:-1]
        col = new
        out[:, n] = col
    return out


def convolve_statistics(stats: PhotonStatistics, bins: int, efficiency: float) -> np.ndarray:
    """Click-count distribution of a `bins`-fold multiplexed click detector."""
    return convolution_matrix(bins, efficiency, stats.n_max) @ stats.probs


@dataclass(frozen=True)
class DeconvolutionResult:
    statistics: PhotonStatistics
    residual: float
    condition: float
    clipped_mass: float = 0.0
    method: str = "nnls"


def deconvolve_statistics(clicks, bins: int, efficiency: float, n_max: int,
                          method: str = "nnls", max_condition: float = 1e12,
                          residual_tol: float = 1e-2) -> DeconvolutionResult:
    """Loss-inverted photon statistics from a click-count distribution.

    `method="nnls"` solves the non-negative least-squares problem and allows
    n_max above the number of bins; `method="lstsq"` solves the plain
    truncated system and clips negative entries to zero afterwards.
    `residual` is the L1 mismatch of the re-convolved solution.
    """
    c = np.asarray(clicks, dtype=float)
    if c.shape != (bins + 1,):
        raise ValueError(f"click distribution must have {bins + 1} entries")
    if np.any(c < 0) or c.sum() <= 0:
        raise ValueError("click distribution must be non-negative and non-empty")
    c = c / c.sum()
    if efficiency <= 0:
        raise ConditioningError("efficiency 0 makes the loss matrix singular")
    mat = convolution_matrix(bins, efficiency, n_max)
    sv = np.linalg.svd(mat, compute_uv=False)
    cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else float("inf")
    if method == "nnls":
        x, _ = nnls(mat, c, maxiter=50 * (n_max + 1))
        clipped = 0.0
    elif method == "lstsq":
        if cond > max_condition:
            raise ConditioningError(f"loss matrix condition number {cond:.3e} exceeds {max_condition:.1e}")
        x = np.linalg.lstsq(mat, c, rcond=None)[0]
        clipped = float(-x[x < 0].sum())
        x = np.clip(x, 0.0, None)
    else:
        raise ValueError("method must be 'nnls' or 'lstsq'")
    total = x.sum()
    if total <= 0:
        raise ConditioningError("inversion produced an all-zero distribution")
    x = x / total
    residual = float(np.abs(mat @ x - c).sum())
    if residual > residual_tol:
        raise ConditioningError(f"deconvolution residual {residual:.3e} exceeds {residual_tol:.1e}")
    return DeconvolutionResult(PhotonStatistics(x), residual, cond, clipped, method)


def raw_click_statistics(clicks) -> PhotonStatistics:
    """Click counts read naively as photon numbers."""
    c = np.asarray(clicks, dtype=float)
    return PhotonStatistics(c / c.sum())


def bootstrap_deconvolved_moments(histogram, bins: int, efficiency: float, n_max: int,
                                  m_max: int, resamples: int, seed: int, method: str = "nnls"):
    """Moments of the deconvolved statistics with a parametric-bootstrap spread.

    `histogram` holds integer click-count tallies. Each resample redraws the
    tallies multinomially from their observed frequencies.
    Returns (g^(1..m_max) from the data, standard deviation over resamples).
    """
    from .moments import moments_from_statistics

    h = np.asarray(histogram, dtype=np.int64)
    trials = int(h.sum())

    def g_of(counts):
        res = deconvolve_statistics(counts, bins, efficiency, n_max, method, residual_tol=np.inf)
        return moments_from_statistics(res.statistics, m_max).values

    centre = g_of(h)
    rng = spawn_generators(seed, 1)[0]
    draws = rng.multinomial(trials, h / trials, size=resamples)
    ens = np.array([g_of(d) for d in draws])
    return centre, ens.std(axis=0, ddof=1)


def all_subsets(n_detectors: int, m: int):
    return itertools.combinations(range(n_detectors), m)
