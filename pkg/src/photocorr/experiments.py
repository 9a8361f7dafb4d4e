"""Configuration-driven experiments.

A config is a JSON object whose "experiment" field selects one of the
runners below. Every object in a config is validated against a strict schema
(unknown keys are rejected). A run writes CSV tables, a PNG figure and a JSON
summary echoing the config, seed and toolkit version; the files depend only
on (config, seed, worker count).
"""

from __future__ import annotations

import copy
import json
import math
from pathlib import Path
from typing import Callable

import jsonschema
import numpy as np

from . import _io, __version__, detection, fock, homodyne, moments, pdc, phasespace, plotting, tes
from .errors import ConfigError

KINDS = {
    "network-sim": "click-detector networks: HBT, m-fold coincidences, click deconvolution",
    "tes-analysis": "TES traces to pulse areas, Gaussian-comb fit, statistics and moments",
    "homodyne": "phase-randomized homodyne moments of coherent and thermal states",
    "pdc": "twin-beam joint moments from a Schmidt spectrum and heralded g2",
    "phasespace": "W, Q and |chi|^2 from moments of displaced states",
    "nonclassicality": "moment-matrix, monotonicity, Schwarz and twin-beam criteria",
}
STOCHASTIC = ("network-sim", "tes-analysis", "homodyne")

# ---------------------------------------------------------------------------
# schema

_NUM = {"type": "number"}
_NONNEG = {"type": "number", "minimum": 0}
_POS = {"type": "number", "exclusiveMinimum": 0}
_PROB = {"type": "number", "minimum": 0, "maximum": 1}


def _int(lo=0, hi=None):
    s = {"type": "integer", "minimum": lo}
    if hi is not None:
        s["maximum"] = hi
    return s


def _obj(props: dict, required=(), **extra) -> dict:
    s = {"type": "object", "properties": props, "additionalProperties": False}
    if required:
        s["required"] = list(required)
    s.update(extra)
    return s


STATE = _obj(
    {
        "kind": {"enum": ["vacuum", "fock", "poisson", "coherent", "thermal", "displaced_fock"]},
        "label": {"type": "string"},
        "mean": _NONNEG,
        "k": _int(0, 200),
        "alpha": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2},
        "n_max": _int(1, 5000),
    },
    ["kind"],
    allOf=[
        {"if": {"properties": {"kind": {"enum": ["poisson", "coherent", "thermal"]}}},
         "then": {"required": ["mean"]}},
        {"if": {"properties": {"kind": {"enum": ["fock", "displaced_fock"]}}},
         "then": {"required": ["k"]}},
        {"if": {"properties": {"kind": {"const": "displaced_fock"}}},
         "then": {"required": ["alpha"]}},
    ],
)
DETECTOR = _obj({"kind": {"enum": ["click", "pnr"]}, "efficiency": _PROB,
                 "dark_count": {"type": "number", "minimum": 0, "exclusiveMaximum": 1}})
OUTPUT = _obj({"dir": {"type": "string"}, "figures": {"type": "boolean"}})
RANGE = _obj({"start": _NUM, "stop": _NUM, "points": _int(1, 100_000)}, ["start", "stop", "points"])

_COMMON = {
    "experiment": {"enum": list(KINDS)},
    "name": {"type": "string", "pattern": "^[A-Za-z0-9_.-]+$"},
    "description": {"type": "string"},
    "seed": _int(0),
    "output": OUTPUT,
}

SCHEMAS = {
    "network-sim": _obj({
        **_COMMON,
        "state": STATE,
        "network": _obj({
            "outputs": {"enum": [2, 4, 8, 16]},
            "transmissions": {"type": "array", "items": {"type": "array", "items": {
                "type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1}}},
            "detectors": {"oneOf": [DETECTOR, {"type": "array", "items": DETECTOR, "minItems": 2}]},
        }, ["outputs"]),
        "trials": _int(1, 10 ** 10),
        "analysis": _obj({
            "hbt_pair": {"type": "array", "items": _int(0, 15), "minItems": 2, "maxItems": 2},
            "mfold_orders": {"type": "array", "items": _int(1, 16)},
            "deconvolve": _obj({"n_max": _int(1, 400), "m_max": _int(2, 12),
                                "bootstrap": _int(0, 100_000),
                                "method": {"enum": ["nnls", "lstsq"]}}, ["n_max"]),
        }),
    }, ["experiment", "seed", "state", "network", "trials"]),
    "tes-analysis": _obj({
        **_COMMON,
        "state": STATE,
        "traces_file": {"type": "string"},
        "synthesis": _obj({
            "count": _int(1, 10 ** 8),
            "resolution": _POS,
            "noise_sigma": _NONNEG,
            "sample_rate": _POS,
            "template": _obj({"length": _int(8, 100_000), "onset": _int(0), "rise": _POS, "decay": _POS},
                             ["length"]),
            "save_traces": {"type": "boolean"},
        }, ["count", "template"], oneOf=[{"required": ["resolution"]}, {"required": ["noise_sigma"]}]),
        "window": {"type": "array", "items": _int(0), "minItems": 2, "maxItems": 2},
        "baseline": {"type": "array", "items": _int(0), "minItems": 2, "maxItems": 2},
        "n_peaks": _int(2, 200),
        "m_max": _int(2, 12),
        "mc_trials": _int(1, 10 ** 8),
        "bins": {"oneOf": [{"enum": ["fd", "auto", "sturges", "sqrt"]}, _int(4, 100_000)]},
        "spacing": _POS,
    }, ["experiment", "seed", "window", "n_peaks"],
        oneOf=[{"required": ["state", "synthesis"]}, {"required": ["traces_file"]}]),
    "homodyne": _obj({
        **_COMMON,
        "states": {"type": "array", "minItems": 1, "items": _obj(
            {"kind": {"enum": list(homodyne.STATES)}, "mean": _NONNEG, "label": {"type": "string"}},
            ["kind", "mean"])},
        "samples_per_block": _int(1, 10 ** 10),
        "blocks": _int(2, 10_000),
        "m_max": _int(2, 10),
    }, ["experiment", "seed", "states", "samples_per_block", "blocks"]),
    "pdc": _obj({
        **_COMMON,
        "spectrum": {"oneOf": [
            _obj({"modes": _int(1, 100_000)}, ["modes"]),
            _obj({"weights": {"type": "array", "items": _NONNEG, "minItems": 1}}, ["weights"]),
            _obj({"double_gaussian": _obj({"sum_width": _POS, "diff_width": _POS,
                                           "points": _int(8, 4096), "extent": _POS},
                                          ["sum_width", "diff_width"])}, ["double_gaussian"]),
            _obj({"jsa_file": {"type": "string"}}, ["jsa_file"]),
        ]},
        "means": {"type": "array", "items": _POS, "minItems": 1},
        "moments": {"type": "array", "items": {"type": "array", "items": _int(0, 12),
                                               "minItems": 2, "maxItems": 2}},
        "heralding": _obj({
            "regimes": {"type": "array", "items": {"enum": ["SM", "MM", "spectrum"]}, "minItems": 1},
            "detectors": {"type": "array", "items": {"enum": ["click", "pnr"]}, "minItems": 1},
            "efficiencies": {"type": "array", "items": _PROB, "minItems": 1},
            "car": RANGE,
        }, ["car", "efficiencies"]),
    }, ["experiment", "spectrum"]),
    "phasespace": _obj({
        **_COMMON,
        "state": STATE,
        "alpha": {"oneOf": [
            _obj({"start": _NONNEG, "stop": _NONNEG, "points": _int(1, 100_000), "phase": _NUM},
                 ["start", "stop", "points"]),
            {"type": "array", "minItems": 1,
             "items": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2}},
        ]},
        "m_max": {"type": "array", "items": _int(2, 60), "minItems": 1},
    }, ["experiment", "state", "alpha", "m_max"]),
    "nonclassicality": _obj({
        **_COMMON,
        "states": {"type": "array", "items": STATE},
        "m_max": _int(2, 30),
        "twin_beams": {"type": "array", "items": _obj({
            "label": {"type": "string"}, "g11": _NONNEG, "g20": _NONNEG, "g02": _NONNEG,
            "sigmas": {"type": "array", "items": _NONNEG, "minItems": 3, "maxItems": 3},
        }, ["g11", "g20", "g02"])},
    }, ["experiment"], anyOf=[{"required": ["states"]}, {"required": ["twin_beams"]}]),
}
_ROOT = {"type": "object", "properties": {"experiment": {"enum": list(KINDS)}}, "required": ["experiment"]}


def _path(err: jsonschema.ValidationError) -> str:
    return "/" + "/".join(str(p) for p in err.absolute_path)


def validate_config(cfg) -> dict:
    """Raise ConfigError naming the offending field, else return the config."""
    root = jsonschema.Draft202012Validator(_ROOT)
    for err in root.iter_errors(cfg):
        raise ConfigError(err.message, _path(err))
    validator = jsonschema.Draft202012Validator(SCHEMAS[cfg["experiment"]])
    errors = list(validator.iter_errors(cfg))
    if errors:
        err = max(errors, key=lambda e: len(e.absolute_path))
        # descend into oneOf branches so the message names the deepest field
        while err.context:
            err = max(err.context, key=lambda e: len(e.absolute_path))
        raise ConfigError(err.message, _path(err))
    return cfg


def load_config(path, seed: int | None = None) -> dict:
    path = Path(path)
    try:
        cfg = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file {str(path)!r} not found")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}")
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object", "/")
    if seed is not None:
        cfg["seed"] = int(seed)
    cfg = validate_config(cfg)
    cfg.setdefault("_base", str(path.resolve().parent))
    return cfg


# ---------------------------------------------------------------------------
# helpers


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def _auto_n_max(spec: dict) -> int:
    if "n_max" in spec:
        return int(spec["n_max"])
    kind = spec["kind"]
    mean = float(spec.get("mean", 0.0))
    if kind == "thermal":
        x = mean / (1.0 + mean)
        return max(8, int(math.ceil(math.log(1e-15) / math.log(x))) + 1) if x > 0 else 8
    if kind in ("poisson", "coherent"):
        return int(math.ceil(mean + 12.0 * math.sqrt(mean) + 40.0))
    if kind == "fock":
        return max(1, int(spec["k"]))
    if kind == "displaced_fock":
        a = abs(complex(*spec["alpha"]))
        return int(spec["k"]) + int(math.ceil(a * a + 12.0 * a + 40.0))
    return 1


def make_statistics(spec: dict) -> fock.PhotonStatistics:
    alpha = complex(*spec["alpha"]) if "alpha" in spec else 0.0
    return fock.make_state(spec["kind"], _auto_n_max(spec), k=spec.get("k"), mean=spec.get("mean"),
                           alpha=alpha)


def _state_label(spec: dict) -> str:
    if "label" in spec:
        return spec["label"]
    parts = [spec["kind"]]
    for key in ("k", "mean"):
        if key in spec:
            parts.append(f"{key}={spec[key]:g}")
    if "alpha" in spec:
        parts.append(f"alpha={spec['alpha'][0]:g}{spec['alpha'][1]:+g}j")
    return " ".join(parts)


def _seq(seed: int, count: int) -> list[np.random.SeedSequence]:
    return np.random.SeedSequence(seed).spawn(count)


def _resolve(cfg: dict, name: str) -> Path:
    p = Path(name)
    return p if p.is_absolute() else Path(cfg.get("_base", ".")) / p


class _Writer:
    """Collects the files of one run under a common prefix."""

    def __init__(self, out_dir: Path, prefix: str, figures: bool):
        self.dir = Path(out_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.prefix = prefix
        self.figures = figures
        self.files: list[str] = []

    def path(self, suffix: str) -> Path:
        name = f"{self.prefix}_{suffix}"
        self.files.append(name)
        return self.dir / name

    def csv(self, suffix, header, rows, comments=()):
        _io.write_csv(self.path(suffix), header, rows, comments)

    def figure(self, suffix, draw: Callable[[Path], object]):
        if self.figures:
            draw(self.path(suffix))


# ---------------------------------------------------------------------------
# runners


def _run_network(cfg, w: _Writer, workers):
    seed = cfg["seed"]
    sim_ss, boot_ss = _seq(seed, 2)
    stats = make_statistics(cfg["state"])
    net = cfg["network"]
    outputs = int(net["outputs"])
    try:
        spec = detection.NetworkSpec.from_dict({
            "depth": int(round(math.log2(outputs))) - 1,
            "transmissions": net.get("transmissions", []),
            "detectors": net.get("detectors", {}),
        })
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc), "/network")
    trials = int(cfg["trials"])
    record = detection.simulate_network(stats, spec, trials, sim_ss, workers)
    meta = [f"seed={seed}", f"trials={trials}", f"n_detectors={outputs}"]
    w.csv("patterns.csv", ["pattern", "bits", "count"],
          ((i, format(i, f"0{outputs}b")[::-1], int(c)) for i, c in enumerate(record.counts) if c),
          meta)
    hist = record.click_count_histogram()
    w.csv("click_counts.csv", ["clicks", "count", "frequency"],
          ((k, int(c), c / trials) for k, c in enumerate(hist)), meta)

    analysis = cfg.get("analysis", {})
    rows, results = [], {"marginals": record.marginals()}
    pair = analysis.get("hbt_pair", [0, 1])
    est = detection.estimate_g2_hbt(record, tuple(pair))
    rows.append(("g2_hbt", 2, f"{pair[0]};{pair[1]}", est.value, est.stderr, est.max_click_probability, est.faint))
    results["g2_hbt"] = {"value": est.value, "stderr": est.stderr, "faint": est.faint}
    for m in analysis.get("mfold_orders", []):
        if m > outputs:
            raise ConfigError(f"order {m} exceeds the {outputs} detectors", "/analysis/mfold_orders")
        est = detection.estimate_gm_mfold(record, m)
        rows.append(("g_mfold", m, "all", est.value, est.stderr, est.max_click_probability, est.faint))
        results[f"g{m}_mfold"] = {"value": est.value, "stderr": est.stderr, "faint": est.faint}
    w.csv("estimates.csv", ["estimator", "m", "detectors", "value", "stderr", "max_click_probability",
                            "faint"], rows, meta)

    recovered = None
    if "deconvolve" in analysis:
        dc = analysis["deconvolve"]
        effs = {d.efficiency for d in spec.detectors}
        uniform = all(abs(t - 0.5) < 1e-12 for st in spec.transmissions for t in st)
        if len(effs) != 1 or not uniform or np.any(spec.dark_counts() > 0):
            raise ConfigError("deconvolution needs balanced splitters, equal efficiencies and no dark counts",
                              "/analysis/deconvolve")
        eta = effs.pop()
        n_max, m_max = int(dc["n_max"]), int(dc.get("m_max", 2))
        out = detection.deconvolve_statistics(hist / hist.sum(), outputs, eta, n_max,
                                              method=dc.get("method", "nnls"))
        recovered = out.statistics.probs
        w.csv("deconvolved.csv", ["n", "probability"], enumerate(recovered),
              meta + [f"efficiency={eta!r}", f"residual={out.residual!r}", f"condition={out.condition!r}"])
        raw = moments.moments_from_statistics(detection.raw_click_statistics(hist), min(m_max, outputs))
        rec = moments.moments_from_statistics(out.statistics, m_max)
        sig = np.full(m_max, np.nan)
        resamples = int(dc.get("bootstrap", 0))
        if resamples:
            _, sig = detection.bootstrap_deconvolved_moments(hist, outputs, eta, n_max, m_max, resamples,
                                                             boot_ss, dc.get("method", "nnls"))
        w.csv("deconvolved_moments.csv", ["m", "g_recovered", "bootstrap_sigma", "g_raw_clicks"],
              ((m, rec.g(m), sig[m - 1], raw.g(m) if m <= raw.m_max else float("nan"))
               for m in range(1, m_max + 1)), meta + [f"bootstrap={resamples}"])
        results["deconvolution"] = {"g_recovered": rec.values, "bootstrap_sigma": sig,
                                    "g_raw_clicks": raw.values, "residual": out.residual}
    w.figure("click_counts.png", lambda p: plotting.click_count_plot(
        hist, p, recovered, f"{_state_label(cfg['state'])}, {outputs} outputs"))
    return results


def _run_tes(cfg, w: _Writer, workers):
    seed = cfg["seed"]
    synth_ss, mc_ss = _seq(seed, 2)
    window = tuple(cfg["window"])
    baseline = tuple(cfg["baseline"]) if "baseline" in cfg else None
    reference = None
    if "traces_file" in cfg:
        src = _resolve(cfg, cfg["traces_file"])
        if not src.exists():
            raise ConfigError(f"traces file {str(src)!r} not found", "/traces_file")
        traces = tes.TesTraceSet.from_csv(src) if src.suffix == ".csv" else tes.TesTraceSet.from_binary(src)
    else:
        syn = cfg["synthesis"]
        tpl = syn["template"]
        template = tes.pulse_template(tpl["length"], tpl.get("onset", 20), tpl.get("rise", 2.0),
                                      tpl.get("decay", 15.0))
        if window[1] > template.size or window[0] >= window[1]:
            raise ConfigError("window must satisfy 0 <= start < end <= template length", "/window")
        sigma = syn["noise_sigma"] if "noise_sigma" in syn else tes.noise_for_resolution(
            template, window, syn["resolution"], baseline)
        stats = make_statistics(cfg["state"])
        reference = stats.probs
        traces = tes.synthesize_traces(stats, template, sigma, int(syn["count"]), synth_ss,
                                       syn.get("sample_rate", 1e6), workers)
        if syn.get("save_traces"):
            traces.to_binary(w.path("traces.bin"))
    n_peaks, m_max = int(cfg["n_peaks"]), int(cfg.get("m_max", 4))
    mc_trials = int(cfg.get("mc_trials", 10_000))
    out = tes.analyze_traces(traces, window, n_peaks, m_max, mc_trials, mc_ss, cfg.get("bins", "fd"),
                             cfg.get("spacing"), baseline, workers)
    meta = [f"seed={seed}", f"traces={traces.count}", f"mc_trials={mc_trials}"]
    h, fit = out.histogram, out.fit
    model = fit.evaluate(h.centers)
    w.csv("histogram.csv", ["center", "width", "count", "model"],
          zip(h.centers, h.widths, h.counts, model), meta)
    w.csv("fit.csv", ["n", "gamma", "alpha", "beta", "area"],
          zip(range(fit.n_peaks), fit.gamma, fit.alpha, fit.beta, fit.peak_areas),
          meta + [f"resolution={fit.resolution!r}", f"residual={fit.residual!r}", f"nfev={fit.nfev}"])
    p, err = out.statistics.statistics.probs, out.statistics.errors
    w.csv("statistics.csv", ["n", "probability", "error"], zip(range(p.size), p, err), meta)
    expected = None
    if reference is not None:
        ref = reference[:n_peaks] / reference[:n_peaks].sum()
        expected = moments.moments_from_statistics(fock.PhotonStatistics(ref).padded(max(n_peaks - 1, m_max)),
                                                   m_max)
    rep = out.moments
    w.csv("moments.csv", ["m", "g", "sigma", "expected_truncated"],
          ((m, rep.g(m), rep.sigma(m), expected.g(m) if expected else float("nan"))
           for m in range(1, m_max + 1)), meta)
    w.figure("histogram.png", lambda path: plotting.area_histogram_plot(
        h.centers, h.widths, h.counts, fit.evaluate, path, f"{traces.count} traces"))
    w.figure("statistics.png", lambda path: plotting.statistics_plot(
        p, err, path, None if reference is None else reference / reference[:n_peaks].sum(),
        "extracted photon statistics"))
    return {"resolution": fit.resolution, "fit_residual": fit.residual, "g": rep.values,
            "sigma": rep.uncertainties, "mean_photon_number": rep.mean_photon_number,
            "expected_truncated": None if expected is None else expected.values}


def _run_homodyne(cfg, w: _Writer, workers):
    seed = cfg["seed"]
    states = cfg["states"]
    m_max = int(cfg.get("m_max", 5))
    per, blocks = int(cfg["samples_per_block"]), int(cfg["blocks"])
    transfer = homodyne.build_transfer_matrix(m_max)
    table, block_rows, results, plot = [], [], {}, {}
    for spec, ss in zip(states, _seq(seed, len(states))):
        label = spec.get("label", spec["kind"])
        qm = homodyne.simulate_block_moments(spec["kind"], spec["mean"], per, blocks, ss, m_max, workers)
        bm = homodyne.moments_from_block_quadratures(qm, m_max, transfer)
        rep = bm.report
        expected = [1.0 if spec["kind"] == "coherent" else float(math.factorial(m)) for m in range(2, m_max + 1)]
        for m, ref in zip(range(2, m_max + 1), expected):
            table.append((label, spec["kind"], spec["mean"], m, rep.g(m), rep.sigma(m), ref))
        for b, row in enumerate(bm.block_values):
            block_rows.extend((label, b, m, row[m - 1]) for m in range(2, m_max + 1))
        results[label] = {"g": rep.values, "block_std": rep.uncertainties,
                          "mean_photon_number": rep.mean_photon_number}
        orders = np.arange(2, m_max + 1)
        plot[label] = (orders, rep.values[1:], rep.uncertainties[1:], np.array(expected))
    meta = [f"seed={seed}", f"samples_per_block={per}", f"blocks={blocks}"]
    w.csv("table.csv", ["state", "kind", "mean", "m", "g", "block_std", "expected"], table, meta)
    w.csv("blocks.csv", ["state", "block", "m", "g"], block_rows, meta)
    w.figure("moments.png", lambda p: plotting.moments_plot(plot, p, f"{blocks} x {per} samples"))
    return results


def _pdc_spectrum(cfg) -> tuple[pdc.SchmidtSpectrum, dict]:
    spec = cfg["spectrum"]
    info = {}
    if "modes" in spec:
        return pdc.SchmidtSpectrum.equal(int(spec["modes"])), info
    if "weights" in spec:
        lam = np.sort(np.asarray(spec["weights"], dtype=float))[::-1]
        if not np.any(lam > 0):
            raise ConfigError("weights must not all vanish", "/spectrum/weights")
        return pdc.SchmidtSpectrum(lam / np.linalg.norm(lam)), info
    if "double_gaussian" in spec:
        dg = spec["double_gaussian"]
        jsa = pdc.double_gaussian_jsa(dg["sum_width"], dg["diff_width"], dg.get("points", 256),
                                      dg.get("extent", 8.0))
        info["K_analytic"] = pdc.double_gaussian_schmidt_number(dg["sum_width"], dg["diff_width"])
    else:
        src = _resolve(cfg, spec["jsa_file"])
        if not src.exists():
            raise ConfigError(f"JSA file {str(src)!r} not found", "/spectrum/jsa_file")
        jsa = pdc.JointSpectralAmplitude.from_csv(src)
    sp = pdc.schmidt_decompose(jsa)
    info.update({"residual": sp.residual, "resolution_error": sp.resolution_error})
    return sp, info


def _run_pdc(cfg, w: _Writer, workers):
    spectrum, info = _pdc_spectrum(cfg)
    K = spectrum.K
    results = {"K": K, "modes": spectrum.weights.size, **info}
    w.csv("schmidt.csv", ["q", "weight"], enumerate(spectrum.weights), [f"K={K!r}"])
    pairs = [tuple(p) for p in cfg.get("moments", [[1, 1], [2, 0], [2, 1]])]
    rows = []
    for mean in cfg.get("means", [0.01]):
        sp = spectrum.with_mean(mean)
        for wv, vv in pairs:
            jm = pdc.joint_moment(sp, wv, vv)
            approx = jm.approximate if jm.approximate is not None else float("nan")
            rows.append((mean, wv, vv, jm.exact, approx, jm.relative_gap))
    w.csv("joint_moments.csv", ["mean", "w", "v", "exact", "approximate", "relative_gap"], rows, [f"K={K!r}"])
    results["joint_moments"] = [list(r) for r in rows]
    curves = []
    if "heralding" in cfg:
        hd = cfg["heralding"]
        car = hd["car"]
        cars = np.geomspace(car["start"], car["stop"], car["points"])
        herald_rows = []
        for regime in hd.get("regimes", ["SM", "MM"]):
            target = spectrum if regime == "spectrum" else regime
            k_reg = {"SM": 1.0, "MM": math.inf}.get(regime, K)
            floor = 1.0 + (0.0 if math.isinf(k_reg) else 1.0 / k_reg)
            if cars[0] <= floor:
                raise ConfigError(f"CAR must exceed {floor:g} for regime {regime}", "/heralding/car/start")
            for kind in hd.get("detectors", ["click", "pnr"]):
                for eta in hd["efficiencies"]:
                    data = pdc.g2h_curve(target, cars, eta, kind, workers)
                    herald_rows.extend((regime, kind, eta, c, g) for c, g in data)
                    curves.append((regime, kind, eta, data))
        w.csv("heralding.csv", ["regime", "detector", "efficiency", "car", "g2h"], herald_rows)
        w.figure("heralding.png", lambda p: plotting.g2h_plot(curves, p))
    return results


def _alphas(cfg) -> tuple[list[complex], np.ndarray | None]:
    a = cfg["alpha"]
    if isinstance(a, dict):
        r = np.linspace(a["start"], a["stop"], a["points"])
        phase = math.radians(a.get("phase", 0.0))
        return [complex(x * math.cos(phase), x * math.sin(phase)) for x in r], r
    return [complex(re, im) for re, im in a], None


def _run_phasespace(cfg, w: _Writer, workers):
    state = make_statistics(cfg["state"])
    alphas, radius = _alphas(cfg)
    m_list = [int(m) for m in cfg["m_max"]]
    grid = phasespace.reconstruct_grid(state, alphas, m_list, workers)
    label = _state_label(cfg["state"])
    grid.to_csv(w.path("grid.csv"), [f"state={label}"])
    fock_n = phasespace._fock_index(state)
    oracle = []
    for a in alphas:
        ds = phasespace.displaced_statistics(state, a)
        chi = phasespace.chi_squared_oracle(ds, fock_n) if fock_n is not None else float("nan")
        oracle.append((a.real, a.imag, phasespace.wigner_oracle(ds), phasespace.q_oracle(ds), chi))
    w.csv("oracle.csv", ["re_alpha", "im_alpha", "W", "Q", "chi2"], oracle, [f"state={label}"])
    worst = {}
    for m in m_list:
        pts = grid.select(m)
        errs = [abs(p.wigner.value - o[2]) for p, o in zip(pts, oracle) if p.wigner.converged]
        worst[str(m)] = {"converged_points": len(errs), "max_wigner_error": max(errs) if errs else None}
    if radius is not None:
        orc = np.array(oracle)
        for col, name, key in ((2, "wigner", "W"), (3, "q", "Q"), (4, "chi2", "|chi|^2")):
            if col == 4 and fock_n is None:
                continue
            curves = {}
            for m in m_list:
                series = [getattr(p, "wigner" if col == 2 else name) for p in grid.select(m)]
                curves[m] = (np.array([s.value for s in series]), np.array([s.converged for s in series]))
            w.figure(f"{name}.png", lambda p, c=curves, o=orc[:, col], k=key: plotting.phasespace_plot(
                radius, c, o, p, k, label))
    return {"points": len(alphas), "m_max": m_list, "wigner_check": worst}


def _run_nonclassicality(cfg, w: _Writer, workers):
    m_max = int(cfg.get("m_max", 8))
    verdict_rows, moment_rows, plot, results = [], [], {}, {}
    for spec in cfg.get("states", []):
        label = _state_label(spec)
        stats = make_statistics(spec)
        if stats.n_max < m_max:
            stats = stats.padded(m_max)
        rep = moments.moments_from_statistics(stats, m_max)
        moment_rows.extend((label, m, rep.g(m)) for m in range(1, m_max + 1))
        flagged = []
        for v in moments.all_criteria(rep):
            params = ";".join(f"{k}={v.details[k]}" for k in ("size", "order", "h", "m") if k in v.details)
            verdict_rows.append((label, v.criterion, params, v.statistic,
                                 float("nan") if v.significance is None else v.significance, v.nonclassical))
            if v.nonclassical:
                flagged.append(f"{v.criterion}({params})")
        results[label] = {"nonclassical": bool(flagged), "flagged": flagged}
        orders = np.arange(2, m_max + 1)
        vals = rep.values[1:]
        if np.all(vals > 0):
            plot[label] = (orders, vals, None, None)
    for i, tb in enumerate(cfg.get("twin_beams", [])):
        label = tb.get("label", f"twin-beam {i}")
        v = pdc.twin_beam_nonclassicality(tb["g11"], tb["g20"], tb["g02"],
                                          tuple(tb["sigmas"]) if "sigmas" in tb else None)
        verdict_rows.append((label, v.criterion, "", v.statistic,
                             float("nan") if v.significance is None else v.significance, v.nonclassical))
        results[label] = {"nonclassical": v.nonclassical, "slack": v.statistic}
    w.csv("verdicts.csv", ["state", "criterion", "parameters", "slack", "significance", "nonclassical"],
          verdict_rows)
    if moment_rows:
        w.csv("moments.csv", ["state", "m", "g"], moment_rows)
    if plot:
        w.figure("moments.png", lambda p: plotting.moments_plot(plot, p, "normalized factorial moments"))
    return results


RUNNERS = {
    "network-sim": _run_network,
    "tes-analysis": _run_tes,
    "homodyne": _run_homodyne,
    "pdc": _run_pdc,
    "phasespace": _run_phasespace,
    "nonclassicality": _run_nonclassicality,
}


def run_experiment(cfg: dict, out_dir=None, workers: int | None = None) -> dict:
    """Validate and run `cfg`, writing every output file; returns the summary."""
    cfg = copy.deepcopy(cfg)
    base = cfg.pop("_base", None)
    validate_config(cfg)
    kind = cfg["experiment"]
    if kind in STOCHASTIC and "seed" not in cfg:
        raise ConfigError("'seed' is a required property", "/")
    name = cfg.get("name", kind)
    out = cfg.get("output", {})
    target = Path(out_dir) if out_dir is not None else Path(out.get("dir", Path("results") / name))
    writer = _Writer(target, name, out.get("figures", True))
    run_cfg = dict(cfg, _base=base) if base else cfg
    results = RUNNERS[kind](run_cfg, writer, workers)
    summary = {
        "experiment": kind,
        "name": name,
        "version": __version__,
        "seed": cfg.get("seed"),
        "config": cfg,
        "files": sorted(writer.files),
        "results": results,
    }
    text = json.dumps(_jsonable(summary), indent=2, sort_keys=True) + "\n"
    (writer.dir / f"{name}_summary.json").write_text(text, encoding="utf-8")
    return summary


# ---------------------------------------------------------------------------
# shipped examples

EXAMPLES = {
    "network-sim": {
        "experiment": "network-sim", "name": "mfold8", "seed": 2021,
        "state": {"kind": "thermal", "mean": 0.02},
        "network": {"outputs": 8},
        "trials": 10_000_000,
        "analysis": {"mfold_orders": [2, 3]},
    },
    "tes-analysis": {
        "experiment": "tes-analysis", "name": "fig3_tes", "seed": 41,
        "state": {"kind": "coherent", "mean": 2.7},
        "synthesis": {"count": 20_000, "resolution": 0.4, "template": {"length": 200}},
        "window": [15, 150], "n_peaks": 11, "m_max": 4, "mc_trials": 10_000,
    },
    "homodyne": {
        "experiment": "homodyne", "name": "table1", "seed": 1,
        "states": [{"kind": "coherent", "mean": 1.0}, {"kind": "thermal", "mean": 1.0}],
        "samples_per_block": 18_000_000, "blocks": 20, "m_max": 5,
    },
    "pdc": {
        "experiment": "pdc", "name": "fig9_heralding",
        "spectrum": {"modes": 1},
        "means": [0.001, 0.01, 0.05],
        "heralding": {"regimes": ["SM", "MM"], "detectors": ["click", "pnr"],
                      "efficiencies": [1.0, 0.5, 0.1], "car": {"start": 2.5, "stop": 1000, "points": 40}},
    },
    "phasespace": {
        "experiment": "phasespace", "name": "fig10",
        "state": {"kind": "fock", "k": 1},
        "alpha": {"start": 0.0, "stop": 2.5, "points": 101},
        "m_max": [6, 11, 16, 21],
    },
    "nonclassicality": {
        "experiment": "nonclassicality", "name": "criteria",
        "states": [{"kind": "coherent", "mean": 1.0}, {"kind": "thermal", "mean": 1.0},
                   {"kind": "fock", "k": 1}, {"kind": "fock", "k": 3},
                   {"kind": "displaced_fock", "k": 1, "alpha": [2.0, 0.0], "n_max": 120}],
        "m_max": 12,
        "twin_beams": [{"label": "SM PDC <n>=0.01", "g11": 102.0, "g20": 2.0, "g02": 2.0},
                       {"label": "coherent pair", "g11": 1.0, "g20": 1.0, "g02": 1.0}],
    },
}

_SMALL = {
    "network-sim": {"trials": 200_000, "state": {"kind": "thermal", "mean": 0.5},
                    "network": {"outputs": 8, "detectors": {"efficiency": 0.5}},
                    "analysis": {"mfold_orders": [2, 3], "deconvolve": {"n_max": 20, "bootstrap": 20}}},
    "tes-analysis": {"synthesis": {"count": 4000, "resolution": 0.3, "template": {"length": 200}},
                     "mc_trials": 2000},
    "homodyne": {"samples_per_block": 100_000, "blocks": 4},
}


def example_config(kind: str, small: bool = False) -> dict:
    """A shipped config for `kind`; `small` shrinks sample counts for quick checks."""
    cfg = copy.deepcopy(EXAMPLES[kind])
    if small and kind in _SMALL:
        cfg.update(copy.deepcopy(_SMALL[kind]))
        cfg["name"] = f"{cfg['name']}_small"
    return cfg
