"""Figures written next to the CSV/JSON outputs of an experiment.

Figures are built with the object-oriented Agg API (no pyplot state) and
saved without the software/date metadata, so identical data give
byte-identical PNG files.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

_PNG_METADATA = {"Software": None}
_LINESTYLES = (":", "-.", "--", "-")


def _figure(width: float = 6.0, height: float = 4.0):
    fig = Figure(figsize=(width, height), dpi=100)
    FigureCanvasAgg(fig)
    return fig, fig.add_subplot(1, 1, 1)


def save(fig: Figure, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, format="png", metadata=_PNG_METADATA)
    return path


def click_count_plot(counts: np.ndarray, path, deconvolved: np.ndarray | None = None,
                     title: str = "") -> Path:
    """Bar chart of the click-count distribution, optionally with recovered photon statistics."""
    fig, ax = _figure()
    k = np.arange(counts.size)
    total = counts.sum()
    ax.bar(k, counts / total if total else counts, width=0.6, label="clicks", color="tab:blue")
    if deconvolved is not None:
        n = np.arange(deconvolved.size)
        ax.plot(n, deconvolved, "o-", color="tab:red", ms=3, label="recovered photons")
    ax.set_xlabel("number of clicks / photons")
    ax.set_ylabel("probability")
    ax.set_yscale("log")
    ax.legend()
    ax.set_title(title)
    return save(fig, path)


def area_histogram_plot(centers, widths, counts, model, path, title: str = "") -> Path:
    fig, ax = _figure()
    ax.bar(centers, counts, width=widths, color="0.75", label="pulse areas")
    fine = np.linspace(centers[0] - widths[0], centers[-1] + widths[-1], 2000)
    ax.plot(fine, model(fine), color="tab:red", lw=1.2, label="Gaussian-comb fit")
    ax.set_xlabel("pulse area (arb. units)")
    ax.set_ylabel("counts")
    ax.legend()
    ax.set_title(title)
    return save(fig, path)


def statistics_plot(probs, errors, path, reference=None, title: str = "") -> Path:
    fig, ax = _figure()
    n = np.arange(len(probs))
    ax.bar(n, probs, yerr=errors, width=0.6, color="tab:blue", capsize=3, label="extracted")
    if reference is not None:
        ax.plot(n, reference[: n.size], "o", color="tab:red", label="source")
    ax.set_xlabel("photon number n")
    ax.set_ylabel("probability")
    ax.legend()
    ax.set_title(title)
    return save(fig, path)


def moments_plot(series: dict, path, title: str = "") -> Path:
    """series maps label -> (orders, values, sigmas or None, expected or None)."""
    fig, ax = _figure()
    for label, (m, g, s, ref) in series.items():
        ax.errorbar(m, g, yerr=s, fmt="o", capsize=3, label=label)
        if ref is not None:
            ax.plot(m, ref, "_", ms=14, color="k")
    ax.set_yscale("log")
    ax.set_xlabel("order m")
    ax.set_ylabel("g(m)")
    ax.legend()
    ax.set_title(title)
    return save(fig, path)


def g2h_plot(curves: Sequence[tuple[str, str, float, np.ndarray]], path, title: str = "") -> Path:
    """curves are (regime, detector, efficiency, rows of (CAR, g2h)); one panel per regime."""
    regimes = list(dict.fromkeys(c[0] for c in curves))
    etas = sorted({c[2] for c in curves}, reverse=True)
    fig = Figure(figsize=(5.0 * len(regimes), 4.0), dpi=100)
    FigureCanvasAgg(fig)
    for i, regime in enumerate(regimes):
        ax = fig.add_subplot(1, len(regimes), i + 1)
        for reg, det, eta, data in curves:
            if reg != regime:
                continue
            y = np.where(data[:, 1] > 0, data[:, 1], np.nan)
            label = f"{det} eta={eta:g}" + (" (g2h = 0)" if np.all(np.isnan(y)) else "")
            ax.plot(data[:, 0], y, "-" if det == "click" else "--",
                    color=f"C{etas.index(eta)}", label=label)
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_xlabel("CAR")
        ax.set_ylabel("heralded g2")
        ax.set_title(f"{regime} {title}".strip())
        ax.legend(fontsize=7)
    return save(fig, path)


def phasespace_plot(radius, curves: dict, oracle, path, ylabel: str = "W", title: str = "") -> Path:
    """curves maps m_max -> values along the radial cut; non-converged points are dropped."""
    fig, ax = _figure()
    ax.plot(radius, oracle, color="0.6", lw=3, label="exact")
    for i, (m, (vals, ok)) in enumerate(sorted(curves.items())):
        shown = np.where(ok, vals, np.nan)
        ax.plot(radius, vals, _LINESTYLES[i % len(_LINESTYLES)], color="tab:blue", lw=0.6, alpha=0.4)
        ax.plot(radius, shown, _LINESTYLES[i % len(_LINESTYLES)], color="tab:blue", label=f"m_max={m}")
    finite = np.asarray(oracle)
    span = finite.max() - finite.min()
    ax.set_ylim(finite.min() - 0.3 * span, finite.max() + 0.3 * span)
    ax.set_xlabel("|alpha|")
    ax.set_ylabel(ylabel)
    ax.legend()
    ax.set_title(title)
    return save(fig, path)
