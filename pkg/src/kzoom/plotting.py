"""Figure rendering for the analysis reports.

Every function takes a result object and a path, writes one PNG, and
returns the path. Rendering always goes through the Agg backend so the
report path works headless.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .analysis import (
    BifurcationGrid,
    CipherDistResult,
    HistogramResult,
    KacReport,
    ReturnMapData,
)
from .chaos import invariant_density


def plot_histogram(result: HistogramResult, path) -> str:
    fig, ax = plt.subplots(figsize=(7.0, 4.2), dpi=120)
    centers = 0.5 * (result.edges[:-1] + result.edges[1:])
    ax.step(centers, result.mean, where="mid", lw=0.9,
            label=f"mean count, k={result.k}")
    ax.fill_between(centers, result.mean - result.std, result.mean + result.std,
                    step="mid", alpha=0.25, lw=0, label="+/- 1 sd over seeds")
    width = result.edges[1] - result.edges[0]
    n = result.samples_per_seed
    if result.k == 0:
        inner = np.clip(centers, 1e-9, 1 - 1e-9)
        ax.plot(centers, n * width * invariant_density(inner), "r--", lw=1.0,
                label="arcsine prediction")
    else:
        ax.axhline(n * width, color="r", ls="--", lw=1.0, label="uniform prediction")
    ax.set_xlabel("value")
    ax.set_ylabel(f"count per bin ({n} samples/seed)")
    ax.set_title(f"zoomed-orbit histogram, mu={result.mu}, k={result.k}")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return str(path)


def plot_bifurcation(grid: BifurcationGrid, path) -> str:
    fig, ax = plt.subplots(figsize=(7.0, 4.6), dpi=120)
    img = np.log1p(grid.counts.astype(np.float64))
    ax.imshow(
        img, origin="lower", aspect="auto", cmap="gray_r",
        extent=(grid.mu_values[0], grid.mu_values[-1], 0.0, 1.0),
        interpolation="nearest",
    )
    ax.set_xlabel("mu")
    ax.set_ylabel("value" if grid.k == 0 else f"zoomed value (k={grid.k})")
    ax.set_title(f"occupation over the mu sweep, k={grid.k}")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return str(path)


def plot_return_map(data: ReturnMapData, path) -> str:
    fig, ax = plt.subplots(figsize=(5.2, 5.2), dpi=120)
    pairs = data.pairs()
    ax.plot(pairs[:, 0], pairs[:, 1], ",", color="k", alpha=0.6)
    ax.set_xlabel("y(t)")
    ax.set_ylabel("y(t+1)")
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1)
    ax.set_title(f"first return map, mu={data.mu}, k={data.k}")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return str(path)


def plot_cipher_distribution(results: list[CipherDistResult], path) -> str:
    fig, ax = plt.subplots(figsize=(7.0, 4.4), dpi=120)
    for res in results:
        centers = np.sqrt(res.bin_edges[:-1] * res.bin_edges[1:])
        total = max(int(res.bin_counts.sum()), 1)
        ax.step(centers, res.bin_counts / total, where="mid", lw=1.0,
                label=f"{res.label} (excl {res.excluded})")
    if results:
        ax.axvline(results[0].N0, color="gray", ls=":", lw=0.8, label="N0 floor")
    ax.set_xscale("log")
    ax.set_xlabel("iteration count per unit")
    ax.set_ylabel("fraction of units")
    ax.set_title("ciphertext count distribution by trajectory source")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return str(path)


def plot_kac(report: KacReport, path) -> str:
    fig, ax = plt.subplots(figsize=(4.6, 4.0), dpi=120)
    bars = ["predicted", "empirical"]
    vals = [report.predicted_mean_return, report.empirical_mean_return]
    ax.bar(bars, vals, color=["#4878d0", "#ee854a"], width=0.6)
    for i, v in enumerate(vals):
        ax.text(i, v, f"{v:.1f}", ha="center", va="bottom", fontsize=9)
    ax.set_ylabel("mean return time (iterations)")
    ax.set_title(
        f"site {report.site} return time, {report.basis} prediction\n"
        f"relative error {report.relative_error:.3%} over {report.n_returns} returns"
    )
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return str(path)


def plot_battery(report, path) -> str:
    fig, ax = plt.subplots(figsize=(5.4, 4.0), dpi=120)
    names = [r.name for r in report.results]
    pvals = [max(r.p_value, 1e-12) for r in report.results]
    colors = ["#2e7d32" if r.passed else "#c62828" for r in report.results]
    ax.bar(names, pvals, color=colors, width=0.6)
    ax.axhline(report.alpha, color="k", ls="--", lw=0.9,
               label=f"alpha = {report.alpha}")
    ax.set_yscale("log")
    ax.set_ylim(1e-12, 1.5)
    ax.set_ylabel("p-value")
    ax.set_title(f"bit-level battery, {report.label} ({report.n_words} words)")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return str(path)


def export_pgm(grid: BifurcationGrid, path) -> str:
    """Binary PGM of the occupation grid, counts scaled linearly to 0..255.

    Rows run from high values at the top, matching the rendered figure.
    """
    counts = grid.counts.astype(np.float64)
    peak = counts.max()
    img = np.zeros_like(counts, dtype=np.uint8)
    if peak > 0:
        img = np.round(255.0 * counts / peak).astype(np.uint8)
    img = img[::-1, :]
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(img.tobytes())
    return str(path)
