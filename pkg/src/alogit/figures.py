"""Matplotlib rendering of run traces and replication summaries.

Figures are written next to the delimited report output.  The Agg
backend keeps everything headless.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .bench import ReplicationSummary
from .learner import RunReport

FIG_DPI = 120


def _save(fig, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=FIG_DPI, bbox_inches="tight")
    plt.close(fig)
    return path


def render_run_figures(report: RunReport, outdir) -> list[Path]:
    """Stopping-rule trace for a single run: nu_n against the threshold."""
    outdir = Path(outdir)
    written = []

    ns = [row.n for row in report.trace]
    nus = [row.nu if row.nu is not None else np.nan for row in report.trace]
    thresholds = [
        row.threshold if row.threshold is not None else np.nan for row in report.trace
    ]
    p0s = [row.p0_hat for row in report.trace]

    fig, (ax1, ax2) = plt.subplots(
        2, 1, figsize=(7, 5), sharex=True, height_ratios=[3, 1]
    )
    ax1.plot(ns, nus, label=r"$\nu_n$", lw=1.2)
    ax1.plot(ns, thresholds, label=r"$\rho(n)\,d^2/a_n^2$", lw=1.2, ls="--")
    ax1.set_yscale("log")
    ax1.set_ylabel("eigenvalue scale")
    ax1.legend(loc="best")
    ax1.set_title(f"stopping trace (N={report.N}, {report.stopped_by})")
    ax2.step(ns, p0s, where="post", lw=1.0)
    ax2.set_ylabel(r"$\hat{p}_0$")
    ax2.set_xlabel("labeled subjects n")
    written.append(_save(fig, outdir / "trace.png"))
    return written


def render_summary_figures(summary: ReplicationSummary, outdir) -> list[Path]:
    """Histograms and coefficient boxplots over the replication rows."""
    outdir = Path(outdir)
    written = []
    good = [r for r in summary.rows if "error" not in r]
    if not good:
        return written

    ns = [r["N"] for r in good]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.hist(ns, bins=min(30, max(5, len(ns) // 5)), color="#4878a8", edgecolor="white")
    ax.set_xlabel("stopping time N")
    ax.set_ylabel("runs")
    ax.set_title(f"stopping times over {len(ns)} runs")
    written.append(_save(fig, outdir / "stopping_times.png"))

    betas = np.array([r["beta_hat"] for r in good])
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.boxplot(
        [betas[:, j] for j in range(betas.shape[1])],
        tick_labels=[f"b{j + 1}" for j in range(betas.shape[1])],
    )
    ax.axhline(0.0, color="gray", lw=0.8, ls=":")
    ax.set_ylabel("coefficient estimate")
    ax.set_title("shrunk coefficient estimates")
    written.append(_save(fig, outdir / "coefficients.png"))

    kappas = [r["kappa"] for r in good if r.get("kappa") is not None]
    if kappas:
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.hist(
            kappas,
            bins=min(30, max(5, len(kappas) // 5)),
            color="#76a864",
            edgecolor="white",
        )
        ax.axvline(1.0, color="black", lw=1.0, ls="--")
        ax.set_xlabel(r"$\kappa = d^2 N / (a^2 \nu_N)$")
        ax.set_ylabel("runs")
        ax.set_title("stopping efficiency diagnostic")
        written.append(_save(fig, outdir / "kappa.png"))
    return written
