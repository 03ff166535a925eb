"""Matplotlib rendering of report figures, written next to the delimited
output.  Figures are derived from report rows only, with fixed metadata, so
reruns of the same config and seed produce identical files."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_META = {"Software": "sepwalk"}


def _save(fig, path: Path) -> None:
    fig.savefig(path, dpi=110, metadata=_META, bbox_inches="tight")
    plt.close(fig)


def render_report(report, outdir: str | Path) -> list[Path]:
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    made: list[Path] = []
    if report.kind == "lln":
        made.append(_lln_figure(report, out))
    elif report.kind == "entropy":
        made.append(_entropy_figure(report, out))
    elif report.kind == "is":
        made.append(_is_figure(report, out))
    elif report.kind == "diagnostics":
        made.extend(_diagnostics_figures(report, out))
    return [p for p in made if p is not None]


def _lln_figure(report, out: Path):
    rows = report.rows
    if not rows:
        return None
    ns = [r["n"] for r in rows]
    fig, ax = plt.subplots(figsize=(5.2, 3.6))
    for key, label in (("l1_pi", "density L1"),
                       ("sup_x", "walker sup"),
                       ("l1_pihat", "moving-frame L1")):
        ax.errorbar(ns, [r[f"{key}_mean"] for r in rows],
                    yerr=[r[f"{key}_stderr"] for r in rows],
                    marker="o", label=label)
    ax.set_xscale("log", base=2)
    ax.set_yscale("log")
    ax.set_xlabel("lattice size n")
    ax.set_ylabel("mean error")
    ax.legend(fontsize=8)
    ax.set_title("convergence to the deterministic limit")
    path = out / "lln_errors.png"
    _save(fig, path)
    return path


def _entropy_figure(report, out: Path):
    rows = report.rows
    if not rows:
        return None
    ns = [r["n"] for r in rows]
    fig, axes = plt.subplots(1, 2, figsize=(8.2, 3.4))
    axes[0].errorbar(ns, [r["entropy_rate_mean"] for r in rows],
                     yerr=[r["entropy_rate_stderr"] for r in rows],
                     marker="o", label="estimate")
    axes[0].axhline(rows[0]["limit"], color="k", ls="--", label="limit")
    axes[0].set_xscale("log", base=2)
    axes[0].set_xlabel("n")
    axes[0].set_ylabel("entropy rate")
    axes[0].legend(fontsize=8)
    axes[1].plot(ns, [r["gap"] for r in rows], marker="s")
    axes[1].set_xscale("log", base=2)
    axes[1].set_yscale("log")
    axes[1].set_xlabel("n")
    axes[1].set_ylabel("|estimate - limit|")
    fig.suptitle("relative entropy vs rate-function limit")
    path = out / "entropy_gap.png"
    _save(fig, path)
    return path


def _is_figure(report, out: Path):
    rows = report.rows
    if not rows:
        return None
    fig, ax = plt.subplots(figsize=(5.2, 3.6))
    ns = [r["n"] for r in rows]
    ax.errorbar(ns, [r["p_is"] for r in rows],
                yerr=[r["p_is_stderr"] for r in rows], marker="o",
                label="importance sampling")
    naive = [(r["n"], r["p_naive"], r["p_naive_stderr"])
             for r in rows if "p_naive" in r]
    if naive:
        ax.errorbar([v[0] for v in naive], [v[1] for v in naive],
                    yerr=[v[2] for v in naive], marker="s", ls="none",
                    label="naive")
    ax.set_xscale("log", base=2)
    ax.set_yscale("log")
    ax.set_xlabel("n")
    ax.set_ylabel("tube probability")
    ax.legend(fontsize=8)
    ax.set_title("rare-event estimates")
    path = out / "is_estimates.png"
    _save(fig, path)
    return path


def _diagnostics_figures(report, out: Path) -> list:
    made = []
    repl = [r for r in report.rows if r.get("table") == "replacement"]
    if repl:
        fig, ax = plt.subplots(figsize=(5.2, 3.6))
        for n in sorted({r["n"] for r in repl}):
            sub = [r for r in repl if r["n"] == n]
            ax.errorbar([r["eps"] for r in sub],
                        [r["abs_mean"] for r in sub],
                        yerr=[r["abs_stderr"] for r in sub], marker="o",
                        label=f"n={n}")
        ax.set_xlabel("block width")
        ax.set_ylabel("mean |replacement error|")
        ax.set_yscale("log")
        ax.legend(fontsize=8)
        path = out / "replacement_error.png"
        _save(fig, path)
        made.append(path)
    ens = [r for r in report.rows if r.get("table") == "ensembles"]
    if ens:
        fig, ax = plt.subplots(figsize=(5.2, 3.6))
        ells = [r["ell"] for r in ens]
        ax.plot(ells, [r["sup_gap"] for r in ens], marker="o",
                label="sup gap")
        ax.plot(ells, [r["bound"] for r in ens], ls="--",
                label="1/(ell-1)")
        ax.set_xlabel("box size")
        ax.set_yscale("log")
        ax.legend(fontsize=8)
        ax.set_title("equivalence of ensembles")
        path = out / "ensembles.png"
        _save(fig, path)
        made.append(path)
    return made


def render_pathfield(pf, out: Path, stem: str) -> list[Path]:
    """Heatmap of the density path plus the walker trace."""
    out.mkdir(parents=True, exist_ok=True)
    made = []
    fig, ax = plt.subplots(figsize=(5.6, 3.6))
    im = ax.imshow(pf.values.T, origin="lower", aspect="auto",
                   extent=(pf.times[0], pf.times[-1], 0.0, 1.0),
                   vmin=0.0, vmax=1.0, cmap="viridis")
    fig.colorbar(im, ax=ax, label="density")
    if pf.walker is not None:
        ax.plot(pf.times, np.mod(pf.walker, 1.0), "w.", ms=2,
                label="walker")
    ax.set_xlabel("t")
    ax.set_ylabel("x")
    path = out / f"{stem}.png"
    _save(fig, path)
    made.append(path)
    return made
