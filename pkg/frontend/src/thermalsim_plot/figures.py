"""One figure builder per figure id.

Each builder reads what it needs from the input root (searching
recursively, so both a single experiment directory and a root holding many
experiment subdirectories work) and returns a matplotlib Figure.
``render_figure`` wraps a builder and writes ``fig<ID>.png`` with fixed
metadata so identical inputs produce byte-identical files.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np  # noqa: E402

from .io import (  # noqa: E402
    SchemaError,
    coupling_from_name,
    find_csv,
    find_csv_group,
    load_table,
    trajectory_columns,
)


def fit_loglog(x, y) -> float:
    """Least-squares slope of log(y) against log(x)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2:
        raise SchemaError("need at least two points for a log-log slope")
    if np.any(x <= 0) or np.any(y <= 0):
        raise SchemaError("log-log slope needs strictly positive data")
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def _guide(ax, x, y_anchor, power, label):
    """Power-law guide line through (x[0], y_anchor)."""
    x = np.asarray(x, dtype=float)
    ax.plot(x, y_anchor * (x / x[0]) ** power, color="0.6", ls=":", lw=1.0,
            label=label)


def _fig_gap(in_root):
    table = load_table(
        find_csv(in_root, "gap_vs_J.csv"),
        ("J", "gap_K", "gap_K0", "gap_expLLS", "gap_expLDB"),
    )
    fig, ax = plt.subplots(figsize=(4.6, 3.6), layout="constrained")
    series = [
        ("gap_K", "o-", "averaged channel"),
        ("gap_K0", "s-", "zero-shift channel"),
        ("gap_expLLS", "^--", "coherent-only semigroup"),
        ("gap_expLDB", "v--", "detailed-balance semigroup"),
    ]
    for column, style, label in series:
        ax.loglog(table["J"], table[column], style, ms=4, label=label)
    _guide(ax, table["J"], 0.5 * table["gap_K"][0], 2.0, "slope-2 guide")
    slope = fit_loglog(table["J"], table["gap_K"])
    ax.text(0.04, 0.96, f"fitted slope {slope:.2f}", transform=ax.transAxes,
            va="top", fontsize=9)
    ax.set_xlabel("coupling J")
    ax.set_ylabel("spectral gap")
    ax.legend(fontsize=7, loc="lower right")
    return fig


def _fig_fixpoint(in_root):
    table = load_table(
        find_csv(in_root, "fixpoint_vs_J.csv"), ("J", "dist_K", "dist_K0")
    )
    fig, ax = plt.subplots(figsize=(4.6, 3.6), layout="constrained")
    ax.loglog(table["J"], table["dist_K"], "o-", ms=4, label="averaged channel")
    ax.loglog(table["J"], table["dist_K0"], "s-", ms=4, label="zero-shift channel")
    _guide(ax, table["J"], 0.5 * table["dist_K"][0], 2.0, "slope-2 guide")
    slope = fit_loglog(table["J"], table["dist_K"])
    ax.text(0.04, 0.96, f"fitted slope {slope:.2f}", transform=ax.transAxes,
            va="top", fontsize=9)
    ax.set_xlabel("coupling J")
    ax.set_ylabel("trace distance to thermal state")
    ax.legend(fontsize=8, loc="lower right")
    return fig


def _fig_resonance_comb(in_root):
    table = load_table(
        find_csv(in_root, "offdiag_vs_T.csv"), ("T", "abs_rho12_K0", "abs_rho12_K")
    )
    fig, ax = plt.subplots(figsize=(5.6, 3.6), layout="constrained")
    ax.semilogy(table["T"], table["abs_rho12_K0"], "o-", ms=3, lw=1.0,
                label="zero-shift channel")
    ax.semilogy(table["T"], table["abs_rho12_K"], "s-", ms=3, lw=1.0,
                label="averaged channel")
    ax.set_xlabel("mean collision time T")
    ax.set_ylabel("top-pair coherence of the fixed point")
    ax.legend(fontsize=8)
    return fig


_BETA_LABELS = ("rho11", "rho12", "rho33")


def _fig_resonance_beta(in_root):
    required = ["beta"]
    for label in _BETA_LABELS:
        required += [f"abs_{label}_{tag}" for tag in ("K0", "pred", "K", "thermal")]
    table = load_table(
        find_csv(in_root, "resonance_vs_beta.csv"), tuple(required)
    )
    fig, axes = plt.subplots(1, 3, figsize=(10.5, 3.4), layout="constrained")
    beta = table["beta"]
    for ax, label in zip(axes, _BETA_LABELS):
        ax.plot(beta, table[f"abs_{label}_K0"], "o", ms=5, label="zero-shift fixed point")
        ax.plot(beta, table[f"abs_{label}_pred"], "-", lw=1.5, label="perturbative prediction")
        ax.plot(beta, table[f"abs_{label}_K"], "^", ms=4, label="averaged fixed point")
        ax.plot(beta, table[f"abs_{label}_thermal"], "--", color="0.5", lw=1.2,
                label="thermal state")
        ax.set_xlabel("inverse temperature beta")
        ax.set_title(f"|{label}|", fontsize=10)
    axes[0].set_ylabel("matrix element magnitude")
    axes[0].legend(fontsize=7)
    return fig


def _fig_resonant_dist(in_root):
    table = load_table(
        find_csv(in_root, "trace_dist_resonance.csv"), ("J", "dist_K0", "dist_K")
    )
    fig, ax = plt.subplots(figsize=(4.6, 3.6), layout="constrained")
    ax.loglog(table["J"], table["dist_K0"], "s-", ms=5, label="zero-shift channel")
    ax.loglog(table["J"], table["dist_K"], "o-", ms=5, label="averaged channel")
    ax.set_xlabel("coupling J")
    ax.set_ylabel("trace distance to thermal state")
    ax.set_title("errors at a resonant collision time", fontsize=10)
    ax.legend(fontsize=8)
    return fig


_FAN_COLUMNS = ("step", "kpower", "mean", "std", "stderr")


def _fan_figure(paths, ylabel):
    fig, axes = plt.subplots(
        1, len(paths), figsize=(4.8 * len(paths), 3.4), layout="constrained",
        squeeze=False,
    )
    for k, (ax, path) in enumerate(zip(axes[0], paths)):
        table = load_table(path, _FAN_COLUMNS)
        steps = table["step"]
        for name in trajectory_columns(table):
            ax.plot(steps, table[name], color="tab:blue", alpha=0.12, lw=0.6)
        ax.plot(steps, table["mean"], color="tab:blue", lw=1.8,
                label="ensemble mean")
        ax.fill_between(steps, table["mean"] - table["std"],
                        table["mean"] + table["std"],
                        color="tab:blue", alpha=0.2, lw=0,
                        label="+- one std")
        if np.any(table["kpower"] != 0.0):
            ax.plot(steps, table["kpower"], "k--", lw=1.1,
                    label="averaged-channel reference")
        ax.set_xlabel("collision number")
        ax.set_title(f"J = {coupling_from_name(path.name):g}", fontsize=10)
        if k == 0:
            ax.set_ylabel(ylabel)
            ax.legend(fontsize=7)
    return fig


def _fig_traj_energy(in_root):
    return _fan_figure(find_csv_group(in_root, "traj_J*_H.csv"), "<H>")


def _fig_traj_correlator(in_root):
    return _fan_figure(find_csv_group(in_root, "traj_J*_ZZ.csv"), "<Z1 Z2>")


def _fig_traj6_correlator(in_root):
    return _fan_figure(find_csv_group(in_root, "traj6_J*_ZZ.csv"),
                       "<Z1 Z2> (6 sites)")


def _fig_rb_energy(in_root):
    return _fan_figure(find_csv_group(in_root, "rb_J*_H.csv"),
                       "<H> (randomized bath)")


def _fig_rb_correlator(in_root):
    return _fan_figure(find_csv_group(in_root, "rb_J*_ZZ.csv"),
                       "<Z1 Z2> (randomized bath)")


ALL_FIGURES = {
    "2a": (_fig_gap, "spectral gap vs J (log-log, slope-2 guide)"),
    "2b": (_fig_fixpoint, "fixed-point error vs J (log-log)"),
    "3a": (_fig_resonance_comb, "resonance comb of fixed-point coherences over T"),
    "3b": (_fig_resonance_beta, "resonant elements vs beta with prediction"),
    "4a": (_fig_traj_energy, "energy trajectory fans"),
    "4b": (_fig_traj_correlator, "correlator trajectory fans"),
    "5": (_fig_resonant_dist, "resonant-time errors vs J"),
    "6": (_fig_traj6_correlator, "6-site correlator fans"),
    "7a": (_fig_rb_energy, "randomized-bath energy fans"),
    "7b": (_fig_rb_correlator, "randomized-bath correlator fans"),
}


def render_figure(fig_id: str, in_root, out_root, dpi: int = 150) -> Path:
    """Render one figure id to ``out_root/fig<ID>.png`` and return the path."""
    if fig_id not in ALL_FIGURES:
        raise SchemaError(
            f"unknown figure id {fig_id!r}; known ids: "
            + ", ".join(sorted(ALL_FIGURES))
        )
    builder, _ = ALL_FIGURES[fig_id]
    figure = builder(in_root)
    out_root = Path(out_root)
    out_root.mkdir(parents=True, exist_ok=True)
    target = out_root / f"fig{fig_id}.png"
    try:
        figure.savefig(target, dpi=dpi,
                       metadata={"Software": "thermalsim-plot"})
    finally:
        plt.close(figure)
    return target
