"""Figure rendering for solved equilibria and schedule sweeps.

Distribution figures show the arrival cdf with the opening-time atom
annotated (or the density, the view of choice for early-arrival runs,
where the interesting feature is the discontinuity at the opening).
Sweep figures scatter cost components against the spacing parameter with
one marker class per schedule pattern.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .io import EquilibriumDoc, InputError, SweepDoc, load_equilibrium, load_sweep

PATTERN_STYLE = {
    "front": dict(color="tab:blue", marker="*", label="front pattern (0, d, 2d)"),
    "back": dict(color="tab:red", marker="*", label="back pattern (T-2d, T-d, T)"),
    "coincident": dict(color="black", marker="*", label="coincident (0, T/2, T)"),
}

KINDS = ("cdf", "pdf", "sweep-components", "sweep-objectives")


@dataclass(frozen=True)
class FigureSpec:
    input_path: str
    kind: str  # one of KINDS
    output_path: str
    title: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise InputError(f"unknown figure kind {self.kind!r}")


def _mark_appointments(ax, doc: EquilibriumDoc) -> None:
    for a in doc.schedule:
        ax.axvline(a, color="grey", linestyle=":", linewidth=0.8, zorder=0)


def _split_runs(times: np.ndarray, values: np.ndarray, cut: float):
    """Split a curve at a point so a jump stays visually disconnected."""
    left = times < cut - 1e-12
    return (times[left], values[left]), (times[~left], values[~left])


def plot_equilibrium(spec: FigureSpec) -> str:
    """Render a solved arrival distribution (cdf or density view)."""
    if spec.kind not in ("cdf", "pdf"):
        raise InputError(f"plot_equilibrium cannot render kind {spec.kind!r}")
    doc = load_equilibrium(spec.input_path)
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    _mark_appointments(ax, doc)
    if spec.kind == "cdf":
        if doc.p_e > 0:
            pre = doc.times < 0
            ax.plot([doc.times[0] if pre.any() else -0.25, 0.0], [0.0, 0.0],
                    color="tab:blue")
            ax.plot([0.0, 0.0], [0.0, doc.p_e], color="tab:blue",
                    linestyle="--", linewidth=1.0)
            ax.annotate(
                f"atom p_e = {doc.p_e:.3f}",
                xy=(0.0, doc.p_e),
                xytext=(0.06 * doc.horizon, min(doc.p_e + 0.08, 0.96)),
                arrowprops=dict(arrowstyle="->", color="black", linewidth=0.8),
            )
        ax.plot(doc.times, doc.cdf, color="tab:blue")
        ax.set_ylabel("arrival cdf F(t)")
        ax.set_ylim(0.0, 1.05)
    else:
        (tl, fl), (tr, fr) = _split_runs(doc.times, doc.density, 0.0)
        if len(tl):
            ax.plot(tl, fl, color="tab:blue")
        ax.plot(tr, fr, color="tab:blue")
        if doc.p_e > 0:
            ax.annotate(
                f"atom p_e = {doc.p_e:.3f} at 0",
                xy=(0.0, 0.0),
                xytext=(0.05 * doc.horizon, 0.8 * max(doc.density.max(), 1e-9)),
                arrowprops=dict(arrowstyle="->", color="black", linewidth=0.8),
            )
        ax.set_ylabel("arrival density f(t)")
    ax.set_xlabel("time")
    sched_text = ",".join(format(t, "g") for t in doc.schedule)
    ax.set_title(
        spec.title
        or f"schedule ({sched_text}), lambda={doc.lam:g}"
        + (", early arrivals" if doc.early else "")
    )
    if doc.early or doc.times[0] < 0:
        ax.axvline(0.0, color="grey", linewidth=0.8, zorder=0)
    fig.tight_layout()
    fig.savefig(spec.output_path)
    plt.close(fig)
    return spec.output_path


def _scatter_by_pattern(ax, doc: SweepDoc, column: str) -> None:
    values = doc.columns[column]
    patterns = [doc.pattern_of(s) for s in doc.schedules]
    present = []
    for name, style in PATTERN_STYLE.items():
        mask = np.array([p == name for p in patterns])
        if mask.any():
            present.append(name)
            ax.scatter(doc.deltas[mask], values[mask], s=36, **style)
    if len([p for p in present if p != "coincident"]) < 2:
        warnings.warn(
            "sweep covers a single schedule pattern; rendering one marker class",
            stacklevel=3,
        )


LABELS = {
    "phi_s": "scheduled waiting total",
    "e_w": "walk-in equilibrium wait",
    "e_i": "server idle time",
}


def plot_sweep(spec: FigureSpec) -> str:
    """Render sweep scatter panels: cost components or weighted objectives."""
    if spec.kind not in ("sweep-components", "sweep-objectives"):
        raise InputError(f"plot_sweep cannot render kind {spec.kind!r}")
    doc = load_sweep(spec.input_path)
    if spec.kind == "sweep-components":
        panels = ["phi_s", "e_w", "e_i"]
    else:
        panels = doc.phi_columns
        if not panels:
            raise InputError(f"{spec.input_path} has no objective columns")
    fig, axes = plt.subplots(
        1, len(panels), figsize=(4.2 * len(panels), 3.6), squeeze=False
    )
    with warnings.catch_warnings():
        # one warning per figure is enough
        warnings.simplefilter("once")
        for ax, column in zip(axes[0], panels):
            _scatter_by_pattern(ax, doc, column)
            ax.set_xlabel("spacing d")
            ax.set_ylabel(LABELS.get(column, column.replace("phi_g", "objective, g=0.")))
    handles, labels = axes[0][0].get_legend_handles_labels()
    fig.legend(handles, labels, loc="upper center", ncol=3, frameon=False)
    if spec.title:
        fig.suptitle(spec.title, y=0.86)
    fig.tight_layout(rect=(0, 0, 1, 0.88))
    fig.savefig(spec.output_path)
    plt.close(fig)
    return spec.output_path


def render(spec: FigureSpec) -> str:
    if spec.kind in ("cdf", "pdf"):
        return plot_equilibrium(spec)
    return plot_sweep(spec)
