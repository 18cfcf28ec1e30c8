"""The five figure kinds, rendered deterministically from CSV artifacts."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "brfplots"

import matplotlib.pyplot as plt
import numpy as np

from .io import (
    SchemaError,
    check_metrics_schema,
    load_sidecar,
    read_columns,
    require_columns,
)

FIGURE_KINDS = ("trace", "phase", "learning-curve", "ablation", "landscape")

# metadata stripped of anything time-dependent so identical inputs give
# byte-identical images
_SAVE_KWARGS = {"metadata": {"Date": None}}


@dataclass
class FigureSpec:
    """One render request: what to draw, from which artifacts, to where."""

    kind: str
    inputs: list
    output: str
    labels: list = field(default_factory=list)
    metric: str = "test_acc"
    title: str = ""
    dpi: int = 150

    def __post_init__(self):
        if self.kind not in FIGURE_KINDS:
            raise ValueError(f"unknown figure kind {self.kind!r}; "
                             f"expected one of {FIGURE_KINDS}")
        if not self.inputs:
            raise ValueError("at least one input artifact is required")

    def label_for(self, i: int) -> str:
        if i < len(self.labels):
            return self.labels[i]
        return Path(self.inputs[i]).stem


def marker_epoch(epochs: np.ndarray, values: np.ndarray) -> int:
    """First epoch reaching 95% of the final value.

    A flat curve markers at the first epoch; the final epoch always
    qualifies, so the result is well defined.
    """
    threshold = 0.95 * values[-1]
    idx = int(np.argmax(values >= threshold))
    return int(epochs[idx])


def _save(fig, spec: FigureSpec) -> Path:
    out = Path(spec.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, dpi=spec.dpi, **_SAVE_KWARGS)
    plt.close(fig)
    return out


def render_trace(spec: FigureSpec) -> Path:
    """Membrane traces of one or more simulated neurons (divergence vs
    convergence panels, one per input CSV)."""
    n = len(spec.inputs)
    fig, axes = plt.subplots(n, 1, figsize=(7, 2.6 * n), squeeze=False,
                             sharex=True)
    for i, path in enumerate(spec.inputs):
        meta = load_sidecar(path, "trace")
        cols = read_columns(path)
        require_columns(cols, ["t", "x", "u_re", "u_im", "u_abs", "theta",
                               "z"], path)
        ax = axes[i, 0]
        ax.plot(cols["t"], cols["u_re"], lw=0.8, label="Re(u)")
        ax.plot(cols["t"], cols["u_abs"], lw=1.2, label="|u|")
        ax.plot(cols["t"], -cols["u_abs"], lw=1.2, color="C1")
        finite_theta = np.isfinite(cols["theta"])
        if finite_theta.any():
            ax.plot(cols["t"][finite_theta], cols["theta"][finite_theta],
                    ls="--", lw=0.8, color="gray", label="threshold")
        spikes = cols["t"][cols["z"] > 0.5]
        if len(spikes):
            ax.plot(spikes, np.full(len(spikes), cols["u_abs"].max() * 1.05),
                    ls="", marker="|", color="k", label="spikes")
        ax.set_ylabel("membrane")
        sub = (f"omega={meta.get('omega')}, b_offset={meta.get('b_offset')}"
               if "omega" in meta else "")
        ax.set_title(spec.label_for(i) + (f"  ({sub})" if sub else ""),
                     fontsize=9)
        ax.legend(loc="upper left", fontsize=7)
    axes[-1, 0].set_xlabel("timestep")
    if spec.title:
        fig.suptitle(spec.title)
    fig.tight_layout()
    return _save(fig, spec)


def render_phase(spec: FigureSpec) -> Path:
    """Spectral-radius map over the (omega, b) plane with the analytic
    divergence boundary overlaid."""
    path = spec.inputs[0]
    meta = load_sidecar(path, "phase")
    cols = read_columns(path)
    require_columns(cols, ["omega", "b", "radius", "divergent", "p_boundary"],
                    path)
    omegas = np.unique(cols["omega"])
    bs = np.unique(cols["b"])
    radius = np.full((len(omegas), len(bs)), np.nan)
    oi = np.searchsorted(omegas, cols["omega"])
    bi = np.searchsorted(bs, cols["b"])
    radius[oi, bi] = cols["radius"]
    boundary = np.full(len(omegas), np.nan)
    boundary[oi] = cols["p_boundary"]

    fig, ax = plt.subplots(figsize=(6.4, 4.8))
    mesh = ax.pcolormesh(omegas, bs, radius.T, shading="nearest",
                         cmap="RdBu_r", vmin=2.0 - radius[np.isfinite(radius)].max(),
                         vmax=radius[np.isfinite(radius)].max())
    fig.colorbar(mesh, ax=ax, label="spectral radius")
    ok = np.isfinite(boundary)
    ax.plot(omegas[ok], boundary[ok], color="k", lw=1.5,
            label="divergence boundary p(omega)")
    ax.set_xlabel("omega")
    ax.set_ylabel("b")
    ax.set_title(spec.title or f"stability phase map (delta={meta.get('delta')})")
    ax.legend(loc="lower left", fontsize=8)
    fig.tight_layout()
    return _save(fig, spec)


def _curve_with_band(ax, cols, metric, label, color):
    epochs = cols["epoch"]
    if f"{metric}_mean" in cols:
        mean, std = cols[f"{metric}_mean"], cols[f"{metric}_std"]
        ax.fill_between(epochs, mean - std, mean + std, alpha=0.25,
                        color=color, lw=0)
    else:
        mean = cols[metric]
    ax.plot(epochs, mean, color=color, label=label)
    m_epoch = marker_epoch(epochs, mean)
    m_value = mean[epochs == m_epoch][0]
    ax.plot([m_epoch], [m_value], marker="o", ms=7, color=color,
            mec="k", zorder=5)
    return m_epoch


def render_learning_curve(spec: FigureSpec) -> Path:
    """Per-epoch curves (mean with +/-1 std band for aggregates), dotted at
    the first epoch reaching 95% of the final value."""
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for i, path in enumerate(spec.inputs):
        cols = read_columns(path)
        check_metrics_schema(path, cols, spec.metric)
        _curve_with_band(ax, cols, spec.metric, spec.label_for(i), f"C{i}")
    ax.set_xlabel("epoch")
    ax.set_ylabel(spec.metric)
    ax.set_title(spec.title or "learning curves (dot: 95% of final)")
    ax.legend(fontsize=8)
    fig.tight_layout()
    return _save(fig, spec)


def render_ablation(spec: FigureSpec) -> Path:
    """Variant-comparison convergence plot; accepts plain or aggregate
    metrics CSVs side by side."""
    return render_learning_curve(spec)


def render_landscape(spec: FigureSpec) -> Path:
    """Loss landscape as a surface panel plus a contour panel; +inf sentinel
    cells are rendered as masked holes."""
    path = spec.inputs[0]
    load_sidecar(path, "landscape")
    cols = read_columns(path)
    require_columns(cols, ["alpha", "beta", "loss"], path)
    alphas = np.unique(cols["alpha"])
    betas = np.unique(cols["beta"])
    losses = np.full((len(alphas), len(betas)), np.inf)
    ai = np.searchsorted(alphas, cols["alpha"])
    bi = np.searchsorted(betas, cols["beta"])
    losses[ai, bi] = cols["loss"]
    masked = np.ma.masked_invalid(losses)

    fig = plt.figure(figsize=(10, 4.2))
    ax3d = fig.add_subplot(1, 2, 1, projection="3d")
    A, B = np.meshgrid(alphas, betas, indexing="ij")
    surface_z = np.where(np.isfinite(losses), losses, np.nan)
    ax3d.plot_surface(A, B, surface_z, cmap="viridis", linewidth=0,
                      antialiased=False)
    ax3d.set_xlabel("alpha")
    ax3d.set_ylabel("beta")
    ax3d.set_zlabel("loss")

    ax2d = fig.add_subplot(1, 2, 2)
    contour = ax2d.contourf(alphas, betas, masked.T, levels=24,
                            cmap="viridis")
    ax2d.contour(alphas, betas, masked.T, levels=12, colors="k",
                 linewidths=0.4)
    fig.colorbar(contour, ax=ax2d, label="loss")
    ax2d.plot([0], [0], marker="+", color="r", ms=10)
    ax2d.set_xlabel("alpha")
    ax2d.set_ylabel("beta")
    if spec.title:
        fig.suptitle(spec.title)
    fig.tight_layout()
    return _save(fig, spec)


_RENDERERS = {
    "trace": render_trace,
    "phase": render_phase,
    "learning-curve": render_learning_curve,
    "ablation": render_ablation,
    "landscape": render_landscape,
}


def render(spec: FigureSpec) -> Path:
    """Render one figure; pure function of the input artifacts."""
    return _RENDERERS[spec.kind](spec)
