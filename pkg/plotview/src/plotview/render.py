"""Render static figures from solver trace/summary files.

Reads the CSV/JSON pair written by the ``emlab`` runner and emits one of
four figure kinds: parameter trajectory, objective decay, rate plot with a
fitted-slope annotation, or the winding plot of a planar run.  Inputs are
never modified and rendering is deterministic, so re-rendering reproduces
the same bytes.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = ["FigureSpec", "PlotDataError", "render", "KINDS"]

KINDS = ("trajectory", "objective", "rate", "winding")

_BASE_COLUMNS = (
    "k", "f", "psi_reg", "step_norm", "proj_step_norm",
    "residual", "lambda", "domain_margin",
)


class PlotDataError(ValueError):
    """A trace or summary file does not match the expected schema."""


@dataclass(frozen=True)
class FigureSpec:
    trace_path: str | Path
    summary_path: str | Path
    kind: str
    out_path: str | Path


@dataclass(frozen=True)
class TraceData:
    k: np.ndarray
    points: np.ndarray      # (n_iter, dim)
    columns: dict           # name -> ndarray for every non-coordinate column

    @property
    def dim(self) -> int:
        return self.points.shape[1]


def load_trace(path) -> TraceData:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise PlotDataError(f"{path}: empty file, no header row") from None
        rows = [row for row in reader if row]
    for required in _BASE_COLUMNS:
        if required not in header:
            raise PlotDataError(f"{path}: missing required column {required!r}")
    if not rows:
        raise PlotDataError(f"{path}: no data rows")
    try:
        data = np.array([[float(v) for v in row] for row in rows])
    except ValueError as exc:
        raise PlotDataError(f"{path}: non-numeric cell ({exc})") from exc
    if data.shape[1] != len(header):
        raise PlotDataError(f"{path}: row width does not match header")
    cols = {name: data[:, i] for i, name in enumerate(header)}
    coord_names = sorted(
        (n for n in header if n.startswith("x") and n[1:].isdigit()),
        key=lambda n: int(n[1:]),
    )
    if not coord_names:
        raise PlotDataError(f"{path}: no coordinate columns x0, x1, ...")
    points = np.column_stack([cols[n] for n in coord_names])
    return TraceData(k=cols["k"], points=points, columns=cols)


def load_summary(path) -> dict:
    try:
        with open(path) as fh:
            summary = json.load(fh)
    except json.JSONDecodeError as exc:
        raise PlotDataError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(summary, dict):
        raise PlotDataError(f"{path}: summary must be a JSON object")
    return summary


def _new_figure():
    fig, ax = plt.subplots(figsize=(6.0, 4.5), dpi=120)
    return fig, ax


def _plot_trajectory(ax, trace: TraceData, summary: dict) -> None:
    pts = trace.points
    if trace.dim == 1:
        ax.plot(trace.k, pts[:, 0], lw=1.0)
        ax.set_xlabel("iteration k")
        ax.set_ylabel("x0")
    else:
        ax.plot(pts[:, 0], pts[:, 1], lw=0.8, color="tab:blue")
        ax.scatter(pts[0, 0], pts[0, 1], marker="o", color="tab:green", label="start", zorder=3)
        ax.scatter(pts[-1, 0], pts[-1, 1], marker="x", color="tab:red", label="final", zorder=3)
        ax.set_xlabel("x0")
        ax.set_ylabel("x1")
        ax.legend(loc="best")
    ax.set_title(f"parameter trajectory: {summary.get('experiment', 'run')}")


def _plot_objective(ax, trace: TraceData, summary: dict) -> None:
    f = trace.columns["f"]
    ax.plot(trace.k, f, lw=1.2)
    ax.set_xlabel("iteration k")
    ax.set_ylabel("objective value")
    ax.set_title(f"objective decay: {summary.get('experiment', 'run')}")


def rate_regression(trace: TraceData, kind: str, drop_fraction: float = 0.1):
    """Slope fit of the distance-to-final sequence, in the geometry of `kind`.

    Returns (k_used, distances, fitted_param).  For a linear law the
    parameter is the per-step factor alpha = exp(slope of log d against k);
    for a sublinear law it is rho = -slope of log d against log k.
    """
    pts = trace.points
    d = np.linalg.norm(pts - pts[-1], axis=1)
    cutoff = len(d) - max(1, int(math.ceil(drop_fraction * len(d))))
    idx = np.arange(len(d))
    keep = (idx >= 1) & (idx < cutoff) & (d > 1e-14)
    if int(np.sum(keep)) < 3:
        raise PlotDataError("too few usable points for a rate regression")
    kk = idx[keep].astype(float)
    logd = np.log(d[keep])
    if kind == "sublinear":
        slope = np.polyfit(np.log(kk), logd, 1)[0]
        return kk, d[keep], -slope
    slope = np.polyfit(kk, logd, 1)[0]
    return kk, d[keep], math.exp(slope)


def _plot_rate(ax, trace: TraceData, summary: dict) -> None:
    fit = summary.get("rate_fit") or {}
    kind = fit.get("kind", "none")
    reg_kind = kind if kind in ("linear", "sublinear") else "sublinear"
    kk, d, param = rate_regression(trace, reg_kind)
    if reg_kind == "linear":
        ax.semilogy(kk, d, ".", ms=3)
        label = f"fitted alpha = {param:.4f}"
        ax.semilogy(kk, d[0] * param ** (kk - kk[0]), lw=1.0, color="tab:red", label=label)
    else:
        ax.loglog(kk, d, ".", ms=3)
        label = f"fitted slope = {-param:.4f}"
        ax.loglog(kk, d[0] * (kk / kk[0]) ** (-param), lw=1.0, color="tab:red", label=label)
    ax.set_xlabel("iteration k")
    ax.set_ylabel("distance to final iterate")
    ax.legend(loc="best")
    ax.set_title(f"convergence rate: {summary.get('experiment', 'run')}")


def _plot_winding(ax, trace: TraceData, summary: dict) -> None:
    if trace.dim < 2:
        raise PlotDataError("winding plot needs at least two coordinates")
    pts = trace.points
    sc = ax.scatter(pts[:, 0], pts[:, 1], c=trace.k, s=2, cmap="viridis")
    circle = np.linspace(0.0, 2.0 * math.pi, 512)
    ax.plot(np.cos(circle), np.sin(circle), lw=0.8, color="gray", ls="--")
    ax.set_aspect("equal")
    ax.set_xlabel("x0")
    ax.set_ylabel("x1")
    plt.colorbar(sc, ax=ax, label="iteration k")
    wind = trace.columns.get("winding")
    if wind is not None:
        ax.set_title(f"winding path: total angle {wind[-1] / math.pi:.1f} pi")
    else:
        ax.set_title(f"winding path: {summary.get('experiment', 'run')}")


_RENDERERS = {
    "trajectory": _plot_trajectory,
    "objective": _plot_objective,
    "rate": _plot_rate,
    "winding": _plot_winding,
}


def render(spec: FigureSpec) -> Path:
    """Render one figure; returns the output path."""
    if spec.kind not in KINDS:
        raise PlotDataError(f"unknown figure kind {spec.kind!r}; choose from {KINDS}")
    trace = load_trace(spec.trace_path)
    summary = load_summary(spec.summary_path)
    fig, ax = _new_figure()
    try:
        _RENDERERS[spec.kind](ax, trace, summary)
        out = Path(spec.out_path)
        out.parent.mkdir(parents=True, exist_ok=True)
        # constant metadata keeps re-rendering byte-identical
        fig.savefig(out, format="png", metadata={"Software": "plotview"})
    finally:
        plt.close(fig)
    return Path(spec.out_path)
