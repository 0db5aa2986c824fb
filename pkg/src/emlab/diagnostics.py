"""Post-hoc convergence analysis of iterate traces.

Cauchy suffix sums measure whether a (projected) sequence settles; rate
fits distinguish sublinear k^-rho from R-linear alpha^k decay; the
gradient-domination exponent is recovered from value/gradient pairs; and a
rule-based classifier names the observed behavior of a finished run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EmlabError
from .proximal import IterateTrace

__all__ = [
    "RateFit",
    "KLExponentEstimate",
    "RunVerdict",
    "ClassifierThresholds",
    "InsufficientDataError",
    "cauchy_sums",
    "fit_rate",
    "kl_exponent_estimate",
    "classify_run",
]


class InsufficientDataError(EmlabError):
    """Too few usable points to fit anything meaningful."""


def _points_of(trace) -> np.ndarray:
    if isinstance(trace, IterateTrace):
        return trace.points_array()
    return np.atleast_2d(np.asarray(trace, dtype=float))


def _proj(P: np.ndarray | None, diffs: np.ndarray) -> np.ndarray:
    if P is None:
        return diffs
    return diffs @ np.asarray(P, dtype=float).T


def cauchy_sums(trace, P: np.ndarray | None = None) -> np.ndarray:
    """Suffix sums S_N = sum_{k >= N} ||P(x_{k+1} - x_k)|| for N = 0..K-1.

    Computed by a reversed cumulative sum, so S_N = S_{N+1} + d_N holds to
    machine precision exactly.
    """
    pts = _points_of(trace)
    if len(pts) < 2:
        raise ValueError("trace must contain at least 2 points")
    d = np.linalg.norm(_proj(P, np.diff(pts, axis=0)), axis=1)
    return np.cumsum(d[::-1])[::-1]


@dataclass(frozen=True)
class RateFit:
    kind: str            # "sublinear" | "linear" | "none"
    param: float         # rho for sublinear, alpha for linear, nan for none
    r2: float
    window: int
    flagged_exact: bool = False


def _r_squared(y: np.ndarray, y_hat: np.ndarray) -> float:
    ss_res = float(np.sum((y - y_hat) ** 2))
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    if ss_tot <= 1e-300:
        return 0.0
    return 1.0 - ss_res / ss_tot


def fit_rate(
    trace,
    P: np.ndarray | None = None,
    x_ref: np.ndarray | None = None,
    drop_fraction: float = 0.1,
    r2_threshold: float = 0.98,
    min_points: int = 20,
) -> RateFit:
    """Fit ||P(x_k - x_ref)|| against k^-rho and alpha^k; report the better law.

    ``x_ref`` defaults to the terminal iterate, and the final 10% of points
    are dropped to avoid the self-reference of that proxy.  A fit counts
    only with R^2 at or above the threshold; otherwise kind is "none".
    """
    pts = _points_of(trace)
    if isinstance(trace, IterateTrace) and P is None:
        P = trace.P
    ref = np.asarray(x_ref, dtype=float) if x_ref is not None else pts[-1]
    dists = np.linalg.norm(_proj(P, pts - ref), axis=1)
    cutoff = len(dists) - max(1, int(math.ceil(drop_fraction * len(dists))))
    k = np.arange(len(dists))
    keep = (k >= 1) & (k < cutoff) & (dists > 1e-14)
    if np.all(dists[1:] <= 1e-14):
        return RateFit(kind="linear", param=0.0, r2=1.0, window=0, flagged_exact=True)
    if int(np.sum(keep)) < min_points:
        raise InsufficientDataError(
            f"only {int(np.sum(keep))} usable points (need {min_points})"
        )
    kk = k[keep].astype(float)
    logd = np.log(dists[keep])

    def line_fit(x: np.ndarray) -> tuple[float, float, float]:
        A = np.vstack([np.ones_like(x), x]).T
        coef, *_ = np.linalg.lstsq(A, logd, rcond=None)
        return coef[0], coef[1], _r_squared(logd, A @ coef)

    _, slope_sub, r2_sub = line_fit(np.log(kk))
    _, slope_lin, r2_lin = line_fit(kk)
    candidates = []
    if slope_sub < 0:
        candidates.append(RateFit("sublinear", -slope_sub, r2_sub, int(np.sum(keep))))
    alpha = math.exp(slope_lin)
    if 0.0 < alpha < 1.0:
        candidates.append(RateFit("linear", alpha, r2_lin, int(np.sum(keep))))
    candidates = [c for c in candidates if c.r2 >= r2_threshold]
    if not candidates:
        return RateFit(kind="none", param=math.nan, r2=max(r2_sub, r2_lin), window=int(np.sum(keep)))
    return max(candidates, key=lambda c: c.r2)


@dataclass(frozen=True)
class KLExponentEstimate:
    theta: float        # clipped to [1/2, 1)
    theta_raw: float
    r2: float
    window: int


def kl_exponent_estimate(
    f_values, grad_norms, f_star: float, min_points: int = 10
) -> KLExponentEstimate:
    """Exponent of gradient domination: fit ||grad f|| ~ c (f - f*)^theta.

    The least-squares slope of log grad against log(f - f*) estimates
    theta, reported clipped to [1/2, 1).
    """
    f = np.asarray(f_values, dtype=float)
    g = np.asarray(grad_norms, dtype=float)
    keep = (f > f_star) & (g > 0) & np.isfinite(f) & np.isfinite(g)
    if int(np.sum(keep)) < min_points:
        raise InsufficientDataError(
            f"only {int(np.sum(keep))} usable points (need {min_points})"
        )
    x = np.log(f[keep] - f_star)
    ylog = np.log(g[keep])
    if float(np.max(x) - np.min(x)) < 1e-9:
        raise InsufficientDataError("value window is degenerate (constant f - f*)")
    A = np.vstack([np.ones_like(x), x]).T
    coef, *_ = np.linalg.lstsq(A, ylog, rcond=None)
    theta_raw = float(coef[1])
    r2 = _r_squared(ylog, A @ coef)
    theta = min(max(theta_raw, 0.5), 1.0 - 1e-9)
    return KLExponentEstimate(theta=theta, theta_raw=theta_raw, r2=r2, window=int(np.sum(keep)))


@dataclass(frozen=True)
class ClassifierThresholds:
    step_tol: float = 1e-8
    plateau_fraction: float = 0.01  # last-half share of the total path when settled
    partial_gap: float = 10.0       # full step must exceed step_tol by this factor
    escape_factor: float = 10.0
    margin_threshold: float = 1e-6
    return_tol: float = 1e-3        # relative closest-return distance
    excursion_min: float = 0.05     # relative excursion required to call a return a cycle
    wander_ratio: float = 10.0      # path length / diameter fallback


@dataclass(frozen=True)
class RunVerdict:
    verdict: str  # converged | partial-only | cycling | escaping | boundary
    rule: str
    ambiguous: bool = False


def _settled(steps: np.ndarray, tol: float, plateau_fraction: float) -> bool:
    if len(steps) == 0:
        return True
    total = float(np.sum(steps))
    if total <= 1e-300:
        return True
    last_half = float(np.sum(steps[len(steps) // 2:]))
    return steps[-1] <= tol and last_half <= plateau_fraction * total


def classify_run(
    trace,
    P: np.ndarray | None = None,
    thresholds: ClassifierThresholds | None = None,
) -> RunVerdict:
    """Rule-based verdict on a finished trace.

    Order: boundary flag, escaping norms, settled steps (converged), settled
    projected steps only (partial-only), then recurrence / wander detection
    (cycling).  A trace matching nothing cleanly is reported as cycling
    with the ambiguous flag set.
    """
    th = thresholds or ClassifierThresholds()
    pts = _points_of(trace)
    if isinstance(trace, IterateTrace):
        if P is None:
            P = trace.P
        if trace.boundary_flag:
            return RunVerdict("boundary", rule="boundary flag")
        if trace.margins and min(trace.margins[-max(1, len(trace.margins) // 10):]) <= th.margin_threshold:
            return RunVerdict("boundary", rule="margin below threshold")
    diffs = np.diff(pts, axis=0)
    steps = np.linalg.norm(diffs, axis=1)
    norms = np.linalg.norm(pts, axis=1)
    if (
        norms[-1] > th.escape_factor * (1.0 + norms[0])
        and norms[-1] >= 0.99 * float(np.max(norms))
        and norms[-1] > 1.5 * norms[len(norms) // 2]
    ):
        return RunVerdict("escaping", rule="norm growth")
    if _settled(steps, th.step_tol, th.plateau_fraction):
        return RunVerdict("converged", rule="full steps settled")
    proj_steps = np.linalg.norm(_proj(P, diffs), axis=1)
    if P is not None and _settled(proj_steps, th.step_tol, th.plateau_fraction):
        if steps[-1] > th.partial_gap * th.step_tol:
            return RunVerdict("partial-only", rule="projected steps settled, full steps did not")
    scale = max(1.0, float(np.max(norms)))
    anchor = pts[-1]
    dist = np.linalg.norm(pts - anchor, axis=1)
    window = dist[len(dist) // 2:]
    if len(window) > 2:
        i_far = int(np.argmax(window))
        excursion = float(window[i_far])
        returned = float(np.min(window[:i_far])) if i_far > 0 else math.inf
        if excursion > th.excursion_min * scale and returned < th.return_tol * scale:
            return RunVerdict("cycling", rule="closest-return recurrence")
    path = float(np.sum(steps))
    spread = float(np.max(np.max(pts, axis=0) - np.min(pts, axis=0)))
    if spread > 0 and path / spread > th.wander_ratio:
        return RunVerdict("cycling", rule="path length dominates diameter")
    return RunVerdict("cycling", rule="no clean match", ambiguous=True)
