"""Shared small-scale constrained minimizers.

Used by the projection operators and the proximal inner solver.  Feasible
sets are handled by shape: elimination for affine sets, reduction to the
scalar parameter for curves, feasible backtracking descent otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DomainError, InfeasibleError, NonConvergenceError

__all__ = ["SolveOptions", "minimize_scalar", "constrained_minimize", "fd_jacobian"]


@dataclass
class SolveOptions:
    tol: float = 1e-10
    max_iter: int = 200
    start: np.ndarray | float | None = None
    local: bool = False  # curves: search only near `start` instead of the full grid


def safe_value(fun: Callable[..., float], *args) -> float:
    try:
        v = float(fun(*args))
    except (DomainError, ValueError, FloatingPointError, ZeroDivisionError, OverflowError):
        return math.inf
    return v if np.isfinite(v) else math.inf


def _safe_deriv(deriv, u: float) -> float | None:
    try:
        v = float(deriv(u))
    except (DomainError, ValueError, FloatingPointError, ZeroDivisionError, OverflowError):
        return None
    return v if np.isfinite(v) else None


def _golden(fun, a: float, b: float, tol: float) -> float:
    ratio = (math.sqrt(5.0) - 1.0) / 2.0
    x1 = b - ratio * (b - a)
    x2 = a + ratio * (b - a)
    f1, f2 = safe_value(fun, x1), safe_value(fun, x2)
    for _ in range(300):
        if b - a < tol * max(1.0, abs(a) + abs(b)) + 1e-15:
            break
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - ratio * (b - a)
            f1 = safe_value(fun, x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + ratio * (b - a)
            f2 = safe_value(fun, x2)
    return a if safe_value(fun, a) <= safe_value(fun, b) else b


def _refine_by_derivative(fun, deriv, a: float, b: float, tol: float) -> float:
    da = _safe_deriv(deriv, a)
    db = _safe_deriv(deriv, b)
    if da is None or db is None or da * db > 0:
        return _golden(fun, a, b, tol)
    lo, hi = (a, b) if da <= 0 else (b, a)
    u = 0.5 * (a + b)
    for _ in range(200):
        u = 0.5 * (lo + hi)
        du = _safe_deriv(deriv, u)
        if du is None:
            return _golden(fun, min(a, b), max(a, b), tol)
        if du == 0.0 or abs(hi - lo) < 1e-15 * max(1.0, abs(u)):
            break
        if du < 0:
            lo = u
        else:
            hi = u
    h = max(1e-7, 1e-7 * abs(u))
    for _ in range(4):
        du = _safe_deriv(deriv, u)
        dp, dm = _safe_deriv(deriv, u + h), _safe_deriv(deriv, u - h)
        if du is None or dp is None or dm is None:
            break
        d2 = (dp - dm) / (2 * h)
        if d2 <= 0:
            break
        u_new = u - du / d2
        if not (min(a, b) <= u_new <= max(a, b)):
            break
        u = u_new
    return u


def minimize_scalar(
    fun: Callable[[float], float],
    u_range: tuple[float, float],
    grid: int,
    deriv: Callable[[float], float] | None = None,
    tol: float = 1e-13,
) -> float:
    """Grid bracket then refine; ties broken toward the smallest u."""
    lo, hi = u_range
    if not hi > lo:
        return float(lo)
    us = np.linspace(lo, hi, max(grid, 8))
    vals = np.array([safe_value(fun, u) for u in us])
    if not np.any(np.isfinite(vals)):
        raise InfeasibleError("objective is infinite on the whole parameter grid")
    i = int(np.argmin(np.where(np.isfinite(vals), vals, np.inf)))
    a = us[max(i - 1, 0)]
    b = us[min(i + 1, len(us) - 1)]
    if deriv is not None:
        return float(_refine_by_derivative(fun, deriv, a, b, tol))
    return float(_golden(fun, a, b, tol))


def fd_jacobian(F: Callable[[np.ndarray], np.ndarray], x: np.ndarray, h: float = 1e-7) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    f0 = np.atleast_1d(np.asarray(F(x), dtype=float))
    J = np.zeros((f0.size, x.size))
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        J[:, j] = (np.atleast_1d(F(x + e)) - np.atleast_1d(F(x - e))) / (2 * h)
    return J


def _newton_min(
    value: Callable[[np.ndarray], float],
    grad: Callable[[np.ndarray], np.ndarray],
    hess: Callable[[np.ndarray], np.ndarray] | None,
    x0: np.ndarray,
    tol: float,
    max_iter: int,
    feasible: Callable[[np.ndarray], bool] | None = None,
) -> np.ndarray:
    """Damped Newton descent on a smooth value; falls back to steepest descent.

    Accepts only value-decreasing (and feasible, when a test is given)
    points, so from a warm start it tracks the local basin.
    """
    x = np.asarray(x0, dtype=float).copy()
    fx = safe_value(value, x)
    if not np.isfinite(fx):
        raise DomainError("infeasible or out-of-domain start for Newton descent")
    for _ in range(max_iter):
        g = np.asarray(grad(x), dtype=float)
        gnorm = float(np.linalg.norm(g))
        if gnorm <= tol:
            return x
        d = None
        if hess is not None:
            try:
                H = np.atleast_2d(np.asarray(hess(x), dtype=float))
                d = np.linalg.solve(H, -g)
                if not np.all(np.isfinite(d)) or float(np.dot(d, g)) >= 0:
                    d = None
            except (np.linalg.LinAlgError, DomainError, ValueError, FloatingPointError):
                d = None
        if d is None:
            H = fd_jacobian(grad, x)
            try:
                d = np.linalg.solve(0.5 * (H + H.T), -g)
                if not np.all(np.isfinite(d)) or float(np.dot(d, g)) >= 0:
                    d = -g
            except np.linalg.LinAlgError:
                d = -g
        t = 1.0
        accepted = False
        for _ in range(60):
            cand = x + t * d
            if feasible is None or feasible(cand):
                fc = safe_value(value, cand)
                if fc < fx:
                    x, fx = cand, fc
                    accepted = True
                    break
            t *= 0.5
        if not accepted:
            return _newton_polish(grad, hess, x, tol, feasible)
    raise NonConvergenceError(
        f"Newton descent used all {max_iter} iterations (|grad| {gnorm:.3e})",
        last_iterate=x,
        residual=gnorm,
    )


def _newton_polish(grad, hess, x: np.ndarray, tol: float, feasible) -> np.ndarray:
    """Full Newton steps accepted on gradient decrease.

    Value-based line searches bottom out at the floating-point noise floor
    of the objective; near a minimum these unguarded steps converge
    quadratically and push the gradient down to the requested tolerance.
    """
    g = np.asarray(grad(x), dtype=float)
    norm = float(np.linalg.norm(g))
    for _ in range(6):
        if norm <= tol:
            break
        try:
            H = (
                np.atleast_2d(np.asarray(hess(x), dtype=float))
                if hess is not None
                else fd_jacobian(grad, x)
            )
            d = np.linalg.solve(H, -g)
        except (np.linalg.LinAlgError, DomainError, ValueError, FloatingPointError):
            break
        cand = x + d
        if feasible is not None and not feasible(cand):
            break
        try:
            g_cand = np.asarray(grad(cand), dtype=float)
        except (DomainError, ValueError, FloatingPointError):
            break
        cand_norm = float(np.linalg.norm(g_cand))
        if not np.isfinite(cand_norm) or cand_norm >= norm:
            break
        x, g, norm = cand, g_cand, cand_norm
    return x


def constrained_minimize(
    M,
    value: Callable[[np.ndarray], float],
    grad: Callable[[np.ndarray], np.ndarray],
    hess: Callable[[np.ndarray], np.ndarray] | None,
    start: np.ndarray,
    opts: SolveOptions | None = None,
) -> np.ndarray:
    """Minimize a smooth function over a ConstraintSet.

    ``M`` may be None (unconstrained).  Multi-modal curve objectives are
    bracketed on the set's grid unless ``opts.local`` restricts the search
    to a window around ``opts.start``.
    """
    opts = opts or SolveOptions()
    start = np.asarray(start, dtype=float)
    kind = "all" if M is None else M.kind
    if kind == "all":
        x0 = np.asarray(opts.start, dtype=float) if opts.start is not None else start
        return _newton_min(value, grad, hess, x0, opts.tol, opts.max_iter)
    if kind == "point":
        return M.x0.copy()
    if kind == "affine":
        xp, basis = M.affine_parameterization()
        if basis.shape[1] == 0:
            return xp
        anchor = np.asarray(opts.start, dtype=float) if opts.start is not None else start
        u0 = basis.T @ (anchor - xp)

        def val_u(u):
            return value(xp + basis @ u)

        def grad_u(u):
            return basis.T @ np.asarray(grad(xp + basis @ u))

        hess_u = None
        if hess is not None:
            def hess_u(u):
                return basis.T @ np.atleast_2d(np.asarray(hess(xp + basis @ u))) @ basis

        u = _newton_min(val_u, grad_u, hess_u, u0, opts.tol, opts.max_iter)
        return xp + basis @ u
    if kind == "curve":
        def val_u(u: float) -> float:
            return value(np.asarray(M.theta_fn(u), dtype=float))

        deriv = None
        if M.dtheta_fn is not None:
            def deriv(u: float) -> float:
                th = np.asarray(M.theta_fn(u), dtype=float)
                return float(np.dot(np.asarray(M.dtheta_fn(u)), np.asarray(grad(th))))

        lo, hi = M.u_range
        if opts.local and opts.start is not None and np.isscalar(opts.start):
            span = 2.0 * (hi - lo) / max(M.grid, 8)
            u0 = float(opts.start)
            u = minimize_scalar(val_u, (max(lo, u0 - span), min(hi, u0 + span)), 33, deriv)
        else:
            u = minimize_scalar(val_u, (lo, hi), M.grid, deriv)
        return np.asarray(M.theta_fn(u), dtype=float)
    if kind in ("sublevel", "explicit"):
        return _projected_descent(M, value, grad, start, opts)
    raise ValueError(f"unknown constraint kind {kind!r}")


def _projected_descent(M, value, grad, x0: np.ndarray, opts: SolveOptions) -> np.ndarray:
    """Backtracking descent keeping iterates feasible.

    Adequate at desk scale; does not slide along curved active boundaries.
    """
    x = np.asarray(opts.start if opts.start is not None else x0, dtype=float).copy()
    if M.kind == "explicit" and M.project_fn is not None:
        x = np.asarray(M.project_fn(x), dtype=float)
    if not M.contains(x, tol=1e-8):
        raise InfeasibleError("descent needs a feasible start")
    fx = safe_value(value, x)
    step = 1.0
    for _ in range(opts.max_iter):
        g = np.asarray(grad(x), dtype=float)
        if float(np.linalg.norm(g)) <= opts.tol:
            return x
        t = step
        moved = False
        for _ in range(60):
            cand = x - t * g
            if M.kind == "explicit" and M.project_fn is not None:
                cand = np.asarray(M.project_fn(cand), dtype=float)
            if M.contains(cand, tol=1e-10):
                fc = safe_value(value, cand)
                if fc < fx - 1e-18:
                    x, fx = cand, fc
                    step = min(t * 2.0, 1e3)
                    moved = True
                    break
            t *= 0.5
        if not moved:
            return x
    raise NonConvergenceError("projected descent exhausted its iteration budget", last_iterate=x)
