"""Generalized proximal iteration with pluggable, possibly partial, regularizers.

Each step solves

    x+  in  argmin_{z in M}  f(z) + (1/lambda) * Psi(z, x)

locally from the current iterate, enforces the descent inequality
f(x+) + (1/lambda) Psi(x+, x) <= f(x), and records the first-order
residual of the step.  Partial regularizers act through a projection P;
only the P-component of the steps is driven to zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ._minimize import SolveOptions, constrained_minimize, safe_value
from .bregman import ConstraintSet
from .errors import NonConvergenceError
from .expfam import LegendreGenerator

__all__ = [
    "Objective",
    "RegularizerSpec",
    "ProxConfig",
    "IterateTrace",
    "quadratic_regularizer",
    "bregman_regularizer",
    "prox_step",
    "prox_run",
    "check_norm_bounds",
    "NormBoundReport",
]


@dataclass(frozen=True)
class Objective:
    """Smooth objective contract: value and gradient, optional Hessian.

    ``domain_margin`` feeds the boundary monitor; omit it for objectives
    defined everywhere.
    """

    value: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    hessian: Callable[[np.ndarray], np.ndarray] | None = None
    domain_margin: Callable[[np.ndarray], float] | None = None


@dataclass(frozen=True)
class RegularizerSpec:
    """Proximal penalty Psi(x+, x) with its first-argument derivatives.

    ``P`` is the projection onto the subspace the penalty actually senses
    (identity when None); partial regularizers control iterates only
    through P.
    """

    psi_reg: Callable[[np.ndarray, np.ndarray], float]
    grad1: Callable[[np.ndarray, np.ndarray], np.ndarray]
    P: np.ndarray | None = None
    kind: str = "custom"
    hess1: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None

    def proj_matrix(self, dim: int) -> np.ndarray:
        return np.eye(dim) if self.P is None else self.P


def quadratic_regularizer(dim: int, P: np.ndarray | None = None) -> RegularizerSpec:
    """Psi(x+, x) = ||P (x+ - x)||^2 / 2; the classical proximal penalty."""
    if P is None:
        return RegularizerSpec(
            psi_reg=lambda xp, x: 0.5 * float(np.dot(xp - x, xp - x)),
            grad1=lambda xp, x: xp - x,
            hess1=lambda xp, x: np.eye(dim),
            P=None,
            kind="quadratic",
        )
    P = np.asarray(P, dtype=float)
    return RegularizerSpec(
        psi_reg=lambda xp, x: 0.5 * float(np.dot(P @ (xp - x), P @ (xp - x))),
        grad1=lambda xp, x: P @ (xp - x),
        hess1=lambda xp, x: P,
        P=P,
        kind="quadratic",
    )


def bregman_regularizer(gen: LegendreGenerator) -> RegularizerSpec:
    """Psi(x+, x) = D_psi(x+, x) for a Legendre generator."""
    from .bregman import bregman_div

    return RegularizerSpec(
        psi_reg=lambda xp, x: bregman_div(gen, xp, x),
        grad1=lambda xp, x: np.asarray(gen.grad_psi(xp)) - np.asarray(gen.grad_psi(x)),
        hess1=lambda xp, x: np.asarray(gen.hess_psi(xp)),
        P=None,
        kind="bregman",
    )


@dataclass
class ProxConfig:
    """Step-size schedule, stopping rule, and inexactness regime.

    ``lam`` may be a constant, an explicit sequence, or a callable of the
    step index.  The schedule caps (growth ratio <= ratio_cap, values in
    [floor, value_cap]) are asserted while running.  Inexact modes:
      exact  solve each step to inner_tol
      a      budget on sum_k lambda_{k-1} ||e_k||
      b      per step lambda ||e_k|| <= M * ||grad1 Psi(x_k, x_{k-1})||
      c      per step ||e_k|| <= M * ||f'(x_k)||
    """

    lam: float | Sequence[float] | Callable[[int], float] = 1.0
    ratio_cap: float = math.inf
    value_cap: float = math.inf
    floor: float = 0.0
    max_iter: int = 500
    step_tol: float = 1e-10
    inexact_mode: str = "exact"
    inexact_budget: float = math.inf
    inexact_M: float = 1e3
    margin_alarm: float = 1e-6
    inner_tol: float = 1e-11
    inner_max_iter: int = 300
    stop_on: str = "proj_step"  # "proj_step" | "full_step" | "none"

    def lam_at(self, k: int) -> float:
        if callable(self.lam):
            lam = float(self.lam(k))
        elif isinstance(self.lam, (int, float)):
            lam = float(self.lam)
        else:
            seq = self.lam
            lam = float(seq[min(k, len(seq) - 1)])
        if not lam > 0.0:
            raise ValueError(f"lambda_{k} = {lam} must be positive")
        if lam > self.value_cap:
            raise ValueError(f"lambda_{k} = {lam} exceeds value cap {self.value_cap}")
        if lam < self.floor:
            raise ValueError(f"lambda_{k} = {lam} below floor {self.floor}")
        return lam


@dataclass
class IterateTrace:
    """Per-iteration record of a proximal (or EM) run.

    Lists have one entry per stored iterate; step-indexed quantities are 0
    at k=0.  ``extras`` carries experiment-specific columns.
    """

    points: list[np.ndarray] = field(default_factory=list)
    f_values: list[float] = field(default_factory=list)
    psi_values: list[float] = field(default_factory=list)
    step_norms: list[float] = field(default_factory=list)
    proj_step_norms: list[float] = field(default_factory=list)
    residuals: list[float] = field(default_factory=list)
    lambdas: list[float] = field(default_factory=list)
    margins: list[float] = field(default_factory=list)
    P: np.ndarray | None = None
    stop_reason: str = ""
    boundary_flag: bool = False
    extras: dict[str, list[float]] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.points)

    @property
    def dim(self) -> int:
        return int(np.asarray(self.points[0]).size)

    def append(self, x, f, psi, step, proj_step, residual, lam, margin) -> None:
        self.points.append(np.asarray(x, dtype=float).copy())
        self.f_values.append(float(f))
        self.psi_values.append(float(psi))
        self.step_norms.append(float(step))
        self.proj_step_norms.append(float(proj_step))
        self.residuals.append(float(residual))
        self.lambdas.append(float(lam))
        self.margins.append(float(margin))

    def column_names(self) -> list[str]:
        cols = ["k"]
        cols += [f"x{i}" for i in range(self.dim)]
        cols += [
            "f", "psi_reg", "step_norm", "proj_step_norm",
            "residual", "lambda", "domain_margin",
        ]
        cols += list(self.extras.keys())
        return cols

    def rows(self):
        for k in range(len(self.points)):
            row = [k]
            row += [float(v) for v in np.asarray(self.points[k])]
            row += [
                self.f_values[k], self.psi_values[k], self.step_norms[k],
                self.proj_step_norms[k], self.residuals[k],
                self.lambdas[k], self.margins[k],
            ]
            row += [self.extras[name][k] for name in self.extras]
            yield row

    def points_array(self) -> np.ndarray:
        return np.asarray(self.points, dtype=float)


def _margin_of(f_obj: Objective, x: np.ndarray) -> float:
    if f_obj.domain_margin is None:
        return math.inf
    return float(f_obj.domain_margin(x))


def prox_step(
    f_obj: Objective,
    M: ConstraintSet | None,
    reg: RegularizerSpec,
    lam: float,
    x: np.ndarray,
    inner_tol: float = 1e-11,
    inner_max_iter: int = 300,
    warm_u: float | None = None,
) -> tuple[np.ndarray, np.ndarray, float | None]:
    """One regularized step from x; returns (x+, residual vector e, warm u).

    The residual is e = f'(x+) + (1/lam) grad1 Psi(x+, x), projected onto
    the feasible directions for affine and curve sets.  Descent is
    enforced: a candidate violating it is replaced by a local re-solve and,
    failing that, by x itself (a null step).
    """
    x = np.asarray(x, dtype=float)
    inv_lam = 1.0 / lam

    def value(z):
        return f_obj.value(z) + inv_lam * reg.psi_reg(z, x)

    def grad(z):
        return np.asarray(f_obj.gradient(z), dtype=float) + inv_lam * np.asarray(
            reg.grad1(z, x), dtype=float
        )

    hess = None
    if f_obj.hessian is not None and reg.hess1 is not None:
        def hess(z):
            return np.asarray(f_obj.hessian(z), dtype=float) + inv_lam * np.asarray(
                reg.hess1(z, x), dtype=float
            )

    f_at_x = float(f_obj.value(x))
    opts = SolveOptions(tol=inner_tol, max_iter=inner_max_iter)
    if M is not None and M.kind == "curve" and warm_u is not None:
        opts.start = warm_u
    x_plus = constrained_minimize(M, value, grad, hess, x, opts)

    # Descent guard: retry locally with a tighter tolerance, else null step.
    if safe_value(value, x_plus) > f_at_x + 1e-12:
        opts_local = SolveOptions(tol=inner_tol * 1e-2, max_iter=inner_max_iter, local=True)
        if M is not None and M.kind == "curve":
            opts_local.start = warm_u if warm_u is not None else M.nearest_u(x)
        else:
            opts_local.start = x
        x_retry = constrained_minimize(M, value, grad, hess, x, opts_local)
        x_plus = x_retry if safe_value(value, x_retry) <= f_at_x + 1e-12 else x

    e = np.asarray(f_obj.gradient(x_plus), dtype=float) + inv_lam * np.asarray(
        reg.grad1(x_plus, x), dtype=float
    )
    u_plus = None
    if M is not None:
        if M.kind == "curve":
            u_plus = M.nearest_u(x_plus)
            tau = np.asarray(M.dtheta_fn(u_plus), dtype=float) if M.dtheta_fn else None
            if tau is not None and np.linalg.norm(tau) > 0:
                tau = tau / np.linalg.norm(tau)
                e = tau * float(np.dot(tau, e))
        elif M.kind == "affine":
            _, basis = M.affine_parameterization()
            e = basis @ (basis.T @ e)
        elif M.kind == "point":
            e = np.zeros_like(e)
    return x_plus, e, u_plus


def prox_run(
    f_obj: Objective,
    M: ConstraintSet | None,
    reg: RegularizerSpec,
    cfg: ProxConfig,
    x0: np.ndarray,
) -> IterateTrace:
    """Iterate prox_step until the projected step stalls or budget runs out."""
    x = np.asarray(x0, dtype=float).copy()
    dim = x.size
    P = reg.proj_matrix(dim)
    trace = IterateTrace(P=None if reg.P is None else P)
    trace.append(
        x, f_obj.value(x), 0.0, 0.0, 0.0,
        residual=float(np.linalg.norm(f_obj.gradient(x))),
        lam=cfg.lam_at(0), margin=_margin_of(f_obj, x),
    )
    warm_u = None
    if M is not None and M.kind == "curve":
        warm_u = M.nearest_u(x)
    lam_prev = None
    budget_spent = 0.0
    for k in range(cfg.max_iter):
        lam = cfg.lam_at(k)
        if lam_prev is not None and lam / lam_prev > cfg.ratio_cap + 1e-12:
            raise ValueError(
                f"lambda ratio {lam / lam_prev:.3e} exceeds cap {cfg.ratio_cap} at step {k}"
            )
        inner_tol = cfg.inner_tol
        if cfg.inexact_mode == "a" and np.isfinite(cfg.inexact_budget):
            inner_tol = min(inner_tol, cfg.inexact_budget / (lam * 2.0 ** (k + 2)))
        x_new, e, warm_u = prox_step(
            f_obj, M, reg, lam, x,
            inner_tol=inner_tol, inner_max_iter=cfg.inner_max_iter, warm_u=warm_u,
        )
        e_norm = float(np.linalg.norm(e))
        if cfg.inexact_mode in ("b", "c"):
            bound = (
                cfg.inexact_M * float(np.linalg.norm(reg.grad1(x_new, x))) / lam
                if cfg.inexact_mode == "b"
                else cfg.inexact_M * float(np.linalg.norm(f_obj.gradient(x_new)))
            )
            if e_norm > bound + 1e-12:
                x_new, e, warm_u = prox_step(
                    f_obj, M, reg, lam, x,
                    inner_tol=inner_tol * 1e-3, inner_max_iter=cfg.inner_max_iter,
                    warm_u=warm_u,
                )
                e_norm = float(np.linalg.norm(e))
                if e_norm > bound + 1e-9:
                    raise NonConvergenceError(
                        f"inexactness condition {cfg.inexact_mode!r} unsatisfiable at step {k}: "
                        f"||e||={e_norm:.3e} > {bound:.3e}",
                        last_iterate=x_new,
                    )
        budget_spent += lam * e_norm
        step = float(np.linalg.norm(x_new - x))
        proj_step = float(np.linalg.norm(P @ (x_new - x)))
        f_new = float(f_obj.value(x_new))
        psi_val = float(reg.psi_reg(x_new, x))
        margin = _margin_of(f_obj, x_new)
        trace.append(x_new, f_new, psi_val, step, proj_step, e_norm, lam, margin)
        x = x_new
        lam_prev = lam
        if margin <= cfg.margin_alarm:
            trace.stop_reason = "boundary"
            trace.boundary_flag = True
            break
        measure = proj_step if cfg.stop_on == "proj_step" else step
        if cfg.stop_on != "none" and measure <= cfg.step_tol:
            trace.stop_reason = "step_tol"
            break
    else:
        trace.stop_reason = "max_iter"
    if cfg.inexact_mode == "a" and budget_spent > cfg.inexact_budget + 1e-12:
        raise NonConvergenceError(
            f"inexactness budget exceeded: sum lambda*||e|| = {budget_spent:.3e} "
            f"> {cfg.inexact_budget:.3e}"
        )
    _assert_descent(trace)
    return trace


def _assert_descent(trace: IterateTrace, tol: float = 1e-12) -> None:
    f = np.asarray(trace.f_values)
    psi = np.asarray(trace.psi_values)
    lam = np.asarray(trace.lambdas)
    lhs = f[1:] + psi[1:] / lam[1:]
    bad = np.nonzero(lhs > f[:-1] + tol)[0]
    if bad.size:
        k = int(bad[0]) + 1
        raise NonConvergenceError(
            f"descent inequality violated at step {k}: "
            f"f+psi/lam = {lhs[k - 1]:.12e} > f_prev = {f[k - 1]:.12e}"
        )


@dataclass(frozen=True)
class NormBoundReport:
    m_est: float
    M_est: float
    passed: bool
    n_pairs: int
    n_skipped: int


def check_norm_bounds(
    reg: RegularizerSpec, K: np.ndarray, delta: float = math.inf
) -> NormBoundReport:
    """Empirical lower/upper norm-bound constants of Psi on a point cloud.

    m_est = min Psi(y, z) / ||P(y-z)||^2 and
    M_est = max ||grad1 Psi(y, z)|| / ||P(y-z)||
    over ordered pairs within distance delta.  Pairs outside the domain are
    skipped and counted; pairs with P(y-z) = 0 carry no information about
    the bounds on V and are likewise excluded.
    """
    pts = np.atleast_2d(np.asarray(K, dtype=float))
    P = reg.proj_matrix(pts.shape[1])
    m_est, M_est = math.inf, 0.0
    n_pairs = n_skipped = 0
    for i in range(len(pts)):
        for j in range(len(pts)):
            if i == j:
                continue
            y, z = pts[i], pts[j]
            if float(np.linalg.norm(y - z)) > delta:
                continue
            pd = float(np.linalg.norm(P @ (y - z)))
            if pd <= 1e-14:
                n_skipped += 1
                continue
            val = safe_value(reg.psi_reg, y, z)
            if not np.isfinite(val):
                n_skipped += 1
                continue
            g = np.asarray(reg.grad1(y, z), dtype=float)
            m_est = min(m_est, val / pd**2)
            M_est = max(M_est, float(np.linalg.norm(g)) / pd)
            n_pairs += 1
    passed = n_pairs > 0 and m_est > 0.0 and np.isfinite(M_est)
    return NormBoundReport(m_est=m_est, M_est=M_est, passed=passed, n_pairs=n_pairs, n_skipped=n_skipped)
