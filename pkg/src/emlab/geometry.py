"""Alternating Bregman projections between a data set and a model set.

The data set collects parameters whose observed expectation coordinates
match the datum; right (e-) projections onto it preserve the hidden
natural coordinates.  Model sets are arbitrary constraint sets; left (m-)
projections delegate to the Bregman module.  Alternation either reaches a
common point, stalls at a gap pair (each point the projection of the
other), or exhausts its budget.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._minimize import SolveOptions, fd_jacobian
from .bregman import ConstraintSet, bregman_div, left_projection, right_projection
from .em import IncompleteModel
from .errors import InfeasibleError, NonConvergenceError
from .expfam import LegendreGenerator
from .numerics import newton_solve

__all__ = [
    "DataSetSpec",
    "AlternatingTrace",
    "AmariReport",
    "GapPair",
    "e_projection",
    "m_projection",
    "amari_check",
    "alternate_run",
    "refine_gap_pair",
]


@dataclass(frozen=True)
class DataSetSpec:
    """Parameters matching the observation in expectation coordinates.

    D = {theta : grad psi(theta)[observed_indices] = y_obs}.
    """

    observed_indices: tuple[int, ...]
    y_obs: np.ndarray

    @staticmethod
    def from_model(model: IncompleteModel) -> "DataSetSpec":
        return DataSetSpec(
            observed_indices=tuple(model.observed_indices),
            y_obs=np.atleast_1d(np.asarray(model.y, dtype=float)),
        )

    def membership_residual(self, fam: LegendreGenerator, theta: np.ndarray) -> float:
        eta = np.asarray(fam.grad_psi(np.asarray(theta, dtype=float)))
        return float(np.linalg.norm(eta[list(self.observed_indices)] - self.y_obs))


def e_projection(
    fam: LegendreGenerator,
    D: DataSetSpec,
    theta: np.ndarray,
    tol: float = 1e-11,
) -> np.ndarray:
    """Right Bregman projection onto the data set.

    Keeps the hidden natural coordinates of theta and solves the observed
    block of grad psi(vartheta) = y_obs by Newton.
    """
    theta = np.asarray(theta, dtype=float)
    fam.require_interior(theta, "e-projection argument")
    obs = list(D.observed_indices)
    if not obs:
        return theta.copy()

    def embed(z: np.ndarray) -> np.ndarray:
        full = theta.copy()
        full[obs] = z
        return full

    def F(z):
        return np.asarray(fam.grad_psi(embed(z)))[obs] - D.y_obs

    def J(z):
        return np.asarray(fam.hess_psi(embed(z)))[np.ix_(obs, obs)]

    res = newton_solve(F, J, theta[obs], tol=tol)
    if not res.converged:
        raise InfeasibleError(
            f"no interior parameter matches the observed expectations {D.y_obs} "
            f"(residual {res.f_norm:.3e})"
        )
    return embed(res.x)


def m_projection(
    fam: LegendreGenerator,
    M: ConstraintSet,
    vartheta: np.ndarray,
    opts: SolveOptions | None = None,
) -> np.ndarray:
    """Left Bregman projection onto the model set."""
    return left_projection(fam, M, vartheta, opts)


@dataclass(frozen=True)
class AmariReport:
    coincide: bool
    lhs: np.ndarray   # hidden-statistic conditional expectation at the e-projection
    rhs: np.ndarray   # hidden-statistic unconditional expectation there
    vartheta_e: np.ndarray


def amari_check(model: IncompleteModel, theta: np.ndarray, tol: float = 1e-9) -> AmariReport:
    """Compare E[z | y] with E[z] at the e-projection of theta.

    When the two agree, the E step lands on the same data-set point as the
    e-projection, and EM coincides with alternating Bregman projections.
    Models with an invertible observation have no hidden coordinates and
    coincide trivially.
    """
    D = DataSetSpec.from_model(model)
    vt = e_projection(model.fam, D, theta)
    hidden = list(model.hidden_indices)
    if not hidden:
        z = np.zeros(0)
        return AmariReport(coincide=True, lhs=z, rhs=z, vartheta_e=vt)
    lhs = model.cond_expectation(vt)[hidden]
    rhs = model.statistic_expectation(vt)[hidden]
    return AmariReport(
        coincide=bool(np.linalg.norm(lhs - rhs) <= tol),
        lhs=lhs,
        rhs=rhs,
        vartheta_e=vt,
    )


@dataclass
class AlternatingTrace:
    """Alternation record: model points, data points, recorded divergences."""

    thetas: list[np.ndarray] = field(default_factory=list)
    varthetas: list[np.ndarray] = field(default_factory=list)
    div_after_m: list[float] = field(default_factory=list)  # D(theta_k, vartheta_k)
    div_after_e: list[float] = field(default_factory=list)  # D(theta_k, vartheta_{k+1})
    verdict: str = ""
    gap: "GapPair | None" = None
    iterations: int = 0


@dataclass(frozen=True)
class GapPair:
    vartheta: np.ndarray  # data-set point a'
    theta: np.ndarray     # model-set point b'
    divergence: float
    residual: float


@dataclass
class AlternateConfig:
    max_iter: int = 10_000
    step_tol: float = 1e-12
    intersection_tol: float = 1e-10
    nonconv_step: float = 1e-10
    refine_gap: bool = True


def _project_data(gen, D, theta, opts=None):
    if isinstance(D, DataSetSpec):
        return e_projection(gen, D, theta)
    return right_projection(gen, D, theta, opts)


def alternate_run(
    gen: LegendreGenerator,
    D: "DataSetSpec | ConstraintSet",
    M: ConstraintSet,
    theta0: np.ndarray,
    cfg: AlternateConfig | None = None,
) -> AlternatingTrace:
    """Alternate e-projection onto D and m-projection onto M from theta0 in M.

    Stops at a common point of the two sets, at a gap pair (refined by a
    two-point stationarity solve when both sets are curves), or with a
    non-convergence verdict once the budget is exhausted while steps remain
    above the honesty threshold.
    """
    cfg = cfg or AlternateConfig()
    theta = np.asarray(theta0, dtype=float).copy()
    trace = AlternatingTrace()
    trace.thetas.append(theta.copy())
    vt_prev = None
    step = math.inf
    for k in range(cfg.max_iter):
        vt = _project_data(gen, D, theta)
        trace.div_after_e.append(bregman_div(gen, theta, vt))
        theta_new = m_projection(gen, M, vt)
        trace.varthetas.append(vt.copy())
        trace.thetas.append(theta_new.copy())
        trace.div_after_m.append(bregman_div(gen, theta_new, vt))
        step = max(
            float(np.linalg.norm(theta_new - theta)),
            0.0 if vt_prev is None else float(np.linalg.norm(vt - vt_prev)),
        )
        theta, vt_prev = theta_new, vt
        trace.iterations = k + 1
        if step <= cfg.step_tol:
            break
    gap_div = trace.div_after_m[-1]
    if step > cfg.nonconv_step:
        trace.verdict = "non-convergence"
        return trace
    if gap_div <= cfg.intersection_tol:
        trace.verdict = "intersection"
        return trace
    trace.verdict = "gap-pair"
    if cfg.refine_gap and not isinstance(D, DataSetSpec) and D.kind == "curve" and M.kind == "curve":
        trace.gap = refine_gap_pair(gen, D, M, vt_prev, theta)
    else:
        res = _pair_residual(gen, D, M, vt_prev, theta)
        trace.gap = GapPair(vartheta=vt_prev, theta=theta, divergence=gap_div, residual=res)
    return trace


def _pair_residual(gen, D, M, vartheta, theta) -> float:
    """How far (vartheta, theta) is from being mutually projected."""
    vt_back = _project_data(gen, D, theta)
    th_back = m_projection(gen, M, vartheta)
    return max(
        float(np.linalg.norm(vt_back - vartheta)),
        float(np.linalg.norm(th_back - theta)),
    )


def refine_gap_pair(
    gen: LegendreGenerator,
    D: ConstraintSet,
    M: ConstraintSet,
    vartheta0: np.ndarray,
    theta0: np.ndarray,
    tol: float = 1e-10,
) -> GapPair:
    """Polish a gap pair by Newton on the two-point stationarity system.

    For curve sets a(u) in D and b(s) in M, a gap pair is a critical point
    of (u, s) -> D(b(s), a(u)); both partial derivatives vanish exactly
    when each point is the projection of the other.
    """
    if D.kind != "curve" or M.kind != "curve":
        raise ValueError("gap refinement needs both sets as curves")
    u0 = D.nearest_u(vartheta0)
    s0 = M.nearest_u(theta0)

    def G(z):
        u, s = z
        a = np.asarray(D.theta_fn(u), dtype=float)
        b = np.asarray(M.theta_fn(s), dtype=float)
        da = np.asarray(D.dtheta_fn(u), dtype=float)
        db = np.asarray(M.dtheta_fn(s), dtype=float)
        # d/du D(b, a(u)) and d/ds D(b(s), a)
        grad_a = np.asarray(gen.hess_psi(a), dtype=float) @ (a - b)
        grad_b = np.asarray(gen.grad_psi(b), dtype=float) - np.asarray(gen.grad_psi(a), dtype=float)
        return np.array([float(np.dot(da, grad_a)), float(np.dot(db, grad_b))])

    res = newton_solve(G, lambda z: fd_jacobian(G, z), np.array([u0, s0]), tol=tol)
    if not res.converged:
        raise NonConvergenceError(
            f"gap-pair stationarity solve stalled (residual {res.f_norm:.3e})",
            last_iterate=res.x,
        )
    u, s = res.x
    a = np.asarray(D.theta_fn(u), dtype=float)
    b = np.asarray(M.theta_fn(s), dtype=float)
    return GapPair(
        vartheta=a,
        theta=b,
        divergence=bregman_div(gen, b, a),
        residual=float(res.f_norm),
    )
