"""EM over constrained exponential families as a KL-regularized proximal method.

An incomplete-data model bundles the complete family with the conditional
log-normalizer psi_y of the data given the observation.  Everything else
derives from that pair: the completed statistic is grad psi_y, the
conditional Fisher information of missing data is hess psi_y, the
incomplete-data negative log-likelihood is psi - psi_y, and the proximal
regularizer matched to EM is the Bregman distance of psi_y.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ._minimize import SolveOptions, constrained_minimize, minimize_scalar
from .bregman import ConstraintSet, bregman_div
from .errors import InfeasibleError, ModelInconsistencyError, NonConvergenceError
from .expfam import ExpFamily, LegendreGenerator, dual_param, gaussian_family
from .numerics import finite_diff_hess, projection_from_eigvecs, rank_with_tol, sym_eig
from .proximal import IterateTrace, Objective, ProxConfig, RegularizerSpec

__all__ = [
    "IncompleteModel",
    "SplitCoordinates",
    "EMTrace",
    "BoundaryReport",
    "SplitSolveResult",
    "e_step",
    "m_step",
    "em_run",
    "conditional_fisher",
    "split_parameters",
    "kl_em_regularizer",
    "regularized_em_step",
    "split_program_solve",
    "boundary_monitor",
    "gaussian_missing_model",
    "gaussian_samplevar_model",
    "bivariate_missing_model",
    "duplicated_statistic_model",
    "model_from_config",
]


@dataclass(frozen=True)
class IncompleteModel:
    """Complete family + observed datum + conditional structure + constraints.

    ``psi_y`` is the conditional log-normalizer as a generator bundle; when
    present it supplies the conditional expectation (its gradient) and the
    missing-data information matrix (its Hessian).  Models without a closed
    psi_y must provide ``cond_expect`` directly and may provide ``cond_kl``
    (a conditional KL oracle) for the Fisher fallback.

    ``m_step_solver``, when set, replaces the generic constrained M step;
    it must return a global minimizer of psi(theta) - theta.t over M.
    """

    fam: ExpFamily
    y: float
    psi_y: LegendreGenerator | None = None
    M: ConstraintSet | None = None
    cond_expect: Callable[[np.ndarray], np.ndarray] | None = None
    statistic_mean: Callable[[np.ndarray], np.ndarray] | None = None
    observed_indices: tuple[int, ...] = (0,)
    reference_point: np.ndarray | None = None
    m_step_solver: Callable[["IncompleteModel", np.ndarray, np.ndarray], np.ndarray] | None = None
    cond_kl: Callable[[np.ndarray, np.ndarray], float] | None = None
    name: str = ""

    @property
    def dim(self) -> int:
        return self.fam.dim

    @property
    def hidden_indices(self) -> tuple[int, ...]:
        return tuple(i for i in range(self.dim) if i not in self.observed_indices)

    def cond_expectation(self, theta: np.ndarray) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if self.cond_expect is not None:
            return np.asarray(self.cond_expect(theta), dtype=float)
        if self.psi_y is not None:
            return np.asarray(self.psi_y.grad_psi(theta), dtype=float)
        raise ModelInconsistencyError(f"model {self.name!r} has no conditional expectation oracle")

    def statistic_expectation(self, theta: np.ndarray) -> np.ndarray:
        if self.statistic_mean is not None:
            return np.asarray(self.statistic_mean(theta), dtype=float)
        return np.asarray(self.fam.grad_psi(theta), dtype=float)

    def neg_log_q(self, theta: np.ndarray) -> float:
        """Incomplete-data negative log-likelihood, up to an additive constant."""
        if self.psi_y is None:
            raise ModelInconsistencyError(
                f"model {self.name!r} has no conditional log-normalizer"
            )
        theta = np.asarray(theta, dtype=float)
        return float(self.fam.psi(theta)) - float(self.psi_y.psi(theta))

    def neg_log_q_grad(self, theta: np.ndarray) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        return np.asarray(self.fam.grad_psi(theta), dtype=float) - self.cond_expectation(theta)

    def neg_log_q_hess(self, theta: np.ndarray) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        return np.asarray(self.fam.hess_psi(theta), dtype=float) - conditional_fisher(self, theta)

    def objective(self) -> Objective:
        """The run objective f = -log q, with the family's domain margin."""
        return Objective(
            value=self.neg_log_q,
            gradient=self.neg_log_q_grad,
            hessian=self.neg_log_q_hess,
            domain_margin=self.fam.domain_margin,
        )


@dataclass(frozen=True)
class SplitCoordinates:
    """Rotation into accurate (leading m) and spare (trailing) coordinates."""

    Q: np.ndarray
    m: int
    P: np.ndarray
    eigenvalues: np.ndarray

    @property
    def P_perp(self) -> np.ndarray:
        return np.eye(self.P.shape[0]) - self.P

    def accurate(self, theta: np.ndarray) -> np.ndarray:
        return (self.Q @ np.asarray(theta, dtype=float))[: self.m]

    def spare(self, theta: np.ndarray) -> np.ndarray:
        return (self.Q @ np.asarray(theta, dtype=float))[self.m:]


@dataclass
class EMTrace(IterateTrace):
    """Iterate trace extended with completed statistics and split step norms."""

    t_values: list[np.ndarray] = field(default_factory=list)
    dprime_step_norms: list[float] = field(default_factory=list)
    split: SplitCoordinates | None = None

    @property
    def prime_step_norms(self) -> list[float]:
        return self.proj_step_norms


def e_step(model: IncompleteModel, theta: np.ndarray) -> np.ndarray:
    """Complete the data: t+ = E_theta[T(x) | y]."""
    theta = np.asarray(theta, dtype=float)
    model.fam.require_interior(theta, "E-step parameter")
    return model.cond_expectation(theta)


def m_step(
    model: IncompleteModel,
    t: np.ndarray,
    theta_prev: np.ndarray | None = None,
    opts: SolveOptions | None = None,
) -> np.ndarray:
    """Minimize psi(theta) - theta.t over the model constraint set.

    Unconstrained models use the closed dual map (gradient inversion); a
    statistic outside the dual domain then raises DualDomainError, the
    boundary pathology of incomplete-data likelihoods.
    """
    t = np.asarray(t, dtype=float)
    if model.m_step_solver is not None:
        prev = theta_prev if theta_prev is not None else model.reference_point
        return np.asarray(model.m_step_solver(model, t, prev), dtype=float)
    M = model.M
    if M is None or M.kind == "all":
        return dual_param(model.fam, t)
    fam = model.fam

    def value(th):
        return float(fam.psi(th)) - float(np.dot(th, t))

    def grad(th):
        return np.asarray(fam.grad_psi(th), dtype=float) - t

    start = theta_prev if theta_prev is not None else (
        model.reference_point if model.reference_point is not None else np.zeros(model.dim)
    )
    return constrained_minimize(M, value, grad, fam.hess_psi, np.asarray(start, dtype=float), opts)


def conditional_fisher(model: IncompleteModel, theta: np.ndarray, psd_tol: float = 1e-8) -> np.ndarray:
    """Missing-data information matrix: the Hessian of psi_y at theta."""
    theta = np.asarray(theta, dtype=float)
    if model.psi_y is not None:
        H = np.asarray(model.psi_y.hess_psi(theta), dtype=float)
    elif model.cond_kl is not None:
        H = finite_diff_hess(lambda tp: model.cond_kl(theta, tp), theta)
    else:
        raise ModelInconsistencyError(
            f"model {model.name!r} has neither psi_y nor a conditional KL oracle"
        )
    eig = sym_eig(H)
    lmax = max(float(eig.values[0]), 0.0)
    if eig.values[-1] < -psd_tol * max(lmax, 1.0):
        raise ModelInconsistencyError(
            f"conditional Fisher matrix has negative eigenvalue {eig.values[-1]:.3e}"
        )
    return H


def split_parameters(model: IncompleteModel, theta: np.ndarray, rel_tol: float = 1e-8) -> SplitCoordinates:
    """Accurate/spare split from the spectrum of the missing-data information."""
    H = conditional_fisher(model, theta)
    eig = sym_eig(H)
    m = rank_with_tol(np.maximum(eig.values, 0.0), rel_tol)
    Q, P = projection_from_eigvecs(eig, m)
    return SplitCoordinates(Q=Q, m=m, P=P, eigenvalues=eig.values)


def kl_em_regularizer(model: IncompleteModel, theta_ref: np.ndarray | None = None) -> RegularizerSpec:
    """The proximal penalty whose lambda = 1 iteration reproduces EM.

    Psi(theta+, theta) is the conditional KL distance K_y(theta || theta+),
    which equals the Bregman distance of psi_y with arguments swapped.  Its
    projection P comes from the accurate/spare split at ``theta_ref``.
    """
    if model.psi_y is None:
        raise ModelInconsistencyError(
            f"model {model.name!r} has no conditional log-normalizer; "
            "the KL regularizer is unavailable"
        )
    ref = theta_ref if theta_ref is not None else model.reference_point
    if ref is None:
        raise ValueError("theta_ref required: model has no reference point")
    split = split_parameters(model, np.asarray(ref, dtype=float))
    psi_y = model.psi_y
    return RegularizerSpec(
        psi_reg=lambda xp, x: bregman_div(psi_y, xp, x),
        grad1=lambda xp, x: np.asarray(psi_y.grad_psi(xp)) - np.asarray(psi_y.grad_psi(x)),
        hess1=lambda xp, x: np.asarray(psi_y.hess_psi(xp)),
        P=split.P,
        kind="kl-conditional",
    )


def regularized_em_step(
    model: IncompleteModel,
    theta_k: np.ndarray,
    lam: float,
    split: SplitCoordinates,
    opts: SolveOptions | None = None,
) -> np.ndarray:
    """M step with the spare coordinates pinned by a quadratic penalty.

    Solves min over M of psi(theta) - theta.t + (1/lam) ||theta'' - theta_k''||^2,
    which regularizes exactly the directions the conditional KL ignores.
    """
    theta_k = np.asarray(theta_k, dtype=float)
    t = e_step(model, theta_k)
    fam = model.fam
    perp = split.P_perp
    inv_lam = 1.0 / lam

    def value(th):
        dz = perp @ (np.asarray(th, dtype=float) - theta_k)
        return float(fam.psi(th)) - float(np.dot(th, t)) + inv_lam * float(np.dot(dz, dz))

    def grad(th):
        th = np.asarray(th, dtype=float)
        return np.asarray(fam.grad_psi(th), dtype=float) - t + 2.0 * inv_lam * (perp @ (th - theta_k))

    def hess(th):
        return np.asarray(fam.hess_psi(th), dtype=float) + 2.0 * inv_lam * perp

    M = model.M
    if M is not None and M.kind in ("sublevel", "explicit"):
        # Convex built-ins: accept the unconstrained solution when feasible.
        cand = constrained_minimize(None, value, grad, hess, theta_k, opts)
        if M.contains(cand, tol=1e-9):
            return cand
    return constrained_minimize(M, value, grad, hess, theta_k, opts)


def em_run(
    model: IncompleteModel,
    theta0: np.ndarray,
    cfg: ProxConfig | None = None,
    mode: str = "plain",
    lam: float = 1.0,
    split: SplitCoordinates | None = None,
    recompute_split: bool = False,
) -> EMTrace:
    """Alternate E and M steps, recording the trace in split coordinates.

    The incomplete-data value is asserted non-increasing (within 1e-12) at
    every step.  ``mode="regularized"`` uses the spare-penalized M step of
    ``regularized_em_step`` with the given lambda.
    """
    cfg = cfg or ProxConfig()
    theta = np.asarray(theta0, dtype=float).copy()
    model.fam.require_interior(theta, "EM start")
    if model.M is not None and not model.M.contains(theta, tol=1e-6):
        raise InfeasibleError(f"EM start {theta} is not in the constraint set")
    if split is None:
        split = split_parameters(model, theta)
    P, perp = split.P, split.P_perp

    trace = EMTrace(P=P, split=split)
    f_val = model.neg_log_q(theta)
    trace.append(
        theta, f_val, 0.0, 0.0, 0.0,
        residual=float(np.linalg.norm(model.neg_log_q_grad(theta))),
        lam=lam, margin=float(model.fam.domain_margin(theta)),
    )
    trace.t_values.append(model.cond_expectation(theta))
    trace.dprime_step_norms.append(0.0)

    opts = SolveOptions(tol=cfg.inner_tol, max_iter=cfg.inner_max_iter)
    for _ in range(cfg.max_iter):
        t = model.cond_expectation(theta)
        if mode == "regularized":
            theta_new = regularized_em_step(model, theta, lam, split, opts)
        else:
            theta_new = m_step(model, t, theta_prev=theta, opts=opts)
        if recompute_split:
            split = split_parameters(model, theta_new)
            P, perp = split.P, split.P_perp
            trace.split = split
        f_new = model.neg_log_q(theta_new)
        if f_new > f_val + 1e-12:
            raise NonConvergenceError(
                f"-log q increased from {f_val:.12e} to {f_new:.12e}; "
                "the M step failed to descend",
                last_iterate=theta_new,
            )
        e = _tangent_residual(model, theta_new, t)
        psi_val = (
            bregman_div(model.psi_y, theta_new, theta) if model.psi_y is not None else 0.0
        )
        diff = theta_new - theta
        trace.append(
            theta_new, f_new, psi_val,
            step=float(np.linalg.norm(diff)),
            proj_step=float(np.linalg.norm(P @ diff)),
            residual=float(np.linalg.norm(e)),
            lam=lam,
            margin=float(model.fam.domain_margin(theta_new)),
        )
        trace.t_values.append(t)
        trace.dprime_step_norms.append(float(np.linalg.norm(perp @ diff)))
        theta, f_val = theta_new, f_new
        if trace.margins[-1] <= cfg.margin_alarm:
            trace.stop_reason = "boundary"
            trace.boundary_flag = True
            break
        measure = trace.proj_step_norms[-1] if cfg.stop_on == "proj_step" else trace.step_norms[-1]
        if cfg.stop_on != "none" and measure <= cfg.step_tol:
            trace.stop_reason = "step_tol"
            break
    else:
        trace.stop_reason = "max_iter"
    return trace


def _tangent_residual(model: IncompleteModel, theta: np.ndarray, t: np.ndarray) -> np.ndarray:
    """First-order residual grad psi(theta) - t, projected onto feasible directions."""
    e = np.asarray(model.fam.grad_psi(theta), dtype=float) - t
    M = model.M
    if M is None or M.kind == "all":
        return e
    if M.kind == "point":
        return np.zeros_like(e)
    if M.kind == "affine":
        _, basis = M.affine_parameterization()
        return basis @ (basis.T @ e)
    if M.kind == "curve" and M.dtheta_fn is not None:
        u = M.nearest_u(theta)
        tau = np.asarray(M.dtheta_fn(u), dtype=float)
        n = float(np.linalg.norm(tau))
        if n > 0:
            tau = tau / n
            return tau * float(np.dot(tau, e))
    return e


@dataclass(frozen=True)
class SplitSolveResult:
    theta_dprime: np.ndarray
    theta_full: np.ndarray
    hess_min_eig: float
    hess_positive: bool


def split_program_solve(
    model: IncompleteModel,
    theta_prime: np.ndarray,
    split: SplitCoordinates | None = None,
    opts: SolveOptions | None = None,
) -> SplitSolveResult:
    """Minimize -log q over the spare coordinates with the accurate ones fixed.

    Reports whether the spare-block Hessian of -log q at the solution is
    positive definite (it must be when the complete family is minimal).
    """
    if split is None:
        if model.reference_point is None:
            raise ValueError("split or a model reference point is required")
        split = split_parameters(model, model.reference_point)
    theta_prime = np.atleast_1d(np.asarray(theta_prime, dtype=float))
    if theta_prime.size != split.m:
        raise ValueError(f"theta_prime has size {theta_prime.size}, expected {split.m}")
    Q = split.Q
    n, m = Q.shape[0], split.m

    def lift(z: np.ndarray) -> np.ndarray:
        return Q.T @ np.concatenate([theta_prime, np.atleast_1d(z)])

    M = model.M
    if M is not None and M.kind == "point":
        cand = M.x0
        if np.linalg.norm(split.accurate(cand) - theta_prime) > 1e-8:
            raise InfeasibleError("the fixed accurate coordinates miss the singleton constraint")
        z_star = split.spare(cand)
    elif M is not None and M.kind == "curve":
        z_star = _split_solve_on_curve(model, M, split, theta_prime)
    elif M is None or M.kind == "all":
        def value(z):
            return model.neg_log_q(lift(z))

        def grad(z):
            return (Q @ model.neg_log_q_grad(lift(z)))[m:]

        def hess(z):
            return (Q @ model.neg_log_q_hess(lift(z)) @ Q.T)[m:, m:]

        z0 = split.spare(model.reference_point if model.reference_point is not None else np.zeros(n))
        opts = opts or SolveOptions(tol=1e-11, max_iter=200)
        z_star = constrained_minimize(None, value, grad, hess, z0, opts)
    else:
        raise InfeasibleError(f"split program does not support constraint kind {M.kind!r}")

    theta_full = lift(z_star)
    Hzz = (Q @ model.neg_log_q_hess(theta_full) @ Q.T)[m:, m:]
    if Hzz.size:
        lmin = float(sym_eig(Hzz).values[-1])
    else:
        lmin = math.inf
    return SplitSolveResult(
        theta_dprime=np.atleast_1d(z_star),
        theta_full=theta_full,
        hess_min_eig=lmin,
        hess_positive=lmin > 0.0,
    )


def _split_solve_on_curve(model, M, split, theta_prime) -> np.ndarray:
    """Enumerate curve points whose accurate coordinates match, keep the best."""
    lo, hi = M.u_range
    us = np.linspace(lo, hi, max(M.grid, 64))

    def mismatch(u: float) -> float:
        return float(np.linalg.norm(split.accurate(np.asarray(M.theta_fn(u))) - theta_prime))

    vals = np.array([mismatch(u) for u in us])
    candidates = []
    for i in range(len(us)):
        left = vals[i - 1] if i > 0 else math.inf
        right = vals[i + 1] if i < len(us) - 1 else math.inf
        if vals[i] <= left and vals[i] <= right:
            u = minimize_scalar(
                mismatch, (us[max(i - 1, 0)], us[min(i + 1, len(us) - 1)]), 16
            )
            if mismatch(u) <= 1e-8 * max(1.0, float(np.linalg.norm(theta_prime))):
                candidates.append(u)
    if not candidates:
        raise InfeasibleError("empty section: no curve point matches the accurate coordinates")
    best = min(candidates, key=lambda u: model.neg_log_q(np.asarray(M.theta_fn(u))))
    return split.spare(np.asarray(M.theta_fn(best)))


@dataclass(frozen=True)
class BoundaryReport:
    classification: str  # "interior-safe" | "approaching-boundary"
    margins: np.ndarray
    threshold: float


def boundary_monitor(
    model: IncompleteModel,
    trace: IterateTrace,
    threshold: float = 1e-6,
    tail_fraction: float = 0.1,
) -> BoundaryReport:
    """Classify a finished run by its domain margins on the trailing iterates.

    The threshold is inclusive: a tail margin exactly at the threshold counts
    as approaching the boundary.
    """
    if len(trace) == 0:
        raise ValueError("trace is empty")
    margins = np.array(
        [float(model.fam.domain_margin(np.asarray(p))) for p in trace.points]
    )
    tail = max(1, int(math.ceil(tail_fraction * len(margins))))
    approaching = bool(np.min(margins[-tail:]) <= threshold)
    return BoundaryReport(
        classification="approaching-boundary" if approaching else "interior-safe",
        margins=margins,
        threshold=threshold,
    )


# ---------------------------------------------------------------------------
# Built-in incomplete-data models
# ---------------------------------------------------------------------------


def gaussian_missing_model(
    y: float, n_samples: int = 2, constraint: ConstraintSet | None = None
) -> IncompleteModel:
    """Normal sample with the mean observed and the mean of squares hidden.

    psi_y(theta) = theta_1 y + theta_2 y^2 - ((N-1)/2) log(-theta_2), up to
    an additive constant; its gradient (y, y^2 + (N-1) sigma^2 / N) is the
    completed statistic.
    """
    N = float(n_samples)
    y = float(y)
    fam = gaussian_family(n_samples)

    def psi_y(th):
        t1, t2 = th
        return t1 * y + t2 * y * y - ((N - 1.0) / 2.0) * math.log(-t2)

    def grad_y(th):
        _, t2 = th
        return np.array([y, y * y - (N - 1.0) / (2.0 * t2)])

    def hess_y(th):
        _, t2 = th
        return np.array([[0.0, 0.0], [0.0, (N - 1.0) / (2.0 * t2 * t2)]])

    cond = LegendreGenerator(
        dim=2,
        psi=psi_y,
        grad_psi=grad_y,
        hess_psi=hess_y,
        domain_margin=lambda th: -float(th[1]),
        name=f"gaussian{n_samples}-conditional",
    )
    return IncompleteModel(
        fam=fam,
        y=y,
        psi_y=cond,
        M=constraint,
        observed_indices=(0,),
        reference_point=np.array([0.0, -1.0]),
        name=f"gaussian{n_samples}-missing",
    )


def gaussian_samplevar_model(y: float, n_samples: int = 2) -> IncompleteModel:
    """Gaussian sample tracked through the statistic (mean, sample variance).

    The hidden statistic s^2 is independent of the observed mean, so its
    conditional and unconditional expectations agree (both sigma^2); this
    is the statistic choice under which E step and e-step coincide.
    """
    N = float(n_samples)
    y = float(y)
    fam = gaussian_family(n_samples)

    def sigma2(th):
        return -N / (2.0 * float(th[1]))

    def mu(th):
        return -float(th[0]) / (2.0 * float(th[1]))

    return IncompleteModel(
        fam=fam,
        y=y,
        psi_y=None,
        M=None,
        cond_expect=lambda th: np.array([y, sigma2(th)]),
        statistic_mean=lambda th: np.array([mu(th), sigma2(th)]),
        observed_indices=(0,),
        reference_point=np.array([0.0, -1.0]),
        name=f"gaussian{n_samples}-samplevar",
    )


def bivariate_missing_model(y: float, rho: float = 0.5) -> IncompleteModel:
    """Bivariate Gaussian location family with x1 observed and x2 hidden.

    Complete data x ~ N(Sigma theta, Sigma) with unit variances and
    correlation rho; the accurate parameter is the hidden coordinate's
    natural parameter theta_2.
    """
    if not -1.0 < rho < 1.0:
        raise ValueError("rho must lie in (-1, 1)")
    y = float(y)
    S = np.array([[1.0, rho], [rho, 1.0]])
    S_inv = np.linalg.inv(S)

    fam = ExpFamily(
        dim=2,
        psi=lambda th: 0.5 * float(th @ S @ th),
        grad_psi=lambda th: S @ np.asarray(th, dtype=float),
        hess_psi=lambda th: S.copy(),
        domain_margin=lambda th: math.inf,
        name=f"bivariate-gaussian(rho={rho})",
        dual_map=lambda eta: S_inv @ np.asarray(eta, dtype=float),
        conjugate=lambda eta: 0.5 * float(eta @ S_inv @ eta),
        dual_margin=lambda eta: math.inf,
        anchor=np.zeros(2),
        statistic_label="identity statistic (x1, x2)",
    )

    one_m_r2 = 1.0 - rho * rho

    cond = LegendreGenerator(
        dim=2,
        psi=lambda th: float(th[0]) * y + rho * y * float(th[1]) + 0.5 * one_m_r2 * float(th[1]) ** 2,
        grad_psi=lambda th: np.array([y, rho * y + one_m_r2 * float(th[1])]),
        hess_psi=lambda th: np.array([[0.0, 0.0], [0.0, one_m_r2]]),
        domain_margin=lambda th: math.inf,
        name="bivariate-conditional",
    )
    return IncompleteModel(
        fam=fam,
        y=y,
        psi_y=cond,
        M=None,
        observed_indices=(0,),
        reference_point=np.zeros(2),
        name=f"bivariate-gaussian-missing(rho={rho})",
    )


def duplicated_statistic_model(
    y: float = 0.0, strip: float = 1.0, osc: float = 0.5
) -> IncompleteModel:
    """Non-minimal family with a duplicated statistic; the free-choice exhibit.

    The complete statistic is (T0, T0) with T0 = x1 + x2 over a standard
    normal base, so every distribution depends on s = theta_1 + theta_2
    only and the M-step solution set is a whole line in the spare direction
    d = theta_1 - theta_2.  The plain M step documents its selection rule:
    it alternates between the two admissible points d = +/- osc, both exact
    global minimizers, modeling the solution freedom that makes the spare
    sequence wander.  The quadratic spare penalty of regularized EM removes
    that freedom.
    """
    y = float(y)

    def s_of(th):
        return float(th[0]) + float(th[1])

    fam = ExpFamily(
        dim=2,
        psi=lambda th: s_of(th) ** 2,
        grad_psi=lambda th: 2.0 * s_of(th) * np.ones(2),
        hess_psi=lambda th: 2.0 * np.ones((2, 2)),
        domain_margin=lambda th: math.inf,
        name="duplicated-sum",
        statistic_label="(T0, T0) with T0 = x1 + x2, standard normal base",
    )
    cond = LegendreGenerator(
        dim=2,
        psi=lambda th: s_of(th) * y + 0.5 * s_of(th) ** 2,
        grad_psi=lambda th: (y + s_of(th)) * np.ones(2),
        hess_psi=lambda th: np.ones((2, 2)),
        domain_margin=lambda th: math.inf,
        name="duplicated-conditional",
    )
    M = ConstraintSet.sublevel(
        lambda th: np.array([abs(float(th[0]) - float(th[1])) - strip]), dim=2
    )

    def selector(model, t, theta_prev):
        s_new = 0.5 * float(t[0])
        d_prev = float(theta_prev[0]) - float(theta_prev[1])
        d_new = osc if d_prev <= 0.0 else -osc
        return np.array([0.5 * (s_new + d_new), 0.5 * (s_new - d_new)])

    return IncompleteModel(
        fam=fam,
        y=y,
        psi_y=cond,
        M=M,
        observed_indices=(0,),
        reference_point=np.array([0.5, 0.5]),
        m_step_solver=selector,
        name="duplicated-statistic",
    )


def model_from_config(spec: dict) -> IncompleteModel:
    """Build a model from a config mapping {"model": name, "y": value, ...}."""
    from .cli import constraint_from_config  # late import: config grammar lives with the CLI

    kind = spec.get("model")
    y = float(spec.get("y", 0.0))
    constraint = None
    if spec.get("constraint") is not None:
        constraint = constraint_from_config(spec["constraint"])
    if kind == "gaussian2-missing":
        return gaussian_missing_model(y, n_samples=int(spec.get("n_samples", 2)), constraint=constraint)
    if kind == "gaussian2-samplevar":
        return gaussian_samplevar_model(y, n_samples=int(spec.get("n_samples", 2)))
    if kind == "bivariate-gaussian-missing":
        return bivariate_missing_model(y, rho=float(spec.get("rho", 0.5)))
    if kind == "duplicated-statistic":
        return duplicated_statistic_model(
            y, strip=float(spec.get("strip", 1.0)), osc=float(spec.get("osc", 0.5))
        )
    raise ValueError(f"unknown model {kind!r}")
