"""Bregman divergences and left/right projections onto constraint sets."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from ._minimize import SolveOptions, constrained_minimize, minimize_scalar
from .errors import DomainError, InfeasibleError
from .expfam import LegendreGenerator
from .numerics import rank_with_tol, sym_eig

__all__ = [
    "ConstraintSet",
    "ProjectionOptions",
    "bregman_div",
    "kl_divergence",
    "left_projection",
    "right_projection",
]


@dataclass(frozen=True)
class ConstraintSet:
    """A set of admissible parameters, in one of a few canonical shapes.

    kinds:
      all        whole space
      point      a single fixed parameter
      affine     {x : C x = d}
      curve      {theta(u) : u in [u_lo, u_hi]} for scalar u
      sublevel   {x : g(x) <= 0 componentwise}
      explicit   membership plus a user-supplied feasibility projector
    """

    kind: str
    dim: int
    C: np.ndarray | None = None
    d: np.ndarray | None = None
    x0: np.ndarray | None = None
    g: Callable[[np.ndarray], np.ndarray] | None = None
    theta_fn: Callable[[float], np.ndarray] | None = None
    dtheta_fn: Callable[[float], np.ndarray] | None = None
    u_range: tuple[float, float] | None = None
    grid: int = 512
    project_fn: Callable[[np.ndarray], np.ndarray] | None = None
    member_fn: Callable[[np.ndarray], bool] | None = None

    @staticmethod
    def everything(dim: int) -> "ConstraintSet":
        return ConstraintSet(kind="all", dim=dim)

    @staticmethod
    def point(x0: np.ndarray) -> "ConstraintSet":
        x0 = np.asarray(x0, dtype=float)
        return ConstraintSet(kind="point", dim=x0.size, x0=x0)

    @staticmethod
    def affine(C: np.ndarray, d: np.ndarray) -> "ConstraintSet":
        C = np.atleast_2d(np.asarray(C, dtype=float))
        d = np.atleast_1d(np.asarray(d, dtype=float))
        return ConstraintSet(kind="affine", dim=C.shape[1], C=C, d=d)

    @staticmethod
    def curve(
        theta_fn: Callable[[float], np.ndarray],
        u_range: tuple[float, float],
        dtheta_fn: Callable[[float], np.ndarray] | None = None,
        grid: int = 512,
    ) -> "ConstraintSet":
        dim = np.asarray(theta_fn(0.5 * (u_range[0] + u_range[1]))).size
        return ConstraintSet(
            kind="curve", dim=dim, theta_fn=theta_fn, dtheta_fn=dtheta_fn,
            u_range=(float(u_range[0]), float(u_range[1])), grid=grid,
        )

    @staticmethod
    def sublevel(g: Callable[[np.ndarray], np.ndarray], dim: int) -> "ConstraintSet":
        return ConstraintSet(kind="sublevel", dim=dim, g=g)

    @staticmethod
    def explicit(
        project_fn: Callable[[np.ndarray], np.ndarray],
        dim: int,
        member_fn: Callable[[np.ndarray], bool] | None = None,
    ) -> "ConstraintSet":
        return ConstraintSet(kind="explicit", dim=dim, project_fn=project_fn, member_fn=member_fn)

    def contains(self, x: np.ndarray, tol: float = 1e-8) -> bool:
        x = np.asarray(x, dtype=float)
        if self.kind == "all":
            return True
        if self.kind == "point":
            return bool(np.linalg.norm(x - self.x0) <= tol)
        if self.kind == "affine":
            return bool(
                np.linalg.norm(self.C @ x - self.d) <= tol * max(1.0, float(np.linalg.norm(self.d)))
            )
        if self.kind == "sublevel":
            return bool(np.all(np.atleast_1d(self.g(x)) <= tol))
        if self.kind == "curve":
            u = self.nearest_u(x)
            return bool(np.linalg.norm(np.asarray(self.theta_fn(u)) - x) <= tol)
        if self.kind == "explicit":
            if self.member_fn is not None:
                return bool(self.member_fn(x))
            return bool(np.linalg.norm(self.project_fn(x) - x) <= tol)
        raise ValueError(f"unknown constraint kind {self.kind!r}")

    def nearest_u(self, x: np.ndarray) -> float:
        """Curve parameter minimizing euclidean distance to x."""
        assert self.kind == "curve"
        x = np.asarray(x, dtype=float)

        def dist2(u: float) -> float:
            diff = np.asarray(self.theta_fn(u)) - x
            return float(np.dot(diff, diff))

        deriv = None
        if self.dtheta_fn is not None:
            def deriv(u: float) -> float:
                return 2.0 * float(
                    np.dot(np.asarray(self.dtheta_fn(u)), np.asarray(self.theta_fn(u)) - x)
                )

        return minimize_scalar(dist2, self.u_range, self.grid, deriv)

    def affine_parameterization(self, rel_tol: float = 1e-10) -> tuple[np.ndarray, np.ndarray]:
        """Particular solution and orthonormal null-space basis of C x = d."""
        assert self.kind == "affine"
        C, d = self.C, self.d
        xp, *_ = np.linalg.lstsq(C, d, rcond=None)
        if np.linalg.norm(C @ xp - d) > 1e-8 * max(1.0, float(np.linalg.norm(d))):
            raise InfeasibleError("affine constraint C x = d has no solution")
        eig = sym_eig(C.T @ C)
        r = rank_with_tol(np.maximum(eig.values, 0.0), rel_tol)
        return xp, eig.vectors[:, r:]


# Options alias kept under the name the projection API documents.
ProjectionOptions = SolveOptions


def _psi_at(gen: LegendreGenerator, x: np.ndarray) -> float:
    try:
        return float(gen.psi(np.asarray(x, dtype=float)))
    except DomainError:
        raise
    except (ValueError, FloatingPointError, ZeroDivisionError, OverflowError) as exc:
        raise DomainError(f"psi undefined at {x}: {exc}") from exc


def bregman_div(gen: LegendreGenerator, x: np.ndarray, y: np.ndarray) -> float:
    """D(x, y) = psi(x) - psi(y) - <grad psi(y), x - y>.

    Returns +inf (rather than raising) when y is not interior, matching the
    extended-value definition.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if not float(gen.domain_margin(y)) > 0.0:
        return math.inf
    return _psi_at(gen, x) - _psi_at(gen, y) - float(np.dot(gen.grad_psi(y), x - y))


def kl_divergence(fam: LegendreGenerator, theta: np.ndarray, theta_plus: np.ndarray) -> float:
    """KL distance between family members: K(theta || theta+) = D(theta+, theta)."""
    return bregman_div(fam, theta_plus, theta)


def left_projection(
    gen: LegendreGenerator,
    M: ConstraintSet,
    anchor: np.ndarray,
    opts: SolveOptions | None = None,
) -> np.ndarray:
    """Local minimizer over M of theta -> D(theta, anchor).

    Deterministic: multi-modal curve objectives are resolved by the grid
    bracket, with ties going to the smallest parameter; affine sets start
    from ``opts.start`` (default: the anchor).
    """
    anchor = np.asarray(anchor, dtype=float)
    gen.require_interior(anchor, "projection anchor")
    grad_anchor = np.asarray(gen.grad_psi(anchor), dtype=float)

    def value(th):
        return bregman_div(gen, th, anchor)

    def grad(th):
        return np.asarray(gen.grad_psi(th), dtype=float) - grad_anchor

    return constrained_minimize(M, value, grad, gen.hess_psi, anchor, opts)


def right_projection(
    gen: LegendreGenerator,
    S: ConstraintSet,
    anchor: np.ndarray,
    opts: SolveOptions | None = None,
) -> np.ndarray:
    """Local minimizer over S of vartheta -> D(anchor, vartheta)."""
    anchor = np.asarray(anchor, dtype=float)
    gen.require_interior(anchor, "projection anchor")

    def value(th):
        return bregman_div(gen, anchor, th)

    def grad(th):
        th = np.asarray(th, dtype=float)
        return np.asarray(gen.hess_psi(th), dtype=float) @ (th - anchor)

    # The exact second derivative needs third derivatives of psi; the
    # finite-difference fallback inside the solver handles curvature.
    return constrained_minimize(S, value, grad, None, anchor, opts)
