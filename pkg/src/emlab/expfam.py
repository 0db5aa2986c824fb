"""Exponential families through their log-normalizers.

A family is represented by its convex log-normalizer psi on an open domain
G, together with analytic gradient and Hessian.  The gradient maps natural
parameters to expectation parameters; Legendre duality inverts it.  The
same bundle without statistic metadata serves as a generator for Bregman
divergences, so the Bregman module reuses this type.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DomainError, DualDomainError
from .numerics import newton_solve, sym_eig

__all__ = [
    "LegendreGenerator",
    "ExpFamily",
    "MinimalityReport",
    "log_normalizer",
    "mean_param",
    "dual_param",
    "legendre_conjugate",
    "check_minimality",
    "affine_reduce",
    "gaussian_family",
    "gaussian_to_moments",
    "gaussian_from_moments",
    "quadratic_generator",
    "negentropy_generator",
    "family_from_name",
]


@dataclass(frozen=True)
class LegendreGenerator:
    """Convex generator psi with derivatives and a scalar domain margin.

    ``domain_margin(x)`` is positive in the interior of the domain and
    non-positive outside; its magnitude is the family's own notion of
    distance to the boundary (for the Gaussian family it is -theta_2).
    Closed-form duality pieces are optional; when absent, ``dual_param``
    inverts the gradient by Newton from ``anchor``.
    """

    dim: int
    psi: Callable[[np.ndarray], float]
    grad_psi: Callable[[np.ndarray], np.ndarray]
    hess_psi: Callable[[np.ndarray], np.ndarray]
    domain_margin: Callable[[np.ndarray], float]
    name: str = ""
    dual_map: Callable[[np.ndarray], np.ndarray] | None = None
    conjugate: Callable[[np.ndarray], float] | None = None
    dual_margin: Callable[[np.ndarray], float] | None = None
    anchor: np.ndarray | None = None

    def require_interior(self, x: np.ndarray, what: str = "point") -> None:
        m = float(self.domain_margin(np.asarray(x, dtype=float)))
        if not m > 0.0:
            raise DomainError(
                f"{what} {np.asarray(x)} is outside the open domain of {self.name or 'psi'} "
                f"(margin {m:.3e})",
                margin=m,
            )


@dataclass(frozen=True)
class ExpFamily(LegendreGenerator):
    """Exponential family: a Legendre generator plus statistic metadata."""

    statistic_label: str = ""


@dataclass(frozen=True)
class MinimalityReport:
    points: np.ndarray
    lambda_mins: np.ndarray
    passed: bool


def log_normalizer(fam: LegendreGenerator, theta: np.ndarray) -> float:
    """psi(theta); raises DomainError (carrying the margin) outside G."""
    theta = np.asarray(theta, dtype=float)
    fam.require_interior(theta, "natural parameter")
    return float(fam.psi(theta))


def mean_param(fam: LegendreGenerator, theta: np.ndarray) -> np.ndarray:
    """Expectation parameter eta = grad psi(theta) = E_theta[T(x)]."""
    theta = np.asarray(theta, dtype=float)
    fam.require_interior(theta, "natural parameter")
    return np.asarray(fam.grad_psi(theta), dtype=float)


def dual_param(fam: LegendreGenerator, eta: np.ndarray, tol: float = 1e-11) -> np.ndarray:
    """Invert grad psi: the natural parameter with mean_param(theta) = eta.

    Uses the family's closed form when registered, otherwise Newton started
    from the family anchor.
    """
    eta = np.asarray(eta, dtype=float)
    if fam.dual_margin is not None and not float(fam.dual_margin(eta)) > 0.0:
        raise DualDomainError(
            f"eta {eta} lies outside the open dual domain of {fam.name or 'psi'}"
        )
    if fam.dual_map is not None:
        return np.asarray(fam.dual_map(eta), dtype=float)
    x0 = fam.anchor if fam.anchor is not None else np.zeros(fam.dim)
    res = newton_solve(
        lambda th: np.asarray(fam.grad_psi(th)) - eta,
        fam.hess_psi,
        x0,
        tol=tol,
    )
    if not res.converged:
        raise DualDomainError(
            f"gradient inversion failed for eta {eta} (residual {res.f_norm:.3e}); "
            "eta may lie outside the dual domain"
        )
    return res.x


def legendre_conjugate(fam: LegendreGenerator, eta: np.ndarray) -> float:
    """psi*(eta) = <theta, eta> - psi(theta) at theta = dual_param(eta)."""
    eta = np.asarray(eta, dtype=float)
    if fam.dual_margin is not None and not float(fam.dual_margin(eta)) > 0.0:
        raise DualDomainError(
            f"eta {eta} lies outside the open dual domain of {fam.name or 'psi'}"
        )
    if fam.conjugate is not None:
        return float(fam.conjugate(eta))
    theta = dual_param(fam, eta)
    return float(np.dot(theta, eta) - fam.psi(theta))


def check_minimality(
    fam: LegendreGenerator, sample_points: np.ndarray, pos_tol: float = 1e-10
) -> MinimalityReport:
    """Report the smallest Hessian eigenvalue at each point; pass iff all positive."""
    pts = np.atleast_2d(np.asarray(sample_points, dtype=float))
    mins = np.empty(len(pts))
    for i, th in enumerate(pts):
        fam.require_interior(th)
        eig = sym_eig(np.asarray(fam.hess_psi(th), dtype=float))
        mins[i] = eig.values[-1]
    scale = max(1.0, float(np.max(np.abs(mins))))
    return MinimalityReport(points=pts, lambda_mins=mins, passed=bool(np.all(mins > pos_tol * scale)))


def affine_reduce(fam: ExpFamily, A: np.ndarray, a: np.ndarray) -> ExpFamily:
    """Family restricted to the affine slice theta = (theta1, A theta1 + a).

    The reduced log-normalizer is psi'(theta1) = psi(theta1, A theta1 + a)
    and the statistic becomes T1 + A^T T2 (metadata only).
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    a = np.atleast_1d(np.asarray(a, dtype=float))
    k, m = A.shape
    if k + m != fam.dim:
        raise ValueError(
            f"constraint shape {A.shape} inconsistent with family dimension {fam.dim}"
        )
    if a.shape != (k,):
        raise ValueError(f"offset shape {a.shape} does not match {k} constrained coordinates")
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(a))):
        raise ValueError("constraint entries must be finite")

    def lift(t1: np.ndarray) -> np.ndarray:
        t1 = np.asarray(t1, dtype=float)
        return np.concatenate([t1, A @ t1 + a])

    def psi_r(t1):
        return fam.psi(lift(t1))

    def grad_r(t1):
        g = np.asarray(fam.grad_psi(lift(t1)))
        return g[:m] + A.T @ g[m:]

    def hess_r(t1):
        h = np.asarray(fam.hess_psi(lift(t1)))
        h11, h12, h22 = h[:m, :m], h[:m, m:], h[m:, m:]
        return h11 + h12 @ A + A.T @ h12.T + A.T @ h22 @ A

    return ExpFamily(
        dim=m,
        psi=psi_r,
        grad_psi=grad_r,
        hess_psi=hess_r,
        domain_margin=lambda t1: fam.domain_margin(lift(t1)),
        name=f"{fam.name}|affine",
        statistic_label=f"T1 + A^T T2 from {fam.statistic_label or fam.name}",
        anchor=None,
    )


# ---------------------------------------------------------------------------
# Built-in families and generators
# ---------------------------------------------------------------------------


def gaussian_family(n_samples: int = 2) -> ExpFamily:
    """Normal sample of size N with statistic (sample mean, mean of squares).

    Natural parameters theta = (N mu / sigma^2, -N / (2 sigma^2)) on
    G = R x (-inf, 0); the expectation parameter is (mu, mu^2 + sigma^2).
    All duality pieces are closed form.
    """
    N = float(n_samples)
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")

    def psi(th):
        t1, t2 = th
        return -t1 * t1 / (4.0 * t2) - (N / 2.0) * math.log(-t2)

    def grad(th):
        t1, t2 = th
        return np.array([-t1 / (2.0 * t2), t1 * t1 / (4.0 * t2 * t2) - N / (2.0 * t2)])

    def hess(th):
        t1, t2 = th
        h12 = t1 / (2.0 * t2 * t2)
        return np.array(
            [
                [-1.0 / (2.0 * t2), h12],
                [h12, -t1 * t1 / (2.0 * t2**3) + N / (2.0 * t2 * t2)],
            ]
        )

    def dual(eta):
        e1, e2 = eta
        t2 = N / (2.0 * (e1 * e1 - e2))
        return np.array([-2.0 * e1 * t2, t2])

    def conj(eta):
        e1, e2 = eta
        return -N / 2.0 - (N / 2.0) * math.log(e2 - e1 * e1) + (N / 2.0) * math.log(N / 2.0)

    return ExpFamily(
        dim=2,
        psi=psi,
        grad_psi=grad,
        hess_psi=hess,
        domain_margin=lambda th: -float(th[1]),
        name=f"gaussian{n_samples}",
        dual_map=dual,
        conjugate=conj,
        dual_margin=lambda eta: float(eta[1] - eta[0] * eta[0]),
        anchor=np.array([0.0, -1.0]),
        statistic_label=f"(sample mean, mean of squares) of {n_samples} normal draws",
    )


def gaussian_to_moments(theta: np.ndarray, n_samples: int = 2) -> tuple[float, float]:
    """(mu, sigma^2) from natural parameters."""
    t1, t2 = np.asarray(theta, dtype=float)
    return -t1 / (2.0 * t2), -n_samples / (2.0 * t2)


def gaussian_from_moments(mu: float, sigma2: float, n_samples: int = 2) -> np.ndarray:
    """Natural parameters from (mu, sigma^2)."""
    return np.array([n_samples * mu / sigma2, -n_samples / (2.0 * sigma2)])


def quadratic_generator(dim: int) -> LegendreGenerator:
    """psi(x) = ||x||^2 / 2; Bregman distance is half squared euclidean."""
    return LegendreGenerator(
        dim=dim,
        psi=lambda x: 0.5 * float(np.dot(x, x)),
        grad_psi=lambda x: np.asarray(x, dtype=float).copy(),
        hess_psi=lambda x: np.eye(dim),
        domain_margin=lambda x: math.inf,
        name=f"quadratic{dim}",
        dual_map=lambda eta: np.asarray(eta, dtype=float).copy(),
        conjugate=lambda eta: 0.5 * float(np.dot(eta, eta)),
        dual_margin=lambda eta: math.inf,
        anchor=np.zeros(dim),
    )


def negentropy_generator(dim: int) -> LegendreGenerator:
    """psi(x) = sum x_i log x_i - x_i on the positive orthant.

    The induced Bregman distance is the Kullback-Leibler distance on
    R^dim_+.  psi extends continuously to the boundary (0 log 0 = 0), so
    first arguments of the divergence may touch it.
    """

    def psi(x):
        x = np.asarray(x, dtype=float)
        if np.any(x < 0):
            raise DomainError("negentropy generator needs nonnegative coordinates")
        vals = np.where(x > 0, x * np.log(np.where(x > 0, x, 1.0)) - x, 0.0)
        return float(np.sum(vals))

    def grad(x):
        x = np.asarray(x, dtype=float)
        if np.any(x <= 0):
            raise DomainError("negentropy gradient needs positive coordinates")
        return np.log(x)

    def hess(x):
        x = np.asarray(x, dtype=float)
        if np.any(x <= 0):
            raise DomainError("negentropy Hessian needs positive coordinates")
        return np.diag(1.0 / x)

    return LegendreGenerator(
        dim=dim,
        psi=psi,
        grad_psi=grad,
        hess_psi=hess,
        domain_margin=lambda x: float(np.min(x)),
        name=f"negentropy{dim}",
        dual_map=lambda eta: np.exp(np.asarray(eta, dtype=float)),
        conjugate=lambda eta: float(np.sum(np.exp(eta))),
        dual_margin=lambda eta: math.inf,
        anchor=np.ones(dim),
    )


def family_from_name(name: str) -> LegendreGenerator:
    """Resolve config names: gaussian2, gaussianN:<N>, quadratic:<n>, negentropy:<n>."""
    name = name.strip().lower()
    if name == "gaussian2":
        return gaussian_family(2)
    if name.startswith("gaussiann:"):
        return gaussian_family(int(name.split(":", 1)[1]))
    if name.startswith("quadratic:"):
        return quadratic_generator(int(name.split(":", 1)[1]))
    if name.startswith("negentropy:"):
        return negentropy_generator(int(name.split(":", 1)[1]))
    raise ValueError(f"unknown family name {name!r}")
