"""Dense symmetric eigensolver, Newton root finder, finite differences.

Self-contained kernels for the small (n <= ~10) problems the rest of the
library produces.  The eigensolver is a cyclic Jacobi iteration, which at
these sizes is simple and accurate to near machine precision.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DomainError, NonConvergenceError

__all__ = [
    "EigDecomposition",
    "NewtonResult",
    "sym_eig",
    "rank_with_tol",
    "projection_from_eigvecs",
    "newton_solve",
    "finite_diff_grad",
    "finite_diff_hess",
]


@dataclass(frozen=True)
class EigDecomposition:
    """Spectral factorization A = V diag(values) V^T.

    ``values`` are sorted non-increasing and ``vectors`` holds the matching
    orthonormal eigenvectors as columns.
    """

    values: np.ndarray
    vectors: np.ndarray

    @property
    def dim(self) -> int:
        return self.values.shape[0]


@dataclass
class NewtonResult:
    x: np.ndarray
    f_norm: float
    iterations: int
    converged: bool
    message: str = ""

    def unwrap(self) -> np.ndarray:
        """Return the solution, raising if the solve did not converge."""
        if not self.converged:
            raise NonConvergenceError(
                f"newton_solve failed: {self.message} (residual {self.f_norm:.3e})",
                last_iterate=self.x,
                residual=self.f_norm,
            )
        return self.x


def _as_sym(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    scale = max(1.0, float(np.max(np.abs(a))))
    if np.max(np.abs(a - a.T)) > 1e-12 * scale:
        raise ValueError("matrix is not symmetric")
    return 0.5 * (a + a.T)


def sym_eig(a: np.ndarray, tol: float = 1e-14, max_sweeps: int = 60) -> EigDecomposition:
    """Eigendecompose a symmetric matrix by cyclic Jacobi rotations."""
    a = _as_sym(a)
    n = a.shape[0]
    v = np.eye(n)
    if n == 1:
        return EigDecomposition(values=a[0].copy(), vectors=v)
    a = a.copy()
    scale = max(1.0, float(np.max(np.abs(a))))
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.tril(a, -1) ** 2))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-300:
                    continue
                tau = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = np.sign(tau) / (abs(tau) + np.hypot(1.0, tau)) if tau != 0 else 1.0
                c = 1.0 / np.hypot(1.0, t)
                s = t * c
                rot = np.array([[c, -s], [s, c]])
                a[[p, q], :] = rot @ a[[p, q], :]
                a[:, [p, q]] = a[:, [p, q]] @ rot.T
                a[p, q] = a[q, p] = 0.0
                v[:, [p, q]] = v[:, [p, q]] @ rot.T
    values = np.diag(a).copy()
    order = np.argsort(-values, kind="stable")
    return EigDecomposition(values=values[order], vectors=v[:, order])


def rank_with_tol(values: np.ndarray, rel_tol: float = 1e-8) -> int:
    """Numerical rank of a PSD spectrum: count of values above rel_tol*max(lmax, 1).

    Rejects spectra with a clearly negative eigenvalue, which signals that
    the input matrix was not positive semidefinite.
    """
    values = np.asarray(values, dtype=float)
    lmax = float(values.max(initial=0.0))
    floor = rel_tol * max(lmax, 1.0)
    if values.min(initial=0.0) < -10.0 * floor:
        raise ValueError(
            f"spectrum has a strongly negative eigenvalue ({values.min():.3e}); "
            "input is not PSD"
        )
    return int(np.sum(values > floor))


def projection_from_eigvecs(decomp: EigDecomposition, m: int) -> tuple[np.ndarray, np.ndarray]:
    """Rotation Q and orthogonal projection P onto the leading m eigenvectors.

    Q has the eigenvectors as rows, so Q x lists the coordinate of x along
    each eigenvector, leading ones first.  P = V_m V_m^T projects onto their
    span.
    """
    n = decomp.dim
    if not 0 <= m <= n:
        raise ValueError(f"m={m} out of range for dimension {n}")
    vm = decomp.vectors[:, :m]
    p = vm @ vm.T
    q = decomp.vectors.T
    return q, p


def newton_solve(
    F: Callable[[np.ndarray], np.ndarray],
    J: Callable[[np.ndarray], np.ndarray],
    x0: np.ndarray,
    tol: float = 1e-10,
    max_iter: int = 100,
) -> NewtonResult:
    """Damped Newton iteration on F(x) = 0 with a halving line search on ||F||.

    A singular Jacobian falls back to a least-squares step.  Returns a
    result object; call ``.unwrap()`` to raise on failure instead.
    """
    x = np.atleast_1d(np.asarray(x0, dtype=float)).copy()
    fx = np.atleast_1d(np.asarray(F(x), dtype=float))
    if not np.all(np.isfinite(fx)):
        raise ValueError("F(x0) is not finite")
    norm = float(np.linalg.norm(fx))
    for it in range(max_iter):
        if norm <= tol:
            return NewtonResult(x=x, f_norm=norm, iterations=it, converged=True)
        jac = np.atleast_2d(np.asarray(J(x), dtype=float))
        try:
            step = np.linalg.solve(jac, -fx)
        except np.linalg.LinAlgError:
            step, *_ = np.linalg.lstsq(jac, -fx, rcond=None)
        if not np.all(np.isfinite(step)):
            return NewtonResult(
                x=x, f_norm=norm, iterations=it, converged=False,
                message="non-finite Newton step (singular Jacobian)",
            )
        t = 1.0
        accepted = False
        for _ in range(40):
            x_new = x + t * step
            try:
                f_new = np.atleast_1d(np.asarray(F(x_new), dtype=float))
            except (DomainError, FloatingPointError):
                t *= 0.5
                continue
            if np.all(np.isfinite(f_new)) and float(np.linalg.norm(f_new)) < norm:
                x, fx = x_new, f_new
                norm = float(np.linalg.norm(fx))
                accepted = True
                break
            t *= 0.5
        if not accepted:
            return NewtonResult(
                x=x, f_norm=norm, iterations=it, converged=False,
                message="line search stalled",
            )
    return NewtonResult(
        x=x, f_norm=norm, iterations=max_iter, converged=norm <= tol,
        message="" if norm <= tol else "max_iter exceeded",
    )


def _eval_or_none(f: Callable, x: np.ndarray) -> float | None:
    try:
        val = float(f(x))
    except (DomainError, FloatingPointError, ValueError, ZeroDivisionError, OverflowError):
        return None
    return val if np.isfinite(val) else None


def finite_diff_grad(f: Callable[[np.ndarray], float], x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central-difference gradient, falling back one-sided at domain edges."""
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    f0 = None
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        fp = _eval_or_none(f, x + e)
        fm = _eval_or_none(f, x - e)
        if fp is not None and fm is not None:
            g[i] = (fp - fm) / (2.0 * h)
        else:
            if f0 is None:
                f0 = _eval_or_none(f, x)
                if f0 is None:
                    raise DomainError("finite_diff_grad: f not finite at the base point")
            if fp is not None:
                g[i] = (fp - f0) / h
            elif fm is not None:
                g[i] = (f0 - fm) / h
            else:
                raise DomainError(f"finite_diff_grad: stencil leaves domain along axis {i}")
            warnings.warn(
                f"finite_diff_grad: one-sided fallback along axis {i}", stacklevel=2
            )
    return g


def finite_diff_hess(f: Callable[[np.ndarray], float], x: np.ndarray, h: float = 1e-4) -> np.ndarray:
    """Central-difference Hessian; shrinks the stencil once if it leaves the domain."""
    x = np.asarray(x, dtype=float)
    n = x.size

    def attempt(step: float) -> np.ndarray | None:
        hess = np.zeros((n, n))
        f0 = _eval_or_none(f, x)
        if f0 is None:
            return None
        for i in range(n):
            ei = np.zeros(n)
            ei[i] = step
            fp = _eval_or_none(f, x + ei)
            fm = _eval_or_none(f, x - ei)
            if fp is None or fm is None:
                return None
            hess[i, i] = (fp - 2.0 * f0 + fm) / step**2
            for j in range(i + 1, n):
                ej = np.zeros(n)
                ej[j] = step
                fpp = _eval_or_none(f, x + ei + ej)
                fpm = _eval_or_none(f, x + ei - ej)
                fmp = _eval_or_none(f, x - ei + ej)
                fmm = _eval_or_none(f, x - ei - ej)
                if None in (fpp, fpm, fmp, fmm):
                    return None
                hess[i, j] = hess[j, i] = (fpp - fpm - fmp + fmm) / (4.0 * step**2)
        return hess

    out = attempt(h)
    if out is None:
        warnings.warn("finite_diff_hess: stencil left the domain, shrinking h", stacklevel=2)
        out = attempt(h / 16.0)
    if out is None:
        raise DomainError("finite_diff_hess: stencil leaves domain even after shrinking")
    return out
