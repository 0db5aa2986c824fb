import math

import numpy as np
import pytest

from emlab.diagnostics import (
    ClassifierThresholds,
    InsufficientDataError,
    cauchy_sums,
    classify_run,
    fit_rate,
    kl_exponent_estimate,
)
from emlab.proximal import IterateTrace


def trace_from_points(points, margins=None, boundary=False, P=None):
    tr = IterateTrace(P=P)
    points = np.atleast_2d(np.asarray(points, dtype=float))
    for k, p in enumerate(points):
        step = 0.0 if k == 0 else float(np.linalg.norm(points[k] - points[k - 1]))
        proj = step
        if P is not None and k > 0:
            proj = float(np.linalg.norm(P @ (points[k] - points[k - 1])))
        m = math.inf if margins is None else margins[k]
        tr.append(p, 0.0, 0.0, step, proj, 0.0, 1.0, m)
    tr.boundary_flag = boundary
    return tr


class TestCauchySums:
    def test_geometric_step_sizes(self):
        # steps 1, 1/2, 1/4, ... sum to 2
        pts = np.array([[2.0 ** (1 - k), 0.0] for k in range(40)])
        s = cauchy_sums(pts)
        assert s[0] == pytest.approx(2.0, abs=1e-9)

    def test_constant_trace_is_zero(self):
        pts = np.tile([1.0, -1.0], (10, 1))
        assert np.all(cauchy_sums(pts) == 0.0)

    def test_exact_suffix_additivity(self):
        rng = np.random.default_rng(12)
        pts = rng.standard_normal((50, 3))
        s = cauchy_sums(pts)
        d = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        for n in range(len(s) - 1):
            assert s[n] == s[n + 1] + d[n]

    def test_projected_sums(self):
        P = np.diag([1.0, 0.0])
        pts = np.array([[2.0 ** (1 - k), float(k)] for k in range(30)])
        s = cauchy_sums(pts, P=P)
        assert s[0] == pytest.approx(2.0, abs=1e-6)


class TestFitRate:
    def test_sublinear_recovery(self):
        pts = np.array([[1.0 / k, 0.0] for k in range(1, 401)])
        fit = fit_rate(pts, x_ref=np.zeros(2))
        assert fit.kind == "sublinear"
        assert fit.param == pytest.approx(1.0, rel=0.05)

    def test_linear_recovery(self):
        pts = np.array([[0.5**k, 0.0] for k in range(60)])
        fit = fit_rate(pts, x_ref=np.zeros(2))
        assert fit.kind == "linear"
        assert fit.param == pytest.approx(0.5, rel=0.05)

    def test_degenerate_exact_trace(self):
        pts = np.tile([0.3, 0.4], (40, 1))
        fit = fit_rate(pts, x_ref=np.array([0.3, 0.4]))
        assert fit.kind == "linear" and fit.param == 0.0 and fit.flagged_exact

    def test_too_few_points(self):
        pts = np.array([[1.0 / k, 0.0] for k in range(1, 8)])
        with pytest.raises(InsufficientDataError):
            fit_rate(pts, x_ref=np.zeros(2))

    def test_no_law_on_noise(self):
        rng = np.random.default_rng(3)
        pts = np.column_stack([1.0 + rng.uniform(0.5, 1.5, 200), np.zeros(200)])
        fit = fit_rate(pts, x_ref=np.zeros(2))
        assert fit.kind == "none"


class TestKLExponent:
    def test_quadratic_exponent_half(self):
        x = 0.9 ** np.arange(60)
        f = x**2
        g = 2.0 * x
        est = kl_exponent_estimate(f, g, f_star=0.0)
        assert est.theta == pytest.approx(0.5, abs=0.05)

    def test_quartic_exponent_three_quarters(self):
        x = 0.9 ** np.arange(60)
        f = x**4
        g = 4.0 * np.abs(x) ** 3
        est = kl_exponent_estimate(f, g, f_star=0.0)
        assert est.theta == pytest.approx(0.75, abs=0.05)

    def test_constant_values_rejected(self):
        f = np.full(30, 2.0)
        g = np.full(30, 1.0)
        with pytest.raises(InsufficientDataError):
            kl_exponent_estimate(f, g, f_star=1.0)

    def test_window_too_short(self):
        with pytest.raises(InsufficientDataError):
            kl_exponent_estimate([1.0, 0.5], [1.0, 0.7], f_star=0.0)

    def test_clipping_into_admissible_range(self):
        x = 0.9 ** np.arange(40)
        f = x**2
        g = 2.0 * x**1.8  # raw slope 0.9 stays, raw 0.2 would clip up
        est = kl_exponent_estimate(f, g, f_star=0.0)
        assert 0.5 <= est.theta < 1.0


class TestClassifyRun:
    def test_converged_geometric(self):
        pts = np.array([[0.5**k, 0.0] for k in range(60)])
        assert classify_run(trace_from_points(pts)).verdict == "converged"

    def test_escaping(self):
        pts = np.array([[float(k), 0.0] for k in range(80)])
        assert classify_run(trace_from_points(pts)).verdict == "escaping"

    def test_boundary_flag_wins(self):
        pts = np.array([[0.5**k, 0.0] for k in range(30)])
        tr = trace_from_points(pts, boundary=True)
        assert classify_run(tr).verdict == "boundary"

    def test_margin_tail_triggers_boundary(self):
        pts = np.array([[0.5**k, 0.0] for k in range(30)])
        tr = trace_from_points(pts, margins=[0.5**k for k in range(30)])
        assert classify_run(tr).verdict == "boundary"

    def test_partial_only(self):
        P = np.diag([1.0, 0.0])
        pts = np.array([[0.5**k, (-1.0) ** k] for k in range(60)])
        tr = trace_from_points(pts, P=P)
        assert classify_run(tr).verdict == "partial-only"

    def test_cycling_orbit(self):
        ang = 0.07 * np.arange(1500)
        pts = np.column_stack([np.cos(ang), np.sin(ang)])
        verdict = classify_run(trace_from_points(pts))
        assert verdict.verdict == "cycling"

    def test_deterministic(self):
        pts = np.array([[0.5**k, 0.0] for k in range(40)])
        tr = trace_from_points(pts)
        a = classify_run(tr, thresholds=ClassifierThresholds())
        b = classify_run(tr, thresholds=ClassifierThresholds())
        assert a == b
