"""Acceptance suite: one test per exit criterion, at its stated tolerance.

Run with ``pytest -s tests/test_acceptance.py`` to see one PASS line per
criterion; any failure shows up as an ordinary pytest failure.
"""

import math

import numpy as np
import pytest

from emlab.bregman import kl_divergence
from emlab.diagnostics import classify_run, fit_rate, kl_exponent_estimate
from emlab.em import (
    conditional_fisher,
    duplicated_statistic_model,
    em_run,
    gaussian_missing_model,
    kl_em_regularizer,
    split_parameters,
)
from emlab.expfam import (
    dual_param,
    gaussian_family,
    gaussian_to_moments,
    legendre_conjugate,
    mean_param,
)
from emlab.experiments import (
    curved_constraint,
    hat_valley_start,
    run_gaussian_curved,
    run_gaussian_unconstrained,
    run_kl_arc,
    run_mexican_hat,
    run_missing_data,
    run_ppm_em_equivalence,
)
from emlab.geometry import amari_check
from emlab.numerics import finite_diff_hess
from emlab.proximal import ProxConfig, prox_run


def _report(name: str) -> None:
    print(f"ACCEPTANCE PASS: {name}")


def interior_grid():
    t1 = np.linspace(-2.0, 2.0, 5)
    t2 = np.linspace(-3.0, -0.5, 5)
    return [np.array([a, b]) for a in t1 for b in t2]


def test_legendre_duality():
    fam = gaussian_family(2)
    for th in interior_grid():
        assert np.linalg.norm(dual_param(fam, mean_param(fam, th)) - th) <= 1e-8
    assert abs(legendre_conjugate(fam, [1.0, 2.0]) - (-1.0)) <= 1e-10
    assert np.linalg.norm(dual_param(fam, [1.0, 2.0]) - np.array([2.0, -1.0])) <= 1e-10
    _report("Legendre duality: gradient inversion on the grid and the worked values")


def test_kl_matches_gaussian_oracle():
    fam = gaussian_family(2)

    def oracle(a, b):
        mu0, s0 = gaussian_to_moments(a)
        mu1, s1 = gaussian_to_moments(b)
        return 2.0 * (math.log(math.sqrt(s1 / s0)) + (s0 + (mu0 - mu1) ** 2) / (2 * s1) - 0.5)

    rng = np.random.default_rng(101)
    for _ in range(25):
        a = np.array([rng.uniform(-2, 2), rng.uniform(-3, -0.3)])
        b = np.array([rng.uniform(-2, 2), rng.uniform(-3, -0.3)])
        assert abs(kl_divergence(fam, a, b) - oracle(a, b)) <= 1e-9
    assert abs(kl_divergence(fam, [0.0, -1.0], [2.0, -1.0]) - 1.0) <= 1e-9
    _report("KL divergence equals the closed-form Gaussian oracle (25 pairs + worked value)")


def test_em_equals_kl_regularized_proximal():
    model = gaussian_missing_model(1.0, constraint=curved_constraint())
    theta0 = np.array([2.0, -1.0])
    cfg = ProxConfig(max_iter=50, stop_on="none")
    tr_em = em_run(model, theta0, cfg)
    tr_px = prox_run(model.objective(), model.M, kl_em_regularizer(model, theta0), cfg, theta0)
    assert len(tr_em) == 51 and len(tr_px) == 51
    worst = max(
        float(np.linalg.norm(np.asarray(a) - np.asarray(b)))
        for a, b in zip(tr_em.points, tr_px.points)
    )
    assert worst <= 1e-8
    _report(f"EM trace equals the KL-proximal trace over 50 iterations (max gap {worst:.2e})")


def test_monotone_descent_everywhere():
    runs = []
    curved = gaussian_missing_model(1.0, constraint=curved_constraint())
    runs.append(em_run(curved, np.array([2.0, -1.0]), ProxConfig(max_iter=100, stop_on="none")))
    plain = gaussian_missing_model(1.0)
    runs.append(em_run(plain, np.array([0.0, -1.0]), ProxConfig(max_iter=40, stop_on="none")))
    dup = duplicated_statistic_model(0.0)
    runs.append(em_run(dup, np.array([0.5, 0.5]), ProxConfig(max_iter=200, stop_on="none")))
    runs.append(
        em_run(dup, np.array([0.5, 0.5]), ProxConfig(max_iter=200, stop_on="none"),
               mode="regularized", lam=1.0)
    )
    from emlab.em import bivariate_missing_model

    runs.append(
        em_run(bivariate_missing_model(1.0), np.array([0.4, 0.8]), ProxConfig(max_iter=20, stop_on="none"))
    )
    for tr in runs:
        diffs = np.diff(np.asarray(tr.f_values))
        assert np.all(diffs <= 1e-12)
    _report("incomplete-data value non-increasing (within 1e-12) on every built-in run")


def test_unconstrained_gaussian_identities():
    res = run_gaussian_unconstrained(1.0, [0.0, -1.0])
    y = 1.0
    for p in res.trace.points[1:]:
        mu = -p[0] / (2.0 * p[1])
        assert abs(mu - y) <= 1e-10
        assert abs(p[0] + 2.0 * y * p[1]) <= 1e-9
    _report("unconstrained run keeps mu = y (1e-10) and theta_1 = -2 y theta_2 (1e-9)")


def test_curved_gaussian_full_convergence():
    res = run_gaussian_curved(1.0, [2.0, -1.0], max_iter=200)
    tr = res.trace
    assert len(tr) - 1 <= 200
    assert tr.step_norms[-1] < 1e-8
    th = tr.points[-1]
    assert abs(th[0] ** 2 + 4.0 * th[1]) <= 1e-8
    _report(
        f"curved run converged in {len(tr) - 1} steps; constraint residual "
        f"{abs(th[0] ** 2 + 4.0 * th[1]):.1e}"
    )


def test_split_detection():
    model = gaussian_missing_model(0.0)
    theta = np.array([0.0, -1.0])
    I_m = conditional_fisher(model, theta)
    assert np.max(np.abs(I_m - np.array([[0.0, 0.0], [0.0, 0.5]]))) <= 1e-9
    sp = split_parameters(model, theta)
    assert sp.m == 1
    assert np.max(np.abs(sp.P - np.diag([0.0, 1.0]))) <= 1e-9
    _report("missing-data information, rank, and projection at the worked point")


def test_information_split():
    model = gaussian_missing_model(1.0)
    pts = [
        np.array([0.0, -1.0]), np.array([1.0, -0.7]), np.array([-1.5, -2.0]),
        np.array([2.0, -1.2]), np.array([0.5, -3.0]),
    ]
    for th in pts:
        observed = finite_diff_hess(model.neg_log_q, th)
        total = model.fam.hess_psi(th)
        missing = conditional_fisher(model, th)
        assert np.max(np.abs(total - (observed + missing))) <= 1e-5
    _report("complete information = observed + missing information at 5 interior points")


def test_amari_condition_cases():
    from emlab.em import gaussian_samplevar_model

    rep = amari_check(gaussian_missing_model(1.0), np.array([0.0, -1.0]), tol=1e-9)
    assert np.allclose(rep.vartheta_e, [2.0, -1.0], atol=1e-9)
    assert abs(rep.lhs[0] - 1.5) <= 1e-9
    assert abs(rep.rhs[0] - 2.0) <= 1e-9
    assert not rep.coincide
    rep2 = amari_check(gaussian_samplevar_model(1.0), np.array([0.0, -1.0]), tol=1e-9)
    assert rep2.coincide
    _report("mean-of-squares statistic fails the coincidence check, sample variance passes")


def test_kl_arc_attractors_and_gap():
    res = run_kl_arc([-1.0, -2.0], [-2.0, -1.0], starts=(0.1, 0.9), max_iter=10_000)
    labels = {s["start"]: s for s in res.summary["starts"]}
    assert labels[0.1]["label"] == "a"
    assert labels[0.9]["label"] == "b"
    for s in labels.values():
        assert s["iterations"] <= 10_000
        assert s["final_step_verdict"] == "intersection"
    alt = res.aux["alternating"]
    final_step = np.linalg.norm(np.asarray(alt.thetas[-1]) - np.asarray(alt.thetas[-2]))
    assert final_step < 1e-10
    gap = res.summary["gap_pair"]
    assert gap["residual"] <= 1e-8
    _report(
        f"arc starts 0.1/0.9 reach a/b; gap pair located with residual {gap['residual']:.1e}"
    )


def test_mexican_hat_cycles():
    res = run_mexican_hat(0.5, steps=10_000)
    s = res.summary
    assert s["strictly_decreasing"]
    assert abs(s["final_radius"] - 1.0) <= 0.01
    assert s["winding_angle"] > 4.0 * math.pi
    assert s["last_half_step_share"] > 0.10
    assert s["verdict"] == "cycling"
    _report(
        f"spiral run: radius {s['final_radius']:.4f}, winding "
        f"{s['winding_angle'] / math.pi:.1f} pi, last-half share "
        f"{s['last_half_step_share']:.2f}, verdict cycling"
    )


def test_ppm_em_stationarity_identity():
    smooth = run_ppm_em_equivalence([0.9, 1.2], steps=200, objective="half-sq-norm")
    assert max(smooth.trace.residuals[1:]) <= 1e-8
    hat = run_ppm_em_equivalence(hat_valley_start(0.5), steps=2000, objective="mexican-hat")
    assert max(hat.trace.residuals[1:]) <= 1e-8
    assert hat.summary["verdict"] == "cycling"
    _report("prox step stationarity residual <= 1e-8 on smooth and spiral objectives")


def test_rate_machinery():
    pts = np.array([[1.0 / k, 0.0] for k in range(1, 401)])
    fit = fit_rate(pts, x_ref=np.zeros(2))
    assert fit.kind == "sublinear" and abs(fit.param - 1.0) <= 0.05
    pts = np.array([[0.5**k, 0.0] for k in range(60)])
    fit = fit_rate(pts, x_ref=np.zeros(2))
    assert fit.kind == "linear" and abs(fit.param - 0.5) <= 0.025
    x = 0.9 ** np.arange(60)
    est = kl_exponent_estimate(x**2, 2.0 * x, f_star=0.0)
    assert abs(est.theta - 0.5) <= 0.05
    est = kl_exponent_estimate(x**4, 4.0 * x**3, f_star=0.0)
    assert abs(est.theta - 0.75) <= 0.05
    _report("synthetic k^-1 / 0.5^k rates and the 1/2 and 3/4 exponents recovered")


def test_spare_parameter_contrast():
    model = duplicated_statistic_model(0.0)
    theta0 = np.array([0.5, 0.5])
    cfg = ProxConfig(max_iter=300, stop_on="none")
    plain = em_run(model, theta0, cfg)
    reg = em_run(model, theta0, cfg, mode="regularized", lam=1.0)
    plain_d = np.asarray(plain.dprime_step_norms)
    reg_d = np.asarray(reg.dprime_step_norms)
    reg_tail = float(np.sum(reg_d[len(reg_d) // 2:]))
    plain_tail = float(np.sum(plain_d[len(plain_d) // 2:]))
    assert reg_tail < 1e-6
    assert plain_tail > 10.0 * 1e-6
    _report(
        f"spare-coordinate tail sums: plain {plain_tail:.2e} vs regularized {reg_tail:.2e}"
    )


def test_missing_data_split_alignment():
    res = run_missing_data(1.0, rho=0.5)
    split = res.aux["split"]
    assert res.summary["accurate_dimension"] == 1
    assert np.max(np.abs(split.P - np.diag([0.0, 1.0]))) <= 1e-9
    assert res.aux["cauchy_sums"][1] <= 1e-10
    assert res.summary["constraint_residual"] <= 1e-8
    _report("missing-coordinate instance: hidden parameter is the accurate one")
