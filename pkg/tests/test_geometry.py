import numpy as np
import pytest

from emlab.bregman import ConstraintSet, bregman_div, left_projection, right_projection
from emlab.em import bivariate_missing_model, em_run, gaussian_missing_model, gaussian_samplevar_model
from emlab.errors import InfeasibleError
from emlab.expfam import gaussian_family, negentropy_generator, quadratic_generator
from emlab.geometry import (
    AlternateConfig,
    DataSetSpec,
    alternate_run,
    amari_check,
    e_projection,
    m_projection,
    refine_gap_pair,
)
from emlab.proximal import ProxConfig


class TestEProjection:
    def test_gaussian_closed_form(self):
        fam = gaussian_family(2)
        D = DataSetSpec(observed_indices=(0,), y_obs=np.array([1.0]))
        out = e_projection(fam, D, np.array([0.0, -1.0]))
        np.testing.assert_allclose(out, [2.0, -1.0], atol=1e-10)

    def test_identity_when_already_in_data_set(self):
        fam = gaussian_family(2)
        D = DataSetSpec(observed_indices=(0,), y_obs=np.array([1.0]))
        theta = np.array([2.0, -1.0])
        np.testing.assert_allclose(e_projection(fam, D, theta), theta, atol=1e-12)

    def test_hidden_coordinate_preserved_exactly(self):
        fam = gaussian_family(2)
        D = DataSetSpec(observed_indices=(0,), y_obs=np.array([0.7]))
        theta = np.array([0.3, -2.31])
        out = e_projection(fam, D, theta)
        assert out[1] == theta[1]

    def test_agrees_with_generic_right_projection(self):
        # the data set {eta_1 = y} is affine in natural coordinates
        fam = gaussian_family(2)
        y = 1.0
        D = DataSetSpec(observed_indices=(0,), y_obs=np.array([y]))
        theta = np.array([-0.5, -2.0])
        closed = e_projection(fam, D, theta)
        affine = ConstraintSet.affine(np.array([[1.0, 2.0 * y]]), np.array([0.0]))
        from emlab.bregman import ProjectionOptions

        generic = right_projection(fam, affine, theta, ProjectionOptions(start=closed))
        np.testing.assert_allclose(closed, generic, atol=1e-8)

    def test_infeasible_observation(self):
        gen = quadratic_generator(2)
        base = gaussian_family(2)
        # for the gaussian family eta_1 is unconstrained, so force failure
        # through an impossible observed value for the quadratic generator
        del base
        D = DataSetSpec(observed_indices=(0,), y_obs=np.array([np.nan]))
        with pytest.raises((InfeasibleError, ValueError)):
            e_projection(gen, D, np.array([0.0, 0.0]))


class TestMProjection:
    def test_whole_space(self):
        fam = gaussian_family(2)
        vt = np.array([1.0, -1.5])
        np.testing.assert_allclose(
            m_projection(fam, ConstraintSet.everything(2), vt), vt, atol=1e-12
        )

    def test_quadratic_affine_euclidean(self):
        gen = quadratic_generator(2)
        M = ConstraintSet.affine(np.array([[1.0, 0.0]]), np.array([2.0]))
        out = m_projection(gen, M, np.array([0.0, 0.3]))
        np.testing.assert_allclose(out, [2.0, 0.3], atol=1e-10)

    def test_curved_matches_left_projection(self):
        fam = gaussian_family(2)
        curve = ConstraintSet.curve(
            lambda u: np.array([u, -u * u / 4.0]),
            (0.2, 6.0),
            dtheta_fn=lambda u: np.array([1.0, -u / 2.0]),
        )
        vt = np.array([2.0, -1.0])
        np.testing.assert_allclose(
            m_projection(fam, curve, vt), left_projection(fam, curve, vt), atol=0
        )


class TestAmariCheck:
    def test_mean_of_squares_statistic_differs(self):
        model = gaussian_missing_model(1.0)
        rep = amari_check(model, np.array([0.0, -1.0]))
        np.testing.assert_allclose(rep.vartheta_e, [2.0, -1.0], atol=1e-10)
        assert rep.lhs[0] == pytest.approx(1.5, abs=1e-9)
        assert rep.rhs[0] == pytest.approx(2.0, abs=1e-9)
        assert not rep.coincide

    def test_sample_variance_statistic_coincides(self):
        model = gaussian_samplevar_model(1.0)
        rep = amari_check(model, np.array([0.0, -1.0]))
        assert rep.lhs[0] == pytest.approx(1.0, abs=1e-9)
        assert rep.rhs[0] == pytest.approx(1.0, abs=1e-9)
        assert rep.coincide

    def test_invertible_observation_trivially_coincides(self):
        import math

        from emlab.em import IncompleteModel
        from emlab.expfam import LegendreGenerator

        fam = gaussian_family(2)
        theta = np.array([0.0, -1.0])
        t_obs = fam.grad_psi(theta)
        cond = LegendreGenerator(
            dim=2, psi=lambda th: float(th @ t_obs),
            grad_psi=lambda th: t_obs.copy(), hess_psi=lambda th: np.zeros((2, 2)),
            domain_margin=lambda th: math.inf,
        )
        model = IncompleteModel(
            fam=fam, y=t_obs, psi_y=cond, observed_indices=(0, 1),
            reference_point=theta,
        )
        rep = amari_check(model, theta)
        assert rep.coincide
        assert rep.lhs.size == 0
        np.testing.assert_allclose(rep.vartheta_e, theta, atol=1e-9)


class TestAlternateRun:
    def test_immediate_fixed_point_in_intersection(self):
        fam = gaussian_family(2)
        D = DataSetSpec(observed_indices=(0,), y_obs=np.array([1.0]))
        M = ConstraintSet.point(np.array([2.0, -1.0]))
        tr = alternate_run(fam, D, M, np.array([2.0, -1.0]), AlternateConfig(max_iter=50))
        assert tr.verdict == "intersection"
        assert tr.iterations <= 2

    def test_alternating_divergences_monotone(self):
        gen = negentropy_generator(2)
        p = np.array([-1.0, -2.0])
        q = np.array([-2.0, -1.0])
        a, b = np.exp(p), np.exp(q)
        arc = ConstraintSet.curve(
            lambda t: np.exp((1 - t) * p + t * q), (0.0, 1.0),
            dtheta_fn=lambda t: (q - p) * np.exp((1 - t) * p + t * q), grid=96,
        )
        chord = ConstraintSet.curve(
            lambda s: (1 - s) * a + s * b, (0.0, 1.0), dtheta_fn=lambda s: b - a, grid=96,
        )
        start = left_projection(gen, chord, np.asarray(arc.theta_fn(0.3)))
        tr = alternate_run(gen, arc, chord, start, AlternateConfig(max_iter=200))
        seq = []
        for k in range(len(tr.varthetas)):
            seq.append(tr.div_after_e[k])
            seq.append(tr.div_after_m[k])
        assert all(seq[i + 1] <= seq[i] + 1e-12 for i in range(len(seq) - 1))

    def test_em_matches_alternating_projections_under_amari(self):
        # with x1 observed, the bivariate model satisfies the coincidence
        # condition at every e-projection, so EM equals the projection loop
        model = bivariate_missing_model(0.8, rho=0.4)
        theta0 = np.array([0.9, -0.4])
        rep = amari_check(model, theta0)
        assert rep.coincide
        em_tr = em_run(model, theta0, ProxConfig(max_iter=5, stop_on="none"))
        D = DataSetSpec.from_model(model)
        ap_tr = alternate_run(
            model.fam, D, ConstraintSet.everything(2), theta0, AlternateConfig(max_iter=5, step_tol=0.0)
        )
        for a, b in zip(em_tr.points[1:4], ap_tr.thetas[1:4]):
            assert np.linalg.norm(np.asarray(a) - np.asarray(b)) <= 1e-8

    def test_gap_pair_mutual_projection(self):
        gen = negentropy_generator(2)
        p = np.array([-1.0, -2.0])
        q = np.array([-2.0, -1.0])
        a, b = np.exp(p), np.exp(q)
        arc = ConstraintSet.curve(
            lambda t: np.exp((1 - t) * p + t * q), (0.0, 1.0),
            dtheta_fn=lambda t: (q - p) * np.exp((1 - t) * p + t * q), grid=96,
        )
        chord = ConstraintSet.curve(
            lambda s: (1 - s) * a + s * b, (0.0, 1.0), dtheta_fn=lambda s: b - a, grid=96,
        )
        pair = refine_gap_pair(gen, arc, chord, np.asarray(arc.theta_fn(0.5)), np.asarray(chord.theta_fn(0.5)))
        assert pair.residual <= 1e-10
        # each point is the other's projection
        back_a = right_projection(gen, arc, pair.theta)
        back_b = left_projection(gen, chord, pair.vartheta)
        assert np.linalg.norm(back_a - pair.vartheta) <= 1e-8
        assert np.linalg.norm(back_b - pair.theta) <= 1e-8
        assert pair.divergence > 1e-4
        # the symmetric instance has a closed-form pair
        import math

        np.testing.assert_allclose(pair.vartheta, [math.exp(-1.5)] * 2, atol=1e-9)
        np.testing.assert_allclose(
            pair.theta, [(math.exp(-1) + math.exp(-2)) / 2] * 2, atol=1e-9
        )
