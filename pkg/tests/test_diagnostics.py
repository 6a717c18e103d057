import math
import time

import numpy as np
import pytest
from numpy.testing import assert_allclose

from bures_barycenter import diagnostics as dg
from bures_barycenter.exceptions import NotRegular
from bures_barycenter.geometry import BuresDistribution, GaussianMeasure, geodesic_point
from bures_barycenter.solvers import barycenter, objective

# 1-D atoms {1, 4} scaled by 1/4 so that both lie in S_zeta with zeta = 1/4
Q_SCALAR = BuresDistribution(np.array([[[0.25]], [[1.0]]]))
BBAR_SCALAR = GaussianMeasure([[0.5625]])


def regular_instance(rng, dim=3, n=6, floor=0.5):
    Q = dg.random_regular_distribution(dim, n, floor, rng)
    i, j = rng.integers(n, size=2)
    b = geodesic_point(Q.atom(i), Q.atom(j), float(rng.uniform()))
    return Q, b, barycenter(Q), floor**dim


class TestInequalityReport:
    def test_line_round_trip(self):
        rep = dg.InequalityReport("pl", 0.1, 1 / 3, 0.1 - 1 / 3)
        assert not rep.satisfied
        back = dg.InequalityReport.from_line(rep.to_line())
        assert (back.name, back.lhs, back.rhs, back.margin, back.satisfied) == \
            (rep.name, rep.lhs, rep.rhs, rep.margin, rep.satisfied)

    def test_roundoff_margin_counts_as_satisfied(self):
        assert dg.InequalityReport("x", 1.0, 1.0, -1e-12).satisfied
        assert not dg.InequalityReport("x", 1.0, 1.0, -1e-6).satisfied


class TestPL:
    def test_at_barycenter(self):
        rep = dg.check_pl(Q_SCALAR, BBAR_SCALAR, BBAR_SCALAR, 0.25)
        assert rep.satisfied and abs(rep.lhs) < 1e-24 and abs(rep.rhs) < 1e-15

    def test_random_instances(self, rng):
        for _ in range(30):
            Q, b, bbar, zeta = regular_instance(rng)
            assert dg.check_pl(Q, b, bbar, zeta).satisfied

    def test_constant_above_one_is_violated(self):
        # single atom: ||grad||^2 = W2^2 = 2 (G(b) - G(bbar)), so the best constant is 1
        mu = GaussianMeasure(np.diag([0.9, 0.6]))
        b = GaussianMeasure(np.diag([0.5, 0.8]))
        Q = BuresDistribution(mu.cov[None])
        assert dg.check_pl(Q, b, mu, 0.25, c_pl=1.0).satisfied
        assert not dg.check_pl(Q, b, mu, 0.25, c_pl=1.01).satisfied

    def test_outside_regular_set(self):
        with pytest.raises(NotRegular):
            dg.check_pl(Q_SCALAR, GaussianMeasure([[2.0]]), BBAR_SCALAR, 0.25)


class TestVariance:
    def test_scalar_instance(self):
        rep = dg.check_variance_inequality(Q_SCALAR, GaussianMeasure([[0.25]]), BBAR_SCALAR, 0.25)
        # gap 0.125/4; rhs (1/8)(0.5 - 0.75)^2
        assert rep.lhs == pytest.approx(0.03125, rel=1e-12)
        assert rep.rhs == pytest.approx(0.0078125, rel=1e-12)
        assert rep.margin == pytest.approx(0.0234375, rel=1e-12)

    def test_at_barycenter(self):
        assert dg.check_variance_inequality(Q_SCALAR, BBAR_SCALAR, BBAR_SCALAR, 0.25).satisfied

    def test_random_instances(self, rng):
        for _ in range(30):
            Q, b, bbar, zeta = regular_instance(rng)
            assert dg.check_variance_inequality(Q, b, bbar, zeta).satisfied


class TestSmoothness:
    def test_equal_points(self, rng):
        Q, b, _, _ = regular_instance(rng)
        rep = dg.check_smoothness(Q, b, b)
        assert rep.satisfied and abs(rep.margin) < 1e-14

    def test_random_instances(self, rng):
        for _ in range(30):
            Q, b0, _, _ = regular_instance(rng)
            _, b1, _, _ = regular_instance(rng)
            rep = dg.check_smoothness(Q, b0, b1)
            assert rep.satisfied and rep.context["descent_margin"] >= -1e-10

    def test_directional_derivative_first_order(self, rng):
        Q, b0, _, _ = regular_instance(rng)
        b1 = Q.atom(0)
        slope = dg.directional_derivative(Q, b0, b1)
        G0 = objective(Q, b0)
        errs = [abs((objective(Q, geodesic_point(b0, b1, s)) - G0) / s - slope)
                for s in (1e-2, 1e-3, 1e-4)]
        for s, e in zip((1e-2, 1e-3, 1e-4), errs):
            assert e <= 10 * s
        assert errs[1] < errs[0]


class TestIntegratedPL:
    def test_at_barycenter(self):
        rep = dg.check_integrated_pl(Q_SCALAR, BBAR_SCALAR, BBAR_SCALAR, 0.25)
        assert rep.satisfied and abs(rep.lhs) < 1e-15

    def test_random_instances(self, rng):
        for _ in range(20):
            Q, b, bbar, zeta = regular_instance(rng)
            assert dg.check_integrated_pl(Q, b, bbar, zeta).satisfied

    def test_quadrature_refinement(self, rng):
        Q, b, bbar, zeta = regular_instance(rng)
        coarse = dg.check_integrated_pl(Q, b, bbar, zeta, quad_nodes=8).context["integral"]
        fine = dg.check_integrated_pl(Q, b, bbar, zeta, quad_nodes=64).context["integral"]
        assert abs(coarse - fine) <= 1e-6

    def test_gradient_norm_at_endpoint(self, rng):
        Q, b, bbar, _ = regular_instance(rng)
        from bures_barycenter.solvers import gradient
        assert_allclose(dg.gradient_norm_along_geodesic(Q, b, bbar, 0.0)[0] ** 2,
                        gradient(Q, b).norm_sq(), rtol=1e-10)


class TestConvexityProbes:
    def test_degenerate_curve(self, rng):
        Q, _, _, _ = regular_instance(rng)
        a, m = Q.atom(0), Q.atom(1)
        assert dg.convexity_probe_opnorm(a, m, m).satisfied
        assert dg.convexity_probe_neglogdet(a, m, m).satisfied

    def test_random_triples(self, rng):
        for _ in range(20):
            Q, _, _, _ = regular_instance(rng)
            base, m0, m1 = Q.atom(0), Q.atom(1), Q.atom(2)
            assert dg.convexity_probe_opnorm(base, m0, m1).satisfied
            assert dg.convexity_probe_neglogdet(base, m0, m1).satisfied

    def test_demo_triple_based_at_c(self):
        A, B, C = (GaussianMeasure(M) for M in (dg.DEMO_A, dg.DEMO_B, dg.DEMO_C))
        assert dg.convexity_probe_opnorm(C, A, B).satisfied
        assert dg.convexity_probe_neglogdet(C, A, B).satisfied

    def test_scalar_neglogdet_values(self):
        # sigma_s = 1 + s, so -logdet = -2 ln(1 + s): 0, -2 ln 1.5, -2 ln 2
        a, b = GaussianMeasure([[1.0]]), GaussianMeasure([[4.0]])
        rep = dg.convexity_probe_neglogdet(a, a, b, grid=3)
        vals = [0.0, -2 * math.log(1.5), -2 * math.log(2.0)]
        assert vals[1] == pytest.approx(-0.8109302162163288)
        assert vals[1] <= 0.5 * (vals[0] + vals[2])
        assert rep.satisfied


class TestNonconvexityDemo:
    def test_reproduced_quickly(self):
        t0 = time.perf_counter()
        demo = dg.nonconvexity_demo(grid=101)
        assert time.perf_counter() - t0 < 1.0
        assert demo.reproduced
        assert not demo.bures_report.satisfied and demo.euclidean_report.satisfied

    def test_shared_endpoints(self):
        demo = dg.nonconvexity_demo(grid=101)
        assert demo.bures[0] == pytest.approx(demo.euclidean[0], abs=1e-12)
        assert demo.bures[-1] == pytest.approx(demo.euclidean[-1], abs=1e-12)

    def test_matrices_exact(self):
        assert dg.DEMO_A.tolist() == [[0.8, -0.4], [-0.4, 0.3]]
        assert dg.DEMO_B.tolist() == [[0.3, -0.5], [-0.5, 1.0]]
        assert dg.DEMO_C.tolist() == [[0.5, 0.5], [0.5, 0.6]]

    def test_csv(self):
        lines = dg.nonconvexity_demo(grid=5).to_csv().splitlines()
        assert lines[0] == "s,bures_w2_sq,euclidean_w2_sq" and len(lines) == 6


class TestGenerators:
    def test_regular_distribution_zeta(self, rng):
        for d in (2, 3, 4):
            Q = dg.random_regular_distribution(d, 10, 0.5, rng)
            assert Q.is_zeta_regular(0.5**d)

    def test_orthogonal(self, rng):
        U = dg.random_orthogonal(4, rng)
        assert_allclose(U @ U.T, np.eye(4), atol=1e-14)

    def test_trial_seeds_deterministic(self):
        a = [np.random.default_rng(s).random() for s in dg.trial_seeds(3, 4)]
        b = [np.random.default_rng(s).random() for s in dg.trial_seeds(3, 4)]
        assert a == b and len(set(a)) == 4
