import json
import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from markovfbm.quadrature import (ModelParams, QuadratureScheme, build_scheme, gauss_rule_weighted,
                                  geometric_grid, kernel_eval, moment_residuals, weighted_moments)
from scipy.special import gammainc, gammaincc

from markovfbm.analysis import l2_error
from oracles import kernel_by_sum, moment_by_quad

# frozen from 30-digit mpmath evaluation / quadrature
XI0_H01 = 0.31498026247371829
XIN_H01 = 101.59366732596477
M0_1_2 = 0.79876977693223565
M1_1_2 = 1.1707255868184204


def test_model_params_derived():
    p = ModelParams(0.1)
    assert p.alpha == pytest.approx(0.6)
    assert p.gamma == pytest.approx(0.4)
    assert p.delta == pytest.approx(0.1)
    assert p.gamma == pytest.approx(1 - p.alpha)


@pytest.mark.parametrize("H", [0.0, 0.5, -0.1, 0.7])
def test_model_params_rejects_hurst(H):
    with pytest.raises(ValueError):
        ModelParams(H)


def test_model_params_rejects_horizon():
    with pytest.raises(ValueError):
        ModelParams(0.1, T=0.0)


class TestGeometricGrid:
    def test_quarter_example(self):
        g = geometric_grid(ModelParams(0.25), 2, 0.5)
        np.testing.assert_allclose(g.xi, [0.25, 1.0, 4.0], rtol=1e-15)

    def test_endpoints_h01(self):
        g = geometric_grid(ModelParams(0.1), 4, 1 / 3)
        assert g.xi[0] == pytest.approx(XI0_H01, rel=1e-14)
        assert g.xi[-1] == pytest.approx(XIN_H01, rel=1e-14)

    @pytest.mark.parametrize("n", [1, 0, -3])
    def test_rejects_small_n(self, n):
        with pytest.raises(ValueError):
            geometric_grid(ModelParams(0.1), n, 0.3)

    def test_rejects_overflowing_endpoints(self):
        with pytest.raises(ValueError):
            geometric_grid(ModelParams(0.01), 300, 3.0)

    def test_rejects_rate(self):
        with pytest.raises(ValueError):
            geometric_grid(ModelParams(0.1), 4, 0.0)

    @given(H=st.floats(0.01, 0.49), n=st.integers(2, 300), r=st.floats(0.01, 3.0))
    def test_log_equidistant(self, H, n, r):
        assume(r / min(H, 0.5 - H) * math.log(n) < 600)
        g = geometric_grid(ModelParams(H), n, r)
        xi = g.xi
        assert np.all(xi > 0) and np.all(np.diff(xi) > 0)
        i = np.arange(n + 1)
        np.testing.assert_allclose(xi, xi[0] * (xi[-1] / xi[0]) ** (i / n), rtol=1e-10)
        assert xi[0] * (xi[-1] / xi[0]) ** (n / n) == pytest.approx(xi[-1], rel=1e-14)

    @given(H=st.floats(0.01, 0.49), n=st.integers(2, 200), r=st.floats(0.01, 2.0))
    def test_truncation_widens_with_n(self, H, n, r):
        assume(r / min(H, 0.5 - H) * math.log(n + 1) < 600)
        p = ModelParams(H)
        a, b = geometric_grid(p, n, r), geometric_grid(p, n + 1, r)
        assert b.xi[0] < a.xi[0]
        assert b.xi[-1] > a.xi[-1]


class TestMoments:
    def test_example(self):
        m = weighted_moments(1.0, 2.0, 0.6, 2)
        assert m[0] == pytest.approx(M0_1_2, rel=1e-13)
        assert m[1] == pytest.approx(M1_1_2, rel=1e-13)

    def test_against_quadrature(self):
        m = weighted_moments(0.3, 7.0, 0.85, 8)
        for k in range(8):
            assert m[k] == pytest.approx(moment_by_quad(0.3, 7.0, 0.85, k), rel=1e-12)

    def test_empty_interval(self):
        assert np.all(weighted_moments(2.0, 2.0, 0.6, 5) == 0.0)

    def test_polynomial_case(self):
        k = np.arange(6)
        np.testing.assert_allclose(weighted_moments(1.0, 2.0, 0.0, 6), (2.0 ** (k + 1) - 1) / (k + 1),
                                   rtol=1e-14)

    @pytest.mark.parametrize("a", [0.0, -1.0])
    def test_rejects_nonpositive_lower(self, a):
        with pytest.raises(ValueError):
            weighted_moments(a, 1.0, 0.6, 3)

    @given(a=st.floats(1e-3, 1e3), ratio=st.floats(1.0, 1e3), alpha=st.floats(0.5, 0.99))
    def test_positive_unless_degenerate(self, a, ratio, alpha):
        m = weighted_moments(a, a * ratio, alpha, 6)
        assert np.all(m >= 0)
        if ratio > 1.0 + 1e-12:
            assert np.all(m > 0)


class TestGaussRule:
    def test_one_point_is_weighted_mean(self):
        x, c = gauss_rule_weighted(1.0, 2.0, 0.6, 1)
        assert x[0] == pytest.approx(M1_1_2 / M0_1_2, rel=1e-13)
        assert c[0] == pytest.approx(M0_1_2, rel=1e-13)

    def test_two_point_legendre(self):
        x, c = gauss_rule_weighted(1.0, 3.0, 0.0, 2)
        np.testing.assert_allclose(x, [2 - 1 / math.sqrt(3), 2 + 1 / math.sqrt(3)], rtol=1e-13)
        np.testing.assert_allclose(c, [1.0, 1.0], rtol=1e-13)

    def test_matches_numpy_legendre(self):
        g, w = np.polynomial.legendre.leggauss(7)
        x, c = gauss_rule_weighted(2.0, 6.0, 0.0, 7)
        np.testing.assert_allclose(x, 4.0 + 2.0 * g, rtol=1e-12)
        np.testing.assert_allclose(c, 2.0 * w, rtol=1e-11)

    @pytest.mark.parametrize("a,b", [(1.0, 1.0), (2.0, 1.0)])
    def test_rejects_degenerate(self, a, b):
        with pytest.raises(ValueError):
            gauss_rule_weighted(a, b, 0.6, 2)

    def test_rejects_m(self):
        with pytest.raises(ValueError):
            gauss_rule_weighted(1.0, 2.0, 0.6, 0)

    @settings(max_examples=60, deadline=None)
    @given(a=st.floats(1e-6, 1e6), ratio=st.floats(1.001, 1e5), alpha=st.floats(0.5, 0.99),
           m=st.integers(1, 10))
    def test_gauss_exactness(self, a, ratio, alpha, m):
        b = a * ratio
        x, c = gauss_rule_weighted(a, b, alpha, m)
        assert np.all(c > 0) and np.all(np.diff(x) > 0) and a < x[0] and x[-1] < b
        exact = weighted_moments(1.0, ratio, alpha, 2 * m)
        approx = [np.dot(c / a ** (1 - alpha), (x / a) ** k) for k in range(2 * m)]
        np.testing.assert_allclose(approx, exact, rtol=1e-8)

    @settings(max_examples=40, deadline=None)
    @given(a=st.floats(0.01, 100.0), ratio=st.floats(1.01, 1e3), s=st.floats(0.01, 100.0),
           m=st.integers(1, 8))
    def test_scale_covariance(self, a, ratio, s, m):
        alpha = 0.7
        x1, c1 = gauss_rule_weighted(a, a * ratio, alpha, m)
        x2, c2 = gauss_rule_weighted(s * a, s * a * ratio, alpha, m)
        np.testing.assert_allclose(x2, s * x1, rtol=1e-10)
        np.testing.assert_allclose(c2, s ** (1 - alpha) * c1, rtol=1e-10)


class TestBuildScheme:
    def test_one_point_per_interval(self):
        s = build_scheme(ModelParams(0.25), 2, 1, 0.5)
        assert s.nodes.size == 2
        for i, (a, b) in enumerate([(0.25, 1.0), (1.0, 4.0)]):
            m0, m1 = moment_by_quad(a, b, 0.75, 0), moment_by_quad(a, b, 0.75, 1)
            assert s.nodes[i] == pytest.approx(m1 / m0, rel=1e-12)
            assert s.gauss_weights[i] == pytest.approx(m0, rel=1e-12)

    def test_default_rate_and_containment(self):
        s = build_scheme(ModelParams(0.1), 4, 5)
        assert s.r == pytest.approx(1 / 3)
        assert s.nodes.size == 20
        assert np.all(np.diff(s.nodes) > 0)
        assert XI0_H01 < s.nodes[0] and s.nodes[-1] < XIN_H01

    def test_rejects_m_zero(self):
        with pytest.raises(ValueError):
            build_scheme(ModelParams(0.1), 4, 0)

    def test_warns_beyond_stable_m(self):
        with pytest.warns(RuntimeWarning):
            build_scheme(ModelParams(0.25), 4, 11)

    @pytest.mark.parametrize("H", [0.05, 0.1, 0.25, 0.4])
    @pytest.mark.parametrize("m", [1, 2, 3, 5, 8, 10])
    @pytest.mark.parametrize("n", [2, 7, 64])
    def test_invariants(self, H, m, n):
        s = build_scheme(ModelParams(H), n, m)
        xi = s.grid.xi
        cells = s.nodes.reshape(n, m)
        assert np.all(cells > xi[:-1, None]) and np.all(cells < xi[1:, None])
        assert np.all(s.gauss_weights > 0)
        assert moment_residuals(s).max() <= 1e-8
        np.testing.assert_allclose(s.kernel_weights, s.gauss_weights / math.gamma(0.5 - H), rtol=1e-15)
        a = s.params.alpha
        total = (xi[-1] ** (1 - a) - xi[0] ** (1 - a)) / ((1 - a) * math.gamma(1 - a))
        assert s.kernel_weights.sum() == pytest.approx(total, rel=1e-8)

    def test_json_round_trip(self):
        s = build_scheme(ModelParams(0.1, 2.0), 8, 3)
        doc = json.loads(s.to_json())
        assert set(doc) == {"H", "T", "n", "m", "r", "xi", "nodes", "gauss_weights", "kernel_weights"}
        back = QuadratureScheme.from_json(s.to_json())
        assert np.array_equal(back.nodes, s.nodes)
        assert np.array_equal(back.kernel_weights, s.kernel_weights)
        assert np.array_equal(back.grid.xi, s.grid.xi)
        assert back.scheme_id == s.scheme_id

    def test_from_dict_rejects_inconsistent(self):
        doc = build_scheme(ModelParams(0.1), 4, 2).to_dict()
        doc["nodes"] = doc["nodes"][:-1]
        with pytest.raises(ValueError):
            QuadratureScheme.from_dict(doc)

    def test_arrays_are_read_only(self):
        s = build_scheme(ModelParams(0.1), 4, 2)
        with pytest.raises(ValueError):
            s.nodes[0] = 1.0


class TestKernel:
    def test_at_zero(self):
        s = build_scheme(ModelParams(0.1), 16, 3)
        a = 0.6
        xi = s.grid.xi
        expected = (xi[-1] ** (1 - a) - xi[0] ** (1 - a)) / ((1 - a) * math.gamma(1 - a))
        assert kernel_eval(s, 0.0) == pytest.approx(expected, rel=1e-8)

    def test_decays(self):
        s = build_scheme(ModelParams(0.1), 16, 3)
        assert kernel_eval(s, 1e6) < 1e-100

    def test_matches_direct_sum(self):
        s = build_scheme(ModelParams(0.25), 8, 3)
        for t in [0.0, 1e-3, 0.5, 2.0]:
            assert kernel_eval(s, t) == pytest.approx(kernel_by_sum(s.nodes, s.kernel_weights, t), rel=1e-13)

    @pytest.mark.parametrize("n,tol", [(16, 1e-8), (64, 1e-12), (256, 1e-12)])
    def test_target_minus_truncated_tails(self, n, tol):
        # t**(H-1/2) at t=1 is 1; what is missing is the mass outside [xi_0, xi_n]
        s = build_scheme(ModelParams(0.1), n, 5)
        xi = s.grid.xi
        tails = gammainc(0.4, xi[0]) + gammaincc(0.4, xi[-1])
        assert kernel_eval(s, 1.0) + tails == pytest.approx(1.0, abs=tol)

    def test_pointwise_error_on_l2_scale(self):
        errs = []
        for n in (16, 64, 256):
            s = build_scheme(ModelParams(0.1), n, 5)
            gap = abs(kernel_eval(s, 1.0) - 1.0)
            assert 0.5 * l2_error(s).rel_error < gap < 2.0 * l2_error(s).rel_error
            errs.append(gap)
        assert errs[0] > errs[1] > errs[2]

    def test_vectorized(self):
        s = build_scheme(ModelParams(0.1), 4, 2)
        t = np.array([0.0, 0.5, 1.0])
        np.testing.assert_allclose(kernel_eval(s, t), [kernel_eval(s, v) for v in t], rtol=1e-15)

    def test_rejects_negative_time(self):
        s = build_scheme(ModelParams(0.1), 4, 2)
        with pytest.raises(ValueError):
            kernel_eval(s, -1.0)

    @given(t1=st.floats(0.0, 50.0), dt=st.floats(0.0, 50.0))
    def test_positive_non_increasing(self, t1, dt):
        s = build_scheme(ModelParams(0.2), 6, 3)
        k1, k2 = kernel_eval(s, t1), kernel_eval(s, t1 + dt)
        assert k1 > 0 and k2 <= k1
