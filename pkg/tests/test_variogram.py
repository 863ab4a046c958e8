import numpy as np
import pytest
from scipy.special import gamma as gamma_fn
from scipy.special import k0

from intrinsicwm.gmrf import ModelParams
from intrinsicwm.variogram import (
    EULER_GAMMA,
    RegimeError,
    box_eigenpairs,
    box_series,
    closed_alpha1_beta1,
    closed_fractional,
    evaluate,
    regimes,
    stationary,
)


def params(d=1, alpha=0.0, beta=1.0, kappa=1.0, tau=1.0):
    return ModelParams(tau=tau, kappa=kappa, alpha=alpha, beta=beta, sigma2=0.0, d=d)


class TestBoxEigenpairs:
    def test_1d_example(self):
        lam, e = box_eigenpairs(1, np.pi, [3])
        assert lam == pytest.approx(9.0)
        assert e([[0.2]]) == pytest.approx(np.sqrt(2 / np.pi) * np.cos(0.6))

    def test_zero_index(self):
        lam, e = box_eigenpairs(2, 2.0, [0, 0])
        assert lam == 0.0
        assert e([[0.3, 0.7]]) == pytest.approx(0.5)  # 1/sqrt(L^d)

    def test_orthonormality_by_quadrature(self):
        # composite Simpson on a fine grid
        L = np.pi
        xs = np.linspace(0, L, 2001)
        w = np.ones_like(xs)
        w[1:-1:2] = 4.0
        w[2:-1:2] = 2.0
        w *= (xs[1] - xs[0]) / 3.0
        for j in range(6):
            _, ej = box_eigenpairs(1, L, [j])
            for kk in range(6):
                _, ek = box_eigenpairs(1, L, [kk])
                val = np.sum(w * ej(xs[:, None]) * ek(xs[:, None]))
                assert val == pytest.approx(1.0 if j == kk else 0.0, abs=1e-8)


class TestBoxSeries:
    def test_zero_at_equal_points(self):
        assert box_series(params(), 1.0, [0.3], [0.3]) == 0.0

    def test_odd_reciprocal_square_identity(self):
        # sum over odd j of 8/(pi j^2) equals pi
        val = box_series(params(d=1, alpha=0.0, beta=1.0), np.pi, [0.0], [np.pi])
        assert val == pytest.approx(np.pi, rel=1e-6)

    def test_symmetric_in_arguments(self):
        p = params(d=1, alpha=0.5, beta=1.0, kappa=2.0)
        a = box_series(p, 2.0, [0.3], [1.2])
        b = box_series(p, 2.0, [1.2], [0.3])
        assert a == pytest.approx(b, rel=1e-12)

    def test_large_box_approaches_stationary(self):
        p = params(d=1, alpha=0.0, beta=1.0)
        assert abs(box_series(p, 50.0, [0.0], [2.5]) - 2.5) < 0.05

    def test_monotone_approach_to_stationary(self):
        # centered sites recede from both boundaries as L grows; kappa is kept
        # small so the boundary influence is visible at moderate L
        p = params(d=1, alpha=1.0, beta=1.0, kappa=0.3)
        h = 2.5
        exact = stationary(p, h)
        errs = []
        for L in (10.0, 20.0, 50.0):
            mid = L / 2
            errs.append(abs(box_series(p, L, [mid - h / 2], [mid + h / 2]) - exact))
        assert errs[0] > errs[1] > errs[2]
        assert errs[2] < 1e-4

    def test_exact_linear_variogram_on_any_box(self):
        # beta=1, alpha=0 in d=1: the Neumann box variogram is |s-t| exactly
        p = params(d=1, alpha=0.0, beta=1.0)
        for L in (10.0, 50.0):
            assert box_series(p, L, [0.5], [3.0]) == pytest.approx(2.5, abs=1e-9)


class TestStationary:
    def test_zero_distance(self):
        assert stationary(params(), 0.0) == 0.0

    def test_fractional_d1(self):
        c1 = gamma_fn(1.5) * np.cos(1.75 * np.pi)
        assert c1 == pytest.approx(0.626657, rel=1e-5)
        v = stationary(params(d=1, alpha=0.0, beta=0.75), 1.0)
        assert v == pytest.approx(1.0 / c1, rel=1e-8)

    def test_alpha1_beta1_d2(self):
        v = stationary(params(d=2, alpha=1.0, beta=1.0, kappa=1.0), 2.0)
        want = (k0(2.0) + np.log(1.0) + EULER_GAMMA) / np.pi
        assert want == pytest.approx(0.21999, rel=1e-4)
        assert v == pytest.approx(want, rel=1e-9)

    def test_invalid_regimes(self):
        with pytest.raises(RegimeError):
            stationary(params(d=1, alpha=0.0, beta=1.6), 1.0)


class TestClosedFractional:
    def test_linear_case(self):
        p = params(d=1, alpha=0.0, beta=1.0)
        assert closed_fractional(p, 3.7) == pytest.approx(3.7)

    def test_power_scaling(self):
        p = params(d=1, alpha=0.0, beta=0.8)
        g1 = closed_fractional(p, 1.3)
        g2 = closed_fractional(p, 2.6)
        assert g2 / g1 == pytest.approx(2.0 ** (2 * 0.8 - 1), rel=1e-12)

    def test_worked_value(self):
        p = params(d=1, alpha=0.0, beta=0.75)
        assert closed_fractional(p, 4.0) == pytest.approx(2.0 / 0.626657, rel=1e-5)

    def test_agrees_with_quadrature(self):
        for d, beta in ((1, 0.75), (1, 1.2), (2, 1.3), (2, 1.7)):
            p = params(d=d, alpha=0.0, beta=beta, tau=1.3)
            for h in (0.1, 1.0, 10.0):
                assert closed_fractional(p, h) == pytest.approx(
                    stationary(p, h), rel=1e-6)

    def test_out_of_regime(self):
        with pytest.raises(RegimeError):
            closed_fractional(params(d=1, alpha=0.5, beta=1.0), 1.0)
        with pytest.raises(RegimeError):
            # beta = d/2 sits outside the open power-law regime
            closed_fractional(params(d=2, alpha=0.4, beta=1.0), 1.0)


class TestClosedAlpha1Beta1:
    def test_small_h_limit(self):
        vals = [closed_alpha1_beta1(1.0, 1.0, h) for h in (1e-4, 1e-6)]
        assert abs(vals[0]) < 1e-7
        assert abs(vals[1]) < abs(vals[0])
        assert closed_alpha1_beta1(1.0, 1.0, 0.0) == 0.0

    def test_worked_value(self):
        assert closed_alpha1_beta1(1.0, 1.0, 2.0) == pytest.approx(0.21999, rel=1e-4)

    def test_log_tail_ratio(self):
        kappa, tau = 1.0, 1.0
        for h in (1e2, 1e3, 1e4):
            ratio = closed_alpha1_beta1(kappa, tau, h) / (
                np.log(h) / (np.pi * kappa ** 2 * tau ** 2))
            assert ratio == pytest.approx(1.0, rel=0.15 if h == 1e2 else 0.05)

    def test_agrees_with_quadrature(self):
        p = params(d=2, alpha=1.0, beta=1.0, kappa=2.0, tau=0.7)
        for h in (0.1, 0.5, 2.0, 10.0):
            assert closed_alpha1_beta1(2.0, 0.7, h) == pytest.approx(
                stationary(p, h), rel=1e-6)


class TestRegimes:
    def test_log_case(self):
        r = regimes(params(d=2, alpha=1.0, beta=1.0))
        assert r.local_exponent == pytest.approx(2.0)
        assert r.global_class == "log"

    def test_fractional_case(self):
        r = regimes(params(d=1, alpha=0.0, beta=0.75))
        assert r.local_exponent == pytest.approx(0.5)
        assert r.global_class == "power"
        assert r.global_exponent == pytest.approx(0.5)

    def test_bounded_case(self):
        r = regimes(params(d=2, alpha=1.0, beta=0.4))
        assert r.global_class == "bounded"

    def test_log_constant_d2(self):
        r = regimes(params(d=2, alpha=1.5, beta=1.0, kappa=2.0, tau=0.5))
        # boundary class detected; the constant is recorded only for alpha=1
        assert r.global_class == "log"


class TestLocalGlobalSlopes:
    @pytest.mark.parametrize("d,alpha,beta", [(1, 0.0, 0.75), (1, 1.0, 1.0),
                                              (2, 1.5, 1.0), (2, 0.4, 1.5)])
    def test_local_slope(self, d, alpha, beta):
        p = params(d=d, alpha=alpha, beta=beta, kappa=1.0)
        hs = np.geomspace(1e-3, 1e-2, 5)
        g = np.array([stationary(p, h) for h in hs])
        slope = np.polyfit(np.log(hs), np.log(g), 1)[0]
        assert slope == pytest.approx(min(2 * (alpha + beta) - d, 2.0), abs=0.1)

    @pytest.mark.parametrize("d,alpha,beta", [(1, 0.0, 0.75), (1, 0.3, 1.2),
                                              (2, 0.4, 1.5)])
    def test_global_slope(self, d, alpha, beta):
        p = params(d=d, alpha=alpha, beta=beta, kappa=1.0)
        hs = np.geomspace(1e2, 1e3, 5)
        g = np.array([stationary(p, h) for h in hs])
        slope = np.polyfit(np.log(hs), np.log(g), 1)[0]
        assert slope == pytest.approx(2 * beta - d, abs=0.1)

    def test_local_slope_saturation_boundary(self):
        # d=2, alpha=beta=1 sits exactly at 2(alpha+beta)-d = 2, where the
        # K0 expansion carries an h^2 log(1/h) correction; the measured slope
        # undershoots 2 by about 1/log(1/h)
        p = params(d=2, alpha=1.0, beta=1.0)
        hs = np.geomspace(1e-3, 1e-2, 5)
        g = np.array([stationary(p, h) for h in hs])
        slope = np.polyfit(np.log(hs), np.log(g), 1)[0]
        assert slope == pytest.approx(2.0, abs=0.25)
        assert slope < 2.0

    def test_kappa_moves_crossover(self):
        # larger kappa: the transition from local to global happens earlier
        crossings = []
        for kappa in (0.5, 2.0):
            p = params(d=2, alpha=1.0, beta=1.0, kappa=kappa)
            hs = np.geomspace(1e-3, 1e3, 61)
            g = np.array([stationary(p, h) for h in hs])
            slopes = np.gradient(np.log(g), np.log(hs))
            # first h where the local slope 2 has decayed halfway toward 0
            crossings.append(hs[int(np.argmax(slopes < 1.0))])
        assert crossings[1] < crossings[0]


class TestEvaluateDispatch:
    def test_auto_picks_closed_form(self):
        p = params(d=1, alpha=0.0, beta=1.0)
        assert evaluate(p, 2.0) == pytest.approx(2.0, rel=1e-12)

    def test_box_backend(self):
        p = params(d=1, alpha=0.0, beta=1.0)
        v = evaluate(p, 2.5, backend="box", L=50.0)
        assert v == pytest.approx(2.5, abs=0.05)

    def test_closed_form_unavailable(self):
        with pytest.raises(RegimeError):
            evaluate(params(d=1, alpha=0.5, beta=1.0), 1.0, backend="closed-form")
