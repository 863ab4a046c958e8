import numpy as np
import pytest

from intrinsicwm.extremes import gamma_from_theta
from intrinsicwm.kriging import (
    KrigingError,
    asymptotic_mean,
    extrapolation_constant,
    krige_intrinsic,
    krige_variogram,
    proper_to_intrinsic,
)

from oracles import ordinary_kriging_mean


def power_gamma(sites, b, ell=1.0):
    D = np.abs(sites[:, None, :] - sites[None, :, :]).sum(axis=2) \
        if sites.ndim == 2 else np.abs(sites[:, None] - sites[None, :])
    if sites.ndim == 2:
        D = np.linalg.norm(sites[:, None, :] - sites[None, :, :], axis=2)
    return ell * D ** b


class TestKrigeVariogram:
    def test_single_observation(self):
        res = krige_variogram(np.zeros((1, 1)), np.array([0.8]), np.array([4.2]))
        assert res.prediction == pytest.approx(4.2)
        assert res.weights[0] == pytest.approx(1.0)
        # prediction error variance is Var(u0 - u1) = gamma0
        assert res.variance == pytest.approx(0.8)

    def test_symmetric_pair(self):
        Gam = np.array([[0.0, 2.0], [2.0, 0.0]])
        g0 = np.array([1.0, 1.0])
        res = krige_variogram(Gam, g0, np.array([3.0, 5.0]))
        assert np.allclose(res.weights, 0.5)
        assert res.prediction == pytest.approx(4.0)

    def test_weights_sum_to_one(self, rng):
        for _ in range(5):
            sites = rng.uniform(0, 1, (6, 2))
            Gam = power_gamma(sites, 1.0)
            g0 = np.linalg.norm(sites - rng.uniform(0, 1, 2), axis=1)
            res = krige_variogram(Gam, g0, rng.standard_normal(6))
            assert res.weights.sum() == pytest.approx(1.0, abs=1e-12)

    def test_matches_lagrange_oracle(self, rng):
        sites = rng.uniform(0, 1, (3, 1))
        target = np.array([0.5])
        Gam = power_gamma(sites, 1.0)
        g0 = np.abs(sites[:, 0] - target[0])
        vals = rng.standard_normal(3)
        res = krige_variogram(Gam, g0, vals)
        assert res.prediction == pytest.approx(
            ordinary_kriging_mean(Gam, g0, vals), abs=1e-10)


class TestKrigeIntrinsic:
    def test_path_middle_node(self, path_laplacian):
        theta = path_laplacian[np.ix_([1, 0, 2], [1, 0, 2])]
        pred, w = krige_intrinsic(theta, np.array([3.0, 7.0]))
        assert np.allclose(w, 0.5)
        assert pred == pytest.approx(5.0)

    def test_agrees_with_variogram_route(self, rng):
        from conftest import random_graph_laplacian
        for n in (4, 6):
            L = random_graph_laplacian(rng, n)
            Gam = gamma_from_theta(L)
            vals = rng.standard_normal(n - 1)
            pred_t, _ = krige_intrinsic(L, vals)
            res = krige_variogram(Gam[1:, 1:], Gam[1:, 0], vals)
            assert pred_t == pytest.approx(res.prediction, abs=1e-9)

    def test_constant_data(self, path_laplacian):
        theta = path_laplacian[np.ix_([1, 0, 2], [1, 0, 2])]
        pred, _ = krige_intrinsic(theta, np.array([2.5, 2.5]))
        assert pred == pytest.approx(2.5)


class TestProperToIntrinsic:
    def test_worked_example(self):
        Q = np.array([[2.0, -1.0], [-1.0, 2.0]])
        T = proper_to_intrinsic(Q)
        assert np.allclose(T, [[1.5, -1.5], [-1.5, 1.5]])

    def test_variogram_preserved(self):
        Q = np.array([[2.0, -1.0], [-1.0, 2.0]])
        S = np.linalg.inv(Q)
        contrast = S[0, 0] + S[1, 1] - 2 * S[0, 1]
        assert contrast == pytest.approx(2.0 / 3.0)
        T = proper_to_intrinsic(Q)
        assert gamma_from_theta(T)[0, 1] == pytest.approx(2.0 / 3.0)

    def test_scaled_identity(self):
        a, k = 2.5, 4
        T = proper_to_intrinsic(a * np.eye(k))
        assert np.allclose(T, a * (np.eye(k) - np.ones((k, k)) / k))


class TestAsymptoticMean:
    def test_two_symmetric_sites(self):
        Gam = np.array([[0.0, 1.0], [1.0, 0.0]])
        assert asymptotic_mean(Gam, np.array([1.0, 3.0])) == pytest.approx(2.0)

    def test_constant_data(self, rng):
        sites = rng.uniform(0, 1, (5, 1))
        Gam = power_gamma(sites, 1.2)
        assert asymptotic_mean(Gam, np.full(5, 3.3)) == pytest.approx(3.3)

    def test_models_agree_on_toy_data(self, rng):
        # ten observations near level 2.5; five variogram models give
        # mutually consistent far-field means (growth exponents kept below
        # the near-degenerate b -> 2 regime)
        sites = np.sort(rng.uniform(0, 10, 10))[:, None]
        vals = 2.5 + 0.3 * rng.standard_normal(10)
        models = [
            power_gamma(sites, 0.5),
            power_gamma(sites, 0.8),
            power_gamma(sites, 1.0),
            power_gamma(sites, 1.2),
            2.0 * (1.0 - np.exp(-power_gamma(sites, 1.0))),  # bounded
        ]
        means = [asymptotic_mean(G, vals) for G in models]
        ref = np.mean(means)
        assert np.all(np.abs(np.array(means) - ref) <= 0.15 * abs(ref))


class TestExtrapolationConstant:
    def test_no_trend_gives_zero(self):
        sites = np.array([[-1.0], [1.0]])
        Gam = power_gamma(sites, 1.0)
        c = extrapolation_constant(sites, np.array([2.0, 2.0]), np.array([1.0]),
                                   Gam, b=1.0)
        assert c == pytest.approx(0.0, abs=1e-12)

    def test_two_site_worked_example(self):
        # gamma(h) = h, sites +-1/2, data (1, 0): kriging toward +inf sticks to
        # the nearest value 0 while the far-field mean is 1/2, so c = -1/2
        sites = np.array([[-0.5], [0.5]])
        Gam = power_gamma(sites, 1.0)
        c = extrapolation_constant(sites, np.array([1.0, 0.0]), np.array([1.0]),
                                   Gam, b=1.0)
        assert c == pytest.approx(-0.5, abs=1e-12)

    def test_sign_flip_under_direction_reversal(self, rng):
        sites = rng.uniform(-1, 1, (5, 1))
        vals = rng.standard_normal(5)
        Gam = power_gamma(sites, 0.8)
        c_plus = extrapolation_constant(sites, vals, np.array([1.0]), Gam, b=0.8)
        c_minus = extrapolation_constant(sites, vals, np.array([-1.0]), Gam, b=0.8)
        assert c_plus == pytest.approx(-c_minus, rel=1e-10)

    @pytest.mark.parametrize("b", [0.5, 1.0, 1.5])
    def test_matches_empirical_limit(self, rng, b):
        # c is the limit of (u_hat(Lv) - u_bar) / L^(b-1); checked at L = 1e6
        sites = rng.uniform(-1, 1, (5, 1))
        vals = rng.standard_normal(5)
        Gam = power_gamma(sites, b)
        c = extrapolation_constant(sites, vals, np.array([1.0]), Gam, b=b)
        L = 1e6
        g0 = np.abs(sites[:, 0] - L) ** b
        pred = ordinary_kriging_mean(Gam, g0, vals)
        ubar = asymptotic_mean(Gam, vals)
        emp = (pred - ubar) / L ** (b - 1.0)
        assert c == pytest.approx(emp, rel=2e-3, abs=1e-9)


class TestExtrapolationBehavior:
    def test_prop4_slopes(self, rng):
        # log |u_hat(Lv) - u_bar| vs log L has slope b - 1
        sites = rng.uniform(-1, 1, (6, 1))
        vals = rng.standard_normal(6)
        for b in (0.5, 1.5):
            Gam = power_gamma(sites, b)
            ubar = asymptotic_mean(Gam, vals)
            Ls = np.geomspace(1e2, 1e4, 7)
            devs = []
            for L in Ls:
                g0 = np.abs(sites[:, 0] - L) ** b
                devs.append(abs(ordinary_kriging_mean(Gam, g0, vals) - ubar))
            slope = np.polyfit(np.log(Ls), np.log(devs), 1)[0]
            assert slope == pytest.approx(b - 1.0, abs=0.1)

    def test_b_equal_one_bounded(self, rng):
        sites = rng.uniform(-1, 1, (6, 1))
        vals = rng.standard_normal(6)
        Gam = power_gamma(sites, 1.0)
        ubar = asymptotic_mean(Gam, vals)
        devs = []
        for L in (1e2, 1e3, 1e4):
            g0 = np.abs(sites[:, 0] - L)
            devs.append(abs(ordinary_kriging_mean(Gam, g0, vals) - ubar))
        assert max(devs) - min(devs) < 0.05 * max(max(devs), 1e-12) + 1e-9

    def test_variance_growth(self, rng):
        # predictive variance ~ ell L^b for constant ell
        sites = rng.uniform(-1, 1, (5, 1))
        vals = rng.standard_normal(5)
        for b in (0.5, 1.0, 1.5):
            Gam = power_gamma(sites, b)
            L = 1e4
            g0 = np.abs(sites[:, 0] - L) ** b
            res = krige_variogram(Gam, g0, vals)
            assert res.variance / L ** b == pytest.approx(1.0, rel=0.1)

    def test_figure3_ordering(self, rng):
        # proper -> u_bar; b=1 bounded offset; b in {1.5, 1.9} diverge
        sites = rng.uniform(-1, 1, (8, 1))
        vals = np.sort(rng.standard_normal(8))   # a data trend
        L = 1e3
        devs = {}
        for tag, b in (("b=1", 1.0), ("b=1.5", 1.5), ("b=1.9", 1.9)):
            Gam = power_gamma(sites, b)
            g0 = np.abs(sites[:, 0] - L) ** b
            devs[tag] = abs(ordinary_kriging_mean(Gam, g0, vals)
                            - asymptotic_mean(Gam, vals))
        bounded = 2.0 * (1.0 - np.exp(-power_gamma(sites, 1.0)))
        g0b = 2.0 * (1.0 - np.exp(-np.abs(sites[:, 0] - L)))
        devs["proper"] = abs(ordinary_kriging_mean(bounded, g0b, vals)
                             - asymptotic_mean(bounded, vals))
        assert devs["proper"] < 1e-6
        assert devs["proper"] < devs["b=1"] < devs["b=1.5"] < devs["b=1.9"]


class TestErrors:
    def test_shape_mismatch(self):
        with pytest.raises(KrigingError):
            krige_variogram(np.zeros((2, 2)), np.zeros(3), np.zeros(2))

    def test_zero_diagonal_intrinsic(self):
        with pytest.raises(KrigingError):
            krige_intrinsic(np.zeros((3, 3)), np.zeros(2))
