import numpy as np
import pytest

from intrinsicwm import fem, gmrf
from intrinsicwm.gmrf import ModelParams, build, fem_variogram
from intrinsicwm.inference import FIT_PARAM_NAMES, ObservationSet, fit, loglik, posterior
from intrinsicwm.meshing import build_uniform

from oracles import intrinsic_logpdf_from_gamma, ordinary_kriging_mean, proper_logpdf


CASES = [
    # (alpha, beta, orders)
    (1.0, 1.0, (0, 0)),
    (2.0, 0.0, (0, 0)),
    (0.0, 2.0, (0, 0)),
    (0.5, 1.0, (2, 0)),
    (1.3, 0.4, (2, 2)),
]


def make_setup(alpha, beta, orders, n_mesh=20, k=4, sigma2=0.3, seed=3):
    mesh = build_uniform(1, (0.0, 1.0), n_mesh)
    p = ModelParams(tau=0.8, kappa=2.0, alpha=alpha, beta=beta, sigma2=sigma2, d=1)
    model = build(mesh, p, orders=orders)
    rng = np.random.default_rng(seed)
    sites = rng.uniform(0.05, 0.95, k)
    w = rng.standard_normal(k) * 2.0 + 1.0
    return mesh, p, model, sites, w


def dense_oracle_loglik(model, sites, w, sigma2):
    """Variogram-based intrinsic (or proper) density, built independently."""
    A = fem.projection(model.mesh, sites[:, None])
    Gam = fem_variogram(model, A, include_nugget=True)
    if model.params.intrinsic:
        return intrinsic_logpdf_from_gamma(w, Gam)
    # proper case: dense covariance of the latent plus the noise
    from oracles import dense_pinv
    cov = np.zeros((model.n_nodes, model.n_nodes))
    for blk in model.blocks:
        cov += dense_pinv(blk.precision.toarray())
    S = (A @ cov @ A.T.toarray().astype(float)) if hasattr(A, "toarray") else A @ cov @ A.T
    S = np.asarray(A @ (cov @ A.toarray().T))
    return proper_logpdf(w, S + sigma2 / 2.0 * np.eye(len(w)))


class TestLoglikOracle:
    @pytest.mark.parametrize("alpha,beta,orders", CASES)
    def test_matches_dense_intrinsic_density(self, alpha, beta, orders):
        mesh, p, model, sites, w = make_setup(alpha, beta, orders)
        got = loglik(model, ObservationSet(sites, w))
        want = dense_oracle_loglik(model, sites, w, p.sigma2)
        assert got == pytest.approx(want, abs=1e-8)

    @pytest.mark.parametrize("c", [-3.0, 1.0, 10.0])
    def test_shift_invariance(self, c):
        mesh, p, model, sites, w = make_setup(1.0, 1.0, (0, 0))
        a = loglik(model, ObservationSet(sites, w))
        b = loglik(model, ObservationSet(sites, w + c))
        assert a == pytest.approx(b, abs=1e-9)

    def test_shift_invariance_fractional(self):
        mesh, p, model, sites, w = make_setup(1.3, 0.4, (2, 2))
        a = loglik(model, ObservationSet(sites, w))
        b = loglik(model, ObservationSet(sites, w + 4.0))
        assert a == pytest.approx(b, abs=1e-8)

    def test_proper_case_is_not_shift_invariant(self):
        mesh, p, model, sites, w = make_setup(2.0, 0.0, (0, 0))
        a = loglik(model, ObservationSet(sites, w))
        b = loglik(model, ObservationSet(sites, w + 4.0))
        assert abs(a - b) > 1e-3

    def test_invariant_to_observation_order(self):
        mesh, p, model, sites, w = make_setup(0.5, 1.0, (2, 0), k=5)
        perm = np.array([3, 0, 4, 1, 2])
        a = loglik(model, ObservationSet(sites, w))
        b = loglik(model, ObservationSet(sites[perm], w[perm]))
        assert a == pytest.approx(b, rel=1e-10)

    def test_general_sparse_noise_precision(self):
        import scipy.sparse as sp
        mesh, p, model, sites, w = make_setup(1.0, 1.0, (0, 0))
        scalar = loglik(model, ObservationSet(sites, w))
        Qeps = sp.identity(len(w), format="csc") * (2.0 / p.sigma2)
        general = loglik(model, ObservationSet(sites, w, noise_precision=Qeps))
        assert scalar == pytest.approx(general, rel=1e-12)

    def test_two_dimensional_mesh(self):
        mesh = build_uniform(2, ((0.0, 1.0), (0.0, 1.0)), 5)
        p = ModelParams(tau=0.9, kappa=3.0, alpha=1.0, beta=1.0, sigma2=0.2, d=2)
        model = build(mesh, p)
        rng = np.random.default_rng(7)
        sites = rng.uniform(0.1, 0.9, (5, 2))
        w = rng.standard_normal(5)
        got = loglik(model, ObservationSet(sites, w))
        A = fem.projection(mesh, sites)
        Gam = fem_variogram(model, A, include_nugget=True)
        want = intrinsic_logpdf_from_gamma(w, Gam)
        assert got == pytest.approx(want, abs=1e-8)
        shifted = loglik(model, ObservationSet(sites, w + 2.0))
        assert got == pytest.approx(shifted, abs=1e-9)

    def test_two_dimensional_fractional(self):
        mesh = build_uniform(2, ((0.0, 1.0), (0.0, 1.0)), 4)
        p = ModelParams(tau=1.0, kappa=2.5, alpha=0.6, beta=0.8, sigma2=0.3, d=2)
        model = build(mesh, p, orders=(2, 2))
        rng = np.random.default_rng(8)
        sites = rng.uniform(0.1, 0.9, (4, 2))
        w = rng.standard_normal(4)
        got = loglik(model, ObservationSet(sites, w))
        A = fem.projection(mesh, sites)
        Gam = fem_variogram(model, A, include_nugget=True)
        want = intrinsic_logpdf_from_gamma(w, Gam)
        assert got == pytest.approx(want, abs=1e-8)

    def test_vectorized_columns(self):
        mesh, p, model, sites, w = make_setup(1.0, 1.0, (0, 0))
        W = np.column_stack([w, w + 1.0, 2 * w])
        vals = loglik(model, ObservationSet(sites, W))
        singles = [loglik(model, ObservationSet(sites, W[:, j])) for j in range(3)]
        assert np.allclose(vals, singles, rtol=1e-12)


class TestPosterior:
    def test_interpolation_limit(self):
        mesh = build_uniform(1, (0.0, 1.0), 40)
        p = ModelParams(tau=1.0, kappa=2.0, alpha=1.0, beta=1.0, sigma2=1e-8, d=1)
        model = build(mesh, p)
        rng = np.random.default_rng(0)
        sites = rng.uniform(0.1, 0.9, 6)
        w = rng.standard_normal(6)
        post = posterior(model, ObservationSet(sites, w))
        pred = post.predict(sites[:, None])
        assert np.abs(pred - w).max() < 1e-3

    def test_integer_posterior_is_proper(self):
        mesh, p, model, sites, w = make_setup(1.0, 1.0, (0, 0))
        post = posterior(model, ObservationSet(sites, w))
        assert post.factor.null_dim == 0

    def test_posterior_null_dimension(self):
        mesh, p, model, sites, w = make_setup(0.5, 1.0, (2, 0))
        post = posterior(model, ObservationSet(sites, w))
        assert post.factor.null_dim == model.n_blocks - 1

    def test_mean_matches_kriging_oracle(self):
        # ordinary kriging with a nugget equals the posterior mean of the
        # intrinsic model (flat level marginalized)
        mesh, p, model, sites, w = make_setup(1.0, 1.0, (0, 0), n_mesh=24, k=4)
        post = posterior(model, ObservationSet(sites, w))
        targets = np.array([0.15, 0.33, 0.52, 0.71, 0.88])
        pred = post.predict(targets[:, None])
        A_all = fem.projection(mesh, np.concatenate([sites, targets])[:, None])
        Gam_all = fem_variogram(model, A_all, include_nugget=False)
        k = len(sites)
        for t in range(5):
            Gam = Gam_all[:k, :k] + p.sigma2 * (1 - np.eye(k))
            g0 = Gam_all[:k, k + t] + p.sigma2 / 2.0
            want = ordinary_kriging_mean(Gam, g0, w)
            assert pred[t] == pytest.approx(want, abs=1e-6)

    def test_conditional_mean_identity_proper_block(self):
        # E(W_i | W_-i) = -sum_j Q_ij W_j / Q_ii on a proper single block
        mesh = build_uniform(1, (0.0, 1.0), 12)
        p = ModelParams(tau=1.0, kappa=2.0, alpha=2.0, beta=0.0, d=1)
        model = build(mesh, p)
        Q = model.blocks[0].precision.toarray()
        rng = np.random.default_rng(1)
        w = rng.standard_normal(12)
        Sigma = np.linalg.inv(Q)
        for i in (0, 5, 11):
            keep = [j for j in range(12) if j != i]
            cond = Sigma[i, keep] @ np.linalg.solve(Sigma[np.ix_(keep, keep)], w[keep])
            formula = -Q[i, keep] @ w[keep] / Q[i, i]
            assert cond == pytest.approx(formula, rel=1e-10)


class TestFit:
    def test_all_fixed_returns_init(self):
        mesh, p, model, sites, w = make_setup(1.0, 1.0, (0, 0))
        obs = ObservationSet(sites, w)
        report = fit(mesh, obs, p, fixed=FIT_PARAM_NAMES)
        assert report.params == p
        assert report.converged

    def test_monotone_improvement(self):
        mesh = build_uniform(1, (0.0, 1.0), 30)
        p_true = ModelParams(tau=1.0, kappa=3.0, alpha=1.0, beta=1.0,
                             sigma2=0.05, d=1)
        model = build(mesh, p_true)
        rng = np.random.default_rng(2)
        sites = rng.uniform(0.05, 0.95, 25)
        A = fem.projection(mesh, sites[:, None])
        w = (A @ gmrf.sample(model, 11)) + rng.standard_normal(25) * np.sqrt(0.025)
        init = ModelParams(tau=0.5, kappa=1.0, alpha=1.0, beta=1.0,
                           sigma2=0.2, d=1)
        obs = ObservationSet(sites, w)
        report = fit(mesh, obs, init, fixed=("alpha", "beta"), restarts=1,
                     maxiter=60)
        ll_init = loglik(build(mesh, init), obs)
        assert report.loglik >= ll_init

    def test_fractional_exponent_estimation_smoke(self):
        # alpha free: exercises the transform, grid snapping and order
        # re-selection inside the optimizer loop
        mesh = build_uniform(1, (0.0, 1.0), 25)
        p_true = ModelParams(tau=1.0, kappa=3.0, alpha=0.6, beta=1.0,
                             sigma2=0.05, d=1)
        model = build(mesh, p_true, orders=(2, 0))
        rng = np.random.default_rng(6)
        sites = np.linspace(0.05, 0.95, 30)
        A = fem.projection(mesh, sites[:, None])
        w = A @ gmrf.sample(model, 4) + rng.standard_normal(30) * 0.15
        init = ModelParams(tau=1.0, kappa=3.0, alpha=1.0, beta=1.0,
                           sigma2=0.05, d=1)
        report = fit(mesh, ObservationSet(sites, w), init,
                     fixed=("tau", "kappa", "beta", "sigma2"),
                     restarts=1, maxiter=40)
        assert 0.0 <= report.params.alpha <= 3.0
        # snapped to the coefficient-cache grid
        assert report.params.alpha == pytest.approx(
            round(report.params.alpha / 0.05) * 0.05, abs=1e-12)

    def test_report_json(self):
        mesh, p, model, sites, w = make_setup(1.0, 1.0, (0, 0))
        report = fit(mesh, ObservationSet(sites, w), p, fixed=FIT_PARAM_NAMES)
        import json
        blob = json.loads(report.to_json())
        assert blob["orders"] == {"m": 0, "m_tilde": 0}
        assert set(blob["params"]) == {"tau", "kappa", "alpha", "beta", "sigma2", "d"}
