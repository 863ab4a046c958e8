"""Scikit-learn style estimators wrapping the fitting and prediction engines.

``WhittleMaternKriging`` is a regressor over spatial coordinates backed by the
latent-field likelihood; ``BrownResnickPareto`` fits the extremal dependence
of threshold exceedances.  Both follow the fit/predict, get_params/set_params
conventions so they compose with pipelines and model selection tools.
"""

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin

from . import fem, gmrf, meshing
from .inference import ObservationSet, fit, loglik, posterior
from .validation import as_float_array, as_sites, check_in_domain


def _resolve_mesh(mesh, grid, X, d, margin=0.05):
    if mesh is not None:
        return mesh
    if grid is not None:
        if d == 1:
            lo, hi, n = grid
            return meshing.build_uniform(1, (lo, hi), int(n))
        (lo1, hi1, n1), (lo2, hi2, n2) = grid
        return meshing.build_uniform(2, ((lo1, hi1), (lo2, hi2)), (int(n1), int(n2)))
    # default: pad the data range by a margin, ~4 nodes per site
    lo = X.min(axis=0)
    hi = X.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    lo = lo - margin * span
    hi = hi + margin * span
    if d == 1:
        n = max(4 * len(X), 32)
        return meshing.build_uniform(1, (lo[0], hi[0]), min(n, 1024))
    n = max(int(2 * np.sqrt(len(X))), 12)
    return meshing.build_uniform(2, ((lo[0], hi[0]), (lo[1], hi[1])),
                                 (min(n, 96), min(n, 96)))


class WhittleMaternKriging(BaseEstimator, RegressorMixin):
    """Kriging regressor driven by the intrinsic latent-field likelihood.

    Parameters mirror the model: smoothness exponents ``alpha`` and ``beta``,
    range parameter ``kappa``, scale ``tau``, nugget ``sigma2``.  Parameters
    named in ``estimate`` are maximum-likelihood fitted; the rest stay fixed.
    """

    def __init__(self, alpha=1.0, beta=1.0, kappa=1.0, tau=1.0, sigma2=0.1,
                 d=1, estimate=("tau", "kappa", "sigma2"), mesh=None,
                 grid=None, orders="auto", restarts=3, seed=0):
        self.alpha = alpha
        self.beta = beta
        self.kappa = kappa
        self.tau = tau
        self.sigma2 = sigma2
        self.d = d
        self.estimate = estimate
        self.mesh = mesh
        self.grid = grid
        self.orders = orders
        self.restarts = restarts
        self.seed = seed

    def _init_params(self):
        return gmrf.ModelParams(tau=self.tau, kappa=self.kappa, alpha=self.alpha,
                                beta=self.beta, sigma2=self.sigma2, d=self.d)

    def fit(self, X, y):
        X = as_sites(X, self.d)
        y = as_float_array(y, "y", ndim=1)
        if len(y) != len(X):
            raise ValueError("X and y length mismatch")
        self.mesh_ = _resolve_mesh(self.mesh, self.grid, X, self.d)
        lo, hi = self.mesh_.extents()
        check_in_domain(X, lo, hi)
        obs = ObservationSet(X, y)
        fixed = tuple(n for n in ("tau", "kappa", "alpha", "beta", "sigma2")
                      if n not in set(self.estimate))
        report = fit(self.mesh_, obs, self._init_params(), fixed=fixed,
                     orders=self.orders, restarts=self.restarts, seed=self.seed)
        self.params_ = report.params
        self.report_ = report
        self.model_ = gmrf.build(self.mesh_, self.params_, orders=self.orders)
        self.posterior_ = posterior(self.model_, ObservationSet(X, y))
        self.X_ = X
        self.y_ = y
        return self

    def predict(self, X, return_std=False):
        X = as_sites(X, self.d)
        mean = self.posterior_.predict(X)
        if not return_std:
            return mean
        # predictive variance through the observation-site variogram
        from .kriging import krige_variogram
        A_obs = fem.projection(self.mesh_, self.X_)
        Gam = gmrf.fem_variogram(self.model_, A_obs, include_nugget=True)
        sd = np.empty(len(X))
        for i, x in enumerate(X):
            Ax = fem.projection(self.mesh_, x[None, :])
            g0 = _cross_variogram(self.model_, A_obs, Ax)
            res = krige_variogram(Gam, g0 + self.params_.sigma2, self.y_)
            sd[i] = np.sqrt(max(res.variance, 0.0))
        return mean, sd

    def log_marginal_likelihood(self):
        return loglik(self.model_, ObservationSet(self.X_, self.y_))

    def sample_field(self, seed, size=None):
        return gmrf.sample(self.model_, seed, size=size)


def _cross_variogram(model, A_obs, A_new):
    """gamma(s_i, s_new) for one new site against all observation sites."""
    a_new = np.asarray(A_new.todense()).ravel()
    k = A_obs.shape[0]
    out = np.zeros(k)
    for i, b in enumerate(model.blocks):
        f = model.block_factor(i)
        x = f.pseudo_solve(a_new) if b.intrinsic else f.solve(a_new)
        q_nn = float(a_new @ x)
        Xo = A_obs @ x
        At = np.asarray(A_obs.todense()).T
        Xi = f.pseudo_solve(At) if b.intrinsic else f.solve(At)
        q_ii = np.einsum("ij,ji->i", A_obs.toarray(), Xi)
        out += q_ii + q_nn - 2.0 * Xo
    return out


class BrownResnickPareto(BaseEstimator):
    """Extremal dependence estimator for threshold exceedances.

    ``fit`` expects the site coordinates and a matrix of exceedance events on
    the standard Gumbel scale; parameters in ``estimate`` are fitted by the
    sparse surrogate likelihood on a coarse profile grid.
    """

    def __init__(self, alpha=1.0, beta=1.0, kappa=1.0, tau=1.0, sigma2=0.0,
                 d=1, estimate=("tau", "kappa"), mesh=None, grid=None,
                 orders="auto", refine=2):
        self.alpha = alpha
        self.beta = beta
        self.kappa = kappa
        self.tau = tau
        self.sigma2 = sigma2
        self.d = d
        self.estimate = estimate
        self.mesh = mesh
        self.grid = grid
        self.orders = orders
        self.refine = refine

    def fit(self, X, Y):
        from .extremes import surrogate_loglik
        X = as_sites(X, self.d)
        Y = np.atleast_2d(as_float_array(Y, "Y"))
        self.mesh_ = _resolve_mesh(self.mesh, self.grid, X, self.d)
        names = [n for n in ("tau", "kappa") if n in set(self.estimate)]
        base = dict(tau=self.tau, kappa=self.kappa, alpha=self.alpha,
                    beta=self.beta, sigma2=self.sigma2, d=self.d)

        def ll(**over):
            p = gmrf.ModelParams(**{**base, **over})
            return surrogate_loglik(self.mesh_, p, X, Y, j0=0, orders=self.orders)

        # coordinate-wise golden search on the log scale, a few sweeps
        cur = {n: base[n] for n in names}
        for _ in range(max(int(self.refine), 1)):
            for n in names:
                lo, hi = np.log(cur[n]) - 1.5, np.log(cur[n]) + 1.5
                xs = np.linspace(lo, hi, 9)
                vals = [ll(**{**cur, n: float(np.exp(x))}) for x in xs]
                cur[n] = float(np.exp(xs[int(np.argmax(vals))]))
        self.params_ = gmrf.ModelParams(**{**base, **cur})
        self.loglik_ = ll(**cur)
        return self

    def chi(self, h):
        from .extremes import chi as model_chi
        return model_chi(self.params_, h)

    def predict(self, X_targets, X_observed, y_event):
        """Extremal kriging of one exceedance event at new target sites."""
        from .extremes import HuslerReissModel, conditional_law
        X_targets = as_sites(X_targets, self.d)
        X_observed = as_sites(X_observed, self.d)
        y_event = as_float_array(y_event, "y_event", ndim=1)
        stacked = np.vstack([X_observed, X_targets])
        hr = HuslerReissModel.from_fem(self.mesh_, self.params_, stacked,
                                       orders=self.orders)
        O = np.arange(len(X_observed))
        U = np.arange(len(X_observed), len(stacked))
        mean, _ = conditional_law(hr.theta, O, U, y_event)
        return mean
