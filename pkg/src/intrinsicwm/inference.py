"""Gaussian likelihood of noisy observations, posterior state and ML fitting.

The latent field is the M-block GMRF; the marginal likelihood of the data is
evaluated entirely with sparse factorizations, generalized determinants and
constrained solves.  For intrinsic models the value is normalized to the
intrinsic-density convention, so it matches the dense variogram-based density
exactly, not just up to a constant.
"""

import json
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.optimize import minimize

from . import fem, gmrf
from .sparse import Factor, block_diff_basis
from .validation import as_sites, rng_from_seed


class InferenceError(Exception):
    pass


@dataclass
class ObservationSet:
    """Observation sites, values and the noise precision descriptor.

    The default noise precision is (2 / sigma2) I, the convention under which
    the observation variogram gains exactly +sigma2 off the diagonal.
    """

    sites: np.ndarray
    values: np.ndarray
    sigma2: float = None          # scalar nugget; model value used when None
    noise_precision: sp.spmatrix = None   # overrides sigma2 when given

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if len(self.values) < 2:
            raise InferenceError("need at least two observations")

    def q_eps(self, model):
        k = len(self.values)
        if self.noise_precision is not None:
            Q = sp.csc_matrix(self.noise_precision)
            f = Factor(Q)
            return Q, f.gen_logdet()
        s2 = self.sigma2 if self.sigma2 is not None else model.params.sigma2
        if s2 <= 0:
            raise InferenceError("hierarchical likelihood needs a positive nugget")
        return sp.identity(k, format="csc") * (2.0 / s2), k * math.log(2.0 / s2)


@dataclass
class PosteriorState:
    """Posterior precision factor and mean of the stacked block weights."""

    model: gmrf.IntrinsicGmrf
    factor: Factor
    mean: np.ndarray           # length M*N
    proj: sp.csr_matrix        # k x N projection of the observation sites
    logdet_post: float

    def field_mean(self):
        """Posterior mean of the field weights (sum of the block means)."""
        N = self.model.n_nodes
        return self.mean.reshape(self.model.n_blocks, N).sum(axis=0)

    def predict(self, sites):
        A_new = fem.projection(self.model.mesh, as_sites(sites, self.model.params.d))
        return A_new @ self.field_mean()


def _assemble_posterior(model, A, Qeps):
    """Factor of the posterior precision with its null-space bookkeeping.

    Returns (factor, prior_logdet, null_dims) where null_dims = (prior, post).
    """
    M, N = model.n_blocks, model.n_nodes
    AtQA = sp.csc_matrix(A.T @ Qeps @ A)
    data = sp.kron(np.ones((M, M)), AtQA, format="csc")
    base = sp.block_diag([b.precision for b in model.blocks], format="csc") + data

    intrinsic_blocks = model.blocks[0].intrinsic
    frac_only = model.project          # proper blocks made intrinsic by rank-1 downdate

    prior_ld = 0.0
    if intrinsic_blocks:
        for i in range(M):
            f = model.block_factor(i)
            prior_ld += f.gen_logdet()
        nb = block_diff_basis(M, N) if M > 1 else None
        if M == 1:
            # single intrinsic block: posterior is proper
            fac = Factor(base)
        else:
            fac = Factor(base, null_basis=nb)
        return fac, prior_ld, (M, M - 1)
    if frac_only:
        # fractional beta in (0, 1) always brings at least one pole block,
        # so M >= 2 here and the posterior keeps M - 1 flat directions
        V = np.zeros((M * N, M))
        for i, (v, s) in enumerate(model.intrinsicize_data()):
            # |Q - v v'/s|_* = det(Q) N / s  with v = Q 1, s = 1'Q1
            f = model.block_factor(i)
            prior_ld += f.gen_logdet() + math.log(N) - math.log(s)
            V[i * N:(i + 1) * N, i] = v / math.sqrt(s)
        fac = Factor(base, null_basis=block_diff_basis(M, N), downdate=V)
        return fac, prior_ld, (M, M - 1)
    # proper model (beta = 0)
    for i in range(M):
        prior_ld += model.block_factor(i).gen_logdet()
    return Factor(base), prior_ld, (0, 0)


def _stack_proj(A, M):
    return sp.hstack([A] * M, format="csr")


def loglik(model, obs, A=None):
    """Marginal log-likelihood of the observations under the latent model.

    Supports a matrix of observation columns sharing sites (vectorized over
    replicates); returns a scalar for a single vector.
    """
    W = np.asarray(obs.values, dtype=float)
    one_d = W.ndim == 1
    Wc = W[:, None] if one_d else W
    k = Wc.shape[0]
    if A is None:
        A = fem.projection(model.mesh, as_sites(obs.sites, model.params.d))
    Qeps, ld_eps = obs.q_eps(model)
    fac, prior_ld, (p_prior, p_post) = _assemble_posterior(model, A, Qeps)
    M, N = model.n_blocks, model.n_nodes
    Abar = _stack_proj(A, M)
    B = Abar.T @ (Qeps @ Wc)
    Mu = fac.pseudo_solve(B) if p_post > 0 else fac.solve(B)
    Resid = Wc - Abar @ Mu
    quad_prior = np.zeros(Wc.shape[1])
    for i, b in enumerate(model.blocks):
        Mi = Mu[i * N:(i + 1) * N]
        quad_prior += np.einsum("ij,ij->j", Mi, b.precision @ Mi)
    if model.project:
        for i, (v, s) in enumerate(model.intrinsicize_data()):
            quad_prior -= (v @ Mu[i * N:(i + 1) * N]) ** 2 / s
    quad_eps = np.einsum("ij,ij->j", Resid, Qeps @ Resid)
    ld_post = fac.gen_logdet()
    out = 0.5 * (prior_ld + ld_eps - ld_post) - 0.5 * (quad_prior + quad_eps)
    if p_prior > p_post:
        # intrinsic convention: one flat direction remains in the data
        out += -0.5 * (k - 1) * math.log(2.0 * math.pi) + 0.5 * math.log(k * M / N)
    else:
        out += -0.5 * k * math.log(2.0 * math.pi)
    return float(out[0]) if one_d else out


def posterior(model, obs):
    """Posterior precision factor and mean of the stacked weights."""
    A = fem.projection(model.mesh, as_sites(obs.sites, model.params.d))
    Qeps, _ = obs.q_eps(model)
    fac, _, (p_prior, p_post) = _assemble_posterior(model, A, Qeps)
    Abar = _stack_proj(A, model.n_blocks)
    b = Abar.T @ (Qeps @ np.asarray(obs.values, dtype=float))
    mu = fac.pseudo_solve(b) if p_post > 0 else fac.solve(b)
    return PosteriorState(model=model, factor=fac, mean=mu, proj=A,
                          logdet_post=fac.gen_logdet())


# -- maximum likelihood -------------------------------------------------------

FIT_PARAM_NAMES = ("tau", "kappa", "alpha", "beta", "sigma2")


@dataclass
class FitReport:
    params: gmrf.ModelParams
    loglik: float
    iterations: int
    evaluations: int
    converged: bool
    orders: tuple

    def to_json(self):
        d = {
            "params": {k: getattr(self.params, k)
                       for k in ("tau", "kappa", "alpha", "beta", "sigma2", "d")},
            "loglik": self.loglik,
            "iterations": self.iterations,
            "evaluations": self.evaluations,
            "converged": self.converged,
            "orders": {"m": self.orders[0], "m_tilde": self.orders[1]},
        }
        return json.dumps(d, indent=2)


def _softplus(x):
    return np.logaddexp(0.0, x)


def _softplus_inv(y):
    return y + np.log(-np.expm1(-y)) if y > 1e-8 else np.log(np.expm1(y))


_BETA_CAP = 2.0 - 1e-6


def _pack(params, free):
    vals = []
    for name in free:
        v = getattr(params, name)
        if name in ("tau", "kappa", "sigma2"):
            vals.append(math.log(max(v, 1e-12)))
        elif name == "alpha":
            vals.append(_softplus_inv(max(v, 1e-8)))
        else:  # beta in [0, 2)
            frac = min(max(v / _BETA_CAP, 1e-9), 1 - 1e-9)
            vals.append(math.log(frac / (1 - frac)))
    return np.array(vals)


def _unpack(x, params, free, grid=0.05):
    kw = {k: getattr(params, k) for k in FIT_PARAM_NAMES}
    for name, xi in zip(free, x):
        if name in ("tau", "kappa", "sigma2"):
            kw[name] = math.exp(xi)
        elif name == "alpha":
            kw[name] = float(_softplus(xi))
        else:
            kw[name] = _BETA_CAP / (1.0 + math.exp(-xi))
    # snap fractional parts to a coarse grid so rational coefficients cache
    for name in ("alpha", "beta"):
        if name in free:
            snapped = round(kw[name] / grid) * grid
            kw[name] = max(snapped, 0.0)
    if "beta" in free:
        kw["beta"] = min(kw["beta"], _BETA_CAP)
    return kw


def fit(mesh, obs, init, fixed=(), orders="auto", restarts=3, seed=0,
        maxiter=200, kappa_floor=None):
    """Maximize the likelihood over the non-fixed parameters.

    Derivative-free Nelder-Mead in transformed coordinates with jittered
    restarts; returns the best point seen even when unconverged.
    """
    free = [n for n in FIT_PARAM_NAMES if n not in set(fixed)]
    d = init.d
    lo, hi = mesh.extents()
    diam = float(np.linalg.norm(hi - lo))
    kfloor = kappa_floor if kappa_floor is not None else 1e-6 / max(diam, 1e-12)
    A = fem.projection(mesh, as_sites(obs.sites, d))
    evaluations = 0

    def objective(x):
        nonlocal evaluations
        evaluations += 1
        kw = _unpack(x, init, free)
        kw["kappa"] = max(kw["kappa"], kfloor)
        try:
            p = gmrf.ModelParams(d=d, **kw)
        except gmrf.ModelError:
            return 1e12
        if p.alpha + p.beta <= d / 2.0 + 1e-3:
            return 1e12
        try:
            model = gmrf.build(mesh, p, orders=orders)
            ll = loglik(model, ObservationSet(obs.sites, obs.values, obs.sigma2), A=A)
        except Exception:
            return 1e12
        return -float(np.sum(ll))   # replicate columns contribute jointly

    if not free:
        model = gmrf.build(mesh, init, orders=orders)
        ll0 = float(np.sum(loglik(model, obs, A=A)))
        return FitReport(init, ll0, 0, 1, True, model.orders)

    rng = rng_from_seed(seed)
    x0 = _pack(init, free)
    best = None
    total_iter = 0
    converged = False
    for r in range(restarts):
        start = x0 if r == 0 else x0 + 0.3 * rng.standard_normal(len(free))
        res = minimize(objective, start, method="Nelder-Mead",
                       options=dict(maxiter=maxiter, xatol=1e-4, fatol=1e-6))
        total_iter += res.nit
        if best is None or res.fun < best.fun:
            best = res
        converged = converged or bool(res.success)
    kw = _unpack(best.x, init, free)
    kw["kappa"] = max(kw["kappa"], kfloor)
    p_best = gmrf.ModelParams(d=d, **kw)
    model = gmrf.build(mesh, p_best, orders=orders)
    ll_best = np.sum(loglik(model, ObservationSet(obs.sites, obs.values,
                                                  obs.sigma2), A=A))
    ll_init = np.sum(loglik(gmrf.build(mesh, init, orders=orders),
                            ObservationSet(obs.sites, obs.values, obs.sigma2),
                            A=A))
    if ll_best < ll_init:
        p_best, ll_best = init, ll_init
        model = gmrf.build(mesh, p_best, orders=orders)
    return FitReport(p_best, float(ll_best), total_iter, evaluations,
                     converged, model.orders)
