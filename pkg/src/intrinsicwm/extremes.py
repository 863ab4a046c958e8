"""Husler-Reiss and Brown-Resnick machinery on intrinsic precisions.

Exponent-measure and r-Pareto densities, the sparse surrogate likelihood,
extremal correlation, extremal graphs, conditional laws through the
resistance curvature, extremal kriging and (conditional) simulation.
"""

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.special import ndtr

from . import fem, gmrf, variogram
from .inference import ObservationSet, loglik
from .sparse import Factor
from .validation import as_sites, rng_from_seed


class ExtremesError(Exception):
    pass


class SupportError(ExtremesError):
    pass


# -- parameterizations ---------------------------------------------------------

def gamma_from_theta(theta):
    """Variogram matrix of an intrinsic precision via its pseudoinverse.

    Dense eigen route, intended for moderate k; at FEM scale only columns are
    ever materialized (see surrogate_loglik).
    """
    Q = theta.toarray() if sp.issparse(theta) else np.asarray(theta, dtype=float)
    ev, U = np.linalg.eigh(Q)
    tol = 1e-10 * ev.max()
    inv = np.where(ev > tol, 1.0 / np.where(ev > tol, ev, 1.0), 0.0)
    pinv = (U * inv) @ U.T
    d = np.diag(pinv)
    G = d[:, None] + d[None, :] - 2.0 * pinv
    np.fill_diagonal(G, 0.0)
    return G


def theta_from_gamma(Gamma):
    """Intrinsic precision with variogram Gamma (pseudoinverse of -P Gamma P/2)."""
    G = np.asarray(Gamma, dtype=float)
    k = G.shape[0]
    P = np.eye(k) - np.ones((k, k)) / k
    S = P @ (-G / 2.0) @ P
    ev, U = np.linalg.eigh(S)
    tol = 1e-10 * ev.max()
    inv = np.where(ev > tol, 1.0 / np.where(ev > tol, ev, 1.0), 0.0)
    return (U * inv) @ U.T


@dataclass
class HuslerReissModel:
    """Husler-Reiss model over k sites, parameterized by the intrinsic Theta.

    The nugget, when present, is already folded into Theta/Gamma; sigma2 is
    kept for provenance.
    """

    theta: sp.spmatrix
    sigma2: float = 0.0
    _gamma: np.ndarray = None

    def __post_init__(self):
        T = sp.csc_matrix(self.theta)
        k = T.shape[0]
        rs = np.abs(T @ np.ones(k)).max()
        if rs > 1e-7 * max(1.0, np.abs(T.data).max()):
            raise ExtremesError("Theta must have zero row sums")
        self.theta = T

    @property
    def k(self):
        return self.theta.shape[0]

    @property
    def gamma(self):
        if self._gamma is None:
            self._gamma = gamma_from_theta(self.theta)
        return self._gamma

    @classmethod
    def from_gamma(cls, Gamma, sigma2=0.0):
        G = np.asarray(Gamma, dtype=float)
        if sigma2 > 0:
            G = G + sigma2 * (1.0 - np.eye(G.shape[0]))
        m = cls(theta=sp.csc_matrix(theta_from_gamma(G)), sigma2=sigma2)
        m._gamma = G
        return m

    @classmethod
    def from_fem(cls, mesh, params, sites, orders="auto"):
        """HR margins of the FEM Brown-Resnick model at the given sites.

        Keeps Theta sparse in the flagship case (sites at all mesh nodes,
        single integer block, no nugget); otherwise derives it densely from
        the block-sum variogram.
        """
        model = gmrf.build(mesh, params, orders=orders)
        sites = as_sites(sites, params.d)
        if (params.sigma2 == 0.0 and model.n_blocks == 1
                and _sites_are_all_nodes(mesh, sites)):
            return cls(theta=model.blocks[0].precision, sigma2=0.0)
        A = fem.projection(mesh, sites)
        Gam = gmrf.fem_variogram(model, A, include_nugget=True)
        return cls.from_gamma(Gam, sigma2=0.0)


def _sites_are_all_nodes(mesh, sites):
    if sites.shape[0] != mesh.n_vertices:
        return False
    return np.allclose(sites, mesh.vertices, atol=1e-12)


@dataclass(frozen=True)
class RiskFunctional:
    """Risk r(f): value at one site, or log of the summed exponential."""

    kind: str                  # "site" | "lse"
    site_index: int = 0

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        if self.kind == "site":
            return y[..., self.site_index]
        if self.kind == "lse":
            return np.log(np.sum(np.exp(y), axis=-1))
        raise ExtremesError(f"unknown risk functional {self.kind!r}")

    def normalizing_constant(self, k):
        """Exponent-measure mass of {r > 0}; parameter-free for both tags."""
        if self.kind == "site":
            return 1.0
        if self.kind == "lse":
            # integral of P(y + r(V) > 0) e^{-y} dy = E[sum_i e^{V_i}] = k
            return float(k)
        raise ExtremesError(f"unknown risk functional {self.kind!r}")


# -- densities -----------------------------------------------------------------

def exponent_density(model, y, m=0):
    """Log exponent-measure density of the HR model at y (pivot m arbitrary)."""
    y = np.asarray(y, dtype=float)
    k = model.k
    if not 0 <= m < k:
        raise ExtremesError("pivot index out of range")
    col = model.gamma[:, m]
    return float(-y[m] - 0.5 * math.log(k)
                 + gmrf.density_intrinsic(model.theta, y + col / 2.0))


def pareto_density(model, y, risk):
    """Log density of the r-Pareto distribution; support is {r(y) > 0}."""
    y = np.asarray(y, dtype=float)
    if risk(y) <= 0:
        raise SupportError("observation outside the support {r > 0}")
    logc = math.log(risk.normalizing_constant(model.k))
    return exponent_density(model, y, m=0) - logc


def surrogate_loglik(mesh, params, sites, Y, j0=0, orders="auto"):
    """Sparse surrogate log-likelihood of threshold exceedances.

    Returns the summed log exponent-measure density: the Gaussian part
    sum_i log f(y_i + Gamma_col(j0)/2) is evaluated through the hierarchical
    machinery and the pivot terms -y_{i,j0} - log(k)/2 are included, which
    makes the value exactly invariant to the arbitrary pivot j0.  The column
    comes from the pinned inverse diagonal in the sparse case and from
    per-block solves otherwise.
    """
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    sites = as_sites(sites, params.d)
    k = sites.shape[0]
    if Y.shape[1] != k:
        raise ExtremesError("Y must be (n_events, k_sites)")
    if not 0 <= j0 < k:
        raise ExtremesError("pivot j0 out of range")
    model = gmrf.build(mesh, params, orders=orders)
    sparse_case = (model.n_blocks == 1 and _sites_are_all_nodes(mesh, sites))
    if sparse_case:
        Q = model.blocks[0].precision
        keep = np.setdiff1d(np.arange(k), [j0])
        f = Factor(Q[np.ix_(keep, keep)].tocsc())
        col = np.zeros(k)
        col[keep] = f.inverse_diagonal()
        if params.sigma2 > 0:
            col[keep] += params.sigma2
    else:
        A = fem.projection(mesh, sites)
        Gam = gmrf.fem_variogram(model, A, include_nugget=True)
        col = Gam[:, j0]
    shifted = (Y + col[None, :] / 2.0).T   # k x n
    pivot_terms = -float(Y[:, j0].sum()) - Y.shape[0] * 0.5 * math.log(k)
    if params.sigma2 > 0:
        obs = ObservationSet(sites, shifted, sigma2=params.sigma2)
        vals = loglik(model, obs)
        return float(np.sum(vals)) + pivot_terms
    # no nugget: intrinsic density of the latent margins, one factorization
    # shared across all replicate columns
    if sparse_case:
        Q = model.blocks[0].precision
    else:
        Q = sp.csc_matrix(theta_from_gamma(Gam))
    f = Factor(Q, null_basis="ones")
    centered = shifted - shifted.mean(axis=0, keepdims=True)
    quads = np.einsum("ij,ij->j", centered, Q @ centered)
    n = shifted.shape[1]
    gauss = n * (-0.5 * (k - 1) * math.log(2.0 * math.pi)
                 + 0.5 * f.gen_logdet()) - 0.5 * float(quads.sum())
    return gauss + pivot_terms


# -- extremal correlation --------------------------------------------------------

def chi_from_gamma(gamma_value):
    """Extremal correlation 2 - 2 Phi(sqrt(gamma)/2) of a Husler-Reiss pair."""
    g = np.asarray(gamma_value, dtype=float)
    if np.any(g < 0):
        raise ExtremesError("variogram value must be nonnegative")
    out = 2.0 - 2.0 * ndtr(np.sqrt(g) / 2.0)
    return out if out.shape else float(out)


def chi(params, h):
    """Model extremal correlation at distance h."""
    return chi_from_gamma(variogram.evaluate(params, h))


def chi_empirical(data, pair, q=0.95):
    """Empirical tail-dependence of one column pair at quantile q.

    Rank-transforms both margins and returns the fraction of joint
    exceedances among exceedances at the first site.
    """
    X = np.asarray(data, dtype=float)
    n = X.shape[0]
    if n < 50:
        raise ExtremesError("need at least 50 rows")
    if not 0.8 < q < 1.0:
        raise ExtremesError("quantile must lie in (0.8, 1)")
    i, j = pair
    ui = (np.argsort(np.argsort(X[:, i])) + 1) / (n + 1.0)
    uj = (np.argsort(np.argsort(X[:, j])) + 1) / (n + 1.0)
    exc_i = ui > q
    joint = exc_i & (uj > q)
    n_i = int(exc_i.sum())
    if joint.sum() < 10:
        import warnings
        warnings.warn("fewer than 10 joint exceedances", UserWarning)
    return float(joint.sum() / max(n_i, 1))


# -- conditional law and kriging --------------------------------------------------

def resistance_curvature(theta):
    """v = Theta diag(Theta^+)/2 + 1/k, computed through one pinned factor."""
    Q = sp.csc_matrix(theta)
    k = Q.shape[0]
    keep = np.arange(1, k)
    T = Q[np.ix_(keep, keep)].tocsc()
    f = Factor(T)
    sig_diag = np.zeros(k)
    sig_diag[keep] = f.inverse_diagonal()
    r = np.zeros(k)
    r[keep] = f.solve(np.ones(k - 1))
    qsum = float(r.sum())
    diag_pinv = sig_diag - 2.0 * r / k + qsum / k ** 2
    return np.asarray(Q @ diag_pinv).ravel() / 2.0 + 1.0 / k, diag_pinv


def conditional_law(theta, observed, unobserved, y_obs):
    """Proper-normal conditional law of the Pareto process on the unobserved set.

    Returns (mean, precision) with precision Theta_UU; the mean uses the
    resistance curvature, which removes any pivot dependence.
    """
    Q = sp.csc_matrix(theta)
    O = np.asarray(observed, dtype=int)
    U = np.asarray(unobserved, dtype=int)
    if len(O) == 0 or len(U) == 0:
        raise ExtremesError("both observed and unobserved sets must be nonempty")
    y_obs = np.asarray(y_obs, dtype=float)
    v, _ = resistance_curvature(Q)
    Quu = Q[np.ix_(U, U)].tocsc()
    Quo = Q[np.ix_(U, O)]
    rhs = np.asarray(Quo @ y_obs).ravel() + v[U]
    f = Factor(Quu)
    mean = -f.solve(rhs)
    return mean, Quu


def extremal_krige(theta, target, observed, y_obs):
    """Conditional mean and precision at a single unobserved index."""
    mean, Quu = conditional_law(theta, observed, [target], y_obs)
    return float(mean[0]), float(Quu[0, 0])


def conditional_simulate(theta, y_obs, observed, unobserved, n, seed):
    """Draws from the conditional normal of the unobserved components."""
    mean, Quu = conditional_law(theta, observed, unobserved, y_obs)
    f = Factor(Quu)
    rng = rng_from_seed(seed)
    Z = rng.standard_normal((len(unobserved), int(n)))
    return (mean[:, None] + f.sampling_operator()(Z)).T


# -- graphs and marginalization ----------------------------------------------------

def extremal_graph(theta, tol=1e-10):
    """Edges {i, j} with |Theta_ij| above tol times the largest entry."""
    Q = sp.coo_matrix(theta)
    ref = np.abs(Q.data).max() if Q.nnz else 1.0
    edges = set()
    for i, j, v in zip(Q.row, Q.col, Q.data):
        if i < j and abs(v) > tol * ref:
            edges.add((int(i), int(j)))
    return sorted(edges)


def marginal_theta(theta, keep):
    """Schur complement onto the kept sites; stays first-order intrinsic."""
    Q = sp.csc_matrix(theta)
    k = Q.shape[0]
    keep = np.asarray(keep, dtype=int)
    drop = np.setdiff1d(np.arange(k), keep)
    if len(drop) == 0:
        return Q.copy()
    Quu = Q[np.ix_(drop, drop)].tocsc()
    Quo = Q[np.ix_(drop, keep)].toarray()
    f = Factor(Quu)
    X = f.solve(Quo)
    out = Q[np.ix_(keep, keep)].toarray() - Q[np.ix_(keep, drop)] @ X
    return sp.csc_matrix(out)


# -- simulation ---------------------------------------------------------------------

class SpectralSampler:
    """Draws rows of V(s) = u(s) - u(s0) - gamma(s, s0)/2 at fixed sites."""

    def __init__(self, mesh, params, sites, s0_index, orders="auto"):
        self.model = gmrf.build(mesh, params, orders=orders)
        self.sites = as_sites(sites, params.d)
        self.s0_index = int(s0_index)
        self.A = fem.projection(mesh, self.sites)
        Gam = gmrf.fem_variogram(self.model, self.A, include_nugget=True)
        self.gamma_col = Gam[:, self.s0_index]
        self.sigma2 = params.sigma2

    def draw(self, n, rng):
        W = gmrf.sample(self.model, rng, size=int(n))        # n x N
        U = (self.A @ W.T).T
        if self.sigma2 > 0:
            U = U + rng.standard_normal(U.shape) * math.sqrt(self.sigma2 / 2.0)
        return U - U[:, [self.s0_index]] - self.gamma_col[None, :] / 2.0


def simulate_pareto(mesh, params, sites, s0_index, n, seed, orders="auto"):
    """Exceedance rows of the single-site r-Pareto process at the sites.

    Each row is E + V with E standard exponential; the row value at the risk
    site equals E, so r(row) > 0 by construction.
    """
    rng = rng_from_seed(seed)
    sampler = SpectralSampler(mesh, params, sites, s0_index, orders)
    V = sampler.draw(int(n), rng)
    E = rng.exponential(size=(int(n), 1))
    return E + V


def simulate_maxstable(mesh, params, sites, n, seed, s0_index=0, drop=None,
                       max_points=10000, orders="auto"):
    """Truncated-Poisson sampler of the max-stable construction (Gumbel margins).

    Spectral functions are added at descending Poisson levels until a new
    level cannot beat the current minimum by ``drop``.  The neglected points
    bias the result by at most P(max V > drop - gamma_max/2), a Gaussian tail
    probability; the default drop keeps that below 1e-8.  An absolute level
    floor is infeasible here because the Poisson intensity e^{-u} puts
    exponentially many points below any fixed level.
    """
    rng = rng_from_seed(seed)
    sampler = SpectralSampler(mesh, params, sites, s0_index, orders)
    k = sampler.sites.shape[0]
    if drop is None:
        gmax = float(sampler.gamma_col.max())
        drop = gmax / 2.0 + 6.0 * max(1.0, math.sqrt(gmax))
    out = np.full((int(n), k), -np.inf)
    batch = 64
    for r in range(int(n)):
        S = 0.0
        eta = np.full(k, -np.inf)
        points = 0
        while points < max_points:
            V = sampler.draw(batch, rng)
            E = rng.exponential(size=batch)
            done = False
            for b in range(batch):
                S += E[b]
                u = -math.log(S)
                if np.isfinite(eta).all() and u < eta.min() - drop:
                    done = True
                    break
                eta = np.maximum(eta, u + V[b])
                points += 1
            if done:
                break
        out[r] = eta
    return out
