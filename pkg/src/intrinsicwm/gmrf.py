"""Intrinsic Gaussian Markov random field approximation of fractional fields.

The covariance operator splits into M = (1+m)(1+m_tilde) non-fractional
terms; every term becomes one scaled sparse precision block built from the
lumped mass and stiffness matrices only.  This module assembles the blocks,
evaluates intrinsic densities, pins representatives and samples.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import fem, meshing, rational
from .sparse import Factor, SparseSymMatrix
from .validation import check_nonnegative, check_positive, rng_from_seed


class ModelError(Exception):
    pass


class NotIntrinsicError(ModelError):
    pass


@dataclass(frozen=True)
class ModelParams:
    """Parameters (tau, kappa, alpha, beta, sigma2) of the intrinsic model."""

    tau: float = 1.0
    kappa: float = 1.0
    alpha: float = 1.0
    beta: float = 1.0
    sigma2: float = 0.0
    d: int = 1

    def __post_init__(self):
        check_positive(self.tau, "tau")
        check_nonnegative(self.kappa, "kappa")
        check_nonnegative(self.alpha, "alpha")
        check_nonnegative(self.sigma2, "sigma2")
        # the fractional machinery needs beta < 2; the integer endpoint 2 is
        # handled exactly, so the closed interval is admitted
        if not 0.0 <= self.beta <= 2.0:
            raise ModelError(f"beta must lie in [0, 2], got {self.beta}")
        if self.d not in (1, 2):
            raise ModelError("d must be 1 or 2")
        if self.alpha + self.beta <= self.d / 2.0:
            raise ModelError(
                f"smoothness regime violated: alpha + beta = {self.alpha + self.beta} "
                f"<= d/2 = {self.d / 2}"
            )
        if self.alpha > 0 and self.kappa <= 0:
            raise ModelError("kappa must be positive when alpha > 0")

    @property
    def intrinsic(self):
        return self.beta > 0.0


@dataclass
class Block:
    """One precision block: scale * matrix, flagged intrinsic when G-anchored."""

    scale: float
    matrix: sp.csc_matrix
    intrinsic: bool

    @property
    def precision(self):
        return (self.scale * self.matrix).tocsc()


@dataclass
class IntrinsicGmrf:
    """Sum of M independent GMRF blocks approximating the fractional field."""

    mesh: meshing.Mesh
    params: ModelParams
    ops: fem.FemOperators
    blocks: list
    orders: tuple            # (m, m_tilde)
    project: bool            # re-center samples when floor(beta) = 0 < beta
    _factors: dict = field(default_factory=dict, repr=False)
    _pinned: dict = field(default_factory=dict, repr=False)

    @property
    def n_blocks(self):
        return len(self.blocks)

    @property
    def n_nodes(self):
        return self.ops.n

    def block_factor(self, i):
        """Factorization of block i (null-space hint for intrinsic blocks)."""
        if i not in self._factors:
            b = self.blocks[i]
            hint = "ones" if b.intrinsic else None
            self._factors[i] = Factor(b.precision, null_basis=hint)
        return self._factors[i]

    def pinned_factor(self, i):
        """Full-rank factor of block i with node 0 pinned (for sampling)."""
        if i not in self._pinned:
            Q = self.blocks[i].precision
            keep = np.arange(1, Q.shape[0])
            self._pinned[i] = Factor(Q[np.ix_(keep, keep)].tocsc())
        return self._pinned[i]

    def intrinsicize_data(self):
        """Per-block (Q 1, 1'Q1) pairs for the rank-one intrinsic adjustment."""
        out = []
        ones = np.ones(self.n_nodes)
        for b in self.blocks:
            v = b.precision @ ones
            out.append((v, float(ones @ v)))
        return out


def _side_terms(frac, order, a_norm, M_pencil, C):
    """Terms (covariance weight, factor matrix or None) for one operator side.

    The reciprocal partial fractions of the [0,1] minimax approximant give
    x^(-frac); each pole contributes the positive definite pencil matrix
    M/a - p C.
    """
    if frac == 0.0:
        return [(1.0, None)]
    r = rational.best_rational(frac, order).reciprocal()
    scale = a_norm ** (-frac)
    terms = [(scale * r.constant, None)]
    for c, p in zip(r.residues, r.poles):
        Bmat = (M_pencil / a_norm - p * C).tocsc()
        terms.append((scale * c, Bmat))
    return terms


def spectral_bound(ops, iters=30, inflate=1.01, seed=0):
    """Power-method bound on the largest eigenvalue of C^{-1} G."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(ops.n)
    x /= np.linalg.norm(x)
    G = ops.stiffness
    cinv = 1.0 / ops.mass
    lam = 1.0
    for _ in range(iters):
        y = cinv * (G @ x)
        lam = float(np.linalg.norm(y))
        if lam == 0.0:
            break
        x = y / lam
    return lam * inflate


def build(mesh, params, orders="auto", eps=0.1):
    """Assemble the M-block precision representation of the field.

    Fractional exponents use the minimax partial-fraction expansion of each
    operator side; integer parts enter exactly through the mass/stiffness
    recursion.  tau scales every precision by tau^2.
    """
    ops = fem.assemble(mesh)
    alpha, beta, kappa, tau = params.alpha, params.beta, params.kappa, params.tau
    fa = alpha - np.floor(alpha)
    fb = beta - np.floor(beta)
    ia = int(np.floor(alpha))
    ib = int(np.floor(beta))
    if orders == "auto":
        delta = meshing.quality(mesh).delta
        # the order formula expects delta in (0,1); clamp for coarse meshes
        m, mt = rational.select_orders(alpha, beta, params.d, min(delta, 0.5), eps)
    else:
        m, mt = orders
    if fa > 0 and m < 1:
        raise ModelError("fractional alpha requires a positive order m")
    if fb > 0 and mt < 1:
        raise ModelError("fractional beta requires a positive order m_tilde")

    C = ops.mass_matrix()
    G = ops.stiffness
    K = (kappa ** 2) * C + G
    lam_g = spectral_bound(ops)
    a_l = kappa ** 2 + lam_g     # normalization shared between the two sides
    a_lt = lam_g

    terms_a = _side_terms(fa, m if fa > 0 else 0, a_l, K, C)
    terms_b = _side_terms(fb, mt if fb > 0 else 0, a_lt, G, C)

    blocks = []
    for wb, Bb in terms_b:
        for wa, Ba in terms_a:
            factors = [G] * ib + [K] * ia
            if Bb is not None:
                factors.append(Bb)
            if Ba is not None:
                factors.append(Ba)
            word = fem.precision_word(ops, factors)
            scale = tau ** 2 / (wb * wa)
            blocks.append(Block(scale=scale, matrix=word, intrinsic=ib >= 1))
    M = len(blocks)
    expect = (1 + (m if fa > 0 else 0)) * (1 + (mt if fb > 0 else 0))
    if M != expect:
        raise ModelError(f"block count {M} does not match (1+m)(1+m_tilde) = {expect}")
    return IntrinsicGmrf(
        mesh=mesh, params=params, ops=ops, blocks=blocks,
        orders=(m if fa > 0 else 0, mt if fb > 0 else 0),
        project=params.intrinsic and ib == 0,
    )


def sample(model, seed, size=None):
    """Draw field weights; each block sampled independently, then summed.

    Singular blocks are pinned at node 0; for an intrinsic model the sum is
    re-centered to the zero-integral representative (lumped-mass weights).
    Deterministic given the seed.
    """
    rng = rng_from_seed(seed)
    n = model.n_nodes
    ns = 1 if size is None else int(size)
    total = np.zeros((n, ns))
    for i, b in enumerate(model.blocks):
        if b.intrinsic:
            f = model.pinned_factor(i)
            z = rng.standard_normal((n - 1, ns))
            x = np.zeros((n, ns))
            x[1:] = f.sampling_operator()(z)
        else:
            f = model.block_factor(i)
            z = rng.standard_normal((n, ns))
            x = f.sampling_operator()(z)
        total += x
    if model.params.intrinsic:
        wts = model.ops.mass / model.ops.mass.sum()
        total = total - wts @ total
    return total[:, 0] if size is None else total.T


def fem_variogram(model, A, include_nugget=True):
    """Variogram matrix of the projected field, optionally with the nugget.

    Gamma_ij = sum over blocks of the contrast variance between rows i and j,
    plus sigma^2 off the diagonal.
    """
    A = sp.csr_matrix(A)
    k = A.shape[0]
    At = np.asarray(A.todense()).T
    S = np.zeros((k, k))
    for i, b in enumerate(model.blocks):
        f = model.block_factor(i)
        X = f.pseudo_solve(At) if b.intrinsic else f.solve(At)
        S += A @ X
    dg = np.diag(S)
    Gam = dg[:, None] + dg[None, :] - S - S.T
    if include_nugget and model.params.sigma2 > 0:
        Gam = Gam + model.params.sigma2 * (1.0 - np.eye(k))
    np.fill_diagonal(Gam, 0.0)
    return Gam


def density_intrinsic(theta, w):
    """Log-density of a first-order intrinsic GMRF at w (Definition-style).

    The quadratic form is evaluated on the centered vector, which makes the
    invariance under w -> w + c 1 exact in floating point.
    """
    Q = theta.mat if isinstance(theta, SparseSymMatrix) else sp.csc_matrix(theta)
    k = Q.shape[0]
    w = np.asarray(w, dtype=float)
    rowsum = np.abs(Q @ np.ones(k)).max()
    if rowsum > 1e-8 * max(1.0, np.abs(Q.data).max()):
        raise NotIntrinsicError(f"row sums reach {rowsum:.2e}; matrix is not intrinsic")
    f = Factor(Q, null_basis="ones")
    wc = w - w.mean()
    quad = float(wc @ (Q @ wc))
    return -0.5 * (k - 1) * np.log(2.0 * np.pi) + 0.5 * f.gen_logdet() - 0.5 * quad


def pin(theta, h):
    """Condition the intrinsic field on h' W = 0.

    For a coordinate vector h = delta_k this returns the sparse precision
    with row/column k deleted; otherwise the dense covariance of the pinned
    representative (test scale only).
    """
    Q = theta.mat if isinstance(theta, SparseSymMatrix) else sp.csc_matrix(theta)
    k = Q.shape[0]
    h = np.asarray(h, dtype=float)
    if abs(h.sum()) < 1e-12 * max(1.0, np.abs(h).max()):
        raise ModelError("invalid pin: h must satisfy h' 1 != 0")
    nz = np.nonzero(h)[0]
    if len(nz) == 1 and h[nz[0]] != 0:
        keep = np.setdiff1d(np.arange(k), nz)
        return "precision", Q[np.ix_(keep, keep)].tocsc(), keep
    # general h: covariance of (I - 1 h'/(h'1)) applied to any representative
    dense = Q.toarray()
    ev, U = np.linalg.eigh(dense)
    tolr = 1e-10 * ev.max()
    pinv = np.zeros_like(dense)
    for lam, u in zip(ev, U.T):
        if lam > tolr:
            pinv += np.outer(u, u) / lam
    P = np.eye(k) - np.outer(np.ones(k), h) / h.sum()
    return "covariance", P @ pinv @ P.T, np.arange(k)
