"""Exact variograms of the intrinsic Whittle-Matern family.

Three backends: cosine eigen-expansion on a box with Neumann boundary, the
stationary isotropic radial integral on R^d, and closed forms where they
exist.  Also classifies the local/global asymptotic regimes.
"""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

EULER_GAMMA = float(np.euler_gamma)


class VariogramError(Exception):
    pass


class RegimeError(VariogramError):
    pass


class TruncationWarning(UserWarning):
    pass


def _check_regime(d, alpha, beta):
    if alpha + beta <= d / 2.0:
        raise RegimeError(f"need alpha + beta > d/2, got {alpha}+{beta} vs d={d}")
    if beta >= 1.0 + d / 2.0:
        raise RegimeError(f"need beta < 1 + d/2 for a stationary variogram, got {beta}")


# -- box (Neumann) eigen-expansion -------------------------------------------

def box_eigenpairs(d, L, multi_index):
    """Eigenvalue and eigenfunction of the Neumann Laplacian on [0, L]^d.

    The zero multi-index carries eigenvalue 0 with the constant eigenfunction.
    """
    if L <= 0:
        raise ValueError("box side must be positive")
    j = np.atleast_1d(np.asarray(multi_index, dtype=int))
    if len(j) != d:
        raise ValueError("multi-index length must equal d")
    lam = float(np.sum(j ** 2) * np.pi ** 2 / L ** 2)

    def efun(s):
        s = np.atleast_2d(np.asarray(s, dtype=float))
        out = np.ones(s.shape[0])
        for i in range(d):
            norm = (np.sqrt(2.0) if j[i] > 0 else 1.0) / np.sqrt(L)
            out = out * norm * np.cos(j[i] * np.pi * s[:, i] / L)
        return out if out.size > 1 else float(out[0])

    return lam, efun


def box_series(params, L, s, t, rtol=1e-8, max_terms=4_000_000):
    """Variogram on the box [0, L]^d via the truncated eigen-expansion.

    The truncation adds an averaged-envelope tail estimate; a warning fires
    when the tail bound exceeds 1e-6 of the partial sum.
    """
    d, alpha, beta, kappa, tau = params.d, params.alpha, params.beta, params.kappa, params.tau
    # the eigen-sum starts at the first nonzero mode, so it converges for the
    # whole alpha + beta > d/2 regime (no upper bound on beta needed here)
    if alpha + beta <= d / 2.0:
        raise RegimeError(f"need alpha + beta > d/2, got {alpha}+{beta} vs d={d}")
    s = np.atleast_1d(np.asarray(s, dtype=float))
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if np.allclose(s, t):
        return 0.0

    def weight(lam):
        return lam ** (-beta) * (kappa ** 2 + lam) ** (-alpha)

    if d == 1:
        J = 512
        total = 0.0
        jlo = 1
        # grow until the averaged tail is negligible
        while True:
            j = np.arange(jlo, J + 1)
            lam = j ** 2 * np.pi ** 2 / L ** 2
            e_s = np.sqrt(2.0 / L) * np.cos(j * np.pi * s[0] / L)
            e_t = np.sqrt(2.0 / L) * np.cos(j * np.pi * t[0] / L)
            total += np.sum(weight(lam) * (e_s - e_t) ** 2)
            # cos^2 averages to 1/2: mean of (e_s - e_t)^2 is 2/L
            p = 2.0 * (alpha + beta)
            tail = (2.0 / L) * (L / np.pi) ** p * J ** (1.0 - p) / (p - 1.0)
            if tail < rtol * abs(total) or 2 * J > max_terms:
                break
            jlo = J + 1
            J = 2 * J
        tail_rel = tail / max(abs(total), 1e-300)
    else:
        J = 128
        total = 0.0
        while True:
            j1, j2 = np.meshgrid(np.arange(J + 1), np.arange(J + 1), indexing="ij")
            mask = (j1 + j2 > 0) & (j1 ** 2 + j2 ** 2 <= J ** 2)
            j1 = j1[mask]; j2 = j2[mask]
            lam = (j1 ** 2 + j2 ** 2) * np.pi ** 2 / L ** 2
            n1 = np.where(j1 > 0, np.sqrt(2.0), 1.0) / np.sqrt(L)
            n2 = np.where(j2 > 0, np.sqrt(2.0), 1.0) / np.sqrt(L)
            e_s = n1 * np.cos(j1 * np.pi * s[0] / L) * n2 * np.cos(j2 * np.pi * s[1] / L)
            e_t = n1 * np.cos(j1 * np.pi * t[0] / L) * n2 * np.cos(j2 * np.pi * t[1] / L)
            total = np.sum(weight(lam) * (e_s - e_t) ** 2)
            p = 2.0 * (alpha + beta)
            # shell count ~ (pi/2) n, averaged envelope 2/L^2 per term
            tail = (2.0 / L ** 2) * (np.pi / 2.0) * (L / np.pi) ** p \
                * J ** (2.0 - p) / (p - 2.0) if p > 2 else np.inf
            if tail < rtol * abs(total) or (J + 1) ** 2 > max_terms:
                break
            J = 2 * J
        tail_rel = tail / max(abs(total), 1e-300)
    if tail_rel > 1e-6:
        warnings.warn(
            f"box series truncation tail {tail_rel:.1e} exceeds 1e-6 relative",
            TruncationWarning,
        )
    return float(total + tail) / tau ** 2


# -- stationary isotropic integral -------------------------------------------

def _shanks(partial):
    """Iterated Aitken acceleration of a (near-)alternating partial-sum array."""
    S = np.asarray(partial, dtype=float)
    best = S[-1]
    for _ in range(8):
        if len(S) < 3:
            break
        d2 = np.diff(S, 2)
        if np.all(np.abs(d2) < 1e-15 * max(1.0, abs(best))):
            break
        with np.errstate(divide="ignore", invalid="ignore"):
            T = S[:-2] - np.diff(S[:-1]) ** 2 / d2
        T = T[np.isfinite(T)]
        if len(T) == 0:
            break
        S = T
        best = S[-1]
    return best


def stationary(params, h, max_intervals=200):
    """Stationary isotropic variogram via the oscillatory radial integral.

    Integrates between consecutive zeros of the angular kernel with adaptive
    quadrature, accelerates the alternating tail, and adds an asymptotic
    power-law tail for the non-oscillatory remainder.
    """
    d, alpha, beta, kappa, tau = params.d, params.alpha, params.beta, params.kappa, params.tau
    _check_regime(d, alpha, beta)
    if kappa == 0.0 and alpha != 0.0:
        raise RegimeError("kappa must be positive when alpha > 0")
    h = float(h)
    if h < 0:
        raise ValueError("distance must be nonnegative")
    if h == 0.0:
        return 0.0
    const = 4.0 / (tau ** 2 * 2 ** d * np.pi ** (d / 2.0) * special.gamma(d / 2.0))
    if d == 1:
        Lam = np.cos
        zeros = (np.arange(1, max_intervals + 1) - 0.5) * np.pi
    elif d == 2:
        Lam = special.j0
        zeros = special.jn_zeros(0, max_intervals)
    elif d == 3:
        Lam = lambda z: np.sinc(z / np.pi)
        zeros = np.arange(1, max_intervals + 1) * np.pi
    else:
        raise ValueError("d must be 1, 2 or 3")

    def g(r):
        return r ** (d - 1 - 2 * beta) * (kappa ** 2 + r ** 2) ** (-alpha)

    pts = zeros / h
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        head, _ = integrate.quad(lambda r: (1.0 - Lam(h * r)) * g(r), 0.0, pts[0], limit=200)
        R = max(pts[-1], 100.0 * max(kappa, 1.0), 10.0 / h)
        body, _ = integrate.quad(g, pts[0], R, limit=400)
        p = 2 * beta + 2 * alpha - d
        tail = (R ** (-p) / p
                - alpha * kappa ** 2 * R ** (-p - 2) / (p + 2)
                + alpha * (alpha + 1) / 2.0 * kappa ** 4 * R ** (-p - 4) / (p + 4))
        terms = []
        ref = max(abs(head), 1e-300)
        for i in range(len(pts) - 1):
            t, _ = integrate.quad(lambda r: Lam(h * r) * g(r), pts[i], pts[i + 1], limit=60)
            terms.append(t)
            if i > 10 and abs(t) < 1e-12 * ref:
                break
    osc = _shanks(np.cumsum(terms))
    value = const * (head + body + tail - osc)
    return float(value)


# -- closed forms -------------------------------------------------------------

def closed_fractional(params, h):
    """Power-law variogram for alpha = 0, d/2 < beta < 1 + d/2."""
    d, beta, tau = params.d, params.beta, params.tau
    if params.alpha != 0.0:
        raise RegimeError("closed fractional form requires alpha = 0")
    if not d / 2.0 < beta < 1.0 + d / 2.0:
        raise RegimeError("closed fractional form requires d/2 < beta < 1 + d/2")
    if d == 1:
        c = special.gamma(2 * beta) * np.cos(np.pi * (beta + 1.0))
    elif d == 2:
        c = 2.0 ** (2 * beta - 1) * special.gamma(beta) ** 2 * np.sin(np.pi * (beta + 1.0))
    else:
        raise RegimeError("closed fractional form implemented for d in {1, 2}")
    h = np.asarray(h, dtype=float)
    out = h ** (2 * beta - d) / (c * tau ** 2)
    return out if out.shape else float(out)


def closed_alpha1_beta1(kappa, tau, h):
    """d = 2, alpha = beta = 1 variogram: Bessel-K plus logarithm.

    The additive constant is Euler's gamma, which makes the h -> 0 limit
    exactly zero and matches the radial-integral backend.
    """
    h = np.asarray(h, dtype=float)
    z = kappa * h
    with np.errstate(divide="ignore", invalid="ignore"):
        val = special.k0(z) + np.log(z / 2.0) + EULER_GAMMA
    val = np.where(h == 0.0, 0.0, val)
    out = val / (np.pi * kappa ** 2 * tau ** 2)
    return out if out.shape else float(out)


@dataclass(frozen=True)
class AsymptoticRegime:
    local_exponent: float          # gamma(h) ~ h^this as h -> 0
    global_class: str              # "bounded" | "log" | "power"
    global_exponent: float         # 2 beta - d for the power class, else 0
    log_constant: float = None     # prefactor of log(h) when d = 2, beta = 1


def regimes(params, boundary_tol=1e-9):
    """Local and global growth classes of the stationary variogram."""
    d, alpha, beta = params.d, params.alpha, params.beta
    if alpha + beta <= d / 2.0:
        raise RegimeError("need alpha + beta > d/2")
    local = min(2.0 * (alpha + beta) - d, 2.0)
    if abs(beta - d / 2.0) <= boundary_tol:
        log_c = None
        if d == 2 and abs(beta - 1.0) <= boundary_tol:
            log_c = 1.0 / (np.pi * params.kappa ** 2 * params.tau ** 2)
        return AsymptoticRegime(local, "log", 0.0, log_c)
    if beta < d / 2.0:
        return AsymptoticRegime(local, "bounded", 0.0)
    return AsymptoticRegime(local, "power", 2.0 * beta - d)


def evaluate(params, h, backend="auto", L=None):
    """Dispatch to the closed form when valid, otherwise the radial integral."""
    if backend == "box":
        if L is None:
            raise ValueError("box backend needs the box side L")
        origin = np.zeros(params.d)
        probe = np.zeros(params.d)
        probe[0] = h
        return box_series(params, L, origin, probe)
    if backend in ("auto", "closed-form"):
        if params.alpha == 0.0 and params.d / 2.0 < params.beta < 1.0 + params.d / 2.0:
            return float(closed_fractional(params, h))
        if params.d == 2 and params.alpha == 1.0 and params.beta == 1.0:
            return float(closed_alpha1_beta1(params.kappa, params.tau, h))
        if backend == "closed-form":
            raise RegimeError("no closed form for these parameters")
    return stationary(params, h)
