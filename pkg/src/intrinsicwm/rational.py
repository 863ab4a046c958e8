"""Best uniform rational approximation of x^frac on [0, 1].

The minimax approximant is found by a barycentric node-exchange iteration:
interpolate at 2m+1 nodes, measure the local error maxima between nodes, and
rescale the node intervals until the maxima equioscillate.  The result is
converted to partial fractions, both for the approximant itself and for its
reciprocal, which is the form entering operator expansions of inverse
fractional powers.
"""

import json
import threading
import warnings
from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg as sla


class RemezNonConvergence(UserWarning):
    pass


@dataclass(frozen=True)
class RationalApprox:
    """Degree-(m, m) minimax approximation of x^frac on [0, 1].

    ``constant``, ``residues`` and ``poles`` give the partial-fraction form
    constant + sum_i residues[i] / (x - poles[i]).  ``reciprocal()`` returns
    the same decomposition of 1/r, which approximates x^(-frac) and carries
    the all-positive sign pattern used for operator expansions.
    """

    frac: float
    m: int
    constant: float
    residues: np.ndarray
    poles: np.ndarray
    sup_error: float
    converged: bool = True
    # barycentric data kept for well-conditioned pole/zero extraction
    _support: np.ndarray = None
    _values: np.ndarray = None
    _weights: np.ndarray = None

    def __call__(self, x):
        return evaluate(self, x)

    def reciprocal(self):
        k, c, p = _partial_fractions(self._support, self._values, self._weights,
                                     reciprocal=True)
        return replace(self, constant=k, residues=c, poles=p)


def evaluate(r, x):
    """constant + sum residues/(x - poles); poles are negative, so [0,1] is safe."""
    x = np.asarray(x, dtype=float)
    out = np.full(x.shape, r.constant)
    for c, p in zip(r.residues, r.poles):
        out = out + c / (x - p)
    return out if out.shape else float(out)


# -- barycentric machinery ---------------------------------------------------

def _interp_rat(nodes, fvals):
    """Type-(m, m) rational interpolant through 2m+1 nodes, barycentric form.

    Support points and test points alternate; the weight vector spans the
    null space of the Loewner matrix of the test conditions.
    """
    s, t = nodes[::2], nodes[1::2]
    fs, ft = fvals[::2], fvals[1::2]
    L = (ft[:, None] - fs[None, :]) / (t[:, None] - s[None, :])
    _, _, Vt = np.linalg.svd(L)
    return s, fs, Vt[-1]


def _bary_eval(x, s, fs, w):
    d = x[:, None] - s[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        num = (w * fs / d).sum(axis=1)
        den = (w / d).sum(axis=1)
        out = num / den
    exact = np.nonzero(d == 0.0)
    if exact[0].size:
        out[exact[0]] = fs[exact[1]]
    return out


def _vector_golden_max(f, a, b, iters=70):
    gr = (np.sqrt(5.0) - 1.0) / 2.0
    a = a.copy()
    b = b.copy()
    c = b - gr * (b - a)
    d = a + gr * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        take = fc > fd
        b = np.where(take, d, b)
        a = np.where(take, a, c)
        c = b - gr * (b - a)
        d = a + gr * (b - a)
        fc, fd = f(c), f(d)
    xm = (a + b) / 2.0
    return xm, f(xm)


def _pencil_eigs(s, vals):
    """Finite generalized eigenvalues of the barycentric arrowhead pencil."""
    mp1 = len(s)
    M = np.zeros((mp1 + 1, mp1 + 1))
    M[0, 1:] = vals
    M[1:, 0] = 1.0
    M[1:, 1:] = np.diag(s)
    B = np.eye(mp1 + 1)
    B[0, 0] = 0.0
    ev = sla.eig(M, B, right=False)
    return ev[np.isfinite(ev)]


def _partial_fractions(s, fs, w, reciprocal=False):
    """Poles/residues of the barycentric rational (or of its reciprocal)."""
    if reciprocal:
        roots = _pencil_eigs(s, w * fs)   # zeros of r are poles of 1/r
    else:
        roots = _pencil_eigs(s, w)
    if np.abs(roots.imag).max(initial=0.0) > 1e-8 * max(np.abs(roots.real).max(initial=1.0), 1e-30):
        raise ArithmeticError("complex poles in partial-fraction extraction")
    p = np.sort(roots.real)[::-1]

    def N(x):
        return np.sum(w * fs / (x - s))

    def D(x):
        return np.sum(w / (x - s))

    def Nprime(x):
        return -np.sum(w * fs / (x - s) ** 2)

    def Dprime(x):
        return -np.sum(w / (x - s) ** 2)

    if reciprocal:
        c = np.array([D(pi) / Nprime(pi) for pi in p])
        k = np.sum(w) / np.sum(w * fs)
    else:
        c = np.array([N(pi) / Dprime(pi) for pi in p])
        k = np.sum(w * fs) / np.sum(w)
    return float(k), c, p


# -- the node-exchange iteration ---------------------------------------------

_cache = {}
_cache_lock = threading.Lock()


def _node_exchange(frac, m, init_power, sigma, max_iter, level_tol):
    """One node-exchange run from a clustered start; returns the best state."""
    f = lambda x: np.power(x, frac)
    nn = 2 * m + 1
    stahl = (4.0 ** (1 + frac) * abs(np.sin(np.pi * frac))
             * np.exp(-2 * np.pi * np.sqrt(frac * m)))
    xmin = max(stahl ** (1.0 / frac) * 1e-2, 1e-280) ** init_power
    xmin = max(min(xmin, 0.5), 1e-280)
    u = (1 - np.cos(np.pi * np.arange(1, nn + 1) / (nn + 1))) / 2
    nodes = np.exp(np.log(xmin) * (1 - u))
    best = None
    for _ in range(max_iter):
        s, fs, w = _interp_rat(nodes, f(nodes))
        err = lambda x: np.abs(f(x) - _bary_eval(x, s, fs, w))
        edges = np.concatenate(([0.0], nodes, [1.0]))
        _, locmax = _vector_golden_max(err, edges[:-1], edges[1:])
        sup = float(locmax.max())
        dev = float((locmax.max() - locmax.min()) / locmax.max())
        if best is None or sup < best[0]:
            best = (sup, dev, s, fs, w)
        if dev < level_tol:
            return best, True
        widths = np.diff(edges)
        gmean = np.exp(np.mean(np.log(locmax + 1e-300)))
        scale = np.clip((gmean / (locmax + 1e-300)) ** sigma, 0.2, 5.0)
        widths = widths * scale
        widths /= widths.sum()
        nodes = np.cumsum(widths)[:-1]
    return best, False


# (init clustering power, interval-rescale damping); the damped retries
# rescue high orders where the greedy step oscillates near the float64 wall
_EXCHANGE_SCHEDULE = ((1.0, 0.5), (1.0, 0.25), (1.3, 0.25), (0.8, 0.25))


def best_rational(frac, m, max_iter=100, level_tol=0.01):
    """Minimax degree-(m, m) approximation of x^frac on [0, 1].

    Node-exchange iteration from a geometrically clustered start; convergence
    once the local error maxima agree to ``level_tol`` relative.  Stalled runs
    restart with damped steps; if every schedule entry stalls, the best node
    configuration seen is returned with its measured (larger) error and a
    warning.
    """
    if not 0.0 < frac < 1.0:
        raise ValueError("frac must lie strictly inside (0, 1)")
    if not 1 <= m <= 16:
        raise ValueError("order m must be in 1..16")
    key = (round(float(frac), 4), int(m))
    with _cache_lock:
        if key in _cache:
            return _cache[key]

    best = None
    converged = False
    for init_power, sigma in _EXCHANGE_SCHEDULE:
        state, ok = _node_exchange(frac, m, init_power, sigma, max_iter, level_tol)
        if best is None or state[0] < best[0]:
            best = state
        if ok:
            best = state
            converged = True
            break
    sup, dev, s, fs, w = best
    if not converged:
        warnings.warn(
            f"minimax iteration stalled at level spread {dev:.2%} for "
            f"frac={frac}, m={m}; returning best configuration found",
            RemezNonConvergence,
        )
        sup = sup * (1.0 + dev)  # recorded bound stays an upper bound
    k, c, p = _partial_fractions(s, fs, w)
    out = RationalApprox(
        frac=float(frac), m=int(m), constant=k, residues=c, poles=p,
        sup_error=float(sup), converged=converged,
        _support=s, _values=fs, _weights=w,
    )
    with _cache_lock:
        _cache[key] = out
    return out


def select_orders(alpha, beta, d, delta, eps=0.1, margin=0.0):
    """Rational orders (m, m_tilde) balancing the mesh and rational errors.

    The exponential rational error is matched to the mesh rate
    r = min(2(alpha+beta) - d/2 - eps, 2); integer exponents need no
    rational term and get order 0.  ``margin`` is added to the matched
    log-error budget; the asymptotic coupling hides the prefactor of the
    minimax error, which convergence studies absorb with margin ~ 3.
    """
    if not 0.0 < delta < 1.0:
        raise ValueError("mesh width delta must lie in (0, 1)")
    if eps <= 0:
        raise ValueError("slack eps must be positive")
    r = min(2.0 * (alpha + beta) - d / 2.0 - eps, 2.0)
    budget = (r + d / 2.0) * abs(np.log(delta)) + margin

    def g(eta):
        fr = eta - np.floor(eta)
        if fr == 0.0:
            return 0
        m = int(np.ceil(budget ** 2 / (4 * np.pi ** 2 * fr)))
        return min(max(m, 1), 16)

    return g(alpha), g(beta)


def dump_coefficients(approximations, path):
    """JSON table of (exponent, m, constant, residues, poles, sup_error)."""
    rows = []
    for r in approximations:
        rows.append({
            "exponent": r.frac,
            "m": r.m,
            "constant": r.constant,
            "residues": list(map(float, r.residues)),
            "poles": list(map(float, r.poles)),
            "sup_error": r.sup_error,
            "converged": r.converged,
        })
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(rows, fh, indent=2)
