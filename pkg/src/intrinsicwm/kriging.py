"""Ordinary kriging from variogram matrices and intrinsic precisions.

Weights come from the bordered Lagrange system, so a nearly singular
variogram matrix never has to be inverted explicitly.  Also provides the
proper-to-intrinsic precision map, the asymptotic conditional mean, and the
extrapolation-drift constant.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp


class KrigingError(Exception):
    pass


@dataclass(frozen=True)
class KrigingResult:
    prediction: float
    variance: float
    weights: np.ndarray


def krige_variogram(Gamma, gamma0, values):
    """Ordinary kriging through the bordered system [Gamma 1; 1' 0].

    ``Gamma`` holds Var(u_i - u_j) (zero diagonal); the prediction variance is
    (lambda' gamma0 + nu) / 2 under this full-variogram convention.
    """
    Gamma = np.asarray(Gamma, dtype=float)
    gamma0 = np.atleast_1d(np.asarray(gamma0, dtype=float))
    values = np.atleast_1d(np.asarray(values, dtype=float))
    k = len(values)
    if Gamma.shape != (k, k) or len(gamma0) != k:
        raise KrigingError("shape mismatch between Gamma, gamma0 and values")
    B = np.zeros((k + 1, k + 1))
    B[:k, :k] = Gamma
    B[:k, k] = 1.0
    B[k, :k] = 1.0
    rhs = np.concatenate([gamma0, [1.0]])
    try:
        sol = np.linalg.solve(B, rhs)
    except np.linalg.LinAlgError as exc:
        raise KrigingError("singular kriging system") from exc
    lam, nu = sol[:k], sol[k]
    pred = float(lam @ values)
    var = float(lam @ gamma0 + nu) / 2.0
    return KrigingResult(pred, var, lam)


def krige_intrinsic(theta, values):
    """Conditional mean at index 0 of an intrinsic precision over {0} u sites.

    theta: (k+1) x (k+1) intrinsic precision whose first row/column is the
    prediction target; values: the k observed values.
    """
    Q = theta.toarray() if sp.issparse(theta) else np.asarray(theta, dtype=float)
    values = np.asarray(values, dtype=float)
    if Q.shape[0] != len(values) + 1:
        raise KrigingError("theta must cover the target plus the observed sites")
    if Q[0, 0] == 0:
        raise KrigingError("zero diagonal entry at the prediction index")
    w = -Q[0, 1:] / Q[0, 0]
    return float(w @ values), w


def proper_to_intrinsic(Q):
    """First-order intrinsic precision with the same variogram as proper Q."""
    dense = Q.toarray() if sp.issparse(Q) else np.asarray(Q, dtype=float)
    v = dense @ np.ones(dense.shape[0])
    return dense - np.outer(v, v) / v.sum()


def asymptotic_mean(Gamma, values):
    """Conditional mean of the far-field spatial average: 1'G^{-1}u / 1'G^{-1}1."""
    Gamma = np.asarray(Gamma, dtype=float)
    values = np.asarray(values, dtype=float)
    try:
        x = np.linalg.solve(Gamma, np.column_stack([values, np.ones(len(values))]))
    except np.linalg.LinAlgError as exc:
        raise KrigingError("singular variogram matrix") from exc
    num = x[:, 0].sum()
    den = x[:, 1].sum()
    return float(num / den)


def extrapolation_constant(sites, values, direction, Gamma, b):
    """Leading coefficient of the extrapolation drift (u-hat(Lv) - u-bar).

    For gamma(h) = l(h) h^b the kriging estimate along direction v satisfies
    u-hat(Lv) - u-bar ~ c l(L) L^(b-1); this returns c.  The first-order
    expansion of gamma around L carries a factor -b from the power law.
    """
    sites = np.atleast_2d(np.asarray(sites, dtype=float))
    v = np.atleast_1d(np.asarray(direction, dtype=float))
    if abs(np.linalg.norm(v) - 1.0) > 1e-9:
        raise KrigingError("direction must be a unit vector")
    values = np.asarray(values, dtype=float)
    Gamma = np.asarray(Gamma, dtype=float)
    s_par = sites @ v
    try:
        Giv = np.linalg.solve(Gamma, values)
        Gi1 = np.linalg.solve(Gamma, np.ones(len(values)))
    except np.linalg.LinAlgError as exc:
        raise KrigingError("singular variogram matrix") from exc
    proj = Giv - Gi1 * (np.ones(len(values)) @ Giv) / (np.ones(len(values)) @ Gi1)
    return float(-b * (s_par @ proj))
