"""P1 finite element assembly on simplicial meshes.

Produces the lumped mass matrix, the Neumann stiffness matrix, projection
matrices onto observation sites, and the integer-exponent precision matrices
obtained by alternating mass/stiffness products.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import meshing
from .sparse import SparseSymMatrix


class FemError(Exception):
    pass


@dataclass(frozen=True)
class FemOperators:
    """Lumped mass diagonal and stiffness matrix of a mesh."""

    mass: np.ndarray        # diagonal of C, length N
    stiffness: sp.csc_matrix  # G, symmetric PSD with zero row sums
    n: int

    def mass_matrix(self):
        return sp.diags(self.mass).tocsc()

    def inv_mass(self):
        return sp.diags(1.0 / self.mass).tocsc()


def assemble(mesh):
    """Assemble C (row-sum lumped) and G (exact elementwise gradients)."""
    v, s = mesh.vertices, mesh.simplices
    N = mesh.n_vertices
    mass = np.zeros(N)
    rows, cols, vals = [], [], []
    if mesh.dim == 1:
        for (i, j) in s:
            h = abs(v[j, 0] - v[i, 0])
            if h <= 0:
                raise meshing.DegenerateSimplexError("zero-length segment")
            mass[[i, j]] += h / 2.0
            ge = np.array([[1.0, -1.0], [-1.0, 1.0]]) / h
            for a, ia in enumerate((i, j)):
                for b, ib in enumerate((i, j)):
                    rows.append(ia); cols.append(ib); vals.append(ge[a, b])
    else:
        for (i, j, k) in s:
            pts = v[[i, j, k]]
            mat = np.column_stack([pts[1] - pts[0], pts[2] - pts[0]])
            det = np.linalg.det(mat)
            area = abs(det) / 2.0
            if area <= 0:
                raise meshing.DegenerateSimplexError("zero-area triangle")
            mass[[i, j, k]] += area / 3.0
            # gradients of barycentric coordinates
            Jinv = np.linalg.inv(mat)
            grads = np.vstack([-(Jinv[0] + Jinv[1]), Jinv[0], Jinv[1]])
            ge = area * grads @ grads.T
            idx = (i, j, k)
            for a in range(3):
                for b in range(3):
                    rows.append(idx[a]); cols.append(idx[b]); vals.append(ge[a, b])
    G = sp.coo_matrix((vals, (rows, cols)), shape=(N, N)).tocsc()
    G = ((G + G.T) / 2.0).tocsc()
    G.eliminate_zeros()
    return FemOperators(mass=mass, stiffness=G, n=N)


def projection(mesh, sites):
    """Sparse k x N matrix of hat-function values at the sites."""
    sites = np.atleast_2d(np.asarray(sites, dtype=float))
    if sites.shape[1] != mesh.dim:
        if mesh.dim == 1 and sites.shape[0] == 1:
            sites = sites.T
        else:
            raise FemError(f"sites must be (k, {mesh.dim})")
    rows, cols, vals = [], [], []
    for r, pt in enumerate(sites):
        try:
            simplex, w = meshing.locate(mesh, pt)
        except meshing.OutOfDomainError as exc:
            raise meshing.OutOfDomainError(f"site {r}: {exc}") from exc
        for local, weight in enumerate(w):
            if weight != 0.0:
                rows.append(r)
                cols.append(mesh.simplices[simplex, local])
                vals.append(weight)
    return sp.csr_matrix((vals, (rows, cols)), shape=(len(sites), mesh.n_vertices))


def _symmetrize(Q):
    Q = ((Q + Q.T) / 2.0).tocsc()
    Q.eliminate_zeros()
    return Q


def precision_word(ops, factors):
    """Product M_1 C^{-1} M_2 ... C^{-1} M_r of pencil matrices, symmetrized.

    Each factor is a sparse matrix representing one non-fractional operator;
    the lumped inverse mass is interleaved, matching left-to-right evaluation.
    """
    if not factors:
        return ops.mass_matrix()
    Ci = ops.inv_mass()
    Q = factors[0]
    for M in factors[1:]:
        Q = Q @ Ci @ M
    return _symmetrize(sp.csc_matrix(Q))


def integer_precision(ops, kappa, alpha, beta):
    """Precision matrix for integer exponents via the mass/stiffness recursion.

    Zero row sums exactly when beta >= 1; positive definite when beta = 0 and
    kappa > 0.
    """
    alpha = int(alpha)
    beta = int(beta)
    if alpha < 0 or beta < 0 or alpha + beta < 1:
        raise FemError("need integer alpha, beta >= 0 with alpha + beta >= 1")
    if alpha > 0 and kappa <= 0:
        raise FemError("kappa must be positive when alpha > 0")
    G = ops.stiffness
    K = (kappa ** 2) * ops.mass_matrix() + G
    factors = [G] * beta + [K] * alpha
    return SparseSymMatrix(precision_word(ops, factors))
