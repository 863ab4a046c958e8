"""Sparse symmetric linear algebra.

Storage, LDL-style factorization through SuperLU's symmetric mode,
generalized log-determinants, constrained (pseudoinverse) solves and
selected diagonals of the inverse.  Rank-deficient matrices are handled
through an explicit null-space basis: the factorization bumps a few
diagonal entries to restore definiteness and undoes the bump exactly via
bordered small systems, so everything stays sparse.
"""

import io

import numpy as np
import scipy.io
import scipy.sparse as sp
from scipy.sparse.linalg import splu, spsolve_triangular

from .validation import as_float_array

PIVOT_RTOL = 1e-10


class SparseLinAlgError(Exception):
    """Base class for factorization and solve failures."""


class IndefiniteMatrixError(SparseLinAlgError):
    """A pivot was negative beyond tolerance for a matrix declared (semi)definite."""


class SingularMatrixError(SparseLinAlgError):
    """Matrix is singular and no (or too small) a null-space hint was provided."""


class RankDeficientError(SparseLinAlgError):
    """Operation requires full rank; use pseudo_solve with a null-space hint."""


class UnknownNullSpaceError(SparseLinAlgError):
    """pseudo_solve needs the null-space basis, which the factorization lacks."""


class SparseSymMatrix:
    """Compressed sparse symmetric matrix.

    Entries may be given in symmetric-lower triplet form; internally the
    full symmetric pattern is kept as CSC for factorization.
    """

    def __init__(self, csc):
        csc = sp.csc_matrix(csc)
        if csc.shape[0] != csc.shape[1]:
            raise ValueError("matrix must be square")
        if not np.all(np.isfinite(csc.data)):
            raise ValueError("matrix entries must be finite")
        csc.eliminate_zeros()
        self.mat = csc
        self.n = csc.shape[0]

    @classmethod
    def from_triplets(cls, n, rows, cols, values):
        """Build from lower-triangle (row >= col) triplets."""
        rows = np.asarray(rows, dtype=int)
        cols = np.asarray(cols, dtype=int)
        values = as_float_array(values, "values")
        if np.any(rows < cols):
            raise ValueError("triplets must be in symmetric-lower form (row >= col)")
        lower = sp.coo_matrix((values, (rows, cols)), shape=(n, n))
        off = sp.triu(lower.T, k=1)
        return cls((lower + off).tocsc())

    @classmethod
    def from_dense(cls, A):
        A = as_float_array(A, "matrix")
        if not np.allclose(A, A.T, rtol=0, atol=1e-12 * max(1.0, np.abs(A).max())):
            raise ValueError("matrix is not symmetric")
        return cls(sp.csc_matrix(A))

    def to_dense(self):
        return self.mat.toarray()

    def symmetry_defect(self):
        d = self.mat - self.mat.T
        return 0.0 if d.nnz == 0 else np.abs(d.data).max()

    def write_matrix_market(self, path_or_stream):
        scipy.io.mmwrite(path_or_stream, sp.coo_matrix(self.mat), symmetry="symmetric")

    @classmethod
    def read_matrix_market(cls, path_or_stream):
        return cls(sp.csc_matrix(scipy.io.mmread(path_or_stream)))

    def to_matrix_market_str(self):
        buf = io.BytesIO()
        self.write_matrix_market(buf)
        return buf.getvalue().decode()


def _as_csc(A):
    if isinstance(A, SparseSymMatrix):
        return A.mat
    return sp.csc_matrix(A)


def ones_basis(n):
    return np.ones((n, 1))


def block_diff_basis(n_blocks, block_size):
    """Basis of {(c_1 1, ..., c_M 1) : sum c = 0}: differences of adjacent blocks."""
    M, N = n_blocks, block_size
    B = np.zeros((M * N, M - 1))
    for j in range(M - 1):
        B[j * N:(j + 1) * N, j] = 1.0
        B[(j + 1) * N:(j + 2) * N, j] = -1.0
    return B


def _bump_indices(basis):
    """Indices S such that basis[S, :] is invertible, via row-pivoted LU."""
    n, p = basis.shape
    work = basis.copy()
    avail = np.arange(n)
    S = []
    for j in range(p):
        i = np.argmax(np.abs(work[:, j]))
        if work[i, j] == 0.0:
            raise ValueError("null-space basis columns are linearly dependent")
        S.append(avail[i])
        piv = work[i, j]
        work -= np.outer(work[:, j] / piv, work[i, :])
        work = np.delete(work, i, axis=0)
        avail = np.delete(avail, i)
    return np.array(S, dtype=int)


class Factor:
    """Factorization of ``A_eff = A0 - V V^T`` with known null space.

    ``A0`` is positive definite and sparse; the optional downdate ``V`` and the
    null-space basis encode rank deficiency without densifying anything.
    Exposes generalized log-determinant, solves, pseudoinverse solves,
    the inverse diagonal and a half-solve for Gaussian sampling.
    """

    def __init__(self, A, null_basis=None, downdate=None, pivot_rtol=PIVOT_RTOL):
        A = _as_csc(A)
        n = A.shape[0]
        self.n = n
        if null_basis is None:
            basis = np.zeros((n, 0))
        elif isinstance(null_basis, str):
            if null_basis == "ones":
                basis = ones_basis(n)
            elif null_basis == "none":
                basis = np.zeros((n, 0))
            else:
                raise ValueError(f"unknown null-space hint {null_basis!r}")
        else:
            basis = np.asarray(null_basis, dtype=float)
            if basis.ndim == 1:
                basis = basis[:, None]
        p = basis.shape[1]

        V_parts = []
        A0 = A.copy()
        if p > 0 and downdate is None:
            # restore definiteness by bumping one diagonal entry per null vector
            S = _bump_indices(basis)
            diag = A0.diagonal()
            scale = np.abs(diag).mean() or 1.0
            bump = sp.csc_matrix(
                (np.full(p, scale), (S, S)), shape=(n, n)
            )
            A0 = (A0 + bump).tocsc()
            E = np.zeros((n, p))
            E[S, np.arange(p)] = np.sqrt(scale)
            V_parts.append(E)
        if downdate is not None:
            D = np.asarray(downdate, dtype=float)
            if D.ndim == 1:
                D = D[:, None]
            V_parts.append(D)
        V = np.hstack(V_parts) if V_parts else np.zeros((n, 0))
        q = V.shape[1]

        # symmetric Jacobi scaling keeps the LDL reading of SuperLU's pivots
        d0 = A0.diagonal()
        if np.any(d0 <= 0):
            # indefinite or zero diagonal: factor unscaled
            s = np.ones(n)
        else:
            s = np.sqrt(d0)
        Dinv = sp.diags(1.0 / s)
        A0s = (Dinv @ A0 @ Dinv).tocsc()
        try:
            self._lu = splu(
                A0s,
                permc_spec="MMD_AT_PLUS_A",
                diag_pivot_thresh=0.0,
                options=dict(SymmetricMode=True, Equil=False),
            )
        except RuntimeError as exc:
            if "singular" in str(exc).lower():
                if p > 0:
                    raise SingularMatrixError(
                        "matrix singular beyond the declared null space"
                    ) from exc
                raise SingularMatrixError(
                    "matrix is singular; factor with a null-space hint"
                ) from exc
            raise
        self._scale = s
        pivots = self._lu.U.diagonal()
        self._sym_pivots = np.array_equal(self._lu.perm_r, self._lu.perm_c)
        ref = np.abs(pivots).max()
        if self._sym_pivots and np.any(pivots < -pivot_rtol * ref):
            raise IndefiniteMatrixError(
                f"negative pivot {pivots.min():.3e} (max pivot {ref:.3e})"
            )
        tiny = np.abs(pivots) <= pivot_rtol * ref
        if np.any(tiny):
            if p > 0:
                raise SingularMatrixError(
                    "null-space dimension exceeds the provided hint"
                )
            raise SingularMatrixError(
                "matrix is numerically singular; factor with a null-space hint"
            )
        self._logdet0 = float(np.log(np.abs(pivots)).sum() + 2.0 * np.log(s).sum())
        self._A0 = A0
        self.null_basis = basis
        self.null_dim = p
        self.rank = n - p
        self._V = V
        self._q = q
        if q + p > 0:
            self._YV = self._solve0(V) if q else np.zeros((n, 0))
            self._YN = self._solve0(basis) if p else np.zeros((n, 0))
            Ms = np.zeros((p + q, p + q))
            Ms[:p, :p] = -basis.T @ self._YN
            Ms[:p, p:] = -basis.T @ self._YV
            Ms[p:, :p] = -V.T @ self._YN
            Ms[p:, p:] = np.eye(q) - V.T @ self._YV
            self._Ms = Ms
            # small KKT system for pseudo-solves, unknowns (t, lambda)
            S = np.zeros((q + p, q + p))
            S[:q, :q] = np.eye(q) - V.T @ self._YV
            S[:q, q:] = V.T @ self._YN
            S[q:, :q] = -basis.T @ self._YV
            S[q:, q:] = basis.T @ self._YN
            self._S = S

    # -- internal -----------------------------------------------------------

    def _solve0(self, B, refine=1):
        """Solve with the positive definite core A0, with iterative refinement."""
        one_d = B.ndim == 1
        B2 = B[:, None] if one_d else B

        def raw(Y):
            Ys = Y / self._scale[:, None]
            X = self._lu.solve(np.asarray(Ys, dtype=float))
            if X.ndim == 1:
                X = X[:, None]
            return X / self._scale[:, None]

        X = raw(B2)
        for _ in range(refine):
            R = B2 - self._A0 @ X
            X = X + raw(R)
        return X.ravel() if one_d else X

    # -- public surface ------------------------------------------------------

    @property
    def permutation(self):
        """Fill-reducing symmetric ordering used by the factorization."""
        return np.asarray(self._lu.perm_c)

    @property
    def pivots(self):
        """Signed pivot sequence of the (scaled) positive definite core."""
        return np.asarray(self._lu.U.diagonal())

    def gen_logdet(self):
        """log of the product of nonzero eigenvalues of A_eff."""
        out = self._logdet0
        if self._q + self.null_dim > 0:
            sign, ld = np.linalg.slogdet(self._Ms)
            out += ld
        if self.null_dim > 0:
            out -= np.linalg.slogdet(self.null_basis.T @ self.null_basis)[1]
        return float(out)

    def solve(self, b):
        """Solve A_eff x = b; requires full rank."""
        if self.null_dim > 0:
            raise RankDeficientError(
                "matrix is rank deficient; use pseudo_solve"
            )
        x = self._solve0(np.asarray(b, dtype=float))
        if self._q:
            W = np.eye(self._q) - self._V.T @ self._YV
            t = np.linalg.solve(W, self._V.T @ np.atleast_2d(x.T).T)
            x = x + (self._YV @ t).reshape(x.shape)
        return x

    def pseudo_solve(self, b):
        """Minimum-norm solution of A_eff x = b, orthogonal to the null basis."""
        if self.null_dim > 0 and self.null_basis.shape[1] == 0:
            raise UnknownNullSpaceError("no null-space basis available")
        b = np.asarray(b, dtype=float)
        z = self._solve0(b)
        if self._q + self.null_dim == 0:
            return z
        Z = z if z.ndim == 2 else z[:, None]
        rhs = np.vstack([self._V.T @ Z, self.null_basis.T @ Z])
        tl = np.linalg.solve(self._S, rhs)
        t, lam = tl[: self._q], tl[self._q:]
        X = Z + self._YV @ t - self._YN @ lam
        return X if b.ndim == 2 else X.ravel()

    def inverse_diagonal(self, chunk=256):
        """Diagonal of A_eff^{-1} by blocked identity solves."""
        if self.null_dim > 0:
            raise RankDeficientError("inverse diagonal requires full rank")
        n = self.n
        out = np.empty(n)
        for start in range(0, n, chunk):
            stop = min(start + chunk, n)
            E = np.zeros((n, stop - start))
            E[np.arange(start, stop), np.arange(stop - start)] = 1.0
            X = self._solve0(E)
            out[start:stop] = X[np.arange(start, stop), np.arange(stop - start)]
        if self._q:
            W = np.eye(self._q) - self._V.T @ self._YV
            out = out + np.einsum("ij,jk,ik->i", self._YV, np.linalg.inv(W), self._YV)
        return out

    def sampling_operator(self):
        """Return f(Z) drawing x = L^{-T} D^{-1/2} Z so that x ~ N(0, A^{-1}).

        Only available for positive definite factors without downdates.
        """
        if self.null_dim > 0 or self._q > 0:
            raise RankDeficientError("sampling requires a positive definite factor")
        if not self._sym_pivots:
            raise SparseLinAlgError("factor lost symmetric pivoting; cannot sample")
        U = self._lu.U.tocsr()
        d = U.diagonal()
        if np.any(d <= 0):
            raise IndefiniteMatrixError("sampling needs positive pivots")
        sq = np.sqrt(d)
        ipr = np.argsort(self._lu.perm_r)
        scale = self._scale

        def draw(Z):
            Z = np.asarray(Z, dtype=float)
            one_d = Z.ndim == 1
            Zc = Z[:, None] if one_d else Z
            W = spsolve_triangular(U, sq[:, None] * Zc, lower=False)
            X = np.empty_like(W)
            X[ipr] = W
            X = (X.T / scale).T
            return X.ravel() if one_d else X

        return draw


def factor_ldl(A, null_space_hint=None):
    """Factor a sparse symmetric matrix; hint may be None, 'ones' or a basis."""
    return Factor(A, null_basis=null_space_hint)


def gen_logdet(F):
    return F.gen_logdet()


def solve(F, b):
    return F.solve(b)


def pseudo_solve(F, b):
    return F.pseudo_solve(b)


def inverse_diagonal(F):
    return F.inverse_diagonal()
