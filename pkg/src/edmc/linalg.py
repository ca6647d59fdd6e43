"""Dense/matrix-free linear algebra: centering, truncated PSD factors, Procrustes.

Matrices are plain numpy arrays or scipy sparse matrices; large operators are
passed around as ``scipy.sparse.linalg.LinearOperator`` so that n in the
thousands never forces an O(n^3) dense eigendecomposition.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh

# Below this size a full dense symmetric eigendecomposition is cheaper and
# more robust than Lanczos.
DENSE_EIG_CUTOFF = 500

# Extra eigenpairs requested from the iterative solver; guards against
# clustered top eigenvalues.
_LANCZOS_BUFFER = 4


class InvalidInputError(ValueError):
    """Raised when an operation receives structurally invalid input."""


class NumericError(RuntimeError):
    """Raised when an iterative numeric routine fails to converge."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


def _check_square(A):
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InvalidInputError(f"expected a square matrix, got shape {A.shape}")


def center_columns(X):
    """Remove the column means of ``X`` (i.e. apply J from the left)."""
    return X - X.mean(axis=0, keepdims=True)


def double_center(A):
    """Return J A J for symmetric A, where J = I - (1/n) 11^T.

    Computed as A minus row means minus column means plus the grand mean,
    O(n^2) for dense input and O(nnz + n) for sparse input (the sparse result
    is returned densified since J A J is generically dense).
    """
    if sp.issparse(A):
        _check_square(A)
        n = A.shape[0]
        row = np.asarray(A.sum(axis=1)).ravel() / n
        col = np.asarray(A.sum(axis=0)).ravel() / n
        grand = row.sum() / n
        out = A.toarray()
        out -= row[:, None]
        out -= col[None, :]
        out += grand
        return out
    A = np.asarray(A, dtype=float)
    _check_square(A)
    row = A.mean(axis=1, keepdims=True)
    col = A.mean(axis=0, keepdims=True)
    return A - row - col + row.mean()


class CenteredSparseOperator(LinearOperator):
    """Matrix-free representation of ``scale * J M J`` with M sparse symmetric.

    Matvecs cost O(nnz(M) + n); ``to_dense`` exists for small-n oracles.
    """

    def __init__(self, M, scale=1.0):
        _check_square(M)
        self.M = M.tocsr() if sp.issparse(M) else sp.csr_matrix(M)
        self.scale = float(scale)
        super().__init__(dtype=np.float64, shape=M.shape)

    def _matvec(self, x):
        x = np.asarray(x, dtype=float).ravel()
        xc = x - x.mean()
        y = self.M @ xc
        y = y - y.mean()
        return self.scale * y

    def _matmat(self, X):
        Xc = center_columns(np.asarray(X, dtype=float))
        Y = self.M @ Xc
        return self.scale * center_columns(Y)

    def _adjoint(self):
        return self

    def to_dense(self):
        return self.scale * double_center(self.M)


def truncated_psd_factor(S, r):
    """Best rank-r PSD approximation factor of a symmetric matrix or operator.

    Takes the r algebraically largest eigenpairs, clamps negative eigenvalues
    to zero, and returns the n x r factor P with columns ordered by descending
    eigenvalue, so that P P^T is the rank-r PSD truncation of S.
    """
    n = S.shape[0]
    if not 1 <= r <= n:
        raise InvalidInputError(f"rank {r} out of range for n={n}")
    if isinstance(S, np.ndarray) or n < DENSE_EIG_CUTOFF:
        A = S.to_dense() if isinstance(S, CenteredSparseOperator) else S
        if sp.issparse(A):
            A = A.toarray()
        A = np.asarray(A, dtype=float)
        _check_square(A)
        w, V = np.linalg.eigh(A)
        w, V = w[::-1], V[:, ::-1]
    else:
        k = min(r + _LANCZOS_BUFFER, n - 1)
        try:
            w, V = eigsh(S, k=k, which="LA")
        except ArpackNoConvergence as exc:
            res = float(np.linalg.norm(exc.eigenvalues)) if len(exc.eigenvalues) else None
            raise NumericError("eigensolver did not converge", residual=res) from exc
        order = np.argsort(w)[::-1]
        w, V = w[order], V[:, order]
    lam = np.clip(w[:r], 0.0, None)
    return V[:, :r] * np.sqrt(lam)[None, :]


def procrustes_align(P, Pstar):
    """Optimal orthogonal alignment of P onto Pstar.

    Returns ``(psi, delta, dist)`` where ``psi`` minimizes ||P - Pstar psi||_F
    over the orthogonal group, ``delta = P - Pstar psi`` and ``dist`` is its
    Frobenius norm. ``psi`` is the polar factor of Pstar^T P.
    """
    P = np.asarray(P, dtype=float)
    Pstar = np.asarray(Pstar, dtype=float)
    if P.shape != Pstar.shape:
        raise InvalidInputError(f"shape mismatch: {P.shape} vs {Pstar.shape}")
    U, _, Vt = np.linalg.svd(Pstar.T @ P)
    psi = U @ Vt
    delta = P - Pstar @ psi
    return psi, delta, float(np.linalg.norm(delta))


def spectral_norm(M, tol=1e-8, maxiter=5000):
    """Largest singular value of a square matrix or linear operator."""
    if isinstance(M, np.ndarray):
        _check_square(M)
        return float(np.linalg.norm(M, 2))
    if sp.issparse(M) and M.shape[0] < DENSE_EIG_CUTOFF:
        return float(np.linalg.norm(M.toarray(), 2))
    n = M.shape[0]
    if n == 1:
        return float(abs(M @ np.ones(1)))
    # Symmetric case covers every operator used here; power-iterate M^T M to
    # stay safe for mildly non-symmetric numerical noise.
    op = M if isinstance(M, LinearOperator) else sp.linalg.aslinearoperator(M)
    rng = np.random.default_rng(0)
    x = rng.standard_normal(n)
    x /= np.linalg.norm(x)
    sigma = 0.0
    for _ in range(maxiter):
        y = op.rmatvec(op.matvec(x))
        ny = np.linalg.norm(y)
        if ny == 0.0:
            return 0.0
        new_sigma = np.sqrt(ny)
        x = y / ny
        if abs(new_sigma - sigma) <= tol * max(new_sigma, 1e-300):
            return float(new_sigma)
        sigma = new_sigma
    raise NumericError(
        f"spectral norm power iteration did not converge in {maxiter} steps",
        residual=float(abs(new_sigma - sigma)),
    )
