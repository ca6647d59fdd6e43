"""The EDM operator algebra: Gram<->EDM maps, Bernoulli masks, sampled operators.

Index pairs are kept 0-based internally as parallel arrays (i, j) with i < j;
the text serialization of observations is 1-based.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from edmc.linalg import InvalidInputError, double_center

# Mask uniforms are drawn in fixed-size chunks so that very large pair sets
# (n ~ 1e4 gives ~5e7 pairs) never materialize the full uniform vector.
_MASK_CHUNK = 1 << 22

# Dual-basis correlation matrices are L x L with L = n(n-1)/2; cap n to keep
# them in memory.
_HW_MAX_N = 200


class ResourceError(RuntimeError):
    """Raised when a requested computation would exceed sane memory limits."""


@dataclass(frozen=True)
class SampleMask:
    """Bernoulli(p)-sampled set of unordered index pairs with RNG provenance."""

    n: int
    i: np.ndarray  # 0-based row indices, i < j
    j: np.ndarray
    p: float
    seed: int

    def __len__(self):
        return len(self.i)

    @property
    def num_pairs_total(self):
        return self.n * (self.n - 1) // 2

    def to_sparse(self, values):
        """Symmetric sparse n x n matrix carrying ``values`` on the mask."""
        values = np.asarray(values, dtype=float)
        if values.shape != self.i.shape:
            raise InvalidInputError("values length does not match mask")
        rows = np.concatenate([self.i, self.j])
        cols = np.concatenate([self.j, self.i])
        data = np.concatenate([values, values])
        return sp.csr_matrix((data, (rows, cols)), shape=(self.n, self.n))


@dataclass(frozen=True)
class DistanceData:
    """Sampled squared distances over a mask."""

    mask: SampleMask
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape != self.mask.i.shape:
            raise InvalidInputError("values length does not match mask")
        if np.any(self.values < 0):
            raise InvalidInputError("squared distances must be nonnegative")

    def to_sparse(self):
        return self.mask.to_sparse(self.values)

    def save_text(self, path_or_file):
        """Write the ``n p seed`` header plus one ``i j value`` line per pair."""
        def _write(f):
            f.write(f"{self.mask.n} {float(self.mask.p)!r} {self.mask.seed}\n")
            for a, b, v in zip(self.mask.i, self.mask.j, self.values):
                f.write(f"{int(a) + 1} {int(b) + 1} {float(v)!r}\n")

        if isinstance(path_or_file, io.TextIOBase):
            _write(path_or_file)
        else:
            with open(path_or_file, "w") as f:
                _write(f)

    @classmethod
    def load_text(cls, path_or_file):
        if isinstance(path_or_file, io.TextIOBase):
            lines = path_or_file.read().splitlines()
        else:
            with open(path_or_file) as f:
                lines = f.read().splitlines()
        header = lines[0].split()
        n, p, seed = int(header[0]), float(header[1]), int(header[2])
        ii, jj, vals = [], [], []
        for ln in lines[1:]:
            if not ln.strip():
                continue
            a, b, v = ln.split()
            ii.append(int(a) - 1)
            jj.append(int(b) - 1)
            vals.append(float(v))
        mask = SampleMask(
            n=n, i=np.asarray(ii, dtype=np.int64), j=np.asarray(jj, dtype=np.int64),
            p=p, seed=seed,
        )
        return cls(mask=mask, values=np.asarray(vals, dtype=float))


@dataclass(frozen=True)
class DualBasisMatrix:
    """Correlation matrix of the primal or dual EDM basis (L x L)."""

    n: int
    H: np.ndarray
    kind: str  # "primal" | "dual"

    def __post_init__(self):
        L = self.n * (self.n - 1) // 2
        if self.H.shape != (L, L):
            raise InvalidInputError("H has wrong shape for n")


def forward_edm(G):
    """Map a Gram matrix to its EDM: diag(G)1^T + 1 diag(G)^T - 2G."""
    G = np.asarray(G, dtype=float)
    if G.ndim != 2 or G.shape[0] != G.shape[1]:
        raise InvalidInputError(f"expected square matrix, got {G.shape}")
    d = np.diag(G)
    return d[:, None] + d[None, :] - 2.0 * G


def gram_from_edm(D):
    """Centered pseudo-inverse of the EDM map: -1/2 J D J."""
    return -0.5 * double_center(D)


def adjoint_g(D):
    """Adjoint of the Gram->EDM map: 2 (diag(D 1) - D)."""
    D = np.asarray(D, dtype=float)
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise InvalidInputError(f"expected square matrix, got {D.shape}")
    rowsum = D.sum(axis=1)
    out = -2.0 * D
    out[np.diag_indices_from(out)] += 2.0 * rowsum
    return out


def adjoint_g_sparse_times(S, X):
    """Compute g*(S) @ X = 2 (diag(S 1) - S) X without densifying sparse S."""
    rowsum = np.asarray(S.sum(axis=1)).ravel()
    return 2.0 * (rowsum[:, None] * X - S @ X)


def _flat_to_pairs(n, k):
    """Map flat indices of the upper triangle (row-major, i<j) to (i, j)."""
    k = np.asarray(k, dtype=np.int64)
    # Row i starts at offset i*n - i*(i+1)/2 - i ... solve quadratically then
    # repair any off-by-one from float rounding.
    kk = k.astype(np.float64)

    def row_start(row):
        # flat index of pair (row, row+1)
        return row * (2 * n - row - 1) // 2

    i = np.floor((2 * n - 1 - np.sqrt((2 * n - 1) ** 2 - 8 * kk)) / 2).astype(np.int64)
    np.clip(i, 0, n - 2, out=i)
    while np.any(too_big := row_start(i) > k):
        i[too_big] -= 1
    while np.any(too_small := row_start(i + 1) <= k):
        i[too_small] += 1
    j = k - row_start(i) + i + 1
    return i, j


def draw_mask(n, p, seed):
    """Draw the symmetric Bernoulli(p) mask over all unordered pairs.

    Uses a counter-based generator (Philox keyed by ``seed``): pair k is kept
    iff the k-th uniform is < p, so the mask is reproducible from (n, p, seed)
    regardless of chunking.
    """
    if n < 2:
        raise InvalidInputError("need n >= 2")
    if not 0.0 < p <= 1.0:
        raise InvalidInputError(f"sample rate p must be in (0, 1], got {p}")
    L = n * (n - 1) // 2
    rng = np.random.Generator(np.random.Philox(key=seed))
    kept = []
    for start in range(0, L, _MASK_CHUNK):
        m = min(_MASK_CHUNK, L - start)
        u = rng.random(m)
        (idx,) = np.nonzero(u < p)
        if len(idx):
            kept.append(idx + start)
    flat = np.concatenate(kept) if kept else np.empty(0, dtype=np.int64)
    i, j = _flat_to_pairs(n, flat)
    return SampleMask(n=n, i=i, j=j, p=float(p), seed=int(seed))


def sample_distances(P, mask):
    """Squared distances ||P_i - P_j||^2 for every pair in the mask."""
    P = np.asarray(P, dtype=float)
    if P.shape[0] != mask.n:
        raise InvalidInputError("point count does not match mask")
    diff = P[mask.i] - P[mask.j]
    return DistanceData(mask=mask, values=np.einsum("ij,ij->i", diff, diff))


def pair_values(M, mask):
    """Entries M[i, j] of a dense symmetric matrix over the mask pairs."""
    M = np.asarray(M, dtype=float)
    if M.shape[0] != mask.n:
        raise InvalidInputError("matrix size does not match mask")
    return M[mask.i, mask.j]


def apply_pomega(M, mask):
    """Symmetric sampling operator: zero everything off the mask support."""
    return mask.to_sparse(pair_values(M, mask))


def apply_romega(M, mask):
    """Preconditioned sampling: -1/2 J P_Omega(g(M)) J, returned dense."""
    return gram_from_edm(apply_pomega(forward_edm(M), mask))


def apply_romega_adjoint(M, mask):
    """Adjoint of the preconditioned sampler: g*(P_Omega(-1/2 J M J))."""
    return adjoint_g(apply_pomega(gram_from_edm(M), mask).toarray())


def _pair_arrays(n):
    iu, ju = np.triu_indices(n, k=1)
    return iu, ju


def build_hw(n, kind):
    """Correlation matrix of the primal EDM basis or of its dual basis.

    primal: H[a,b] = <w_a, w_b> with w_(i,j) = (e_i - e_j)(e_i - e_j)^T.
    dual:   H[a,b] = <v_a, v_b> with v_(i,j) = -1/2 J (e_i e_j^T + e_j e_i^T) J,
            which reduces to (J[i,k] J[j,l] + J[i,l] J[j,k]) / 2 since J^2 = J.
    """
    if kind not in ("primal", "dual"):
        raise InvalidInputError(f"kind must be 'primal' or 'dual', got {kind!r}")
    if n < 2:
        raise InvalidInputError("need n >= 2")
    if n > _HW_MAX_N:
        raise ResourceError(f"n={n} exceeds the L^2 memory guard ({_HW_MAX_N})")
    I, J = _pair_arrays(n)
    if kind == "primal":
        # <w_a, w_b> = ((e_i - e_j) . (e_k - e_l))^2
        dot = (
            (I[:, None] == I[None, :]).astype(np.int64)
            - (I[:, None] == J[None, :])
            - (J[:, None] == I[None, :])
            + (J[:, None] == J[None, :])
        )
        H = (dot * dot).astype(float)
    else:
        Jm = np.full((n, n), -1.0 / n)
        Jm[np.diag_indices(n)] += 1.0
        H = 0.5 * (
            Jm[np.ix_(I, I)] * Jm[np.ix_(J, J)] + Jm[np.ix_(I, J)] * Jm[np.ix_(J, I)]
        )
    return DualBasisMatrix(n=n, H=H, kind=kind)
