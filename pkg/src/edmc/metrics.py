"""Success metrics: quotient distance, spectral/recovery error, coherence."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from edmc.linalg import InvalidInputError, procrustes_align, spectral_norm


@dataclass(frozen=True)
class GroundTruthStats:
    sigma1: float  # largest nonzero Gram eigenvalue
    sigma_r: float  # smallest nonzero Gram eigenvalue
    kappa: float  # sigma1 / sigma_r
    mu: float  # coherence, in [1, n/r]


def quotient_dist(P, Pstar):
    """min over orthogonal psi of ||P - Pstar psi||_F."""
    return procrustes_align(P, Pstar)[2]


def spectral_error(Ghat, Gstar):
    """||Ghat - Gstar|| / ||Gstar|| in the spectral norm."""
    denom = spectral_norm(Gstar)
    if denom == 0.0:
        raise InvalidInputError("reference Gram matrix is zero")
    return spectral_norm(Ghat - Gstar) / denom


def spectral_error_factored(Phat, Pstar):
    """Spectral error between Phat Phat^T and Pstar Pstar^T via the low-rank split.

    The difference has rank <= 2r, so its extreme eigenvalues come from a
    (2r) x (2r) pencil instead of an n x n eigendecomposition.
    """
    B = np.hstack([Phat, Pstar])
    sgn = np.concatenate([np.ones(Phat.shape[1]), -np.ones(Pstar.shape[1])])
    M = (B.T @ B) * sgn[:, None]  # similar to B diag(sgn) B^T on its range
    num = float(np.max(np.abs(np.linalg.eigvals(M))))
    denom = float(np.linalg.norm(Pstar.T @ Pstar, 2))
    if denom == 0.0:
        raise InvalidInputError("reference configuration is zero")
    return num / denom


def recovery_error(Dbar, Dstar):
    """||Dbar - Dstar||_F / ||Dstar||_F."""
    denom = np.linalg.norm(Dstar, "fro")
    if denom == 0.0:
        raise InvalidInputError("reference EDM is zero")
    return float(np.linalg.norm(Dbar - Dstar, "fro")) / float(denom)


def ground_truth_stats(Pstar, r):
    """Extreme Gram eigenvalues, condition number, and coherence of Pstar.

    mu is the smallest scalar making both row-energy bounds hold:
    ||U||_{2,inf}^2 <= mu r / n and ||P||_{2,inf}^2 <= mu r sigma1 / n,
    with U the top-r Gram eigenbasis.
    """
    Pstar = np.asarray(Pstar, dtype=float)
    n = Pstar.shape[0]
    if r < 1 or r > Pstar.shape[1]:
        raise InvalidInputError("invalid target rank")
    # Eigenpairs of Pstar Pstar^T from the thin SVD of Pstar.
    U, s, _ = np.linalg.svd(Pstar, full_matrices=False)
    lam = s**2
    sigma1 = float(lam[0])
    sigma_r = float(lam[r - 1])
    if sigma_r <= 1e-12 * sigma1:
        raise InvalidInputError("configuration is rank-deficient")
    U = U[:, :r]
    mu_u = (n / r) * float(np.max(np.sum(U * U, axis=1)))
    mu_p = (n / (r * sigma1)) * float(np.max(np.sum(Pstar * Pstar, axis=1)))
    return GroundTruthStats(
        sigma1=sigma1,
        sigma_r=sigma_r,
        kappa=sigma1 / sigma_r,
        mu=max(mu_u, mu_p),
    )
