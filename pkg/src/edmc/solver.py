"""Spectral initialization, incoherence trimming, and preconditioned descent.

The descent loop never materializes a dense n x n matrix: residuals are
evaluated per sampled pair and the double-centering is applied through
rank-one corrections, so one gradient costs O(|mask| r + n r).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from edmc.linalg import (
    InvalidInputError,
    center_columns,
    procrustes_align,
    truncated_psd_factor,
)
from edmc.linalg import CenteredSparseOperator
from edmc.ops import DistanceData, adjoint_g_sparse_times, sample_distances


class DivergenceError(RuntimeError):
    """Iterates overflowed; carries the last finite iterate."""

    def __init__(self, message, last_iterate=None, iteration=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.iteration = iteration


class DegenerateStepError(RuntimeError):
    """Quasi-Newton secant step is undefined (zero curvature denominator)."""


@dataclass
class TrimConfig:
    enabled: bool = False
    mu: float = 1.0
    sigma1: float = 1.0
    c_ip: float = 1.0

    def __post_init__(self):
        if self.c_ip < 1.0:
            raise InvalidInputError("c_ip must be >= 1")


@dataclass
class SolverConfig:
    r: int
    step_rule: str = "bb"  # "fixed" | "bb"
    eta: float = 1e-3  # fixed-step length
    eta_max: float = 10.0  # upper safeguard for the adaptive step
    eta_min: Optional[float] = None  # lower safeguard; None allows negative steps
    trim: TrimConfig = field(default_factory=TrimConfig)
    tol_grad: float = 1e-6
    max_iters: int = 1000
    record_oracle: bool = False

    def __post_init__(self):
        if self.step_rule not in ("fixed", "bb"):
            raise InvalidInputError(f"unknown step rule {self.step_rule!r}")
        if self.tol_grad <= 0 or self.max_iters < 1:
            raise InvalidInputError("tol_grad must be > 0 and max_iters >= 1")
        if self.step_rule == "fixed" and self.eta <= 0:
            raise InvalidInputError("fixed step requires eta > 0")
        if self.eta_max <= 0:
            raise InvalidInputError("eta_max must be > 0")
        if self.eta_min is not None and not 0 < self.eta_min <= self.eta_max:
            raise InvalidInputError("need 0 < eta_min <= eta_max")


@dataclass
class Trajectory:
    g1: list = field(default_factory=list)
    g2: list = field(default_factory=list)
    rel_err: list = field(default_factory=list)
    dist: list = field(default_factory=list)
    eta: list = field(default_factory=list)
    termination_reason: str = ""

    def __len__(self):
        return len(self.g1)

    def to_csv(self, path_or_file):
        def _write(f):
            w = csv.writer(f)
            w.writerow(["iter", "g1", "g2", "r", "dist", "eta"])
            has_oracle = len(self.g2) == len(self.g1)
            for k in range(len(self.g1)):
                row = [
                    k,
                    repr(self.g1[k]),
                    repr(self.g2[k]) if has_oracle else "",
                    repr(self.rel_err[k]) if has_oracle else "",
                    repr(self.dist[k]) if has_oracle else "",
                    repr(self.eta[k]),
                ]
                w.writerow(row)

        if isinstance(path_or_file, io.TextIOBase):
            _write(path_or_file)
        else:
            with open(path_or_file, "w", newline="") as f:
                _write(f)


@dataclass
class SolveResult:
    points: np.ndarray
    trajectory: Trajectory
    iterations: int


def osmds_init(data: DistanceData, r: int):
    """One-step spectral estimate: rank-r PSD truncation of -1/(2p) J M J,

    where M is the sparse matrix of observed squared distances. The factor is
    centered because every retained eigenvector is orthogonal to the ones
    vector.
    """
    if len(data.mask) == 0:
        raise InvalidInputError("no observations")
    if r < 1:
        raise InvalidInputError("rank must be >= 1")
    op = CenteredSparseOperator(data.to_sparse(), scale=-0.5 / data.mask.p)
    return truncated_psd_factor(op, r)


def trim(P, cfg: SolverConfig):
    """Rescale every row whose norm exceeds c_ip * sqrt(mu r sigma1 / n)."""
    t = cfg.trim
    if not t.enabled:
        return P
    n = P.shape[0]
    tau = t.c_ip * math.sqrt(t.mu * cfg.r * t.sigma1 / n)
    norms = np.linalg.norm(P, axis=1)
    over = norms > tau
    if not np.any(over):
        return P
    out = P.copy()
    out[over] *= (tau / norms[over])[:, None]
    return out


def _residual_sparse(P, data: DistanceData):
    """Sparse symmetric residual P_Omega(g(PP^T) - D_obs)."""
    model = sample_distances(P, data.mask).values
    return data.mask.to_sparse(model - data.values)


def _scaled_pseudo_gradient(P, data: DistanceData):
    """2 * g+(P_Omega(g(PP^T) - D_obs)) P, the p-scaled descent direction.

    Equals p times the pseudo-gradient; computed via the sparse residual path:
    J S J P = J (S (J P)).
    """
    S = _residual_sparse(P, data)
    Y = S @ center_columns(P)
    return -center_columns(Y)  # 2 * (-1/2) * JSJP


def pseudo_gradient(P, data: DistanceData):
    """(2/p) g+(P_Omega(g(PP^T) - D_obs)) P without dense intermediates."""
    P = np.asarray(P, dtype=float)
    if P.shape[0] != data.mask.n:
        raise InvalidInputError("point count does not match data")
    return _scaled_pseudo_gradient(P, data) / data.mask.p


def sstress_cost(P, data: DistanceData):
    """Least-squares misfit on sampled squared distances (each pair once)."""
    res = sample_distances(P, data.mask).values - data.values
    return float(res @ res)


def sstress_gradient(P, data: DistanceData):
    """Exact gradient of the sampled squared-distance misfit: 2 g*(S) P."""
    P = np.asarray(P, dtype=float)
    if P.shape[0] != data.mask.n:
        raise InvalidInputError("point count does not match data")
    S = _residual_sparse(P, data)
    # chain rule through PP^T doubles the Gram-space gradient g*(S)
    return 2.0 * adjoint_g_sparse_times(S, P)


def bb_step(S, Dg, k, cfg: SolverConfig):
    """Alternating secant step: even k uses |S|^2/<S,Dg>, odd k <S,Dg>/|Dg|^2.

    The result is capped at eta_max; a lower safeguard applies only when
    eta_min is configured, otherwise negative steps pass through.
    """
    sd = float(np.sum(S * Dg))
    if k % 2 == 0:
        if sd == 0.0:
            raise DegenerateStepError("zero curvature <S, Dg>")
        eta = float(np.sum(S * S)) / sd
    else:
        dd = float(np.sum(Dg * Dg))
        if dd == 0.0:
            raise DegenerateStepError("zero gradient difference")
        eta = sd / dd
    eta = min(eta, cfg.eta_max)
    if cfg.eta_min is not None:
        eta = max(eta, cfg.eta_min)
    return eta


class _OracleRecorder:
    """Per-iteration oracle quantities; needs the ground-truth configuration.

    All quantities are measured on the centered iterate: trimming rescales
    individual rows and slowly translates the configuration, which the sampled
    distances cannot see, so the raw Gram comparison would plateau at the
    translation offset.
    """

    def __init__(self, Pstar, data: DistanceData):
        self.Pstar_c = center_columns(np.asarray(Pstar, dtype=float))
        r = self.Pstar_c.shape[1]
        self.gstar_fro = float(np.linalg.norm(self.Pstar_c.T @ self.Pstar_c, "fro"))
        # coefficient matrix of Q d^T + d Q^T + d d^T over the stacked [Q, d]
        self.K = np.zeros((2 * r, 2 * r))
        self.K[:r, r:] = np.eye(r)
        self.K[r:, :r] = np.eye(r)
        self.K[r:, r:] = np.eye(r)
        self.data = data

    def record(self, P):
        """(rel_gram_err, dist) from one Procrustes alignment."""
        Pc = center_columns(P)
        psi, delta, dist = procrustes_align(Pc, self.Pstar_c)
        # || Q d^T + d Q^T + d d^T ||_F from 2r x 2r moments; stays accurate
        # when delta is tiny, unlike a difference of large Gram norms.
        B = np.hstack([self.Pstar_c @ psi, delta])
        KS = self.K @ (B.T @ B)
        val = max(float(np.sum(KS * KS.T)), 0.0)
        return math.sqrt(val) / self.gstar_fro, dist

    def adjoint_grad_norm(self, P):
        """(2/p) || g*(P_Omega(g+(PP^T - G*))) P ||_F via the low-rank split."""
        mask = self.data.mask
        Pc = center_columns(P)
        vals = -0.5 * (
            np.einsum("ij,ij->i", Pc[mask.i], Pc[mask.j])
            - np.einsum("ij,ij->i", self.Pstar_c[mask.i], self.Pstar_c[mask.j])
        )
        S = mask.to_sparse(vals)
        Y = adjoint_g_sparse_times(S, P)
        return 2.0 * float(np.linalg.norm(Y)) / mask.p


def _descend(data, cfg, grad_fn, grad_scale, oracle, init):
    """Shared descent loop for the preconditioned and plain-misfit solvers.

    ``grad_fn(P)`` returns the raw stepping direction G; the reported gradient
    norm (and the fixed-step direction) is ``grad_scale * G``.
    """
    if cfg.record_oracle and oracle is None:
        raise InvalidInputError("record_oracle requires the ground-truth points")
    if init is not None:
        P = np.asarray(init, dtype=float).copy()
    else:
        P = osmds_init(data, cfg.r)
        P = trim(P, cfg)
    rec = _OracleRecorder(oracle, data) if cfg.record_oracle else None
    traj = Trajectory()

    sigma1_hat = float(np.linalg.norm(P, 2)) ** 2
    if cfg.step_rule == "bb":
        eta = min(1.0 / sigma1_hat, cfg.eta_max) if sigma1_hat > 0 else cfg.eta_max
    else:
        eta = cfg.eta

    blowup = 1e12 * max(1.0, math.sqrt(sigma1_hat))
    G = grad_fn(P)
    for k in range(cfg.max_iters):
        g1 = grad_scale * float(np.linalg.norm(G))
        if rec is not None:
            traj.g2.append(rec.adjoint_grad_norm(P))
            rel, dist = rec.record(P)
            traj.rel_err.append(rel)
            traj.dist.append(dist)
        traj.g1.append(g1)
        if g1 <= cfg.tol_grad:
            traj.eta.append(0.0)
            traj.termination_reason = "gradient-tol"
            break

        step = eta * grad_scale if cfg.step_rule == "fixed" else eta
        P_new = trim(P - step * G, cfg)
        traj.eta.append(eta)

        if not np.all(np.isfinite(P_new)) or np.max(np.abs(P_new)) > blowup:
            raise DivergenceError(
                "iterates overflowed", last_iterate=P, iteration=k
            )
        G_new = grad_fn(P_new)
        if cfg.step_rule == "bb":
            try:
                eta = bb_step(P_new - P, G_new - G, k, cfg)
            except DegenerateStepError:
                eta = cfg.eta_max
        P, G = P_new, G_new
    else:
        traj.termination_reason = "max-iters"

    return SolveResult(points=P, trajectory=traj, iterations=len(traj))


def apgd(data: DistanceData, cfg: SolverConfig, oracle=None, init=None):
    """Preconditioned projected gradient descent on the factored Gram misfit.

    Steps along 2 g+(P_Omega(g(PP^T) - D_obs)) P (the p-scaled pseudo-gradient,
    matching the adaptive-step listing); the recorded g1 and the stopping test
    use the (2/p)-scaled pseudo-gradient norm.
    """
    return _descend(
        data, cfg, lambda P: _scaled_pseudo_gradient(P, data),
        grad_scale=1.0 / data.mask.p, oracle=oracle, init=init,
    )


def sstress_gd(data: DistanceData, cfg: SolverConfig, oracle=None, init=None):
    """Gradient descent on the raw squared-distance misfit (untrimmed default)."""
    return _descend(
        data, cfg, lambda P: sstress_gradient(P, data),
        grad_scale=1.0, oracle=oracle, init=init,
    )


def estimate_params(data: DistanceData, Phat, c1, c2):
    """Plug-in estimates of the top Gram eigenvalue and the coherence level.

    sigma1_hat = c1 * sigma1(Phat Phat^T); mu_hat = c2 * n/(r*sigma1_hat) *
    max observed squared distance.
    """
    if len(data.mask) == 0:
        raise InvalidInputError("no observations")
    Phat = np.asarray(Phat, dtype=float)
    n, r = Phat.shape
    sigma1_hat = c1 * float(np.linalg.norm(Phat, 2)) ** 2
    if sigma1_hat <= 0:
        raise InvalidInputError("degenerate spectral estimate")
    mu_hat = c2 * n / (r * sigma1_hat) * float(np.max(data.values))
    return sigma1_hat, mu_hat
