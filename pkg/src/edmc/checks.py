"""Empirical checks of the operator identities and concentration bounds.

Every check is deterministic under a fixed seed and returns a CheckReport;
out-of-regime configurations are reported as informational, never as passes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from edmc.linalg import spectral_norm
from edmc.ops import (
    adjoint_g,
    apply_pomega,
    build_hw,
    draw_mask,
    forward_edm,
    gram_from_edm,
    sample_distances,
)
from edmc.solver import pseudo_gradient, sstress_cost, sstress_gradient

# Working constants for the probabilistic bounds. The underlying results are
# existential in their constants; these are calibrated so that the checks are
# tight enough to catch regressions yet robust across seeds.
RANDOM_GRAPH_CONST = 3.0
QOMEGA_LOG_CONST = 16.0


@dataclass
class CheckReport:
    name: str
    passed: bool
    measured: float
    bound_or_expected: float
    details: str = ""
    informational: bool = False

    def as_row(self):
        status = "info" if self.informational else ("pass" if self.passed else "FAIL")
        return [self.name, status, f"{self.measured:.6g}", f"{self.bound_or_expected:.6g}", self.details]


def _centered_symmetric(n, rng):
    A = rng.standard_normal((n, n))
    A = A + A.T
    A -= A.mean(axis=1, keepdims=True)
    A -= A.mean(axis=0, keepdims=True)
    A += A.mean()
    return A


def check_dual_identity(n=20, trials=20, seed=0):
    """g+(g(G)) must reproduce every centered symmetric G exactly."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        G = _centered_symmetric(n, rng)
        rel = np.linalg.norm(gram_from_edm(forward_edm(G)) - G, "fro") / np.linalg.norm(G, "fro")
        worst = max(worst, float(rel))
    # negative control: on an uncentered input the identity must fail, which
    # confirms the check can actually distinguish anything
    Gu = rng.standard_normal((n, n))
    Gu = Gu + Gu.T
    ctrl = float(
        np.linalg.norm(gram_from_edm(forward_edm(Gu)) - Gu, "fro") / np.linalg.norm(Gu, "fro")
    )
    return CheckReport(
        name=f"dual-identity(n={n})",
        passed=worst <= 1e-10 and ctrl > 1e-3,
        measured=worst,
        bound_or_expected=1e-10,
        details=(
            f"max relative error over {trials} centered inputs; "
            f"uncentered control deviates by {ctrl:.3f} as expected"
        ),
    )


def check_hw_spectrum(n=10):
    """Basis correlation eigenvalues must be {2n x1, n x(n-1), 2 x(L-n)}."""
    L = n * (n - 1) // 2
    H = build_hw(n, "primal").H
    w = np.sort(np.linalg.eigvalsh(H))[::-1]
    expected = np.concatenate([[2.0 * n], np.full(n - 1, float(n)), np.full(L - n, 2.0)])
    err = float(np.max(np.abs(w - expected)))
    return CheckReport(
        name=f"hw-spectrum(n={n})",
        passed=err <= 1e-8,
        measured=err,
        bound_or_expected=1e-8,
        details=f"multiplicities (1, {n - 1}, {L - n})",
    )


def check_random_graph_bound(n=500, p=0.2, trials=20, seed=0):
    """||(1/p) P_Omega(H_1) - H_1|| should stay below c * sqrt(n/p)."""
    H1 = np.ones((n, n)) - np.eye(n)
    bound = RANDOM_GRAPH_CONST * math.sqrt(n / p)
    worst = 0.0
    for t in range(trials):
        mask = draw_mask(n, p, seed + t)
        dev = apply_pomega(H1, mask).toarray() / p - H1
        worst = max(worst, spectral_norm(dev))
    in_regime = p >= math.log(n) / n
    return CheckReport(
        name=f"random-graph(n={n},p={p})",
        passed=bool(worst <= bound) and in_regime,
        measured=worst,
        bound_or_expected=bound,
        details="" if in_regime else "out of regime: p below log(n)/n",
        informational=not in_regime,
    )


def _qomega_sq_norm(delta, mask):
    """(1/p) ||Q_Omega(delta delta^T)||_F^2 = (2/p) sum over mask of d_ij^4."""
    d = sample_distances(delta, mask).values
    return 2.0 / mask.p * float(np.sum(d * d))


def check_qomega_bound(n=200, p=0.3, trials=50, seed=0):
    """Uniform quartic bound on the sampled misfit energy of rank-r residuals."""
    rng = np.random.default_rng(seed)
    r = 3
    log_term = math.sqrt(QOMEGA_LOG_CONST * n * math.log(n) / p)
    worst_ratio = 0.0
    for t in range(trials):
        kind = t % 3
        delta = rng.standard_normal((n, r))
        if kind == 1:  # row-spiked
            delta[rng.integers(n)] *= 10.0
        elif kind == 2:  # sparse rows
            keep = rng.random(n) < 0.05
            delta[~keep] = 0.0
            if not np.any(keep):
                delta[0] = rng.standard_normal(r)
        mask = draw_mask(n, p, seed + 1000 + t)
        lhs = _qomega_sq_norm(delta, mask)
        row_inf = float(np.max(np.sum(delta * delta, axis=1)))
        fro_sq = float(np.sum(delta * delta))
        rhs = ((8.0 * n + log_term) * row_inf + 8.0 * fro_sq) * fro_sq
        if rhs > 0:
            worst_ratio = max(worst_ratio, lhs / rhs)
    in_regime = p >= math.log(n) / n
    return CheckReport(
        name=f"qomega-bound(n={n},p={p})",
        passed=bool(worst_ratio <= 1.0) and in_regime,
        measured=worst_ratio,
        bound_or_expected=1.0,
        details=f"max LHS/RHS over {trials} mixed-shape residuals",
        informational=not in_regime,
    )


def _tangent_basis(U):
    """Orthonormal (Frobenius) basis of {U W^T + W U^T : W centered}.

    W must stay orthogonal to the ones vector: the preconditioned sampler maps
    into centered matrices, so uncentered tangent directions are unrecoverable
    by construction and would always contribute a deviation of one.
    """
    n, r = U.shape
    ones = np.ones((n, 1)) / math.sqrt(n)
    M = np.eye(n) - U @ U.T - ones @ ones.T
    # Orthonormal span of 1-perp intersected with range(U)-perp.
    Uc, s, _ = np.linalg.svd(M)
    Q = Uc[:, : n - r - 1]
    basis = []
    for a in range(r):
        basis.append(np.outer(U[:, a], U[:, a]))
        for b in range(a + 1, r):
            B = np.outer(U[:, a], U[:, b])
            basis.append((B + B.T) / math.sqrt(2.0))
    for a in range(r):
        for c in range(Q.shape[1]):
            B = np.outer(U[:, a], Q[:, c])
            basis.append((B + B.T) / math.sqrt(2.0))
    return basis


def check_tangent_rip(Pstar, p=0.5, trials=10, seed=0):
    """Deviation of (1/p) P_T R_Omega P_T from the identity on the tangent space."""
    Pstar = np.asarray(Pstar, dtype=float)
    n, r = Pstar.shape
    if n > 150:
        raise ValueError("tangent-space check materializes the operator; need n <= 150")
    U, _, _ = np.linalg.svd(Pstar - Pstar.mean(axis=0), full_matrices=False)
    basis = _tangent_basis(U[:, :r])
    dim = len(basis)
    worst = 0.0
    for t in range(trials):
        mask = draw_mask(n, p, seed + t)
        M = np.empty((dim, dim))
        for m2, B in enumerate(basis):
            RB = gram_from_edm(apply_pomega(forward_edm(B), mask)) / p
            for m1, B1 in enumerate(basis):
                M[m1, m2] = float(np.sum(B1 * RB))
        worst = max(worst, spectral_norm(M - np.eye(dim)))
    in_regime = worst < 1.0
    return CheckReport(
        name=f"tangent-rip(n={n},p={p})",
        passed=in_regime,
        measured=worst,
        bound_or_expected=1.0,
        details="" if in_regime else "out of regime: deviation >= 1 (undersampled)",
        informational=not in_regime and p < 10 * math.log(n) / n,
    )


def check_gradients(seed=0):
    """Finite-difference validation of the misfit gradient; full-sampling
    agreement of the preconditioned direction with its population form."""
    rng = np.random.default_rng(seed)
    n, r = 12, 2
    Pstar = rng.standard_normal((n, r))
    Pstar -= Pstar.mean(axis=0)
    mask = draw_mask(n, 0.6, seed + 7)
    data = sample_distances(Pstar, mask)
    # centered evaluation point: the full-sampling identity below holds on
    # centered configurations only
    E = rng.standard_normal((n, r))
    P = Pstar + 0.3 * (E - E.mean(axis=0))

    grad = sstress_gradient(P, data)
    fd = np.zeros_like(P)
    h = 1e-5
    for a in range(n):
        for b in range(r):
            Pp, Pm = P.copy(), P.copy()
            Pp[a, b] += h
            Pm[a, b] -= h
            fd[a, b] = (sstress_cost(Pp, data) - sstress_cost(Pm, data)) / (2 * h)
    rel_fd = float(np.linalg.norm(grad - fd) / np.linalg.norm(fd))

    full = draw_mask(n, 1.0, seed)
    full_data = sample_distances(Pstar, full)
    pg = pseudo_gradient(P, full_data)
    pop = 2.0 * (P @ P.T - Pstar @ Pstar.T) @ P
    rel_pop = float(np.linalg.norm(pg - pop) / np.linalg.norm(pop))

    part = draw_mask(n, 0.3, seed + 11)
    part_data = sample_distances(Pstar, part)
    g1_dir = pseudo_gradient(P, part_data)
    # adjoint direction: g* P_Omega g+ of the Gram residual, times P
    g2_dir = adjoint_g(
        apply_pomega(gram_from_edm(P @ P.T - Pstar @ Pstar.T), part).toarray()
    ) @ P * (2.0 / part.p)
    gap = float(
        np.linalg.norm(g1_dir - g2_dir) / max(np.linalg.norm(g1_dir), 1e-300)
    )

    measured = max(rel_fd, rel_pop)
    return CheckReport(
        name="gradients",
        passed=rel_fd <= 1e-5 and rel_pop <= 1e-8,
        measured=measured,
        bound_or_expected=1e-5,
        details=(
            f"fd rel err {rel_fd:.2e}; full-sample rel err {rel_pop:.2e}; "
            f"partial-sample direction gap {gap:.2f} (expected, informational)"
        ),
    )


def run_all(seed=0, quick=False, only=None):
    """Run the full check suite; ``quick`` shrinks the heavy Monte-Carlo sizes."""
    specs = {
        "dual-identity": lambda: [
            check_dual_identity(n=5, trials=20, seed=seed),
            check_dual_identity(n=100 if not quick else 40, trials=5, seed=seed + 1),
        ],
        "hw-spectrum": lambda: [
            check_hw_spectrum(n=3),
            check_hw_spectrum(n=4),
            check_hw_spectrum(n=10),
        ],
        "random-graph": lambda: [
            check_random_graph_bound(
                n=200 if quick else 500, p=0.2, trials=5 if quick else 20, seed=seed
            )
        ],
        "qomega-bound": lambda: [
            check_qomega_bound(
                n=100 if quick else 200, p=0.3, trials=15 if quick else 50, seed=seed
            )
        ],
        "tangent-rip": lambda: [
            check_tangent_rip(
                _incoherent_points(60 if quick else 100, 2, seed),
                p=0.5,
                trials=2 if quick else 10,
                seed=seed,
            )
        ],
        "gradients": lambda: [check_gradients(seed=seed)],
    }
    if only is not None:
        if only not in specs:
            raise KeyError(f"unknown check {only!r}; choose from {sorted(specs)}")
        specs = {only: specs[only]}
    reports = []
    for fn in specs.values():
        reports.extend(fn())
    return reports


def _incoherent_points(n, r, seed=0):
    """Maximally incoherent configuration (mu ~ 1): evenly spread points on the
    unit circle (r=2) or a Fibonacci sphere (r=3)."""
    if r == 2:
        th = 2 * np.pi * np.arange(n) / n
        P = np.column_stack([np.cos(th), np.sin(th)])
    elif r == 3:
        i = np.arange(n) + 0.5
        phi = np.arccos(1 - 2 * i / n)
        theta = np.pi * (1 + math.sqrt(5)) * i
        P = np.column_stack(
            [np.sin(phi) * np.cos(theta), np.sin(phi) * np.sin(theta), np.cos(phi)]
        )
    else:
        raise ValueError("incoherent reference configurations exist for r in {2, 3}")
    return P - P.mean(axis=0)
