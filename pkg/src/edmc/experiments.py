"""Monte-Carlo experiment drivers: phase transition, perturbed starts,
trajectory diagnostics, and protein reconstruction sweeps.

Each trial derives its RNG streams from (base_seed, cell indices, trial index)
through numpy's SeedSequence, so results are reproducible independently of the
worker count or execution order.
"""

from __future__ import annotations

import csv
import io
import math
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from edmc.linalg import InvalidInputError, center_columns, procrustes_align
from edmc.metrics import ground_truth_stats
from edmc.ops import draw_mask, sample_distances
from edmc.solver import (
    DivergenceError,
    SolverConfig,
    TrimConfig,
    apgd,
    sstress_gd,
)

_RE_CHUNK = 512  # row block for pairwise-distance accumulation


@dataclass(frozen=True)
class GridSpec:
    """Grid of problem sizes/sample rates plus solver settings for one sweep."""

    n_values: tuple = (500,)
    p_values: tuple = (0.2,)
    sigma_values: tuple = (0.0,)  # initialization noise levels (perturbation runs)
    r: int = 3
    trials: int = 50
    base_seed: int = 0
    pointset: str = "gaussian"  # "gaussian" | "uniform_cube"
    solver: str = "apgd"  # "apgd" | "sstress"
    step_rule: str = "bb"
    eta: float = 1e-3
    eta_max: float = 10.0
    use_safeguards: bool = False  # derive eta_max/eta_min from ground truth
    trim_enabled: bool = True
    c_ip: float = 1.0
    tol_grad: float = 1e-6
    max_iters: int = 1000
    success_re: float = 1e-3

    def __post_init__(self):
        if self.trials < 1:
            raise InvalidInputError("need at least one trial")
        if self.solver not in ("apgd", "sstress"):
            raise InvalidInputError(f"unknown solver {self.solver!r}")
        if self.pointset not in ("gaussian", "uniform_cube"):
            raise InvalidInputError(f"unknown point set kind {self.pointset!r}")


@dataclass
class CellResult:
    """Aggregate over the trials of one grid cell."""

    n: int
    p: float
    sigma_n: float
    trials: int
    successes: int
    mean_re: float
    mean_iters: float
    mean_seconds: float
    extra: dict = field(default_factory=dict)

    @property
    def success_rate(self):
        return self.successes / self.trials


def gen_pointset(kind, n, r, seed):
    """Centered random configuration: i.i.d. Gaussian rows or a uniform cube."""
    rng = np.random.default_rng(seed)
    if kind == "gaussian":
        P = rng.standard_normal((n, r))
    elif kind == "uniform_cube":
        P = rng.uniform(-0.5, 0.5, size=(n, r))
    else:
        raise InvalidInputError(f"unknown point set kind {kind!r}")
    return center_columns(P)


def trial_seeds(base_seed, cell_key, trial):
    """Two independent integer seeds (points, mask) for one trial of one cell."""
    ss = np.random.SeedSequence(base_seed, spawn_key=(*cell_key, trial))
    state = ss.generate_state(2, dtype=np.uint64)
    return int(state[0]), int(state[1])


def recovery_error_points(P, Pstar):
    """Relative Frobenius EDM error between two configurations, block-wise.

    Never builds an n x n matrix, so it stays usable at protein sizes.
    """
    P = np.asarray(P, dtype=float)
    Pstar = np.asarray(Pstar, dtype=float)
    n = P.shape[0]
    sq = np.einsum("ij,ij->i", P, P)
    sq_star = np.einsum("ij,ij->i", Pstar, Pstar)
    num = 0.0
    denom = 0.0
    for lo in range(0, n, _RE_CHUNK):
        hi = min(lo + _RE_CHUNK, n)
        D = sq[lo:hi, None] + sq[None, :] - 2.0 * (P[lo:hi] @ P.T)
        Ds = sq_star[lo:hi, None] + sq_star[None, :] - 2.0 * (Pstar[lo:hi] @ Pstar.T)
        num += float(np.sum((D - Ds) ** 2))
        denom += float(np.sum(Ds * Ds))
    if denom == 0.0:
        raise InvalidInputError("reference configuration is degenerate")
    return math.sqrt(num / denom)


def loglinear_fit(values):
    """Least-squares slope and R^2 of log10(values) against the iteration index.

    Non-positive entries are dropped; returns (nan, nan) with fewer than three
    usable points.
    """
    v = np.asarray(values, dtype=float)
    k = np.arange(len(v))
    ok = v > 0
    if np.count_nonzero(ok) < 3:
        return float("nan"), float("nan")
    x, y = k[ok], np.log10(v[ok])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(r2)


def _solver_config(spec: GridSpec, stats, p):
    trim = TrimConfig(
        enabled=spec.trim_enabled, mu=stats.mu, sigma1=stats.sigma1, c_ip=spec.c_ip
    )
    eta_max, eta_min = spec.eta_max, None
    if spec.use_safeguards:
        scale = p * stats.sigma1 * stats.mu * spec.r * stats.kappa
        eta_max = 2.0 / scale
        eta_min = 0.5 / scale
    return SolverConfig(
        r=spec.r,
        step_rule=spec.step_rule,
        eta=spec.eta,
        eta_max=eta_max,
        eta_min=eta_min,
        trim=trim,
        tol_grad=spec.tol_grad,
        max_iters=spec.max_iters,
    )


def _run_one(spec, Pstar, stats, p, mask_seed, init=None, record_oracle=False):
    """Solve a single sampled instance; returns (result_or_None, re, seconds)."""
    n = Pstar.shape[0]
    mask = draw_mask(n, p, mask_seed)
    if len(mask) == 0:
        return None, float("inf"), 0.0
    data = sample_distances(Pstar, mask)
    cfg = _solver_config(spec, stats, p)
    if record_oracle:
        cfg = replace(cfg, record_oracle=True)
    solve = apgd if spec.solver == "apgd" else sstress_gd
    t0 = time.perf_counter()
    try:
        result = solve(data, cfg, oracle=Pstar if record_oracle else None, init=init)
    except DivergenceError as exc:
        seconds = time.perf_counter() - t0
        re = float("inf")
        if exc.last_iterate is not None:
            re = recovery_error_points(exc.last_iterate, Pstar)
        return None, re, seconds
    seconds = time.perf_counter() - t0
    return result, recovery_error_points(result.points, Pstar), seconds


def _phase_trial(args):
    spec, ni, pi, t = args
    n, p = spec.n_values[ni], spec.p_values[pi]
    pt_seed, mask_seed = trial_seeds(spec.base_seed, (ni, pi), t)
    Pstar = gen_pointset(spec.pointset, n, spec.r, pt_seed)
    stats = ground_truth_stats(Pstar, spec.r)
    result, re, seconds = _run_one(spec, Pstar, stats, p, mask_seed)
    iters = result.iterations if result is not None else spec.max_iters
    return ni, pi, t, re, iters, seconds


def _map_trials(fn, jobs, workers):
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, jobs, chunksize=1))
    return [fn(j) for j in jobs]


def run_phase_transition(spec: GridSpec, workers=1):
    """Success-rate grid over (n, p); reference edge p = 10 log(n) / n."""
    jobs = [
        (spec, ni, pi, t)
        for ni in range(len(spec.n_values))
        for pi in range(len(spec.p_values))
        for t in range(spec.trials)
    ]
    raw = _map_trials(_phase_trial, jobs, workers)
    cells = {}
    for ni, pi, t, re, iters, seconds in raw:
        cells.setdefault((ni, pi), []).append((re, iters, seconds))
    out = []
    for (ni, pi), rows in sorted(cells.items()):
        res = np.array([r[0] for r in rows])
        its = np.array([r[1] for r in rows], dtype=float)
        secs = np.array([r[2] for r in rows])
        finite = res[np.isfinite(res)]
        n = spec.n_values[ni]
        out.append(
            CellResult(
                n=n,
                p=spec.p_values[pi],
                sigma_n=0.0,
                trials=len(rows),
                successes=int(np.sum(res <= spec.success_re)),
                mean_re=float(np.mean(finite)) if len(finite) else float("inf"),
                mean_iters=float(np.mean(its)),
                mean_seconds=float(np.mean(secs)),
                extra={"ref_edge": 10.0 * math.log(n) / n},
            )
        )
    return out


def _perturb_trial(args):
    spec, ni, pi, si, t = args
    n, p = spec.n_values[ni], spec.p_values[pi]
    sigma = spec.sigma_values[si]
    pt_seed, mask_seed = trial_seeds(spec.base_seed, (ni, pi, si), t)
    rng = np.random.default_rng(pt_seed)
    Pstar = gen_pointset(spec.pointset, n, spec.r, pt_seed)
    stats = ground_truth_stats(Pstar, spec.r)
    # Perturbed start: center the noisy copy of the truth.
    P0 = center_columns(Pstar + sigma * rng.standard_normal(Pstar.shape))
    delta0 = procrustes_align(P0, Pstar)[2]
    result, re, seconds = _run_one(spec, Pstar, stats, p, mask_seed, init=P0)
    iters = result.iterations if result is not None else spec.max_iters
    return ni, pi, si, t, re, iters, seconds, delta0**2 / stats.sigma_r


def run_perturbation(spec: GridSpec, workers=1):
    """Success grid over (p, sigma_n) for starts at controlled distance from truth."""
    jobs = [
        (spec, ni, pi, si, t)
        for ni in range(len(spec.n_values))
        for pi in range(len(spec.p_values))
        for si in range(len(spec.sigma_values))
        for t in range(spec.trials)
    ]
    raw = _map_trials(_perturb_trial, jobs, workers)
    cells = {}
    for ni, pi, si, t, re, iters, seconds, d0 in raw:
        cells.setdefault((ni, pi, si), []).append((re, iters, seconds, d0))
    out = []
    for (ni, pi, si), rows in sorted(cells.items()):
        res = np.array([r[0] for r in rows])
        finite = res[np.isfinite(res)]
        out.append(
            CellResult(
                n=spec.n_values[ni],
                p=spec.p_values[pi],
                sigma_n=spec.sigma_values[si],
                trials=len(rows),
                successes=int(np.sum(res <= spec.success_re)),
                mean_re=float(np.mean(finite)) if len(finite) else float("inf"),
                mean_iters=float(np.mean([r[1] for r in rows])),
                mean_seconds=float(np.mean([r[2] for r in rows])),
                extra={
                    "delta0_sq_over_sigmar": float(np.mean([r[3] for r in rows]))
                },
            )
        )
    return out


def _trajectory_trial(args):
    spec, ni, pi, t = args
    n, p = spec.n_values[ni], spec.p_values[pi]
    pt_seed, mask_seed = trial_seeds(spec.base_seed, (ni, pi), t)
    Pstar = gen_pointset(spec.pointset, n, spec.r, pt_seed)
    stats = ground_truth_stats(Pstar, spec.r)
    result, re, seconds = _run_one(
        spec, Pstar, stats, p, mask_seed, record_oracle=True
    )
    traj = result.trajectory if result is not None else None
    success = re <= spec.success_re
    slope, r2 = (float("nan"), float("nan"))
    if traj is not None and len(traj.rel_err) >= 9:
        tail = traj.rel_err[2 * len(traj.rel_err) // 3 :]
        slope, r2 = loglinear_fit(tail)
    summary = {
        "n": n,
        "p": p,
        "trial": t,
        "re": re,
        "success": bool(success),
        "seconds": seconds,
        "iterations": result.iterations if result is not None else spec.max_iters,
        "tail_slope": slope,
        "tail_r2": r2,
        "termination": traj.termination_reason if traj is not None else "diverged",
    }
    return ni, pi, t, traj, summary


def run_trajectory(spec: GridSpec, workers=1):
    """Per-iteration diagnostics (g1, g2, Gram error, quotient distance, step).

    Returns (trajectories, summaries), both ordered by (cell, trial).
    """
    jobs = [
        (spec, ni, pi, t)
        for ni in range(len(spec.n_values))
        for pi in range(len(spec.p_values))
        for t in range(spec.trials)
    ]
    raw = _map_trials(_trajectory_trial, jobs, workers)
    raw.sort(key=lambda row: (row[0], row[1], row[2]))
    return [r[3] for r in raw], [r[4] for r in raw]


def _protein_trial(args):
    spec, name, Pstar, pi, t = args
    p = spec.p_values[pi]
    stats = ground_truth_stats(Pstar, spec.r)
    # crc32, not hash(): the latter is salted per interpreter process.
    name_key = zlib.crc32(name.encode()) & 0xFFFF
    _, mask_seed = trial_seeds(spec.base_seed, (name_key, pi), t)
    result, re, seconds = _run_one(spec, Pstar, stats, p, mask_seed)
    return name, pi, t, re, seconds


def run_protein(points_by_name, spec: GridSpec, workers=1):
    """Reconstruction-error sweep over p for named 3-D structures.

    ``points_by_name`` maps a label to a centered n x 3 coordinate array.
    """
    named = {k: center_columns(np.asarray(v, dtype=float)) for k, v in points_by_name.items()}
    jobs = [
        (spec, name, P, pi, t)
        for name, P in sorted(named.items())
        for pi in range(len(spec.p_values))
        for t in range(spec.trials)
    ]
    raw = _map_trials(_protein_trial, jobs, workers)
    cells = {}
    for name, pi, t, re, seconds in raw:
        cells.setdefault((name, pi), []).append(re)
    out = []
    for (name, pi), res in sorted(cells.items()):
        P = named[name]
        stats = ground_truth_stats(P, spec.r)
        res = np.asarray(res)
        finite = res[np.isfinite(res)]
        out.append(
            CellResult(
                n=P.shape[0],
                p=spec.p_values[pi],
                sigma_n=0.0,
                trials=len(res),
                successes=int(np.sum(res <= spec.success_re)),
                mean_re=float(np.mean(finite)) if len(finite) else float("inf"),
                mean_iters=float("nan"),
                mean_seconds=float("nan"),
                extra={"protein": name, "mu": stats.mu, "kappa": stats.kappa},
            )
        )
    return out


def _write_csv(path_or_file, header, rows, comments=()):
    def _write(f):
        for c in comments:
            f.write(f"# {c}\n")
        w = csv.writer(f)
        w.writerow(header)
        w.writerows(rows)

    if isinstance(path_or_file, io.TextIOBase):
        _write(path_or_file)
    else:
        with open(path_or_file, "w", newline="") as f:
            _write(f)


def write_phase_csv(results, path_or_file, comments=()):
    rows = [
        [
            c.n,
            repr(c.p),
            c.trials,
            c.successes,
            repr(c.mean_re),
            repr(c.mean_iters),
            repr(c.mean_seconds),
            repr(c.extra["ref_edge"]),
        ]
        for c in results
    ]
    _write_csv(
        path_or_file,
        ["n", "p", "trials", "successes", "mean_re", "mean_iters", "mean_seconds", "ref_edge"],
        rows,
        comments,
    )


def write_perturb_csv(results, path_or_file, comments=()):
    rows = [
        [
            repr(c.p),
            repr(c.sigma_n),
            c.trials,
            c.successes,
            repr(c.mean_re),
            repr(c.extra["delta0_sq_over_sigmar"]),
        ]
        for c in results
    ]
    _write_csv(
        path_or_file,
        ["p", "sigma_n", "trials", "successes", "mean_re", "delta0_sq_over_sigmar"],
        rows,
        comments,
    )


def write_protein_csv(results, path_or_file, comments=()):
    rows = [
        [
            c.extra["protein"],
            c.n,
            repr(c.extra["mu"]),
            repr(c.extra["kappa"]),
            repr(c.p),
            repr(c.mean_re),
        ]
        for c in results
    ]
    _write_csv(
        path_or_file,
        ["protein", "n", "mu", "kappa", "p", "mean_re"],
        rows,
        comments,
    )
