"""Renderers for the experiment CSV contracts.

Each kind consumes one documented CSV schema and produces one image:

- ``phase``: ``n,p,trials,successes,...`` -> success-rate heatmap over the
  (n, p) grid, color scale fixed to [0, 1], with the 10*log(n)/n sampling
  edge overlaid.
- ``perturb``: ``p,sigma_n,trials,successes,...,delta0_sq_over_sigmar`` ->
  success-rate heatmap over (sigma_n, p) plus the initial-offset curve.
- ``trajectory``: per-iteration ``iter,g1,g2,r,dist,eta`` -> semilog decay
  of the relative error (falls back to g1 when oracle columns are empty)
  with a linear fit over the final third.
- ``protein``: ``protein,n,mu,kappa,p,mean_re`` -> recovery error vs
  sampling rate, one line per structure.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


class SchemaError(ValueError):
    """The input CSV does not match the documented contract."""


@dataclass
class FigureSpec:
    kind: str  # phase | perturb | trajectory | protein
    title: str = ""
    dpi: int = 150
    figsize: tuple = (7.0, 5.0)
    cmap: str = "viridis"
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in RENDERERS:
            raise SchemaError(
                f"unknown kind {self.kind!r}; expected one of {sorted(RENDERERS)}"
            )


def read_rows(path, required):
    """Read a CSV with optional ``#`` comment lines; enforce required columns."""
    with open(path, newline="") as f:
        lines = [ln for ln in f if not ln.lstrip().startswith("#")]
    rows = list(csv.DictReader(lines))
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    missing = [c for c in required if c not in rows[0]]
    if missing:
        raise SchemaError(f"{path}: missing required column(s) {', '.join(missing)}")
    return rows


def _floats(rows, col):
    try:
        return np.array([float(r[col]) for r in rows])
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"column {col!r} has a non-numeric value: {exc}") from exc


def _rate_grid(rows, row_col, col_col):
    """Pivot success rates into a (rows x cols) grid keyed by two columns."""
    rvals = sorted({float(r[row_col]) for r in rows})
    cvals = sorted({float(r[col_col]) for r in rows})
    grid = np.full((len(rvals), len(cvals)), np.nan)
    for r in rows:
        i = rvals.index(float(r[row_col]))
        j = cvals.index(float(r[col_col]))
        trials = float(r["trials"])
        if trials <= 0:
            raise SchemaError("trials must be positive")
        grid[i, j] = float(r["successes"]) / trials
    return np.array(rvals), np.array(cvals), grid


def render_phase(rows, ax, spec):
    ps, ns, grid = _rate_grid(rows, "p", "n")
    im = ax.imshow(
        grid, origin="lower", aspect="auto", cmap=spec.cmap, vmin=0.0, vmax=1.0,
        extent=(-0.5, len(ns) - 0.5, -0.5, len(ps) - 0.5),
    )
    ax.set_xticks(range(len(ns)), [f"{int(n)}" for n in ns])
    ax.set_yticks(range(len(ps)), [f"{p:g}" for p in ps])
    ax.set_xlabel("points n")
    ax.set_ylabel("sampling rate p")
    # sampling edge p = 10 log(n) / n in grid coordinates (nearest-cell)
    edge = 10.0 * np.log(ns) / ns
    ypos = np.interp(edge, ps, np.arange(len(ps)))
    ax.plot(np.arange(len(ns)), ypos, "w--", lw=1.5, label="10 log(n)/n")
    ax.legend(loc="upper right", fontsize=8)
    plt.colorbar(im, ax=ax, label="success rate")
    ax.set_title(spec.title or "recovery success rate")


def render_perturb(rows, ax, spec):
    sig, ps, grid = _rate_grid(rows, "sigma_n", "p")
    im = ax.imshow(
        grid, origin="lower", aspect="auto", cmap=spec.cmap, vmin=0.0, vmax=1.0,
        extent=(-0.5, len(ps) - 0.5, -0.5, len(sig) - 0.5),
    )
    ax.set_xticks(range(len(ps)), [f"{p:g}" for p in ps])
    ax.set_yticks(range(len(sig)), [f"{s:g}" for s in sig])
    ax.set_xlabel("sampling rate p")
    ax.set_ylabel("init noise sigma_n")
    plt.colorbar(im, ax=ax, label="success rate")
    ax.set_title(spec.title or "perturbed-start success rate")
    # initial squared offset relative to the smallest Gram eigenvalue
    off = ax.inset_axes([1.25, 0.0, 0.45, 1.0])
    by_sigma = {}
    for r in rows:
        by_sigma.setdefault(float(r["sigma_n"]), []).append(
            float(r["delta0_sq_over_sigmar"])
        )
    xs = sorted(by_sigma)
    ys = [float(np.mean(by_sigma[s])) for s in xs]
    off.plot(np.square(xs), ys, "o-")
    off.set_xlabel("sigma_n^2")
    off.set_ylabel("|initial offset|^2 / sigma_r")
    off.set_title("basin entry", fontsize=9)


def render_trajectory(rows, ax, spec):
    iters = _floats(rows, "iter")
    rel = np.array([r["r"] for r in rows])
    if np.all(rel == ""):
        series = _floats(rows, "g1")
        label = "pseudo-gradient norm"
    else:
        series = np.array([float(v) if v else np.nan for v in rel])
        label = "relative Gram error"
    keep = np.isfinite(series) & (series > 0)
    if not keep.any():
        raise SchemaError("trajectory has no positive values to plot")
    ax.semilogy(iters[keep], series[keep], lw=1.2, label=label)
    # linear fit on the final third of the log-decay
    xk, yk = iters[keep], np.log10(series[keep])
    tail = slice(2 * len(xk) // 3, None)
    if len(xk[tail]) >= 3:
        coef = np.polyfit(xk[tail], yk[tail], 1)
        ax.semilogy(
            xk[tail], 10.0 ** np.polyval(coef, xk[tail]), "r--", lw=1.0,
            label=f"tail fit, slope {coef[0]:.3g}/iter",
        )
    ax.set_xlabel("iteration")
    ax.set_ylabel(label)
    ax.legend(fontsize=8)
    ax.set_title(spec.title or "convergence trajectory")


def render_protein(rows, ax, spec):
    names = sorted({r["protein"] for r in rows})
    for name in names:
        sub = [r for r in rows if r["protein"] == name]
        ps = _floats(sub, "p")
        re = _floats(sub, "mean_re")
        order = np.argsort(ps)
        n = int(float(sub[0]["n"]))
        ax.semilogy(ps[order], re[order], "o-", label=f"{name} (n={n})")
    ax.set_xlabel("sampling rate p")
    ax.set_ylabel("mean recovery error")
    ax.legend(fontsize=8)
    ax.set_title(spec.title or "structure recovery vs sampling rate")


RENDERERS = {
    "phase": (render_phase, ("n", "p", "trials", "successes")),
    "perturb": (
        render_perturb,
        ("p", "sigma_n", "trials", "successes", "delta0_sq_over_sigmar"),
    ),
    "trajectory": (render_trajectory, ("iter", "g1", "r")),
    "protein": (render_protein, ("protein", "n", "p", "mean_re")),
}


def render(csv_path, out_path, spec: FigureSpec):
    """Render one CSV into one image file; returns the output path."""
    fn, required = RENDERERS[spec.kind]
    rows = read_rows(csv_path, required)
    fig, ax = plt.subplots(figsize=spec.figsize)
    try:
        fn(rows, ax, spec)
        fig.savefig(out_path, dpi=spec.dpi, bbox_inches="tight")
    finally:
        plt.close(fig)
    return out_path
