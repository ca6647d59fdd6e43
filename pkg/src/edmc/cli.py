"""Command-line entry points: ``verify``, ``run``, and ``solve``.

Exit codes: 0 success, 1 runtime/check failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
from pathlib import Path

import jsonschema
import numpy as np

import edmc
from edmc.checks import run_all
from edmc.experiments import (
    GridSpec,
    run_perturbation,
    run_phase_transition,
    run_protein,
    run_trajectory,
    write_perturb_csv,
    write_phase_csv,
    write_protein_csv,
)
from edmc.linalg import InvalidInputError
from edmc.ops import DistanceData, forward_edm
from edmc.pdb import append_stats_jsonl, parse_pdb
from edmc.solver import DivergenceError, SolverConfig, apgd

_GRID_PROPS = {
    "n_values": {"type": "array", "items": {"type": "integer", "minimum": 2}, "minItems": 1},
    "p_values": {
        "type": "array",
        "items": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        "minItems": 1,
    },
    "sigma_values": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
    "r": {"type": "integer", "minimum": 1},
    "trials": {"type": "integer", "minimum": 1},
    "base_seed": {"type": "integer", "minimum": 0},
    "pointset": {"enum": ["gaussian", "uniform_cube"]},
    "solver": {"enum": ["apgd", "sstress"]},
    "step_rule": {"enum": ["fixed", "bb"]},
    "eta": {"type": "number", "exclusiveMinimum": 0},
    "eta_max": {"type": "number", "exclusiveMinimum": 0},
    "use_safeguards": {"type": "boolean"},
    "trim_enabled": {"type": "boolean"},
    "c_ip": {"type": "number", "minimum": 1},
    "tol_grad": {"type": "number", "exclusiveMinimum": 0},
    "max_iters": {"type": "integer", "minimum": 1},
    "success_re": {"type": "number", "exclusiveMinimum": 0},
}

CONFIG_SCHEMAS = {
    "phase": {
        "type": "object",
        "properties": _GRID_PROPS,
        "required": ["n_values", "p_values", "trials"],
        "additionalProperties": False,
    },
    "perturb": {
        "type": "object",
        "properties": _GRID_PROPS,
        "required": ["n_values", "p_values", "sigma_values", "trials"],
        "additionalProperties": False,
    },
    "trajectory": {
        "type": "object",
        "properties": _GRID_PROPS,
        "required": ["n_values", "p_values", "trials"],
        "additionalProperties": False,
    },
    "protein": {
        "type": "object",
        "properties": {
            **_GRID_PROPS,
            "pdb_files": {
                "type": "object",
                "additionalProperties": {"type": "string"},
                "minProperties": 1,
            },
        },
        "required": ["p_values", "trials", "pdb_files"],
        "additionalProperties": False,
    },
}


class ConfigError(ValueError):
    pass


def config_hash(cfg):
    return hashlib.sha256(
        json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()
    ).hexdigest()[:12]


def load_config(path, kind, seed_override=None):
    try:
        with open(path) as f:
            cfg = json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMAS[kind])
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"invalid config: {exc.message}") from exc
    if seed_override is not None:
        cfg["base_seed"] = seed_override
    return cfg


def grid_from_config(cfg, kind):
    fields = dict(cfg)
    pdb_files = fields.pop("pdb_files", None)
    for key in ("n_values", "p_values", "sigma_values"):
        if key in fields:
            fields[key] = tuple(fields[key])
    if kind == "protein":
        fields.setdefault("n_values", (0,))  # sizes come from the files
    if kind == "perturb":
        # perturbed-start experiments use cube-distributed ground truth
        fields.setdefault("pointset", "uniform_cube")
    spec = GridSpec(**fields)
    return spec, pdb_files


def _cell_count(spec, kind, pdb_files):
    if kind == "phase" or kind == "trajectory":
        return len(spec.n_values) * len(spec.p_values)
    if kind == "perturb":
        return len(spec.n_values) * len(spec.p_values) * len(spec.sigma_values)
    return len(pdb_files) * len(spec.p_values)


def cmd_verify(args):
    reports = run_all(seed=args.seed, quick=args.quick, only=args.only)
    width = max(len(r.name) for r in reports)
    failed = False
    for r in reports:
        name, status, measured, bound, details = r.as_row()
        print(f"{name:<{width}}  {status:<4}  measured={measured}  bound={bound}  {details}")
        if not r.informational and not r.passed:
            failed = True
    return 1 if failed else 0


def _summary_rows(summaries):
    header = [
        "n", "p", "trial", "re", "success", "iterations",
        "tail_slope", "tail_r2", "termination", "seconds",
    ]
    rows = [
        [
            s["n"], repr(s["p"]), s["trial"], repr(s["re"]), int(s["success"]),
            s["iterations"], repr(s["tail_slope"]), repr(s["tail_r2"]),
            s["termination"], repr(s["seconds"]),
        ]
        for s in summaries
    ]
    return header, rows


def cmd_run(args):
    try:
        cfg = load_config(args.config, args.kind, args.seed)
        spec, pdb_files = grid_from_config(cfg, args.kind)
    except (ConfigError, InvalidInputError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    workers = args.workers
    if workers is None:
        workers = int(os.environ.get("EDMC_WORKERS", "1"))
    workers = max(1, min(workers, os.cpu_count() or 1))

    cells = _cell_count(spec, args.kind, pdb_files or {})
    total = cells * spec.trials
    if args.dry_run:
        print(f"{args.kind}: {cells} cells x {spec.trials} trials = {total} solves "
              f"(workers={workers}, config {config_hash(cfg)})")
        return 0

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    comments = [f"config={config_hash(cfg)} version={edmc.__version__} kind={args.kind}"]

    def _table(results):
        for c in results:
            label = c.extra.get("protein", f"n={c.n}")
            sig = f" sigma_n={c.sigma_n}" if args.kind == "perturb" else ""
            print(f"{label} p={c.p}{sig}: {c.successes}/{c.trials} ok, "
                  f"mean RE {c.mean_re:.3g}")

    if args.kind == "phase":
        results = run_phase_transition(spec, workers=workers)
        write_phase_csv(results, out / "phase.csv", comments)
        _table(results)
        written = ["phase.csv"]
    elif args.kind == "perturb":
        results = run_perturbation(spec, workers=workers)
        write_perturb_csv(results, out / "perturb.csv", comments)
        _table(results)
        written = ["perturb.csv"]
    elif args.kind == "trajectory":
        trajs, summaries = run_trajectory(spec, workers=workers)
        written = []
        for traj, s in zip(trajs, summaries):
            if traj is None:
                continue
            fname = f"traj_n{s['n']}_p{s['p']}_t{s['trial']}.csv"
            traj.to_csv(out / fname)
            written.append(fname)
        header, rows = _summary_rows(summaries)
        with open(out / "trajectory_summary.csv", "w", newline="") as f:
            for c in comments:
                f.write(f"# {c}\n")
            w = csv.writer(f)
            w.writerow(header)
            w.writerows(rows)
        written.append("trajectory_summary.csv")
        ok = sum(s["success"] for s in summaries)
        print(f"trajectory: {ok}/{len(summaries)} trials succeeded")
    else:  # protein
        points = {}
        for name, path in sorted(pdb_files.items()):
            try:
                P, stats = parse_pdb(path)
            except (OSError, ValueError) as exc:
                print(f"error: {name}: {exc}", file=sys.stderr)
                return 2
            append_stats_jsonl(stats, out / "ingest.jsonl")
            points[name] = P
        results = run_protein(points, spec, workers=workers)
        write_protein_csv(results, out / "protein.csv", comments)
        _table(results)
        written = ["protein.csv", "ingest.jsonl"]

    print(f"wrote {', '.join(written)} to {out}")
    return 0


def cmd_solve(args):
    try:
        data = DistanceData.load_text(args.input)
    except (OSError, ValueError, IndexError) as exc:
        print(f"error: cannot read observations: {exc}", file=sys.stderr)
        return 2
    if not 1 <= args.rank <= data.mask.n:
        print(f"error: rank {args.rank} out of range for n={data.mask.n}", file=sys.stderr)
        return 2
    cfg = SolverConfig(
        r=args.rank,
        step_rule="bb",
        eta_max=args.eta_max,
        tol_grad=args.tol,
        max_iters=args.max_iters,
    )
    try:
        result = apgd(data, cfg)
    except DivergenceError as exc:
        print(f"error: solver diverged at iteration {exc.iteration}", file=sys.stderr)
        return 1
    P = result.points
    out = sys.stdout if args.out is None else open(args.out, "w", newline="")
    try:
        w = csv.writer(out)
        if args.emit_edm:
            D = forward_edm(P @ P.T)
            w.writerow(["i"] + [f"d{j + 1}" for j in range(P.shape[0])])
            for i, row in enumerate(D, start=1):
                w.writerow([i] + [repr(float(v)) for v in row])
        else:
            w.writerow(["i"] + [f"x{j + 1}" for j in range(args.rank)])
            for i, row in enumerate(P, start=1):
                w.writerow([i] + [repr(float(v)) for v in row])
    finally:
        if out is not sys.stdout:
            out.close()
    traj_path = args.trajectory_out
    if traj_path is None and args.out is not None:
        traj_path = str(Path(args.out).with_suffix("")) + "_trajectory.csv"
    if traj_path is not None:
        result.trajectory.to_csv(traj_path)
    print(
        f"solved: n={P.shape[0]} r={args.rank} iterations={result.iterations} "
        f"termination={result.trajectory.termination_reason or 'max-iters'}",
        file=sys.stderr,
    )
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="edmc", description="Euclidean distance matrix completion toolkit."
    )
    parser.add_argument("--version", action="version", version=f"edmc {edmc.__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_verify = sub.add_parser("verify", help="run the operator/bound check suite")
    p_verify.add_argument("--seed", type=int, default=0)
    p_verify.add_argument("--quick", action="store_true", help="smaller Monte-Carlo sizes")
    p_verify.add_argument("--only", default=None, help="run a single named check group")
    p_verify.set_defaults(func=cmd_verify)

    p_run = sub.add_parser("run", help="run a Monte-Carlo experiment sweep")
    p_run.add_argument("kind", choices=["phase", "perturb", "trajectory", "protein"])
    p_run.add_argument("--config", required=True, help="JSON config file")
    p_run.add_argument("--out", required=True, help="output directory")
    p_run.add_argument("--workers", type=int, default=None,
                       help="process count (default: EDMC_WORKERS or 1)")
    p_run.add_argument("--seed", type=int, default=None, help="override base_seed")
    p_run.add_argument("--dry-run", action="store_true",
                       help="validate config and print the planned workload")
    p_run.set_defaults(func=cmd_run)

    p_solve = sub.add_parser("solve", help="complete one observation file")
    p_solve.add_argument("--input", required=True, help="text observations (n p seed header)")
    p_solve.add_argument("--rank", type=int, required=True)
    p_solve.add_argument("--out", default=None, help="write result here instead of stdout")
    p_solve.add_argument("--trajectory-out", default=None,
                         help="trajectory CSV path (defaults to <out>_trajectory.csv)")
    p_solve.add_argument("--emit-edm", action="store_true",
                         help="emit the completed squared-distance matrix, not points")
    p_solve.add_argument("--tol", type=float, default=1e-6)
    p_solve.add_argument("--max-iters", type=int, default=1000)
    p_solve.add_argument("--eta-max", type=float, default=10.0)
    p_solve.set_defaults(func=cmd_solve)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        code = args.func(args)
    except KeyError as exc:  # e.g. unknown --only name
        print(f"error: {exc}", file=sys.stderr)
        code = 2
    return code


if __name__ == "__main__":
    sys.exit(main())
