"""Command-line entry point: ``mnlrank <experiment> [--config FILE] [--seed S ...] [--out DIR]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import experiments as ex
from .estimator import (
    DivergenceError,
    EstimatorConfig,
    fit,
    lambda_bundled_practical,
    lambda_graph,
    lambda_kwise_practical,
)
from .likelihood import CENTERING_FOR_KIND, make_loss
from .preference import save_csv
from .rank_breaking import break_rankings
from .sampling import read_observations

log = logging.getLogger("mnlrank")


def _experiment_spec(args) -> ex.ExperimentSpec:
    overrides = {"seeds": tuple(args.seed) if args.seed else None, "workers": args.workers}
    if args.config:
        spec = ex.load_config(args.config, **overrides)
    else:
        spec = ex.desk_spec(args.command, **{k: v for k, v in overrides.items() if v is not None})
    return replace(spec, out=str(args.out))


def _run_experiment(args) -> Path:
    spec = _experiment_spec(args)
    rows = ex.RUNNERS[args.command](spec)
    args.out.mkdir(parents=True, exist_ok=True)
    path = args.out / f"{spec.name}.csv"
    ex.write_table(rows, path)
    log.info("wrote %d rows to %s", len(rows), path)
    return path


def _read_fit_config(path) -> dict:
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            k, v = (s.strip() for s in line.split("=", 1))
            out[k.replace("-", "_")] = v
    return out


def default_lambda(data, kind, dims) -> float:
    """Desk-scale weight for an ad-hoc fit when none is given."""
    d1, d2 = dims
    if kind == "kwise":
        per_row = data.k * len(data) / d1
        return lambda_kwise_practical(d1, per_row, d2)
    if kind in ("choice", "bundled"):
        return lambda_bundled_practical(d1, d2, len(data))
    # pairwise: theory weight for a complete comparison graph, desk-scaled
    return ex.GRAPH_LAM_SCALE * lambda_graph(len(data), d1, d2, 1, 1 / (d2 - 1))


def _run_fit(args) -> Path:
    opts = _read_fit_config(args.config) if args.config else {}
    for key in ("observations", "kind", "d1", "d2", "lam", "max_iters", "tol", "rank_break"):
        val = getattr(args, key)
        if val not in (None, False):
            opts[key] = val
    if "observations" not in opts:
        raise ValueError("fit needs --observations")
    batches = read_observations(opts["observations"])
    if not batches:
        raise ValueError(f"{opts['observations']}: no observations")
    kind = opts.get("kind") or (next(iter(batches)) if len(batches) == 1 else None)
    if kind not in batches:
        raise ValueError(f"choose --kind from {sorted(batches)}")
    data = batches[kind]
    mr, mc = data.max_indices()
    dims = (int(opts.get("d1", mr + 1)), int(opts.get("d2", mc + 1)))
    lam = float(opts["lam"]) if "lam" in opts else default_lambda(data, kind, dims)
    if str(opts.get("rank_break", "")).lower() in ("1", "true", "yes") and kind == "kwise":
        data, kind = break_rankings(data), "rank-broken"
    cfg = EstimatorConfig(
        lam=lam,
        max_iters=int(opts.get("max_iters", 5000)),
        tol=float(opts.get("tol", 1e-8)),
        centering="per-row" if kind == "pairwise" else CENTERING_FOR_KIND[kind],
    )
    res = fit(make_loss(data, dims, kind), cfg)
    args.out.mkdir(parents=True, exist_ok=True)
    save_csv(res.theta_hat, args.out / "theta_hat.csv")
    res.write_trace(args.out / "trace.csv")
    summary = {
        "kind": kind, "d1": dims[0], "d2": dims[1], "n": len(data), "lam": lam,
        "iterations": res.iterations, "converged": res.converged,
        "objective": res.objective, "fixed_point_residual": res.fixed_point_residual,
    }
    ex.write_table([summary], args.out / "fit.csv")
    return args.out / "fit.csv"


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mnlrank", description="Low-rank MNL preference estimation experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in ex.RUNNERS:
        s = sub.add_parser(name, help=f"run the {name} experiment")
        s.add_argument("--config", help="key = value experiment file (desk defaults otherwise)")
        s.add_argument("--seed", type=int, nargs="+", help="override the seeds list")
        s.add_argument("--workers", type=int, help="process pool size")
        s.add_argument("--out", type=Path, default=Path("."), help="output directory")
    f = sub.add_parser("fit", help="fit a preference matrix to an observation CSV")
    f.add_argument("--config", help="key = value file with any of the options below")
    f.add_argument("--observations", help="tagged observation CSV")
    f.add_argument("--kind", choices=("pairwise", "kwise", "choice", "bundled"))
    f.add_argument("--d1", type=int)
    f.add_argument("--d2", type=int)
    f.add_argument("--lam", type=float)
    f.add_argument("--max-iters", dest="max_iters", type=int)
    f.add_argument("--tol", type=float)
    f.add_argument("--rank-break", dest="rank_break", action="store_true", help="fit k-wise data by rank breaking")
    f.add_argument("--seed", type=int, nargs="+", help="accepted for uniformity; fitting is deterministic")
    f.add_argument("--out", type=Path, default=Path("."))
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        path = _run_fit(args) if args.command == "fit" else _run_experiment(args)
    except (ValueError, IndexError, TypeError, OSError, DivergenceError) as exc:
        print("error: " + json.dumps({"command": args.command, "type": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1 if isinstance(exc, DivergenceError) else 2
    print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
