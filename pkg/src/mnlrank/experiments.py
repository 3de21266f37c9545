"""Configuration-driven simulation experiments and Jester ingestion.

Every runner is a pure function of its :class:`ExperimentSpec`: all random
streams are seeded from ``(seed, grid coordinates)``, so reruns produce
bit-identical tables. Rows always carry the spec hash, seed, regularisation
weight, iteration count and convergence flag.
"""

from __future__ import annotations

import ast
import csv
import hashlib
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .estimator import (
    EstimatorConfig,
    fit,
    fit_graph_weighted,
    lambda_graph_branches,
    lambda_kwise_practical,
)
from .graphs import TOPOLOGIES, GroupStructure, SamplingGraph, disjoint_cliques, groups, laplacian, spectral_gap
from .likelihood import make_loss
from .linalg import laplacian_power
from .metrics import borda, l_rmse, predict_winners, rmse
from .preference import barbell_biased, line_biased, random_low_rank
from .sampling import KWiseRankings, PairwiseComparisons, sample_kwise_sequential, sample_pairwise

log = logging.getLogger(__name__)

THETA_KINDS = {"iid": random_low_rank, "barbell-biased": barbell_biased, "line-biased": line_biased}

# Multiplier on the theory weight of the graph-sampling estimator. The theory
# constant 2*sqrt(32) shrinks desk-scale problems to zero; 1/96 sits in the
# flat part of the error-vs-lambda curve at d = 60.
GRAPH_LAM_SCALE = 1 / 96


@dataclass(frozen=True)
class ExperimentSpec:
    """Parameters of one experiment; unused grids are simply ignored."""

    name: str
    d1: int = 60
    d2: int = 60
    r: int = 4
    alpha: float = 5.0
    seeds: tuple = (0,)
    n_grid: tuple = (2**15,)
    topologies: tuple = ("complete", "star", "line", "barbell")
    theta_kinds: tuple = ("iid",)
    bias_shift: float | None = None
    groups_grid: tuple = (1,)
    k_grid: tuple = (8,)
    r_grid: tuple = ()
    alphas: tuple = ()
    lam_multipliers: tuple = (1.0,)
    lam_scale: float = 1.0
    max_iters: int = 5000
    tol: float = 1e-8
    n_users: int | None = None
    jester_path: str | None = None
    workers: int = 1
    out: str | None = field(default=None, compare=False)

    def __post_init__(self):
        for name in ("seeds", "n_grid", "topologies", "theta_kinds", "groups_grid", "k_grid", "r_grid", "alphas", "lam_multipliers"):
            v = getattr(self, name)
            object.__setattr__(self, name, tuple(v) if isinstance(v, (list, tuple)) else (v,))
        if min(self.d1, self.d2) < 2:
            raise ValueError("d1 and d2 must be at least 2")
        if not 1 <= self.r <= min(self.d1, self.d2):
            raise ValueError("r must lie in [1, min(d1, d2)]")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if not self.seeds:
            raise ValueError("seeds must be nonempty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError("seeds must be distinct")
        for name in ("n_grid", "topologies", "theta_kinds", "groups_grid", "k_grid", "lam_multipliers"):
            if not getattr(self, name):
                raise ValueError(f"{name} must be nonempty")
        if any(n < 1 for n in self.n_grid) or any(k < 1 for k in self.k_grid):
            raise ValueError("sample sizes must be positive")
        if any(m <= 0 for m in self.lam_multipliers) or self.lam_scale <= 0:
            raise ValueError("lambda multipliers must be positive")
        bad = set(self.topologies) - set(TOPOLOGIES)
        if bad:
            raise ValueError(f"unknown topologies {sorted(bad)}")
        bad = set(self.theta_kinds) - set(THETA_KINDS)
        if bad:
            raise ValueError(f"unknown theta kinds {sorted(bad)}")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")

    def hash(self) -> str:
        """Short digest of every field except the output location."""
        d = asdict(self)
        d.pop("out")
        return hashlib.sha256(json.dumps(d, sort_keys=True, default=str).encode()).hexdigest()[:12]

    def solver(self, lam, **kw) -> EstimatorConfig:
        return EstimatorConfig(lam=lam, max_iters=self.max_iters, tol=self.tol, **kw)


def _parse_value(text):
    text = text.strip()
    if "," in text:
        return tuple(_parse_value(t) for t in text.split(",") if t.strip())
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text


_SCALAR_TYPES = {"int": int, "float": (int, float), "str": str}


def load_config(path, **overrides) -> ExperimentSpec:
    """Read a ``key = value`` file (``#`` comments, comma-separated lists)."""
    known = {f.name: f.type for f in fields(ExperimentSpec)}
    values = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, val = (s.strip() for s in line.split("=", 1))
            if key not in known:
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
            values[key] = _parse_value(val)
            expected = _SCALAR_TYPES.get(known[key].split(" |")[0])
            if expected and not (isinstance(values[key], expected) and not isinstance(values[key], bool)):
                if not (values[key] is None and "None" in known[key]):
                    raise ValueError(f"{path}:{lineno}: {key} expects {known[key]}, got {val!r}")
    values.update({k: v for k, v in overrides.items() if v is not None})
    if "name" not in values:
        raise ValueError(f"{path}: missing 'name'")
    return ExperimentSpec(**values)


def write_table(rows, path) -> None:
    """One header row, then one record per row (serialised by a single writer)."""
    if not rows:
        raise ValueError("no rows to write")
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        for row in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})


def _map(func, tasks, workers):
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(workers) as pool:
            return list(pool.map(func, tasks))
    return [func(t) for t in tasks]


def _stamp(spec, seed, res, **cols) -> dict:
    return {
        "spec_hash": spec.hash(),
        "seed": seed,
        **cols,
        "lam": res.lam,
        "iterations": res.iterations,
        "converged": res.converged,
        "fixed_point_residual": res.fixed_point_residual,
    }


# -- graph sampling ---------------------------------------------------------------

def _truth(spec, kind, seed, gs) -> np.ndarray:
    gen = THETA_KINDS[kind]
    kw = {} if kind == "iid" else {"shift": spec.bias_shift}
    return gen(spec.d1, spec.d2, spec.r, spec.alpha, seed=seed, centering="per-group", groups=gs, **kw).theta


def _graph_point(task):
    spec, kind, topology, n, seed = task
    g = TOPOLOGIES[topology](spec.d2)
    L, gs = laplacian(g), groups(g)
    gap = spectral_gap(L, gs.G)
    theta = _truth(spec, kind, seed, gs)
    data = sample_pairwise(theta, g, n, seed=[seed, n, 1])
    branches = lambda_graph_branches(n, spec.d1, spec.d2, gs.G, gap)
    lam = spec.lam_scale * max(branches)
    res = fit_graph_weighted(make_loss(data, theta.shape), L, gs, spec.solver(lam))
    H = laplacian_power(L, 0.5, gs.G)
    return _stamp(
        spec, seed, res,
        theta_kind=kind, topology=topology, n=n, spectral_gap=gap,
        lam_branch=1 + int(branches[1] > branches[0]),
        rmse=rmse(res.theta_hat, theta), l_rmse=l_rmse(res.theta_hat, theta, H),
    )


def run_graph_topology_experiment(spec: ExperimentSpec) -> list[dict]:
    """RMSE and L-RMSE of the Laplacian-weighted estimator per (kind, topology, n, seed).

    ``lam_scale`` multiplies the theory weight; :data:`GRAPH_LAM_SCALE` is the
    desk-scale default used by the bundled configurations.
    """
    tasks = [
        (spec, kind, top, n, seed)
        for kind in spec.theta_kinds
        for top in spec.topologies
        for n in spec.n_grid
        for seed in spec.seeds
    ]
    return _map(_graph_point, tasks, spec.workers)


def _subproblem(data: PairwiseComparisons, g: SamplingGraph, cols):
    """Comparisons and renormalised sampling graph restricted to the items in ``cols``."""
    remap = np.full(g.d2, -1)
    remap[cols] = np.arange(len(cols))
    keep = (remap[data.item_a] >= 0) & (remap[data.item_b] >= 0)
    sub = PairwiseComparisons(data.users[keep], remap[data.item_a[keep]], remap[data.item_b[keep]], data.a_wins[keep])
    P = g.P[np.ix_(cols, cols)]
    return sub, SamplingGraph(P / P.sum(), name=f"{g.name}[block]")


def _group_point(task):
    spec, G, n, seed = task
    g = disjoint_cliques(spec.d2, G)
    L, gs = laplacian(g), groups(g)
    theta = _truth(spec, "iid", seed, gs)
    data = sample_pairwise(theta, g, n, seed=[seed, n, G, 2])
    lam = spec.lam_scale * max(lambda_graph_branches(n, spec.d1, spec.d2, G, spectral_gap(L, G)))
    joint = fit_graph_weighted(make_loss(data, theta.shape), L, gs, spec.solver(lam))

    alone = np.zeros_like(theta)
    iters, conv, resid = 0, True, 0.0
    for block in gs.indicators.astype(bool):
        cols = np.flatnonzero(block)
        sub, gb = _subproblem(data, g, cols)
        Lb = laplacian(gb)
        lam_b = spec.lam_scale * max(lambda_graph_branches(len(sub), spec.d1, len(cols), 1, spectral_gap(Lb, 1)))
        res = fit_graph_weighted(make_loss(sub, (spec.d1, len(cols))), Lb, GroupStructure.single(len(cols)), spec.solver(lam_b))
        alone[:, cols] = res.theta_hat.theta
        iters += res.iterations
        conv &= res.converged
        resid = max(resid, res.fixed_point_residual)
    H = laplacian_power(L, 0.5, G)
    row = _stamp(
        spec, seed, joint,
        G=G, n=n,
        l_rmse=l_rmse(joint.theta_hat, theta, H), rmse=rmse(joint.theta_hat, theta),
        l_rmse_alone=l_rmse(alone, theta, H), rmse_alone=rmse(alone, theta),
    )
    row.update(iterations_alone=iters, converged_alone=conv, fixed_point_residual_alone=resid)
    return row


def run_group_experiment(spec: ExperimentSpec) -> list[dict]:
    """Joint fit over ``G`` disconnected complete components versus one fit per component."""
    for G in spec.groups_grid:
        if G < 1 or spec.d2 % G or spec.d2 // G < 2:
            raise ValueError(f"G={G} must divide d2={spec.d2} into blocks of at least two items")
    tasks = [(spec, G, n, seed) for G in spec.groups_grid for n in spec.n_grid for seed in spec.seeds]
    return _map(_group_point, tasks, spec.workers)


# -- k-wise ranking ---------------------------------------------------------------

def _kwise_fit(spec, theta, data, lam):
    res = fit(make_loss(data, theta.shape), spec.solver(lam, centering="per-row"))
    return res, rmse(res.theta_hat, theta)


def _kwise_point(task):
    spec, k, r, seed = task
    d = spec.d1
    theta = random_low_rank(d, spec.d2, r, spec.alpha, "per-row", seed=seed).theta
    data = sample_kwise_sequential(theta, k, seed=[seed, k, 3])
    lam = spec.lam_scale * lambda_kwise_practical(d, k, spec.d2)
    res, err = _kwise_fit(spec, theta, data, lam)
    return _stamp(spec, seed, res, k=k, r=r, rescaled_k=k / (r * math.log(d)), rmse=err)


def run_kwise_experiment(spec: ExperimentSpec) -> list[dict]:
    """RMSE versus k (and ``k / (r log d)``) with the practical weight times ``lam_scale``."""
    rs = spec.r_grid or (spec.r,)
    tasks = [(spec, k, r, seed) for r in rs for k in spec.k_grid for seed in spec.seeds]
    return _map(_kwise_point, tasks, spec.workers)


def _sweep_point(task):
    spec, alpha, k, seed = task
    d = spec.d1
    theta = random_low_rank(d, spec.d2, spec.r, alpha, "per-row", seed=seed).theta
    data = sample_kwise_sequential(theta, k, seed=[seed, k, 3])
    base = lambda_kwise_practical(d, k, spec.d2) * 2  # sqrt(log d / (k d^2))
    rows = []
    for m in spec.lam_multipliers:
        res, err = _kwise_fit(spec, theta, data, m * base)
        rows.append(_stamp(spec, seed, res, alpha=alpha, k=k, multiplier=m, rmse=err))
    return rows


def run_lambda_sweep(spec: ExperimentSpec) -> list[dict]:
    """RMSE versus ``lambda / sqrt(log d / (k d^2))`` on shared data per (alpha, k, seed)."""
    alphas = spec.alphas or (spec.alpha,)
    tasks = [(spec, a, k, seed) for a in alphas for k in spec.k_grid for seed in spec.seeds]
    return [row for rows in _map(_sweep_point, tasks, spec.workers) for row in rows]


# -- Jester ---------------------------------------------------------------------

N_JOKES = 100
UNRATED = 99.0


@dataclass(frozen=True)
class JesterTable:
    """Ratings in [-10, 10], ``nan`` where unrated."""

    ratings: np.ndarray
    complete_raters: np.ndarray = field(init=False)

    def __post_init__(self):
        R = np.asarray(self.ratings, dtype=float)
        if R.ndim != 2 or R.shape[1] != N_JOKES:
            raise ValueError(f"ratings must have {N_JOKES} columns")
        seen = R[~np.isnan(R)]
        if seen.size and (seen.min() < -10 or seen.max() > 10):
            raise ValueError("ratings must lie in [-10, 10]")
        object.__setattr__(self, "ratings", R)
        object.__setattr__(self, "complete_raters", np.flatnonzero(~np.isnan(R).any(axis=1)))


def load_jester(path) -> JesterTable:
    """Parse the tabular Jester layout: rating count, then 100 ratings (99 = unrated)."""
    rows = []
    with open(path, newline="") as fh:
        for lineno, rec in enumerate(csv.reader(fh), 1):
            if not rec or not "".join(rec).strip():
                continue
            if len(rec) != N_JOKES + 1:
                raise ValueError(f"{path}:{lineno}: expected {N_JOKES + 1} fields, got {len(rec)}")
            try:
                count = int(float(rec[0]))
                vals = np.array([float(v) for v in rec[1:]])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
            missing = vals == UNRATED
            if np.any(np.abs(vals[~missing]) > 10) or not np.all(np.isfinite(vals)):
                raise ValueError(f"{path}:{lineno}: rating outside [-10, 10]")
            if count != np.count_nonzero(~missing):
                raise ValueError(f"{path}:{lineno}: count {count} does not match {np.count_nonzero(~missing)} ratings")
            vals[missing] = np.nan
            rows.append(vals)
    if not rows:
        raise ValueError(f"{path}: no ratings")
    return JesterTable(np.array(rows))


def write_jester(table: JesterTable, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        for row in table.ratings:
            missing = np.isnan(row)
            w.writerow([int(np.count_nonzero(~missing))] + [repr(UNRATED if m else float(v)) for v, m in zip(row, missing)])


def synthetic_jester_table(n_users=2000, r=2, alpha=5.0, seed=0) -> JesterTable:
    """Stand-in for the real ratings: heterogeneous low-rank MNL utilities.

    User and joke factors are centred Gaussians, so user tastes disagree and
    the population-average order carries little information. Scores are
    utilities plus Gumbel noise, mapped affinely into [-10, 10] (which keeps
    every user's order).
    """
    rng = np.random.default_rng(seed)
    U = rng.normal(size=(n_users, r))
    V = rng.normal(size=(N_JOKES, r))
    theta = U @ V.T
    theta *= alpha / np.max(np.abs(theta))
    scores = theta + rng.gumbel(size=theta.shape)
    scores = -10 + 20 * (scores - scores.min()) / np.ptp(scores)
    return JesterTable(scores)


def jester_rankings(R, k, rng, weights=None) -> tuple[KWiseRankings, np.ndarray]:
    """Biased selection of ``k`` jokes per user and the induced rankings.

    Joke ``j`` is drawn without replacement with probability proportional to
    ``weights[j]`` (default: mean absolute rating plus 0.1).
    """
    n_users, n_items = R.shape
    if not 1 <= k < n_items:
        raise ValueError(f"k must lie in [1, {n_items - 1}]")
    w = np.abs(R).mean(axis=0) + 0.1 if weights is None else np.asarray(weights, dtype=float)
    p = w / w.sum()
    sel = np.array([rng.choice(n_items, size=k, replace=False, p=p) for _ in range(n_users)])
    # best first; ties between selected jokes follow the joke index, not the draw order
    order = np.lexsort((sel, -np.take_along_axis(R, sel, axis=1)), axis=1)
    return KWiseRankings(np.arange(n_users), sel, order), sel


def heldout_error(pred, R, selected, higher_is_better=True) -> float:
    """Pairwise prediction error over all pairs of unselected jokes, pooled over users.

    ``pred`` is one score per joke or a users-by-jokes matrix. Both the truth
    and the prediction break ties towards the smaller joke index.
    """
    n_users, n_items = R.shape
    P = np.broadcast_to(np.asarray(pred, dtype=float), R.shape)
    mask = np.ones(R.shape, dtype=bool)
    np.put_along_axis(mask, selected, False, axis=1)
    wrong = total = 0
    iu = np.triu_indices(n_items - selected.shape[1], 1)
    for u in range(n_users):
        cols = np.flatnonzero(mask[u])  # increasing, so a < b for every (a, b) pair
        a, b = cols[iu[0]], cols[iu[1]]
        truth = R[u, a] >= R[u, b]
        guess = predict_winners(P[u], None, a, b, higher_is_better)
        wrong += int(np.count_nonzero(truth != guess))
        total += len(a)
    return wrong / total


def run_jester_experiment(table: JesterTable, k_grid, seed=0, n_users=None, lam_scale=1.0,
                          max_iters=5000, tol=1e-8, spec_hash="") -> list[dict]:
    """Convex relaxation versus Borda count on held-out pairs of unselected jokes."""
    users = table.complete_raters
    if len(users) == 0:
        raise ValueError("no user rated every joke")
    rng = np.random.default_rng(seed)
    if n_users is not None and n_users < len(users):
        users = np.sort(rng.choice(users, size=n_users, replace=False))
    R = table.ratings[users]
    rows = []
    for k in k_grid:
        data, sel = jester_rankings(R, k, np.random.default_rng([seed, k, 4]))
        d1 = len(users)
        lam = lam_scale * lambda_kwise_practical(d1, k, N_JOKES)
        res = fit(make_loss(data, (d1, N_JOKES)), EstimatorConfig(lam=lam, max_iters=max_iters, tol=tol, centering="per-row"))
        b = borda(data, N_JOKES)
        common = {"spec_hash": spec_hash, "seed": seed, "k": k, "n_users": d1}
        rows.append({**common, "method": "convex", "prediction_error": heldout_error(res.theta_hat.theta, R, sel),
                     "lam": lam, "iterations": res.iterations, "converged": res.converged,
                     "fixed_point_residual": res.fixed_point_residual})
        # unseen jokes score inf (worst); Borda has no solver
        rows.append({**common, "method": "borda", "prediction_error": heldout_error(b, R, sel, higher_is_better=False),
                     "lam": "", "iterations": 0, "converged": True, "fixed_point_residual": ""})
    return rows


def run_jester_spec(spec: ExperimentSpec) -> list[dict]:
    """Jester rows for each seed; the synthetic stand-in replaces a missing dataset."""
    rows = []
    for seed in spec.seeds:
        if spec.jester_path:
            table = load_jester(spec.jester_path)
        else:
            log.info("no jester_path configured; using the synthetic stand-in")
            table = synthetic_jester_table(spec.n_users or 2000, seed=seed)
        rows += run_jester_experiment(
            table, spec.k_grid, seed=seed, n_users=spec.n_users, lam_scale=spec.lam_scale,
            max_iters=spec.max_iters, tol=spec.tol, spec_hash=spec.hash(),
        )
    for row in rows:
        row["source"] = "jester" if spec.jester_path else "synthetic"
    return rows


RUNNERS = {
    "graph-topology": run_graph_topology_experiment,
    "groups": run_group_experiment,
    "kwise": run_kwise_experiment,
    "lambda-sweep": run_lambda_sweep,
    "jester": run_jester_spec,
}


def desk_spec(kind: str, **overrides) -> ExperimentSpec:
    """Desk-scale defaults for each experiment."""
    base = {
        "graph-topology": dict(d1=60, d2=60, r=4, n_grid=tuple(2**m for m in range(11, 16)),
                               theta_kinds=("iid", "barbell-biased", "line-biased"), lam_scale=GRAPH_LAM_SCALE),
        "groups": dict(d1=60, d2=60, r=4, n_grid=(2**14,), groups_grid=(1, 2, 3, 4, 5, 6), lam_scale=GRAPH_LAM_SCALE),
        "kwise": dict(d1=50, d2=50, r=3, k_grid=(8, 16, 32, 64, 128), r_grid=(3,), seeds=(0, 1, 2, 3, 4)),
        "lambda-sweep": dict(d1=50, d2=50, r=3, k_grid=(32,), alphas=(5.0, 10.0, 15.0),
                             lam_multipliers=tuple(2.0**m for m in range(0, 17, 2))),
        "jester": dict(k_grid=(20, 40, 60), n_users=2000),
    }[kind]
    base.update(overrides)
    return ExperimentSpec(name=kind, **base)
