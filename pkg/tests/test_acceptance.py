"""Acceptance criteria 1-11 at their stated tolerances.

Each test records one PASS/FAIL line, printed after the pytest summary.
"""

import itertools
import logging
import math
import time

import numpy as np
import pytest
from scipy import stats

from conftest import ACCEPTANCE
from helpers import KINDS, finite_difference_grad, random_loss, rel_err
from mnlrank.estimator import (
    EstimatorConfig,
    fit,
    lambda_bundled_practical,
    lambda_kwise_practical,
    lambda_rank_broken_practical,
)
from mnlrank.experiments import (
    desk_spec,
    run_graph_topology_experiment,
    run_group_experiment,
    run_jester_spec,
    run_kwise_experiment,
    run_lambda_sweep,
)
from mnlrank.likelihood import CENTERING_FOR_KIND, make_loss
from mnlrank.linalg import svt
from mnlrank.metrics import rmse
from mnlrank.preference import random_low_rank
from mnlrank.rank_breaking import fit_rank_broken
from mnlrank.sampling import (
    sample_bundled,
    sample_kwise_gumbel,
    sample_kwise_sequential,
    step_probabilities,
)

pytestmark = pytest.mark.slow

# (source, converged, fixed_point_residual, tol) for every fit run below
RUNS: list[tuple] = []


@pytest.fixture(autouse=True)
def _quiet():
    logging.disable(logging.WARNING)
    yield
    logging.disable(logging.NOTSET)


def record(num, ok, detail):
    ACCEPTANCE[num] = f"criterion {num:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    assert ok, detail


def _collect(source, rows, tol):
    for r in rows:
        RUNS.append((source, r["converged"], r["fixed_point_residual"], tol))
        if "converged_alone" in r:
            RUNS.append((source + "/separate", r["converged_alone"], r["fixed_point_residual_alone"], tol))


def _mean_by(rows, key, value="rmse"):
    out = {}
    for r in rows:
        out.setdefault(r[key], []).append(r[value])
    return {k: float(np.mean(v)) for k, v in out.items()}


def test_criterion_01_gradients():
    t0 = time.perf_counter()
    worst = {}
    for kind in KINDS:
        errs = []
        for seed in range(20):
            loss, X = random_loss(kind, 1000 + seed, d=6, k=3, k1=2, k2=2)
            errs.append(rel_err(loss.grad(X), finite_difference_grad(loss.value, X, h=1e-5)))
        worst[kind] = max(errs)
    elapsed = time.perf_counter() - t0
    ok = max(worst.values()) <= 1e-6 and elapsed < 10
    record(1, ok, f"max rel err {max(worst.values()):.2e} over {len(KINDS)} losses x 20, {elapsed:.1f}s")


def _codes(data, d2):
    V = data.ordered_items()
    return V @ (d2 ** np.arange(V.shape[1])[::-1])


def test_criterion_02_rum_equivalence():
    theta = np.array([[1.0, 0.2, -0.4, -0.8]])
    n = 100_000
    a = _codes(sample_kwise_sequential(theta, 3, seed=[2, 0], per_user=n), 4)
    b = _codes(sample_kwise_gumbel(theta, 3, seed=[2, 1], per_user=n), 4)
    ca, cb = np.bincount(a, minlength=64), np.bincount(b, minlength=64)
    keep = (ca + cb) > 0
    p = stats.chi2_contingency(np.vstack([ca[keep], cb[keep]])).pvalue

    w_all = theta[0]
    gap = 0.0
    for items in itertools.product(range(4), repeat=3):
        w = w_all[list(items)]
        for perm in itertools.permutations(range(3)):
            remaining = np.ones(3, dtype=bool)
            p_seq = 1.0
            for pos in perm:
                p_seq *= step_probabilities(w, remaining)[pos]
                remaining[pos] = False
            p_prod = math.prod(math.exp(w[perm[l]]) / sum(math.exp(w[m]) for m in perm[l:]) for l in range(3))
            gap = max(gap, abs(p_seq - p_prod))
    record(2, p > 1e-3 and gap <= 1e-12, f"chi-square p={p:.3f}, enumeration gap {gap:.1e}")


def test_criterion_03a_svt_diagonal():
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(50):
        s = np.abs(rng.normal(size=6)) * 3
        tau = rng.uniform(0, 4)
        worst = max(worst, np.max(np.abs(svt(np.diag(s), tau) - np.diag(np.maximum(s - tau, 0)))))
    assert worst <= 1e-12
    ACCEPTANCE.setdefault(3, f"criterion  3: pending (svt gap {worst:.1e})")
    test_criterion_03a_svt_diagonal.gap = worst


def test_criterion_04_convexity_and_invariance():
    slack, shift, null = -np.inf, 0.0, 0.0
    for kind in KINDS:
        for seed in range(10):
            loss, A = random_loss(kind, 400 + seed)
            B = 3 * np.random.default_rng(500 + seed).normal(size=A.shape)
            for t in (0.25, 0.5, 0.75):
                gap = loss.value(t * A + (1 - t) * B) - (t * loss.value(A) + (1 - t) * loss.value(B))
                slack = max(slack, gap)
            c = np.random.default_rng(600 + seed).normal(size=(A.shape[0], 1))
            if CENTERING_FOR_KIND[kind] == "global":
                Y, g_null = A + float(c[0, 0]), abs(loss.grad(A).sum())
            elif kind == "pairwise":
                # complete comparison graph: one item group, so row shifts are free
                Y, g_null = A + c, np.max(np.abs(loss.grad(A).sum(axis=1)))
            else:
                Y, g_null = A + c, np.max(np.abs(loss.grad(A).sum(axis=1)))
            shift = max(shift, abs(loss.value(Y) - loss.value(A)))
            null = max(null, g_null)
    ok = slack <= 1e-10 and shift <= 1e-12 and null <= 1e-12
    record(4, ok, f"convexity slack {slack:.1e}, shift gap {shift:.1e}, gradient null-space {null:.1e}")


def test_criterion_05_kwise_scaling():
    t0 = time.perf_counter()
    spec = desk_spec("kwise", k_grid=(32, 128), seeds=(0, 1, 2, 3, 4))
    rows = run_kwise_experiment(spec)
    _collect("kwise", rows, spec.tol)
    m = _mean_by(rows, "k")
    ratio = m[128] / m[32]
    elapsed = time.perf_counter() - t0
    record(5, 0.35 <= ratio <= 0.65 and elapsed < 300, f"RMSE(128)/RMSE(32) = {ratio:.3f}, {elapsed:.0f}s")


def test_criterion_06_lambda_insensitivity():
    t0 = time.perf_counter()
    mults = tuple(2.0**m for m in range(9)) + (2.0**16,)
    spec = desk_spec("lambda-sweep", k_grid=(32,), alphas=(5.0,), lam_multipliers=mults, seeds=(0, 1, 2, 3, 4))
    rows = run_lambda_sweep(spec)
    _collect("lambda-sweep", rows, spec.tol)
    m = _mean_by(rows, "multiplier")
    flat = [m[2.0**j] for j in range(9)]
    ratio = max(flat) / min(flat)
    grows = m[2.0**16] > m[2.0**4]
    zeroed = sum(1 for r in rows if r["iterations"] == 1 and r["multiplier"] <= 2.0**8)
    elapsed = time.perf_counter() - t0
    detail = (f"max/min over 2^0..2^8 = {ratio:.2f}, RMSE(2^16)={m[2.0**16]:.4f} vs "
              f"RMSE(2^4)={m[2.0**4]:.4f}, {zeroed} of the 2^0..2^8 fits are zero, {elapsed:.0f}s")
    record(6, ratio <= 2 and grows and elapsed < 300, detail)


def test_criterion_07_graph_topology():
    t0 = time.perf_counter()
    seeds = (0, 1, 2, 3, 4)
    big = desk_spec("graph-topology", n_grid=(2**15,), theta_kinds=("barbell-biased", "iid"),
                    topologies=("complete", "star", "line", "barbell"), seeds=seeds)
    rows = run_graph_topology_experiment(big)
    slope_spec = desk_spec("graph-topology", theta_kinds=("iid",), topologies=("complete",), seeds=seeds)
    slope_rows = run_graph_topology_experiment(slope_spec)
    _collect("graph-topology", rows + slope_rows, big.tol)

    def mean(kind, top, col):
        return float(np.mean([r[col] for r in rows if r["theta_kind"] == kind and r["topology"] == top]))

    comp = mean("barbell-biased", "complete", "rmse")
    bar, line = mean("barbell-biased", "barbell", "rmse") / comp, mean("barbell-biased", "line", "rmse") / comp
    lr = [mean("iid", t, "l_rmse") for t in ("complete", "star", "line", "barbell")]
    spread = max(lr) / min(lr)
    by_n = _mean_by(slope_rows, "n")
    ns = sorted(by_n)
    slope = np.polyfit(np.log(ns), np.log([by_n[n] for n in ns]), 1)[0]
    elapsed = time.perf_counter() - t0
    ok = bar >= 1.25 and line >= 1.25 and spread <= 1.3 and -0.65 <= slope <= -0.35 and elapsed < 900
    record(7, ok, f"barbell/complete {bar:.2f}, line/complete {line:.2f}, L-RMSE spread {spread:.3f}, "
                  f"slope {slope:.3f}, {elapsed:.0f}s")



def test_criterion_08_joint_vs_separate():
    t0 = time.perf_counter()
    spec = desk_spec("groups", groups_grid=(4,), seeds=(0, 1, 2, 3, 4))
    rows = run_group_experiment(spec)
    _collect("groups", rows, spec.tol)
    wins = [r["l_rmse"] <= r["l_rmse_alone"] for r in rows]
    elapsed = time.perf_counter() - t0
    worst = max(r["l_rmse"] / r["l_rmse_alone"] for r in rows)
    record(8, all(wins) and elapsed < 600, f"joint <= separate on {sum(wins)}/5 seeds, worst ratio {worst:.3f}, {elapsed:.0f}s")


def test_criterion_09_rank_breaking():
    d, k, per_user = 30, 8, 10
    full, broken = [], []
    for seed in range(5):
        theta = random_low_rank(d, d, 2, 5.0, "per-row", seed=[seed, 9]).theta
        data = sample_kwise_sequential(theta, k, seed=[seed, 9, 1], per_user=per_user)
        a = fit(make_loss(data, (d, d)), EstimatorConfig(lam=lambda_kwise_practical(d, k * per_user), centering="per-row"))
        b = fit_rank_broken(data, EstimatorConfig(lam=lambda_rank_broken_practical(d, d, k * per_user), centering="per-row"), (d, d))
        for res in (a, b):
            RUNS.append(("rank-breaking", res.converged, res.fixed_point_residual, 1e-8))
        full.append(rmse(a.theta_hat, theta))
        broken.append(rmse(b.theta_hat, theta))
    ratio = float(np.mean(broken) / np.mean(full))
    per_seed = max(b / f for b, f in zip(broken, full))
    record(9, ratio <= 1.5, f"rank-broken/full RMSE {ratio:.3f} (worst seed {per_seed:.3f})")


def test_criterion_10_bundled():
    d, n = 30, 30_000
    rel = []
    for seed in range(5):
        theta = random_low_rank(d, d, 2, 2.0, "global", seed=[seed, 10]).theta
        data = sample_bundled(theta, 4, 4, n, seed=[seed, 10, 1])
        res = fit(make_loss(data, (d, d)), EstimatorConfig(lam=lambda_bundled_practical(d, d, n), centering="global"))
        RUNS.append(("bundled", res.converged, res.fixed_point_residual, 1e-8))
        rel.append(rmse(res.theta_hat, theta) / rmse(np.zeros_like(theta), theta))
    ratio = float(np.mean(rel))
    record(10, ratio < 0.5, f"fitted/zero-matrix RMSE {ratio:.3f}")


def test_criterion_11_jester():
    t0 = time.perf_counter()
    spec = desk_spec("jester")
    rows = run_jester_spec(spec)
    _collect("jester", [r for r in rows if r["method"] == "convex"], spec.tol)
    err = {(r["method"], r["k"]): r["prediction_error"] for r in rows}
    ks = sorted({r["k"] for r in rows})
    ok = all(err["convex", k] <= err["borda", k] for k in ks)
    elapsed = time.perf_counter() - t0
    pairs = ", ".join(f"k={k}: {err['convex', k]:.3f} vs {err['borda', k]:.3f}" for k in ks)
    record(11, ok and elapsed < 1200, f"[{rows[0]['source']}] convex vs Borda {pairs}, {elapsed:.0f}s")


def test_criterion_03b_fixed_point_residual():
    # runs last: every fit above has been collected
    assert RUNS, "no experiment runs collected"
    converged = [(s, res, tol) for s, c, res, tol in RUNS if c]
    bad = [(s, res) for s, res, tol in converged if not res <= 10 * tol]
    gap = getattr(test_criterion_03a_svt_diagonal, "gap", float("nan"))
    worst = max(res / tol for _, res, tol in converged) if converged else float("nan")
    record(3, not bad and gap <= 1e-12,
           f"svt gap {gap:.1e}; {len(converged)}/{len(RUNS)} runs converged, worst residual {worst:.2f} tol")
