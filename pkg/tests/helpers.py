"""Shared random instances and independent oracles for the test suites."""

import numpy as np

from mnlrank.graphs import complete_graph
from mnlrank.likelihood import make_loss
from mnlrank.rank_breaking import break_rankings
from mnlrank.sampling import sample_bundled, sample_choices, sample_kwise_sequential, sample_pairwise

KINDS = ("pairwise", "kwise", "rank-broken", "choice", "bundled")


def random_loss(kind, seed, d=6, k=3, k1=2, k2=2):
    """A loss handle on a small random instance, plus a random evaluation point."""
    rng = np.random.default_rng(seed)
    theta_star = rng.normal(size=(d, d))
    if kind == "pairwise":
        data = sample_pairwise(theta_star, complete_graph(d), 40, seed=rng)
    elif kind == "kwise":
        data = sample_kwise_sequential(theta_star, k, seed=rng, per_user=2)
    elif kind == "rank-broken":
        data = break_rankings(sample_kwise_sequential(theta_star, k, seed=rng, per_user=2))
    elif kind == "choice":
        data = sample_choices(theta_star, k, 40, seed=rng)
    else:
        data = sample_bundled(theta_star, k1, k2, 40, seed=rng)
    return make_loss(data, (d, d), kind), rng.normal(size=(d, d))


def finite_difference_grad(f, X, h=1e-5):
    """Central differences, one entry at a time."""
    G = np.zeros_like(X)
    for idx in np.ndindex(X.shape):
        E = np.zeros_like(X)
        E[idx] = h
        G[idx] = (f(X + E) - f(X - E)) / (2 * h)
    return G


def rel_err(a, b):
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))
