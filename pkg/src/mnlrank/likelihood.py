"""Negative log-likelihoods and their gradients for the four MNL data types.

All losses are averages, so values are O(1) regardless of sample size:

* pairwise: mean over comparisons;
* k-wise: ``1 / (k N)`` over the positions of ``N`` rankings (``N = d1`` with
  one ranking per user);
* rank-broken: mean over all ``C(k, 2)`` broken pairs of every ranking;
* bundled / choice: mean over choices.

Gradients are scatter-added with ``np.bincount``, which sums in a fixed order,
so repeated evaluations are bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, logsumexp

from .sampling import BundledChoices, ChoiceObservations, KWiseRankings, PairwiseComparisons


def _theta(theta) -> np.ndarray:
    T = np.asarray(getattr(theta, "theta", theta), dtype=float)
    if T.ndim != 2 or not np.all(np.isfinite(T)):
        raise ValueError("theta must be a finite 2-D array")
    return T


def _check_range(name, idx, bound):
    if idx.size and (idx.min() < 0 or idx.max() >= bound):
        raise IndexError(f"{name} index out of range [0, {bound})")


def _scatter(shape, rows, cols, weights) -> np.ndarray:
    d1, d2 = shape
    flat = (np.asarray(rows) * d2 + np.asarray(cols)).ravel()
    return np.bincount(flat, weights=np.ravel(weights), minlength=d1 * d2).reshape(shape)


# -- pairwise ----------------------------------------------------------------

def _pair_terms(T, users, winners, losers, y):
    d1, d2 = T.shape
    _check_range("user", users, d1)
    _check_range("item", winners, d2)
    _check_range("item", losers, d2)
    return T[users, winners] - T[users, losers], y


def nll_pairwise(theta, data: PairwiseComparisons) -> float:
    T = _theta(theta)
    if len(data) == 0:
        raise ValueError("no comparisons")
    z, y = _pair_terms(T, data.users, data.item_a, data.item_b, data.a_wins)
    return float(np.mean(np.logaddexp(0.0, z) - y * z))


def grad_pairwise(theta, data: PairwiseComparisons) -> np.ndarray:
    T = _theta(theta)
    if len(data) == 0:
        raise ValueError("no comparisons")
    z, y = _pair_terms(T, data.users, data.item_a, data.item_b, data.a_wins)
    r = (expit(z) - y) / len(data)
    u = data.users
    return _scatter(T.shape, np.concatenate([u, u]), np.concatenate([data.item_a, data.item_b]), np.concatenate([r, -r]))


# -- k-wise --------------------------------------------------------------------

def _kwise_terms(T, data: KWiseRankings):
    d1, d2 = T.shape
    if len(data) == 0:
        raise ValueError("no rankings")
    _check_range("user", data.users, d1)
    _check_range("item", data.items, d2)
    V = data.ordered_items()
    W = T[data.users[:, None], V]
    # log-sum-exp over the positions still unranked at each step
    lse = np.logaddexp.accumulate(W[:, ::-1], axis=1)[:, ::-1]
    return V, W, lse


def nll_kwise(theta, data: KWiseRankings) -> float:
    T = _theta(theta)
    _, W, lse = _kwise_terms(T, data)
    return float(np.sum(lse - W) / (data.k * len(data)))


def grad_kwise(theta, data: KWiseRankings) -> np.ndarray:
    T = _theta(theta)
    V, W, lse = _kwise_terms(T, data)
    k = data.k
    # P[n, l, m]: probability of position m being chosen at step l (m >= l)
    P = np.exp(np.minimum(W[:, None, :] - lse[:, :, None], 0.0))
    P *= np.triu(np.ones((k, k)))
    coef = P.sum(axis=1) - 1.0
    users = np.broadcast_to(data.users[:, None], V.shape)
    return _scatter(T.shape, users, V, coef / (k * len(data)))


# -- bundled / choice ----------------------------------------------------------

def _as_bundled(data) -> BundledChoices:
    if isinstance(data, ChoiceObservations):
        return data.as_bundled()
    return data


def _bundled_terms(T, b: BundledChoices):
    d1, d2 = T.shape
    if len(b) == 0:
        raise ValueError("no choices")
    _check_range("row item", b.S, d1)
    _check_range("column item", b.T, d2)
    W = T[b.S[:, :, None], b.T[:, None, :]]
    lse = logsumexp(W, axis=(1, 2))
    rows = np.arange(len(b))
    picked = W[rows, b.pick_r, b.pick_c]
    return W, lse, picked


def nll_bundled(theta, data) -> float:
    """Bundled-choice loss; choice observations use the single-row-item form."""
    T = _theta(theta)
    b = _as_bundled(data)
    _, lse, picked = _bundled_terms(T, b)
    return float(np.mean(lse - picked))


def grad_bundled(theta, data) -> np.ndarray:
    T = _theta(theta)
    b = _as_bundled(data)
    W, lse, _ = _bundled_terms(T, b)
    n = len(b)
    p = np.exp(W - lse[:, None, None]) / n
    rows = np.broadcast_to(b.S[:, :, None], W.shape)
    cols = np.broadcast_to(b.T[:, None, :], W.shape)
    g = _scatter(T.shape, rows, cols, p)
    g -= _scatter(T.shape, b.S[np.arange(n), b.pick_r], b.T[np.arange(n), b.pick_c], np.full(n, 1.0 / n))
    return g


nll_choice = nll_bundled
grad_choice = grad_bundled


# -- rank-broken -------------------------------------------------------------

def nll_rank_broken(theta, broken) -> float:
    """Mean pairwise loss over broken pairs, each counted as a win for the
    higher-ranked element."""
    T = _theta(theta)
    if len(broken) == 0:
        raise ValueError("no broken pairs")
    z, _ = _pair_terms(T, broken.users, broken.winners, broken.losers, 1.0)
    return float(np.mean(np.logaddexp(0.0, -z)))


def grad_rank_broken(theta, broken) -> np.ndarray:
    T = _theta(theta)
    if len(broken) == 0:
        raise ValueError("no broken pairs")
    z, _ = _pair_terms(T, broken.users, broken.winners, broken.losers, 1.0)
    r = -expit(-z) / len(broken)
    u = broken.users
    return _scatter(T.shape, np.concatenate([u, u]), np.concatenate([broken.winners, broken.losers]), np.concatenate([r, -r]))


# -- uniform handle ------------------------------------------------------------

_FUNCS = {
    "pairwise": (nll_pairwise, grad_pairwise),
    "kwise": (nll_kwise, grad_kwise),
    "rank-broken": (nll_rank_broken, grad_rank_broken),
    "choice": (nll_bundled, grad_bundled),
    "bundled": (nll_bundled, grad_bundled),
}

CENTERING_FOR_KIND = {
    "pairwise": "per-group",
    "kwise": "per-row",
    "rank-broken": "per-row",
    "choice": "per-row",
    "bundled": "global",
}


@dataclass(frozen=True)
class LossHandle:
    """Data-bound negative log-likelihood ``-L(theta)`` with its gradient."""

    data: object
    kind: str
    dims: tuple[int, int]

    def __post_init__(self):
        if self.kind not in _FUNCS:
            raise ValueError(f"unknown loss kind {self.kind!r}")
        mr, mc = self.data.max_indices()
        d1, d2 = self.dims
        if mr >= d1 or mc >= d2:
            raise ValueError(f"observation indices exceed dims {self.dims}")

    def value(self, theta) -> float:
        return _FUNCS[self.kind][0](theta, self.data)

    def grad(self, theta) -> np.ndarray:
        return _FUNCS[self.kind][1](theta, self.data)

    def value_and_grad(self, theta) -> tuple[float, np.ndarray]:
        return self.value(theta), self.grad(theta)

    def lipschitz(self) -> float:
        """Upper bound on the Frobenius Lipschitz constant of the gradient.

        Every per-sample Hessian is a multinomial covariance (norm <= 1/2).
        When each sample touches a single row, rows decouple and the bound
        shrinks to the largest per-user share of the samples.
        """
        if self.kind == "bundled":
            return 0.5
        users = self.data.users
        return 0.5 * np.bincount(users).max() / len(users)


def make_loss(data, dims=None, kind=None) -> LossHandle:
    """Wrap observation data in a :class:`LossHandle`, inferring kind and dims."""
    kind = kind or data.kind
    if dims is None:
        mr, mc = data.max_indices()
        dims = (mr + 1, mc + 1)
    return LossHandle(data, kind, tuple(dims))
