"""Rank breaking: k-wise rankings to the pairwise outcomes they imply."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .estimator import EstimatorConfig, FitResult, fit
from .likelihood import LossHandle
from .sampling import KWiseRankings


@dataclass(frozen=True)
class BrokenPairSet:
    """``(user, winner, loser)`` triples, ``C(k, 2)`` per source ranking."""

    users: np.ndarray
    winners: np.ndarray
    losers: np.ndarray
    k: int

    kind = "rank-broken"

    def __len__(self):
        return len(self.users)

    def __iter__(self):
        for u, w, l in zip(self.users, self.winners, self.losers):
            yield int(u), int(w), int(l)

    @property
    def n_rankings(self) -> int:
        return len(self) // (self.k * (self.k - 1) // 2) if self.k > 1 else 0

    def max_indices(self) -> tuple[int, int]:
        return int(self.users.max(initial=-1)), int(max(self.winners.max(initial=-1), self.losers.max(initial=-1)))


def break_rankings(rankings: KWiseRankings) -> BrokenPairSet:
    """Every pair of positions ``m1 < m2`` in each ranking, winner first.

    Pairs are emitted ranking by ranking, in lexicographic order of the rank
    positions, so the higher-ranked element is always the winner. Two copies
    of the same item still form a pair.
    """
    k = rankings.k
    V = rankings.ordered_items()
    hi, lo = np.triu_indices(k, 1)
    n = len(rankings)
    return BrokenPairSet(
        np.repeat(rankings.users, len(hi)),
        V[:, hi].reshape(n * len(hi)),
        V[:, lo].reshape(n * len(hi)),
        k,
    )


def fit_rank_broken(rankings: KWiseRankings, cfg: EstimatorConfig, dims=None) -> FitResult:
    broken = break_rankings(rankings)
    if dims is None:
        mr, mc = rankings.max_indices()
        dims = (mr + 1, mc + 1)
    return fit(LossHandle(broken, "rank-broken", tuple(dims)), cfg)
