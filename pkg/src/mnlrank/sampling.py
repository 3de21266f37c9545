"""Synthetic observations drawn from an MNL preference matrix.

Each batch container stores its records column-wise as numpy arrays and
iterates as per-record named tuples.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import NamedTuple, Union

import numpy as np

from .graphs import SamplingGraph


class PairwiseComparison(NamedTuple):
    user: int
    item_a: int
    item_b: int
    a_wins: bool


class KWiseRanking(NamedTuple):
    user: int
    items: tuple
    ranking: tuple


class ChoiceObservation(NamedTuple):
    user: int
    offered: tuple
    chosen: int


class BundledChoice(NamedTuple):
    S: tuple
    T: tuple
    picked: tuple


def _ints(a, ndim) -> np.ndarray:
    a = np.asarray(a, dtype=np.int64)
    if a.ndim != ndim:
        raise ValueError(f"expected a {ndim}-D index array, got shape {a.shape}")
    return a


@dataclass(frozen=True)
class PairwiseComparisons:
    users: np.ndarray
    item_a: np.ndarray
    item_b: np.ndarray
    a_wins: np.ndarray

    kind = "pairwise"

    def __post_init__(self):
        for name in ("users", "item_a", "item_b"):
            object.__setattr__(self, name, _ints(getattr(self, name), 1))
        object.__setattr__(self, "a_wins", np.asarray(self.a_wins, dtype=bool))
        n = len(self.users)
        if not (len(self.item_a) == len(self.item_b) == len(self.a_wins) == n):
            raise ValueError("pairwise columns must have equal length")
        if np.any(self.item_a == self.item_b):
            raise ValueError("a comparison needs two distinct items")

    def __len__(self):
        return len(self.users)

    def __iter__(self):
        for u, a, b, y in zip(self.users, self.item_a, self.item_b, self.a_wins):
            yield PairwiseComparison(int(u), int(a), int(b), bool(y))

    @classmethod
    def from_records(cls, records) -> "PairwiseComparisons":
        records = list(records)
        cols = list(zip(*records)) if records else [(), (), (), ()]
        return cls(*(np.array(c) for c in cols))

    def max_indices(self) -> tuple[int, int]:
        return int(self.users.max(initial=-1)), int(max(self.item_a.max(initial=-1), self.item_b.max(initial=-1)))


@dataclass(frozen=True)
class KWiseRankings:
    """``ranking[n, l]`` is the position in ``items[n]`` of the ``l``-th best item."""

    users: np.ndarray
    items: np.ndarray
    ranking: np.ndarray

    kind = "kwise"

    def __post_init__(self):
        object.__setattr__(self, "users", _ints(self.users, 1))
        object.__setattr__(self, "items", _ints(self.items, 2))
        object.__setattr__(self, "ranking", _ints(self.ranking, 2))
        if self.items.shape != self.ranking.shape or len(self.users) != len(self.items):
            raise ValueError("kwise arrays have inconsistent shapes")
        k = self.items.shape[1]
        if k < 1:
            raise ValueError("k must be at least 1")
        if len(self) and not np.array_equal(np.sort(self.ranking, axis=1), np.broadcast_to(np.arange(k), self.ranking.shape)):
            raise ValueError("each ranking must be a permutation of positions 0..k-1")

    @property
    def k(self) -> int:
        return self.items.shape[1]

    def __len__(self):
        return len(self.users)

    def __iter__(self):
        for u, it, rk in zip(self.users, self.items, self.ranking):
            yield KWiseRanking(int(u), tuple(int(x) for x in it), tuple(int(x) for x in rk))

    def ordered_items(self) -> np.ndarray:
        """Item indices best first."""
        return np.take_along_axis(self.items, self.ranking, axis=1)

    @classmethod
    def from_records(cls, records) -> "KWiseRankings":
        records = list(records)
        if not records:
            raise ValueError("no rankings")
        return cls(
            np.array([r.user for r in records]),
            np.array([r.items for r in records]),
            np.array([r.ranking for r in records]),
        )

    def max_indices(self) -> tuple[int, int]:
        return int(self.users.max(initial=-1)), int(self.items.max(initial=-1))


@dataclass(frozen=True)
class ChoiceObservations:
    users: np.ndarray
    offered: np.ndarray
    chosen: np.ndarray

    kind = "choice"

    def __post_init__(self):
        object.__setattr__(self, "users", _ints(self.users, 1))
        object.__setattr__(self, "offered", _ints(self.offered, 2))
        object.__setattr__(self, "chosen", _ints(self.chosen, 1))
        if not (len(self.users) == len(self.offered) == len(self.chosen)):
            raise ValueError("choice arrays have inconsistent lengths")
        if np.any((self.chosen < 0) | (self.chosen >= self.offered.shape[1])):
            raise ValueError("chosen position out of range")

    @property
    def k(self) -> int:
        return self.offered.shape[1]

    def __len__(self):
        return len(self.users)

    def __iter__(self):
        for u, s, c in zip(self.users, self.offered, self.chosen):
            yield ChoiceObservation(int(u), tuple(int(x) for x in s), int(c))

    def as_bundled(self) -> "BundledChoices":
        """The same data as bundles with a single offered row item (the user)."""
        n = len(self)
        return BundledChoices(self.users[:, None], self.offered, np.zeros(n, dtype=np.int64), self.chosen)

    def max_indices(self) -> tuple[int, int]:
        return int(self.users.max(initial=-1)), int(self.offered.max(initial=-1))


@dataclass(frozen=True)
class BundledChoices:
    S: np.ndarray
    T: np.ndarray
    pick_r: np.ndarray
    pick_c: np.ndarray

    kind = "bundled"

    def __post_init__(self):
        object.__setattr__(self, "S", _ints(self.S, 2))
        object.__setattr__(self, "T", _ints(self.T, 2))
        object.__setattr__(self, "pick_r", _ints(self.pick_r, 1))
        object.__setattr__(self, "pick_c", _ints(self.pick_c, 1))
        n = len(self.S)
        if not (len(self.T) == len(self.pick_r) == len(self.pick_c) == n):
            raise ValueError("bundled arrays have inconsistent lengths")
        if self.S.shape[1] < 1 or self.T.shape[1] < 1:
            raise ValueError("k1 and k2 must be at least 1")
        if np.any((self.pick_r < 0) | (self.pick_r >= self.S.shape[1])) or np.any(
            (self.pick_c < 0) | (self.pick_c >= self.T.shape[1])
        ):
            raise ValueError("picked position out of range")

    @property
    def k1(self) -> int:
        return self.S.shape[1]

    @property
    def k2(self) -> int:
        return self.T.shape[1]

    def __len__(self):
        return len(self.S)

    def __iter__(self):
        for s, t, r, c in zip(self.S, self.T, self.pick_r, self.pick_c):
            yield BundledChoice(tuple(int(x) for x in s), tuple(int(x) for x in t), (int(r), int(c)))

    def max_indices(self) -> tuple[int, int]:
        return int(self.S.max(initial=-1)), int(self.T.max(initial=-1))


ObservationSet = Union[PairwiseComparisons, KWiseRankings, ChoiceObservations, BundledChoices]


def _theta(theta) -> np.ndarray:
    return np.asarray(getattr(theta, "theta", theta), dtype=float)


def _categorical(rng, weights) -> np.ndarray:
    """Draw one column index per row of nonnegative, unnormalised ``weights``."""
    cum = np.cumsum(weights, axis=1)
    u = rng.random(len(weights)) * cum[:, -1]
    idx = (cum <= u[:, None]).sum(axis=1)
    return np.minimum(idx, weights.shape[1] - 1)


def step_probabilities(weights, remaining) -> np.ndarray:
    """MNL choice probabilities over the positions flagged in ``remaining``."""
    w = np.where(remaining, weights, -np.inf)
    w = w - w.max(axis=-1, keepdims=True)
    e = np.exp(w)
    return e / e.sum(axis=-1, keepdims=True)


def sample_pairwise(theta, g: SamplingGraph, n: int, seed=None) -> PairwiseComparisons:
    """Graph sampling: a uniform user, a pair drawn from ``P``, an MNL outcome."""
    T = _theta(theta)
    d1, d2 = T.shape
    if g.d2 != d2:
        raise ValueError(f"graph has {g.d2} items, theta has {d2} columns")
    rng = np.random.default_rng(seed)
    users = rng.integers(d1, size=n)
    flat = rng.choice(d2 * d2, size=n, p=g.P.ravel())
    a, b = np.divmod(flat, d2)
    z = T[users, a] - T[users, b]
    a_wins = rng.random(n) < 1.0 / (1.0 + np.exp(-z))
    return PairwiseComparisons(users, a, b, a_wins)


def _offer_sets(rng, d1, d2, k, per_user):
    if k < 1:
        raise ValueError("k must be at least 1")
    users = np.repeat(np.arange(d1), per_user)
    items = rng.integers(d2, size=(len(users), k))
    return users, items


def sample_kwise_sequential(theta, k: int, seed=None, per_user: int = 1) -> KWiseRankings:
    """Rankings built best-first: each step picks among the remaining positions
    with MNL probabilities. Offered items are drawn uniformly with replacement;
    repeated items occupy separate positions with equal weight."""
    T = _theta(theta)
    d1, d2 = T.shape
    rng = np.random.default_rng(seed)
    users, items = _offer_sets(rng, d1, d2, k, per_user)
    W = T[users[:, None], items]
    remaining = np.ones(W.shape, dtype=bool)
    ranking = np.empty(W.shape, dtype=np.int64)
    rows = np.arange(len(W))
    for step in range(k):
        pos = _categorical(rng, step_probabilities(W, remaining))
        ranking[:, step] = pos
        remaining[rows, pos] = False
    return KWiseRankings(users, items, ranking)


def gumbel(rng, size) -> np.ndarray:
    u = rng.random(size)
    # rng.random is in [0, 1); avoid log(0)
    u = np.where(u == 0.0, np.finfo(float).tiny, u)
    return -np.log(-np.log(u))


def sample_kwise_gumbel(theta, k: int, seed=None, per_user: int = 1) -> KWiseRankings:
    """Random-utility rankings: sort ``theta + Gumbel noise`` in decreasing order."""
    T = _theta(theta)
    d1, d2 = T.shape
    rng = np.random.default_rng(seed)
    users, items = _offer_sets(rng, d1, d2, k, per_user)
    utility = T[users[:, None], items] + gumbel(rng, items.shape)
    ranking = np.argsort(-utility, axis=1, kind="stable")
    return KWiseRankings(users, items, ranking)


def sample_choices(theta, k: int, n: int, seed=None) -> ChoiceObservations:
    T = _theta(theta)
    d1, d2 = T.shape
    if k < 1:
        raise ValueError("k must be at least 1")
    rng = np.random.default_rng(seed)
    users = rng.integers(d1, size=n)
    offered = rng.integers(d2, size=(n, k))
    W = T[users[:, None], offered]
    chosen = _categorical(rng, step_probabilities(W, np.ones(W.shape, dtype=bool)))
    return ChoiceObservations(users, offered, chosen)


def sample_bundled(theta, k1: int, k2: int, n: int, seed=None) -> BundledChoices:
    T = _theta(theta)
    d1, d2 = T.shape
    if k1 < 1 or k2 < 1:
        raise ValueError("k1 and k2 must be at least 1")
    rng = np.random.default_rng(seed)
    S = rng.integers(d1, size=(n, k1))
    Tc = rng.integers(d2, size=(n, k2))
    W = T[S[:, :, None], Tc[:, None, :]].reshape(n, k1 * k2)
    cell = _categorical(rng, step_probabilities(W, np.ones(W.shape, dtype=bool)))
    pick_r, pick_c = np.divmod(cell, k2)
    return BundledChoices(S, Tc, pick_r, pick_c)


# -- type-tagged CSV --------------------------------------------------------

def write_observations(path, *datasets) -> None:
    """Write any mix of observation batches, one tagged record per line."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        for data in datasets:
            if isinstance(data, PairwiseComparisons):
                for r in data:
                    w.writerow(["P", r.user, r.item_a, r.item_b, int(r.a_wins)])
            elif isinstance(data, KWiseRankings):
                for r in data:
                    w.writerow(["K", r.user, len(r.items), *r.items, *r.ranking])
            elif isinstance(data, ChoiceObservations):
                for r in data:
                    w.writerow(["C", r.user, len(r.offered), *r.offered, r.chosen])
            elif isinstance(data, BundledChoices):
                for r in data:
                    w.writerow(["B", len(r.S), len(r.T), *r.S, *r.T, *r.picked])
            else:
                raise TypeError(f"cannot serialise {type(data).__name__}")


def read_observations(path) -> dict[str, ObservationSet]:
    """Parse a tagged observation file into one batch per record type present."""
    recs: dict[str, list] = {"P": [], "K": [], "C": [], "B": []}
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), 1):
            if not row or row[0].startswith("#"):
                continue
            try:
                tag, vals = row[0].strip(), [int(v) for v in row[1:]]
                if tag == "P":
                    if len(vals) != 4 or vals[3] not in (0, 1):
                        raise ValueError("expected P,u,a,b,y with y in {0,1}")
                    recs["P"].append(PairwiseComparison(*vals[:3], bool(vals[3])))
                elif tag == "K":
                    u, k = vals[0], vals[1]
                    if len(vals) != 2 + 2 * k:
                        raise ValueError(f"expected {k} items and {k} ranks")
                    recs["K"].append(KWiseRanking(u, tuple(vals[2:2 + k]), tuple(vals[2 + k:])))
                elif tag == "C":
                    u, k = vals[0], vals[1]
                    if len(vals) != 3 + k:
                        raise ValueError(f"expected {k} offered items and a choice")
                    recs["C"].append(ChoiceObservation(u, tuple(vals[2:2 + k]), vals[-1]))
                elif tag == "B":
                    k1, k2 = vals[0], vals[1]
                    if len(vals) != 4 + k1 + k2:
                        raise ValueError(f"expected {k1}+{k2} items and a picked cell")
                    recs["B"].append(BundledChoice(tuple(vals[2:2 + k1]), tuple(vals[2 + k1:2 + k1 + k2]), tuple(vals[-2:])))
                else:
                    raise ValueError(f"unknown record tag {tag!r}")
            except (ValueError, IndexError) as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
    out: dict[str, ObservationSet] = {}
    try:
        if recs["P"]:
            out["pairwise"] = PairwiseComparisons.from_records(recs["P"])
        if recs["K"]:
            out["kwise"] = KWiseRankings.from_records(recs["K"])
        if recs["C"]:
            c = recs["C"]
            out["choice"] = ChoiceObservations(
                np.array([r.user for r in c]), np.array([r.offered for r in c]), np.array([r.chosen for r in c])
            )
        if recs["B"]:
            b = recs["B"]
            out["bundled"] = BundledChoices(
                np.array([r.S for r in b]),
                np.array([r.T for r in b]),
                np.array([r.picked[0] for r in b]),
                np.array([r.picked[1] for r in b]),
            )
    except ValueError as exc:
        # ragged k across records surfaces here
        raise ValueError(f"{path}: {exc}") from exc
    return out
