"""Weighted item-sampling graphs, their Laplacians and connected components."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.cluster.hierarchy import DisjointSet

from .linalg import NumericalError, as_matrix


@dataclass(frozen=True)
class GroupStructure:
    """Item groups as zero-one indicator rows (one row per group)."""

    indicators: np.ndarray

    def __post_init__(self):
        ind = np.asarray(self.indicators, dtype=float)
        if ind.ndim != 2:
            raise ValueError("indicators must be 2-D (groups x items)")
        if not np.all((ind == 0) | (ind == 1)):
            raise ValueError("indicators must be zero-one")
        if not np.all(ind.sum(axis=0) == 1):
            raise ValueError("each item must belong to exactly one group")
        if np.any(ind.sum(axis=1) == 0):
            raise ValueError("empty group")
        object.__setattr__(self, "indicators", ind)

    @property
    def G(self) -> int:
        return self.indicators.shape[0]

    @property
    def d2(self) -> int:
        return self.indicators.shape[1]

    def labels(self) -> np.ndarray:
        return np.argmax(self.indicators, axis=0)

    @classmethod
    def from_labels(cls, labels) -> "GroupStructure":
        labels = np.asarray(labels)
        uniq = np.unique(labels)
        return cls((labels[None, :] == uniq[:, None]).astype(float))

    @classmethod
    def single(cls, d2: int) -> "GroupStructure":
        return cls(np.ones((1, d2)))


@dataclass(frozen=True)
class SamplingGraph:
    """Symmetric pair-sampling weights ``P`` with zero diagonal and unit total mass.

    ``P[j1, j2] + P[j2, j1]`` is the probability that the unordered pair
    ``{j1, j2}`` is drawn for a comparison.
    """

    P: np.ndarray
    name: str = field(default="custom", compare=False)

    def __post_init__(self):
        P = as_matrix(self.P, "P")
        if P.shape[0] != P.shape[1] or P.shape[0] < 2:
            raise ValueError("P must be square with at least 2 items")
        if np.any(P < 0):
            raise ValueError("P must be nonnegative")
        if np.any(np.diag(P) != 0):
            raise ValueError("P must have zero diagonal")
        if not np.array_equal(P, P.T):
            raise ValueError("P must be symmetric")
        if abs(P.sum() - 1.0) > 1e-12:
            raise ValueError(f"P must sum to 1, got {P.sum()!r}")
        P = P.copy()
        P.setflags(write=False)
        object.__setattr__(self, "P", P)

    @property
    def d2(self) -> int:
        return self.P.shape[0]

    def edges(self) -> list[tuple[int, int, float]]:
        j1, j2 = np.nonzero(np.triu(self.P, 1))
        return [(int(a), int(b), float(self.P[a, b])) for a, b in zip(j1, j2)]


def from_edges(d2: int, edges, name: str = "custom") -> SamplingGraph:
    """Build a graph from undirected ``(j1, j2)`` or ``(j1, j2, weight)`` edges.

    Weights are relative; they are rescaled so the full matrix sums to one.
    """
    if d2 < 2:
        raise ValueError("need at least 2 items")
    W = np.zeros((d2, d2))
    for e in edges:
        a, b = int(e[0]), int(e[1])
        w = float(e[2]) if len(e) > 2 else 1.0
        if a == b:
            raise ValueError(f"self loop on item {a}")
        if not (0 <= a < d2 and 0 <= b < d2):
            raise ValueError(f"edge ({a}, {b}) out of range for d2={d2}")
        if w <= 0:
            raise ValueError("edge weights must be positive")
        W[a, b] = W[b, a] = w
    total = W.sum()
    if total == 0:
        raise ValueError("graph has no edges")
    return SamplingGraph(W / total, name=name)


def complete_graph(d2: int) -> SamplingGraph:
    if d2 < 2:
        raise ValueError("complete graph needs d2 >= 2")
    P = np.full((d2, d2), 1.0 / (d2 * (d2 - 1)))
    np.fill_diagonal(P, 0.0)
    return SamplingGraph(P, name="complete")


def star_graph(d2: int) -> SamplingGraph:
    if d2 < 2:
        raise ValueError("star graph needs d2 >= 2")
    return from_edges(d2, [(0, j) for j in range(1, d2)], name="star")


def line_graph(d2: int) -> SamplingGraph:
    if d2 < 2:
        raise ValueError("line graph needs d2 >= 2")
    return from_edges(d2, [(j, j + 1) for j in range(d2 - 1)], name="line")


def barbell_graph(d2: int) -> SamplingGraph:
    """Two equal cliques joined by one edge between their last/first members."""
    if d2 < 4 or d2 % 2:
        raise ValueError("barbell graph needs an even d2 >= 4")
    h = d2 // 2
    edges = [(a, b) for a in range(h) for b in range(a + 1, h)]
    edges += [(a, b) for a in range(h, d2) for b in range(a + 1, d2)]
    edges.append((h - 1, h))
    return from_edges(d2, edges, name="barbell")


def disjoint_cliques(d2: int, G: int) -> SamplingGraph:
    """``G`` equal-size complete components with no edges between them."""
    if G < 1 or d2 % G or d2 // G < 2:
        raise ValueError("G must divide d2 into components of size >= 2")
    m = d2 // G
    edges = [
        (g * m + a, g * m + b)
        for g in range(G)
        for a in range(m)
        for b in range(a + 1, m)
    ]
    return from_edges(d2, edges, name=f"cliques{G}")


TOPOLOGIES = {
    "complete": complete_graph,
    "star": star_graph,
    "line": line_graph,
    "barbell": barbell_graph,
}


def laplacian(g: SamplingGraph) -> np.ndarray:
    P = g.P
    L = -P.copy()
    # diag(P 1) - P, with the diagonal set so each row sums to exactly zero
    np.fill_diagonal(L, 0.0)
    np.fill_diagonal(L, -L.sum(axis=1))
    return L


def groups(g: SamplingGraph) -> GroupStructure:
    """Connected components of the support of ``P``."""
    ds = DisjointSet(range(g.d2))
    for a, b in zip(*np.nonzero(g.P)):
        ds.merge(int(a), int(b))
    roots = np.array([ds[j] for j in range(g.d2)])
    # label components in order of first appearance
    _, first = np.unique(roots, return_index=True)
    order = {roots[i]: n for n, i in enumerate(sorted(first))}
    return GroupStructure.from_labels([order[r] for r in roots])


def spectral_gap(L, G: int) -> float:
    """The ``(G+1)``-th smallest eigenvalue of the Laplacian ``L``."""
    A = as_matrix(L, "L")
    if not 1 <= G < A.shape[0]:
        raise ValueError("G must be in [1, d2)")
    try:
        w = np.linalg.eigvalsh((A + A.T) / 2)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(str(exc)) from exc
    return float(w[G])


def write_edge_list(g: SamplingGraph, path) -> None:
    lines = [f"d2 {g.d2}"]
    lines += [f"{a} {b} {w!r}" for a, b, w in g.edges()]
    Path(path).write_text("\n".join(lines) + "\n")


def read_edge_list(path) -> SamplingGraph:
    """Parse ``d2 <n>`` followed by ``j1 j2 weight`` lines (0-indexed).

    Blank lines and ``#`` comments are skipped.
    """
    d2 = None
    edges = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            if d2 is None:
                if parts[0] != "d2" or len(parts) != 2:
                    raise ValueError("expected header 'd2 <n>'")
                d2 = int(parts[1])
                continue
            if len(parts) not in (2, 3):
                raise ValueError("expected 'j1 j2 [weight]'")
            edges.append((int(parts[0]), int(parts[1]), *(float(p) for p in parts[2:])))
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from exc
    if d2 is None:
        raise ValueError(f"{path}: missing 'd2 <n>' header")
    return from_edges(d2, edges, name=Path(path).stem)
