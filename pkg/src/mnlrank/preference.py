"""Ground-truth preference matrices and the centering conventions that pick one
representative from each identifiability class."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .graphs import GroupStructure
from .linalg import as_matrix

CENTERINGS = ("per-group", "per-row", "global", "none")


def center(theta, mode: str, groups: GroupStructure | None = None) -> np.ndarray:
    """Project onto the centered representative of the equivalence class.

    ``per-group`` subtracts, row by row, the mean over each group's columns so
    that ``theta @ g_i = 0``; ``per-row`` subtracts row means; ``global``
    subtracts the grand mean; ``none`` copies.
    """
    T = as_matrix(theta, "theta")
    if mode == "none":
        return T.copy()
    if mode == "global":
        return T - T.mean()
    if mode == "per-row":
        return T - T.mean(axis=1, keepdims=True)
    if mode == "per-group":
        if groups is None:
            raise ValueError("per-group centering needs a GroupStructure")
        if groups.d2 != T.shape[1]:
            raise ValueError(
                f"group structure covers {groups.d2} items, theta has {T.shape[1]} columns"
            )
        g = groups.indicators
        means = (T @ g.T) / g.sum(axis=1)
        return T - means @ g
    raise ValueError(f"unknown centering mode {mode!r}")


def centering_residual(theta, mode: str, groups: GroupStructure | None = None) -> float:
    T = np.asarray(theta, dtype=float)
    return float(np.max(np.abs(T - center(T, mode, groups)), initial=0.0))


@dataclass(frozen=True)
class PreferenceMatrix:
    """A preference matrix with its dynamic-range bound and centering convention.

    ``raw`` optionally keeps the pre-centering, pre-scaling construction.
    """

    theta: np.ndarray
    alpha: float
    centering: str = "none"
    groups: GroupStructure | None = field(default=None, repr=False)
    raw: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        T = as_matrix(self.theta, "theta")
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")
        if self.centering not in CENTERINGS:
            raise ValueError(f"unknown centering {self.centering!r}")
        if np.max(np.abs(T)) > self.alpha + 1e-9:
            raise ValueError(f"max |theta| = {np.max(np.abs(T))} exceeds alpha = {self.alpha}")
        scale = max(1.0, np.max(np.abs(T)))
        if centering_residual(T, self.centering, self.groups) > 1e-10 * scale:
            raise ValueError(f"theta is not {self.centering} centered")
        object.__setattr__(self, "theta", T)

    @property
    def shape(self) -> tuple[int, int]:
        return self.theta.shape

    def row_range(self) -> float:
        """Largest within-row spread, the k-wise notion of dynamic range."""
        return float(np.max(np.ptp(self.theta, axis=1)))

    def global_range(self) -> float:
        """Largest spread over all entries, the bundled-choice notion of dynamic range."""
        return float(np.ptp(self.theta))


def _finish(raw, alpha, centering, groups) -> PreferenceMatrix:
    T = center(raw, centering, groups)
    m = np.max(np.abs(T))
    if m > 0:
        T = T * (alpha / m)
    return PreferenceMatrix(T, alpha, centering, groups, raw=raw)


def _check_shape(d1, d2, r, alpha):
    if d1 < 1 or d2 < 1:
        raise ValueError("d1 and d2 must be positive")
    if not 1 <= r <= min(d1, d2):
        raise ValueError(f"rank r={r} must lie in [1, min(d1, d2)]")
    if alpha <= 0:
        raise ValueError("alpha must be positive")


def _low_rank_factor_product(d1, d2, r, rng) -> np.ndarray:
    U = rng.uniform(0.0, 1.0, size=(d1, r))
    V = rng.uniform(0.0, 1.0, size=(d2, r))
    return U @ V.T


def random_low_rank(d1, d2, r, alpha, centering="per-row", seed=None, groups=None):
    """``U V^T`` with uniform [0, 1] factors, centered, then scaled to max ``alpha``.

    Per-row and per-group centering keep the column space, so the rank stays
    at most ``r``; global centering subtracts a constant matrix and can add one.
    """
    _check_shape(d1, d2, r, alpha)
    rng = np.random.default_rng(seed)
    return _finish(_low_rank_factor_product(d1, d2, r, rng), alpha, centering, groups)


def barbell_biased(d1, d2, r, alpha, shift=None, seed=None, centering="per-row", groups=None):
    """Low-rank preferences whose right half of items is offset by ``shift``.

    ``shift`` is in the units of the raw factor product, before centering and
    rescaling; it defaults to ``alpha / 2``.
    """
    _check_shape(d1, d2, r, alpha)
    if d2 % 2:
        raise ValueError("barbell bias needs an even number of items")
    shift = alpha / 2 if shift is None else shift
    rng = np.random.default_rng(seed)
    raw = _low_rank_factor_product(d1, d2, r, rng)
    raw[:, d2 // 2:] += shift
    return _finish(raw, alpha, centering, groups)


def line_biased(d1, d2, r, alpha, shift=None, seed=None, centering="per-row", groups=None):
    """Low-rank preferences with item means rising linearly along the item order.

    The offset of item ``j`` is ``shift * j / (d2 - 1)``, so ``shift`` is the
    total rise from the first to the last item (default ``alpha / 2``).
    """
    _check_shape(d1, d2, r, alpha)
    if d2 < 2:
        raise ValueError("line bias needs at least two items")
    shift = alpha / 2 if shift is None else shift
    rng = np.random.default_rng(seed)
    raw = _low_rank_factor_product(d1, d2, r, rng)
    raw += shift * np.arange(d2) / (d2 - 1)
    return _finish(raw, alpha, centering, groups)


def save_csv(pm: PreferenceMatrix, path) -> None:
    d1, d2 = pm.shape
    with open(path, "w") as fh:
        fh.write(f"{d1} {d2} {pm.alpha!r} {pm.centering}\n")
        np.savetxt(fh, pm.theta, delimiter=",", fmt="%.17g")


def load_csv(path, groups: GroupStructure | None = None) -> PreferenceMatrix:
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 4:
            raise ValueError(f"{path}: header must be 'd1 d2 alpha centering'")
        d1, d2, alpha, centering = int(header[0]), int(header[1]), float(header[2]), header[3]
        theta = np.loadtxt(fh, delimiter=",", ndmin=2)
    if theta.shape != (d1, d2):
        raise ValueError(f"{path}: header says {d1}x{d2}, body is {theta.shape}")
    if centering == "per-group" and groups is None:
        raise ValueError(f"{path}: per-group matrix needs its GroupStructure")
    return PreferenceMatrix(theta, alpha, centering, groups)
