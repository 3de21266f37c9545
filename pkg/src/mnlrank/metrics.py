"""Error metrics, the Borda-count baseline and bound diagnostics."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .linalg import as_matrix, singular_values


def _pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    A = as_matrix(getattr(a, "theta", a), "a")
    B = as_matrix(getattr(b, "theta", b), "b")
    if A.shape != B.shape:
        raise ValueError(f"shape mismatch: {A.shape} vs {B.shape}")
    return A, B


def rmse(a, b) -> float:
    """``||a - b||_F / sqrt(d1 d2)``."""
    A, B = _pair(a, b)
    return float(np.linalg.norm(A - B) / math.sqrt(A.size))


def l_rmse(a, b, L_half) -> float:
    """``||(a - b) L^{1/2}||_F / sqrt(d1)``."""
    A, B = _pair(a, b)
    H = as_matrix(L_half, "L_half")
    if H.shape != (A.shape[1], A.shape[1]):
        raise ValueError("L_half does not match the number of columns")
    return float(np.linalg.norm((A - B) @ H) / math.sqrt(A.shape[0]))


def borda(rankings, d2: int | None = None) -> np.ndarray:
    """Average 0-based rank position of each item over all rankings (lower is better).

    Items that never appear score ``inf``.
    """
    if len(rankings) == 0:
        raise ValueError("no rankings to aggregate")
    V = rankings.ordered_items()
    d2 = int(V.max()) + 1 if d2 is None else d2
    pos = np.broadcast_to(np.arange(V.shape[1]), V.shape)
    total = np.bincount(V.ravel(), weights=pos.ravel(), minlength=d2)
    count = np.bincount(V.ravel(), minlength=d2)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(count > 0, total / np.maximum(count, 1), np.inf)


def predict_winners(scores, users, a, b, higher_is_better=True) -> np.ndarray:
    """True where item ``a`` is predicted to beat item ``b``; ties go to the smaller index.

    ``scores`` is either one score per item (shared by all users) or a
    users-by-items matrix.
    """
    S = np.asarray(scores, dtype=float)
    if S.ndim == 1:
        sa, sb = S[a], S[b]
    else:
        sa, sb = S[users, a], S[users, b]
    if not higher_is_better:
        sa, sb = -sa, -sb
    return (sa > sb) | ((sa == sb) & (a < b))


def prediction_error(predictor, heldout, higher_is_better=True) -> float:
    """Fraction of held-out pairwise outcomes that the scores get wrong."""
    if len(heldout) == 0:
        raise ValueError("empty held-out set")
    pred = predict_winners(predictor, heldout.users, heldout.item_a, heldout.item_b, higher_is_better)
    return float(np.mean(pred != heldout.a_wins))


def sigma_tail(theta, r: int) -> float:
    """Sum of the singular values beyond the ``r`` largest."""
    s = singular_values(getattr(theta, "theta", theta))
    if not 0 <= r <= len(s):
        raise ValueError("r out of range")
    return float(np.sum(s[r:]))


def lq_radius(theta, q: float) -> float:
    """``sum_j sigma_j^q``; membership in the l_q ball is ``lq_radius <= rho_q``."""
    if not 0 < q <= 1:
        raise ValueError("q must lie in (0, 1]")
    s = singular_values(getattr(theta, "theta", theta))
    s = s[s > 0]
    return float(np.sum(s**q))


def psi(x):
    """Logistic density ``e^x / (1 + e^x)^2``."""
    x = np.abs(x)
    e = np.exp(-x)
    return e / (1 + e) ** 2


def graph_bound_rhs(alpha, lam, r, err_l, tail) -> float:
    """Right-hand side of the graph-sampling error bound on ``||(Theta* - Theta_hat) L^{1/2}||_F^2 / d1``."""
    return float(36 * lam * (alpha + 1 / psi(2 * alpha)) * (math.sqrt(2 * r) * err_l + tail))


@dataclass
class ErrorReport:
    rmse: float
    l_rmse: float | None = None
    prediction_error: float | None = None
    sigma_tail: list = field(default_factory=list)

    def __post_init__(self):
        vals = [self.rmse, self.l_rmse, self.prediction_error, *self.sigma_tail]
        if any(v is not None and v < 0 for v in vals):
            raise ValueError("error metrics must be nonnegative")
        if self.prediction_error is not None and self.prediction_error > 1:
            raise ValueError("prediction error must lie in [0, 1]")

    FIELDS = ("rmse", "l_rmse", "prediction_error", "sigma_tail")

    def to_row(self) -> dict:
        row = asdict(self)
        row["sigma_tail"] = ";".join(repr(float(v)) for v in self.sigma_tail)
        return {k: ("" if v is None else v) for k, v in row.items()}
