"""Dense matrix primitives: SVD, nuclear norm, singular value thresholding,
Laplacian pseudo-powers and Laplacian-induced norms."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Relative eigenvalue cutoff below which a Laplacian eigenvalue counts as null.
NULL_RTOL = 1e-10


class NumericalError(RuntimeError):
    """An underlying LAPACK decomposition failed to converge."""


class NotPSDError(ValueError):
    """Matrix has an eigenvalue that is negative beyond tolerance."""


@dataclass(frozen=True)
class SvdFactors:
    U: np.ndarray
    sigma: np.ndarray
    V: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.U * self.sigma) @ self.V.T


def as_matrix(M, name: str = "matrix") -> np.ndarray:
    """Return `M` as a 2-D float array, rejecting empty or non-finite input."""
    A = np.asarray(M, dtype=float)
    if A.ndim != 2 or A.shape[0] < 1 or A.shape[1] < 1:
        raise ValueError(f"{name} must be a non-empty 2-D array, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError(f"{name} has non-finite entries")
    return A


def svd(M) -> SvdFactors:
    """Thin SVD with singular values sorted nonincreasing."""
    A = as_matrix(M)
    try:
        U, s, Vt = np.linalg.svd(A, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD did not converge: {exc}") from exc
    return SvdFactors(U, s, Vt.T)


def singular_values(M) -> np.ndarray:
    A = as_matrix(M)
    try:
        return np.linalg.svd(A, compute_uv=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD did not converge: {exc}") from exc


def nuclear_norm(M) -> float:
    return float(np.sum(singular_values(M)))


def svt(M, tau: float) -> np.ndarray:
    """Singular value soft-thresholding, the prox of ``tau * ||.||_*``."""
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    f = svd(M)
    s = np.maximum(f.sigma - tau, 0.0)
    keep = s > 0
    return (f.U[:, keep] * s[keep]) @ f.V[:, keep].T


def _sym_eigh(L) -> tuple[np.ndarray, np.ndarray]:
    A = as_matrix(L, "L")
    if A.shape[0] != A.shape[1]:
        raise ValueError("L must be square")
    scale = max(np.max(np.abs(A)), 1.0)
    if np.max(np.abs(A - A.T)) > 1e-10 * scale:
        raise ValueError("L must be symmetric")
    try:
        w, Q = np.linalg.eigh((A + A.T) / 2)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigendecomposition did not converge: {exc}") from exc
    return w, Q


def laplacian_power(L, x: float, null_dim: int | None = None) -> np.ndarray:
    """Pseudo-power ``U diag(s**x) U^T`` over the nonzero spectrum of a PSD matrix.

    Parameters
    ----------
    L : array_like
        Symmetric positive semidefinite matrix, typically a graph Laplacian.
    x : float
        Exponent; negative values give pseudo-inverse powers.
    null_dim : int, optional
        Number of smallest eigenvalues to discard as the null space. When
        omitted, eigenvalues with magnitude at most ``NULL_RTOL`` times the
        largest one are discarded.
    """
    w, Q = _sym_eigh(L)
    wmax = max(float(np.max(np.abs(w))), np.finfo(float).tiny)
    cutoff = NULL_RTOL * wmax
    if null_dim is None:
        null = np.abs(w) <= cutoff
    else:
        if not 0 <= null_dim <= len(w):
            raise ValueError("null_dim out of range")
        if null_dim and np.max(np.abs(w[:null_dim])) > max(cutoff, 1e-10):
            raise ValueError("declared null eigenvalues are not numerically zero")
        null = np.zeros(len(w), dtype=bool)
        null[:null_dim] = True
    if np.any(w[~null] < -cutoff):
        raise NotPSDError(f"negative eigenvalue {w.min():.3e}")
    keep = ~null
    wk = w[keep]
    return (Q[:, keep] * wk**x) @ Q[:, keep].T


def _check_compatible(Theta, L_half) -> tuple[np.ndarray, np.ndarray]:
    T = as_matrix(Theta, "Theta")
    H = as_matrix(L_half, "L_half")
    if H.shape != (T.shape[1], T.shape[1]):
        raise ValueError(f"shape mismatch: Theta {T.shape} vs L_half {H.shape}")
    return T, H


def l_fro_norm(Theta, L_half) -> float:
    """Frobenius norm of ``Theta @ L_half``."""
    T, H = _check_compatible(Theta, L_half)
    return float(np.linalg.norm(T @ H, "fro"))


def l_nuc_norm(Theta, L_half) -> float:
    """Nuclear norm of ``Theta @ L_half``."""
    T, H = _check_compatible(Theta, L_half)
    return nuclear_norm(T @ H)
