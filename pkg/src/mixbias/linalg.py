"""Rank-aware dense linear algebra for V = theta * Z Z' + R.

Everything here works on dense numpy arrays. ``R`` is restricted to a
diagonal matrix held as a length-n vector; the random-effects design ``Z``
is only ever touched through m x m systems, so the n x n matrix ``V`` is
never formed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg as sla

from .errors import InvalidInput, NumericalFailure

EPS = np.finfo(float).eps
SYMMETRY_RTOL = 1e-12


def default_rank_tol(n: int, p: int) -> float:
    """Relative eigenvalue cutoff used when no tolerance is given."""
    return EPS * max(n, p)


def _as_finite(a, name):
    a = np.asarray(a, dtype=float)
    if not np.all(np.isfinite(a)):
        raise InvalidInput(f"{name} has non-finite entries")
    return a


def check_symmetric(M, name="M") -> np.ndarray:
    M = _as_finite(M, name)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise InvalidInput(f"{name} must be square, got shape {M.shape}")
    scale = np.max(np.abs(M)) if M.size else 0.0
    if scale > 0 and np.max(np.abs(M - M.T)) > SYMMETRY_RTOL * scale:
        raise InvalidInput(f"{name} is not symmetric")
    return M


def symmetrize(M) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    return 0.5 * (M + M.T)


@dataclass(frozen=True)
class GinvResult:
    """Moore-Penrose inverse of a symmetric PSD matrix.

    ``basis`` holds the retained eigenvectors (an orthonormal basis of the
    column space) and ``eigvals`` the matching eigenvalues, so callers can
    get projections and pseudo-determinants without refactorizing.
    """

    ginv: np.ndarray
    rank: int
    tolerance_used: float
    basis: np.ndarray = field(repr=False)
    eigvals: np.ndarray = field(repr=False)

    def logpdet(self) -> float:
        """Log pseudo-determinant (sum of logs of retained eigenvalues)."""
        return float(np.sum(np.log(self.eigvals)))


def pinv_psd(M, rel_tol: float | None = None) -> GinvResult:
    """Moore-Penrose inverse of a symmetric positive semidefinite matrix.

    Eigenvalues at or below ``rel_tol * lambda_max`` are treated as zero.
    The default ``rel_tol`` is ``order * eps``.
    """
    M = check_symmetric(M)
    order = M.shape[0]
    if rel_tol is None:
        rel_tol = default_rank_tol(order, order)
    if order == 0:
        return GinvResult(np.zeros((0, 0)), 0, 0.0, np.zeros((0, 0)), np.zeros(0))
    w, U = np.linalg.eigh(M)
    lam_max = max(float(w[-1]), 0.0)
    cutoff = rel_tol * lam_max
    keep = w > cutoff
    if lam_max == 0.0:
        keep[:] = False
    Uk, wk = U[:, keep], w[keep]
    ginv = (Uk / wk) @ Uk.T
    return GinvResult(symmetrize(ginv), int(keep.sum()), cutoff, Uk, wk)


@dataclass(frozen=True)
class LowRankV:
    """Scaled covariance V = theta * Z Z' + diag(R_diag)."""

    Z: np.ndarray
    theta: float
    R_diag: np.ndarray | None = None

    def __post_init__(self):
        Z = _as_finite(self.Z, "Z")
        if Z.ndim != 2:
            raise InvalidInput("Z must be a 2-d array")
        object.__setattr__(self, "Z", Z)
        if not np.isfinite(self.theta) or self.theta < 0:
            raise InvalidInput(f"theta must be finite and >= 0, got {self.theta}")
        r = np.ones(Z.shape[0]) if self.R_diag is None else _as_finite(self.R_diag, "R_diag")
        if r.shape != (Z.shape[0],) or np.any(r <= 0):
            raise InvalidInput("R_diag must be a positive n-vector")
        object.__setattr__(self, "R_diag", r)

    @property
    def n(self) -> int:
        return self.Z.shape[0]

    @property
    def m(self) -> int:
        return self.Z.shape[1]

    def dense(self) -> np.ndarray:
        return self.theta * self.Z @ self.Z.T + np.diag(self.R_diag)


def _inner_factor(v: LowRankV):
    RiZ = v.Z / v.R_diag[:, None]
    C = np.eye(v.m) + v.theta * (v.Z.T @ RiZ)
    try:
        cf = sla.cho_factor(symmetrize(C), lower=True)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure("I + theta Z'R^-1 Z is not positive definite") from exc
    return RiZ, cf


def v_solve(v: LowRankV, B) -> np.ndarray:
    """Return V^-1 B through the Woodbury identity.

    Only the m x m matrix ``I + theta Z'R^-1 Z`` is factorized.
    """
    B = _as_finite(B, "B")
    if B.shape[0] != v.n:
        raise InvalidInput(f"B has {B.shape[0]} rows, V has order {v.n}")
    RiB = B / (v.R_diag if B.ndim == 1 else v.R_diag[:, None])
    if v.theta == 0 or v.m == 0:
        return RiB
    RiZ, cf = _inner_factor(v)
    return RiB - v.theta * (RiZ @ sla.cho_solve(cf, v.Z.T @ RiB))


def v_logdet(v: LowRankV) -> float:
    """log|V| via the determinant lemma and an m x m Cholesky factor."""
    base = float(np.sum(np.log(v.R_diag)))
    if v.theta == 0 or v.m == 0:
        return base
    _, (L, _) = _inner_factor(v)
    return base + 2.0 * float(np.sum(np.log(np.diag(L))))


def row_space_basis(X, rank_tol: float | None = None) -> np.ndarray:
    """Orthonormal basis of the row space of X from the eigenvectors of X'X."""
    X = _as_finite(X, "X")
    if rank_tol is None:
        rank_tol = default_rank_tol(*X.shape)
    return pinv_psd(symmetrize(X.T @ X), rank_tol).basis


def is_estimable(k, X, rel_tol: float = 1e-8, rank_tol: float | None = None) -> bool:
    """True iff k' lies in the row space of X.

    The residual of projecting ``k`` onto the row space must have norm at
    most ``rel_tol * ||k||``. ``rank_tol`` is the eigenvalue cutoff used to
    find that row space.
    """
    k = _as_finite(k, "k").ravel()
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != k.size:
        raise InvalidInput("k and X do not conform")
    norm_k = np.linalg.norm(k)
    if norm_k == 0:
        raise InvalidInput("k must be nonzero")
    basis = row_space_basis(X, rank_tol)
    resid = k - basis @ (basis.T @ k)
    return bool(np.linalg.norm(resid) <= rel_tol * norm_k)
