"""Dense linear-algebra kernels: feature statistics, symmetric eigendecomposition,
cosine similarity.

Feature matrices follow the C x N convention (one column per feature vector).
Statistics are accumulated in float64 and stored as float32; eigendecompositions
run fully in float64.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import NumericError

__all__ = [
    "MomentStats",
    "EigenDecomp",
    "moment_stats",
    "sym_eig",
    "cosine_similarity",
]

#: Default eigenvalue truncation threshold. Covariances of per-cluster features
#: are usually rank deficient, so callers rely on truncation rather than ridging.
DEFAULT_EIG_CUTOFF = 1e-5

_SYMMETRY_TOL = 1e-6
_OFFDIAG_TARGET = 1e-10  # relative to the Frobenius norm of the input


@dataclass(frozen=True)
class MomentStats:
    """Mean and population covariance (divisor N, not N-1) of a feature set."""

    mean: np.ndarray  # (C,) float32
    cov: np.ndarray   # (C, C) float32, symmetric
    count: int

    @property
    def dim(self) -> int:
        return int(self.mean.shape[0])


@dataclass(frozen=True)
class EigenDecomp:
    """Truncated eigendecomposition of a symmetric matrix.

    ``vectors`` holds the retained eigenvectors as orthonormal columns,
    ``values`` the matching eigenvalues in descending order, all above the
    truncation cutoff.
    """

    vectors: np.ndarray  # (C, r) float64
    values: np.ndarray   # (r,) float64

    @property
    def rank(self) -> int:
        return int(self.values.shape[0])


def moment_stats(feats: np.ndarray) -> MomentStats:
    """Column mean and population covariance of a C x N feature matrix."""
    feats = np.asarray(feats)
    if feats.ndim != 2:
        raise ValueError("expected a 2-D C x N feature matrix")
    if feats.shape[1] < 1:
        raise NumericError("no samples")
    if not np.all(np.isfinite(feats)):
        raise NumericError("non-finite entries in feature matrix")
    x = feats.astype(np.float64, copy=False)
    n = x.shape[1]
    mean = x.mean(axis=1)
    centered = x - mean[:, None]
    cov = centered @ centered.T / n
    cov = 0.5 * (cov + cov.T)
    return MomentStats(
        mean=mean.astype(np.float32), cov=cov.astype(np.float32), count=n
    )


def sym_eig(m: np.ndarray, cutoff: float = DEFAULT_EIG_CUTOFF) -> EigenDecomp:
    """Eigendecomposition of a symmetric matrix with eigenvalues <= cutoff discarded.

    Uses cyclic Jacobi rotations (one-sided sweeps followed by a two-sided
    cleanup), iterating until the off-diagonal Frobenius mass of the rotated
    matrix drops below 1e-10 of the input norm.
    """
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("expected a square matrix")
    if m.size and not np.all(np.isfinite(m)):
        raise NumericError("non-finite entries in matrix")
    asym = float(np.abs(m - m.T).max()) if m.size else 0.0
    if asym > _SYMMETRY_TOL:
        raise NumericError(f"matrix is asymmetric (max deviation {asym:.3g})")
    a = 0.5 * (m.astype(np.float64) + m.T.astype(np.float64))
    values, vectors = _jacobi_eigh(a)
    order = np.argsort(values, kind="stable")[::-1]
    values = values[order]
    vectors = vectors[:, order]
    keep = values > cutoff
    return EigenDecomp(
        vectors=np.ascontiguousarray(vectors[:, keep]), values=values[keep]
    )


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine of the angle between two vectors, in [-1, 1]."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValueError("vector length mismatch")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise NumericError("degenerate mean")
    return float(np.clip(float(a @ b) / (na * nb), -1.0, 1.0))


def _jacobi_eigh(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Full eigendecomposition of a symmetric float64 matrix via Jacobi rotations.

    Returns (values, vectors) with eigenvectors as columns, unordered.
    """
    n = a.shape[0]
    if n == 0:
        return np.zeros(0), np.eye(0)
    fro = float(np.linalg.norm(a))
    if fro == 0.0:
        return np.zeros(n), np.eye(n)

    # One-sided (Hestenes) stage: row-contiguous updates only, so it stays fast
    # for the C = 512 covariances the deeper encoder levels produce.
    rot = _orthogonalize_rows(a.copy())
    m2 = rot @ a @ rot.T
    m2 = 0.5 * (m2 + m2.T)
    vec2 = np.eye(n)

    target = _OFFDIAG_TARGET * fro
    for _ in range(4):
        if _offdiag_norm(m2) < target:
            break
        _threshold_sweep(m2, vec2, target / n)
    else:
        if _offdiag_norm(m2) >= target:
            warnings.warn(
                "Jacobi eigensolver stopped above its off-diagonal target",
                RuntimeWarning,
                stacklevel=3,
            )
    values = np.diag(m2).copy()
    vectors = rot.T @ vec2
    return values, vectors


def _offdiag_norm(m: np.ndarray) -> float:
    off = m.copy()
    np.fill_diagonal(off, 0.0)
    return float(np.linalg.norm(off))


@njit(cache=True, fastmath=True)
def _orthogonalize_rows(g):  # pragma: no cover - exercised via sym_eig
    """Cyclic one-sided Jacobi: rotates row pairs of g until mutually orthogonal.

    Returns the accumulated rotation r with r @ g_in = g_out.
    """
    n = g.shape[0]
    r = np.eye(n)
    for _sweep in range(60):
        rotated = 0
        for p in range(n - 1):
            for q in range(p + 1, n):
                dpp = 0.0
                dqq = 0.0
                dpq = 0.0
                for k in range(n):
                    gp = g[p, k]
                    gq = g[q, k]
                    dpp += gp * gp
                    dqq += gq * gq
                    dpq += gp * gq
                if dpq == 0.0 or abs(dpq) <= 1e-14 * np.sqrt(dpp * dqq):
                    continue
                rotated += 1
                tau = (dqq - dpp) / (2.0 * dpq)
                if tau >= 0.0:
                    t = 1.0 / (tau + np.sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + np.sqrt(1.0 + tau * tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                for k in range(n):
                    gp = g[p, k]
                    gq = g[q, k]
                    g[p, k] = c * gp - s * gq
                    g[q, k] = s * gp + c * gq
                for k in range(n):
                    rp = r[p, k]
                    rq = r[q, k]
                    r[p, k] = c * rp - s * rq
                    r[q, k] = s * rp + c * rq
        if rotated == 0:
            break
    return r


@njit(cache=True)
def _threshold_sweep(a, v, elem_tol):  # pragma: no cover - exercised via sym_eig
    """One two-sided Jacobi sweep over a, skipping entries below elem_tol.

    Eigenvector columns are accumulated into v. Meant for near-diagonal input,
    where almost every rotation is skipped.
    """
    n = a.shape[0]
    for p in range(n - 1):
        for q in range(p + 1, n):
            apq = a[p, q]
            if abs(apq) <= elem_tol:
                continue
            app = a[p, p]
            aqq = a[q, q]
            tau = (aqq - app) / (2.0 * apq)
            if tau >= 0.0:
                t = 1.0 / (tau + np.sqrt(1.0 + tau * tau))
            else:
                t = -1.0 / (-tau + np.sqrt(1.0 + tau * tau))
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = t * c
            for k in range(n):
                akp = a[k, p]
                akq = a[k, q]
                a[k, p] = c * akp - s * akq
                a[k, q] = s * akp + c * akq
            for k in range(n):
                apk = a[p, k]
                aqk = a[q, k]
                a[p, k] = c * apk - s * aqk
                a[q, k] = s * apk + c * aqk
            a[p, q] = 0.0
            a[q, p] = 0.0
            for k in range(n):
                vkp = v[k, p]
                vkq = v[k, q]
                v[k, p] = c * vkp - s * vkq
                v[k, q] = s * vkp + c * vkq
