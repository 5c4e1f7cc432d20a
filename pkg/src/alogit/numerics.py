"""Small dense symmetric linear algebra and special functions.

Everything here works on plain float64 numpy arrays.  Problem sizes are
tiny (p up to a few tens), so the routines favor robustness and zero
external solver dependencies: Cholesky with a scale-aware pivot check,
cyclic Jacobi for symmetric eigenvalues, and a bisected regularized
incomplete gamma for chi-square quantiles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateCovariance, InvalidProbability, NotPositiveDefinite

SYM_RTOL = 1e-12


@dataclass(frozen=True)
class EigenResult:
    """Eigenvalues sorted descending, optionally with orthonormal vectors.

    ``vectors[:, i]`` (when present) pairs with ``values[i]``.
    """

    values: np.ndarray
    vectors: np.ndarray | None = None


def is_symmetric(a: np.ndarray, rtol: float = SYM_RTOL) -> bool:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        return False
    scale = max(np.max(np.abs(a)), 1.0)
    return bool(np.max(np.abs(a - a.T)) <= rtol * scale)


def _check_symmetric(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if not is_symmetric(a):
        raise ValueError("matrix is not symmetric")
    return a


def cholesky(a: np.ndarray) -> np.ndarray:
    """Lower-triangular L with L L^T = a.

    Raises NotPositiveDefinite when a pivot falls at or below
    1e-12 times the largest diagonal entry.
    """
    a = _check_symmetric(a)
    p = a.shape[0]
    floor = 1e-12 * max(np.max(np.diag(a)), 0.0)
    l = np.zeros((p, p))
    for j in range(p):
        s = a[j, j] - l[j, :j] @ l[j, :j]
        if s <= floor:
            raise NotPositiveDefinite(f"pivot {s:.3e} at column {j}")
        l[j, j] = math.sqrt(s)
        if j + 1 < p:
            l[j + 1 :, j] = (a[j + 1 :, j] - l[j + 1 :, :j] @ l[j, :j]) / l[j, j]
    return l


def solve_lower(l: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Forward substitution; b may be a vector or a matrix of columns."""
    p = l.shape[0]
    x = np.array(b, dtype=float, copy=True)
    for i in range(p):
        if i:
            x[i] -= l[i, :i] @ x[:i]
        x[i] /= l[i, i]
    return x


def solve_upper_t(l: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Back substitution with L^T; b may be a vector or matrix."""
    p = l.shape[0]
    x = np.array(b, dtype=float, copy=True)
    for i in range(p - 1, -1, -1):
        if i + 1 < p:
            x[i] -= l[i + 1 :, i] @ x[i + 1 :]
        x[i] /= l[i, i]
    return x


def cho_solve(l: np.ndarray, b: np.ndarray) -> np.ndarray:
    return solve_upper_t(l, solve_lower(l, b))


def spd_solve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve a x = b for symmetric positive definite a."""
    return cho_solve(cholesky(a), b)


def spd_inverse(a: np.ndarray) -> np.ndarray:
    inv = cho_solve(cholesky(a), np.eye(a.shape[0]))
    return 0.5 * (inv + inv.T)


def sym_eigenvalues(a: np.ndarray, vectors: bool = False) -> EigenResult:
    """All eigenvalues of a symmetric matrix by cyclic Jacobi sweeps.

    Sweeps run until the off-diagonal Frobenius norm drops below
    1e-12 times the Frobenius norm of the input.
    """
    a = _check_symmetric(a)
    p = a.shape[0]
    w = a.copy()
    v = np.eye(p) if vectors else None
    norm = np.linalg.norm(a)
    if norm == 0.0:
        vals = np.zeros(p)
        return EigenResult(vals, np.eye(p) if vectors else None)
    tol = 1e-12 * norm
    for _ in range(100):
        off = math.sqrt(max(np.sum(w * w) - np.sum(np.diag(w) ** 2), 0.0))
        if off <= tol:
            break
        for i in range(p - 1):
            for j in range(i + 1, p):
                if abs(w[i, j]) <= tol / (p * p):
                    continue
                theta = 0.5 * math.atan2(2.0 * w[i, j], w[j, j] - w[i, i])
                c, s = math.cos(theta), math.sin(theta)
                rot_i = c * w[i, :] - s * w[j, :]
                rot_j = s * w[i, :] + c * w[j, :]
                w[i, :], w[j, :] = rot_i, rot_j
                rot_i = c * w[:, i] - s * w[:, j]
                rot_j = s * w[:, i] + c * w[:, j]
                w[:, i], w[:, j] = rot_i, rot_j
                if v is not None:
                    rot_i = c * v[:, i] - s * v[:, j]
                    rot_j = s * v[:, i] + c * v[:, j]
                    v[:, i], v[:, j] = rot_i, rot_j
    vals = np.diag(w).copy()
    idx = np.argsort(-vals, kind="stable")
    vals = vals[idx]
    vecs = v[:, idx] if v is not None else None
    return EigenResult(vals, vecs)


def det_rank1_update(det_a: float, ainv_v: np.ndarray, v: np.ndarray, w: float) -> float:
    """det(A + w v v^T) from det(A) and A^{-1} v via the determinant lemma."""
    if det_a <= 0:
        raise ValueError("det_a must be positive")
    if w < 0:
        raise ValueError("w must be nonnegative")
    return det_a * (1.0 + w * float(np.dot(v, ainv_v)))


def _gamma_p_series(a: float, x: float) -> float:
    # lower regularized gamma by power series; converges fast for x < a + 1
    term = 1.0 / a
    total = term
    k = a
    for _ in range(500):
        k += 1.0
        term *= x / k
        total += term
        if abs(term) < abs(total) * 1e-16:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))

def _gamma_q_contfrac(a: float, x: float) -> float:
    # upper regularized gamma by Lentz continued fraction; for x >= a + 1
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 500):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    return h * math.exp(-x + a * math.log(x) - math.lgamma(a))


def regularized_gamma_p(a: float, x: float) -> float:
    """Lower regularized incomplete gamma P(a, x)."""
    if x < 0 or a <= 0:
        raise ValueError("need x >= 0 and a > 0")
    if x == 0.0:
        return 0.0
    if x < a + 1.0:
        return min(_gamma_p_series(a, x), 1.0)
    return max(1.0 - _gamma_q_contfrac(a, x), 0.0)


def chi2_cdf(x: float, df: int) -> float:
    return regularized_gamma_p(df / 2.0, x / 2.0)


def chi2_quantile(df: int, prob: float) -> float:
    """x with P(chi2(df) <= x) = prob, bisected to 1e-9 in CDF value."""
    if df < 1:
        raise ValueError("df must be >= 1")
    if not 0.0 < prob < 1.0:
        raise InvalidProbability(f"prob must be in (0, 1), got {prob}")
    lo, hi = 0.0, df + 40.0 * math.sqrt(df)
    while chi2_cdf(hi, df) < prob:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        c = chi2_cdf(mid, df)
        if abs(c - prob) <= 1e-9 and hi - lo <= 1e-9 * max(mid, 1.0):
            return mid
        if c < prob:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def pca_transform(x: np.ndarray, keep: list[int]) -> np.ndarray:
    """Project centered data onto selected principal components.

    ``keep`` holds 1-based component numbers; component 1 carries the
    largest variance.  Each component's sign is fixed so its
    largest-magnitude loading is positive.
    """
    x = np.asarray(x, dtype=float)
    n, p = x.shape
    if n <= p:
        raise ValueError("need more rows than columns for PCA")
    keep = list(keep)
    if not keep or min(keep) < 1 or max(keep) > p:
        raise ValueError(f"keep must be a subset of 1..{p}")
    centered = x - x.mean(axis=0)
    cov = centered.T @ centered / (n - 1)
    eig = sym_eigenvalues(cov, vectors=True)
    scale = max(eig.values[0], 0.0)
    rank = int(np.sum(eig.values > 1e-12 * max(scale, 1.0)))
    if rank < max(keep):
        raise DegenerateCovariance(
            f"covariance rank {rank} < requested component {max(keep)}"
        )
    cols = [k - 1 for k in keep]
    basis = eig.vectors[:, cols].copy()
    for j in range(basis.shape[1]):
        pivot = np.argmax(np.abs(basis[:, j]))
        if basis[pivot, j] < 0:
            basis[:, j] = -basis[:, j]
    return centered @ basis
