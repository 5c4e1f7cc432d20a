"""Independent brute-force oracles used to freeze expected test values.

Nothing here shares code with the package: determinants go through
cofactor expansion, eigenvalues through characteristic-polynomial
bisection, the chi-square CDF through a pure power series, and AUC
through the O(n^2) pairwise definition.
"""

import math

import numpy as np


def cofactor_det(a) -> float:
    """Determinant by recursive cofactor expansion along the first row."""
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    if n == 0:
        return 1.0
    if n == 1:
        return float(a[0, 0])
    if n == 2:
        return float(a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0])
    total = 0.0
    for j in range(n):
        minor = np.delete(np.delete(a, 0, axis=0), j, axis=1)
        total += ((-1.0) ** j) * a[0, j] * cofactor_det(minor)
    return total


def adjugate_inverse(a) -> np.ndarray:
    """Inverse via the adjugate / cofactor matrix."""
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    det = cofactor_det(a)
    cof = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            minor = np.delete(np.delete(a, i, axis=0), j, axis=1)
            cof[i, j] = ((-1.0) ** (i + j)) * cofactor_det(minor)
    return cof.T / det


def charpoly_eigenvalues(a, tol=1e-12) -> np.ndarray:
    """Eigenvalues of a symmetric matrix as bisected roots of det(A - x I).

    Assumes distinct roots (almost sure for random matrices); returns
    them sorted descending.
    """
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    radius = float(np.max(np.sum(np.abs(a), axis=1))) + 1.0

    def poly(x):
        return cofactor_det(a - x * np.eye(n))

    grid = np.linspace(-radius, radius, 4001)
    values = [poly(x) for x in grid]
    roots = []
    for lo, hi, flo, fhi in zip(grid[:-1], grid[1:], values[:-1], values[1:]):
        if flo == 0.0:
            roots.append(lo)
            continue
        if flo * fhi < 0:
            left, right, fleft = lo, hi, flo
            for _ in range(200):
                mid = 0.5 * (left + right)
                fmid = poly(mid)
                if fmid == 0.0 or right - left < tol * max(1.0, abs(mid)):
                    break
                if fleft * fmid < 0:
                    right = mid
                else:
                    left, fleft = mid, fmid
            roots.append(0.5 * (left + right))
    assert len(roots) == n, f"found {len(roots)} roots, expected {n}"
    return np.array(sorted(roots, reverse=True))


def series_gamma_cdf(a: float, x: float, terms: int = 2000) -> float:
    """Lower regularized incomplete gamma by the plain power series."""
    if x <= 0:
        return 0.0
    total = 0.0
    term = 1.0 / a
    k = a
    for _ in range(terms):
        total += term
        k += 1.0
        term *= x / k
        if term < 1e-18 * total:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def chi2_quantile_bisect(df: int, prob: float) -> float:
    """Quantile by bisecting the series CDF on a wide bracket."""
    lo, hi = 0.0, 400.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if series_gamma_cdf(df / 2.0, mid / 2.0) < prob:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def pairwise_auc(scores, labels) -> float:
    """O(n^2) Mann-Whitney: concordant pairs plus half the ties."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=int)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    total = 0.0
    for sp in pos:
        for sn in neg:
            if sp > sn:
                total += 1.0
            elif sp == sn:
                total += 0.5
    return total / (len(pos) * len(neg))


def exhaustive_two_stage(rows, fisher, beta_hat, rho, p_t):
    """Reference selection: full determinants, then argmin |mu - p_t|.

    Returns the row position selected among ``rows``.
    """
    rows = np.asarray(rows, dtype=float)
    n = rows.shape[0]
    dets = []
    for i in range(n):
        t = float(rows[i] @ beta_hat)
        w = math.exp(-abs(t)) / (1.0 + math.exp(-abs(t))) ** 2
        dets.append(cofactor_det(fisher + w * np.outer(rows[i], rows[i])))
    order = sorted(range(n), key=lambda i: (-dets[i], i))
    k = math.ceil(rho * n)
    top = order[:k]
    best = None
    best_u = None
    for i in sorted(top):
        t = float(rows[i] @ beta_hat)
        prob = 1.0 / (1.0 + math.exp(-t))
        u = abs(prob - p_t)
        if best_u is None or u < best_u:
            best, best_u = i, u
    return best


def numeric_hessian(f, x0, h=1e-5):
    """Central-difference Hessian of a scalar function."""
    x0 = np.asarray(x0, dtype=float)
    p = len(x0)
    hess = np.empty((p, p))
    for i in range(p):
        for j in range(p):
            xpp = x0.copy(); xpp[i] += h; xpp[j] += h
            xpm = x0.copy(); xpm[i] += h; xpm[j] -= h
            xmp = x0.copy(); xmp[i] -= h; xmp[j] += h
            xmm = x0.copy(); xmm[i] -= h; xmm[j] -= h
            hess[i, j] = (f(xpp) - f(xpm) - f(xmp) + f(xmm)) / (4.0 * h * h)
    return hess


def partitioned_masked_inverse(fisher, ind):
    """Masked inverse via the explicit block-partition identities."""
    fisher = np.asarray(fisher, dtype=float)
    ind = np.asarray(ind)
    sel = np.flatnonzero(ind == 1)
    drop = np.flatnonzero(ind == 0)
    s11 = fisher[np.ix_(sel, sel)]
    out = np.zeros_like(fisher)
    if drop.size == 0:
        out[np.ix_(sel, sel)] = np.linalg.inv(s11)
        return out
    s12 = fisher[np.ix_(sel, drop)]
    s21 = fisher[np.ix_(drop, sel)]
    s22 = fisher[np.ix_(drop, drop)]
    s11_inv = np.linalg.inv(s11)
    schur = s22 - s21 @ s11_inv @ s12
    block = s11_inv + s11_inv @ s12 @ np.linalg.inv(schur) @ s21 @ s11_inv
    out[np.ix_(sel, sel)] = block
    return out
