"""Logistic model evaluation and maximum-likelihood fitting.

The fit is Newton-Raphson (IRLS) with step halving, warm-startable so
the sequential loop can refit cheaply after every new label.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NotPositiveDefinite, OneClassOnly, SingularInformation
from .numerics import cholesky, cho_solve

SCORE_TOL = 1e-8
MAX_ITER = 100
MAX_HALVINGS = 20
SEPARATION_BOUND = 30.0


@dataclass(frozen=True)
class FitResult:
    """MLE output: coefficients, Fisher information and diagnostics."""

    beta_tilde: np.ndarray
    fisher: np.ndarray
    loglik: float
    iterations: int
    converged: bool
    separation_flag: bool


def mu(t):
    """Logistic response exp(t)/(1+exp(t)), overflow-safe for any t."""
    t = np.asarray(t, dtype=float)
    out = np.empty_like(t)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    e = np.exp(t[~pos])
    out[~pos] = e / (1.0 + e)
    if out.ndim == 0:
        return float(out)
    return out


def mu_dot(t):
    """Logistic density mu(t) * (1 - mu(t)), an even function, max 0.25."""
    t = np.asarray(t, dtype=float)
    e = np.exp(-np.abs(t))
    out = e / (1.0 + e) ** 2
    if out.ndim == 0:
        return float(out)
    return out


def log_likelihood(beta: np.ndarray, x: np.ndarray, y: np.ndarray) -> float:
    eta = x @ beta
    return float(np.sum(y * eta - np.logaddexp(0.0, eta)))


def fisher_info(beta: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Weighted Gram matrix sum_i mu_dot(x_i' beta) x_i x_i'."""
    w = mu_dot(x @ np.asarray(beta, dtype=float))
    return x.T @ (x * w[:, None])


def fit_mle(
    x: np.ndarray,
    y: np.ndarray,
    init: np.ndarray | None = None,
) -> FitResult:
    """Maximize the logistic likelihood by damped Newton-Raphson.

    Iterates until the score's max-norm falls below 1e-8 or 100
    iterations pass.  A step that would lower the log-likelihood is
    halved up to 20 times.  When the coefficient max-norm exceeds 30
    (quasi-complete separation) the fit stops and flags it rather than
    failing: further sampling normally resolves separation.

    Raises OneClassOnly for constant y, SingularInformation when the
    weighted Gram matrix is not positive definite at some iterate.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = x.shape
    if n < p:
        raise ValueError(f"need n >= p, got n={n} p={p}")
    if np.all(y == y[0]):
        raise OneClassOnly("labels contain a single class")

    beta = np.zeros(p) if init is None else np.array(init, dtype=float)
    loglik = log_likelihood(beta, x, y)
    converged = False
    separated = False
    iterations = 0
    for iterations in range(1, MAX_ITER + 1):
        eta = x @ beta
        score = x.T @ (y - mu(eta))
        if np.max(np.abs(score)) <= SCORE_TOL:
            converged = True
            iterations -= 1
            break
        w = mu_dot(eta)
        gram = x.T @ (x * w[:, None])
        try:
            step = cho_solve(cholesky(gram), score)
        except NotPositiveDefinite as exc:
            raise SingularInformation(str(exc)) from exc
        scale = 1.0
        accepted = False
        for _ in range(MAX_HALVINGS + 1):
            candidate = beta + scale * step
            cand_ll = log_likelihood(candidate, x, y)
            if cand_ll >= loglik:
                beta, loglik = candidate, cand_ll
                accepted = True
                break
            scale *= 0.5
        if not accepted:
            break  # stuck at a flat point; report unconverged
        if np.max(np.abs(beta)) > SEPARATION_BOUND:
            separated = True
            break

    if not converged:
        score = x.T @ (y - mu(x @ beta))
        converged = bool(np.max(np.abs(score)) <= SCORE_TOL)
    separated = separated or bool(np.max(np.abs(beta)) > SEPARATION_BOUND)
    return FitResult(
        beta_tilde=beta,
        fisher=fisher_info(beta, x),
        loglik=loglik,
        iterations=iterations,
        converged=converged,
        separation_flag=separated,
    )
