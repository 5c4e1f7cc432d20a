"""Subject selection: determinant ranking plus uncertainty sampling.

Candidates are scored by how much each would grow the determinant of
the information matrix (one Cholesky of the current matrix, then the
matrix determinant lemma per candidate).  The top fraction rho forms
the uncertainty set, from which the subject whose predicted probability
sits closest to the target wins.  All ties break by ascending pool
index so selection is deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptyUncertaintySet
from .glm import mu, mu_dot
from .numerics import cholesky, solve_lower


@dataclass(frozen=True)
class ClusterPrefilter:
    """Optional k-means acceleration of the candidate scan."""

    k: int
    refresh_every: int = 50

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.refresh_every < 1:
            raise ValueError("refresh_every must be >= 1")


@dataclass(frozen=True)
class SelectionConfig:
    rho: float = 0.1
    p_target: float = 0.5
    cluster_prefilter: ClusterPrefilter | None = None

    def __post_init__(self):
        if not 0.0 < self.rho <= 1.0:
            raise ValueError("rho must be in (0, 1]")
        if not 0.0 < self.p_target < 1.0:
            raise ValueError("p_target must be in (0, 1)")


@dataclass(frozen=True)
class Candidate:
    pool_index: int
    d_score: float
    u_score: float


def d_scores(b: np.ndarray, fisher: np.ndarray, beta_hat: np.ndarray) -> np.ndarray:
    """det(F + mu_dot(x' beta) x x') for each candidate row x of b.

    Computed as det(F) * (1 + w * x' F^{-1} x) with a single Cholesky
    factorization, which reproduces the brute-force determinant ordering
    exactly.
    """
    b = np.atleast_2d(np.asarray(b, dtype=float))
    l = cholesky(fisher)
    det_f = float(np.prod(np.diag(l)) ** 2)
    w = mu_dot(b @ np.asarray(beta_hat, dtype=float))
    z = solve_lower(l, b.T)
    leverage = np.sum(z * z, axis=0)
    return det_f * (1.0 + w * leverage)


def uncertainty_set(scored: np.ndarray, rho: float) -> np.ndarray:
    """Positions of the ceil(rho * len) largest scores, descending."""
    scored = np.asarray(scored, dtype=float)
    if scored.size == 0:
        raise ValueError("scored must be nonempty")
    if not 0.0 < rho <= 1.0:
        raise ValueError("rho must be in (0, 1]")
    k = math.ceil(rho * scored.size)
    order = np.lexsort((np.arange(scored.size), -scored))
    return order[:k]


def select_next(
    u_set: np.ndarray, b: np.ndarray, beta_hat: np.ndarray, p_t: float
) -> int:
    """Candidate in u_set whose predicted probability is nearest p_t."""
    u_set = np.asarray(u_set, dtype=int)
    if u_set.size == 0:
        raise EmptyUncertaintySet("uncertainty set is empty")
    probs = mu(b[u_set] @ np.asarray(beta_hat, dtype=float))
    u = np.abs(np.atleast_1d(probs) - p_t)
    best = np.lexsort((u_set, u))[0]
    return int(u_set[best])


def candidate_scores(
    b: np.ndarray,
    fisher: np.ndarray,
    beta_hat: np.ndarray,
    cfg: SelectionConfig,
) -> tuple[int, list[Candidate]]:
    """Two-stage scan over all rows of b; returns (winner position, ranked set)."""
    scores = d_scores(b, fisher, beta_hat)
    top = uncertainty_set(scores, cfg.rho)
    winner = select_next(top, b, beta_hat, cfg.p_target)
    probs = mu(np.atleast_1d(b[top] @ np.asarray(beta_hat, dtype=float)))
    ranked = [
        Candidate(int(i), float(scores[i]), float(abs(pr - cfg.p_target)))
        for i, pr in zip(top, probs)
    ]
    return winner, ranked


def kmeans(
    x: np.ndarray, k: int, seed: int, max_iter: int = 50
) -> tuple[np.ndarray, np.ndarray]:
    """Lloyd's algorithm with seeded k-means++ starts.

    Returns (assignment, centers).  Deterministic for a fixed seed.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    if n < k:
        raise ValueError(f"need at least k={k} points, got {n}")
    rng = np.random.default_rng(seed)

    centers = np.empty((k, x.shape[1]))
    centers[0] = x[rng.integers(n)]
    d2 = np.sum((x - centers[0]) ** 2, axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0:
            centers[j] = x[rng.integers(n)]
        else:
            centers[j] = x[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, np.sum((x - centers[j]) ** 2, axis=1))

    assignment = np.zeros(n, dtype=int)
    for _ in range(max_iter):
        dists = (
            np.sum(x * x, axis=1)[:, None]
            - 2.0 * x @ centers.T
            + np.sum(centers * centers, axis=1)[None, :]
        )
        new_assignment = np.argmin(dists, axis=1)
        if np.array_equal(new_assignment, assignment) and _ > 0:
            break
        assignment = new_assignment
        for j in range(k):
            members = x[assignment == j]
            if len(members):
                centers[j] = members.mean(axis=0)
    return assignment, centers


def cluster_prefilter(b: np.ndarray, k: int, seed: int) -> np.ndarray:
    """Cluster assignment for the candidate pool (covariates only)."""
    assignment, _ = kmeans(b, k, seed)
    return assignment


def cluster_representatives(
    b: np.ndarray, assignment: np.ndarray, centers: np.ndarray
) -> np.ndarray:
    """Position of the point nearest each centroid (empty clusters skipped)."""
    reps = []
    for j in range(centers.shape[0]):
        members = np.flatnonzero(assignment == j)
        if members.size == 0:
            continue
        d2 = np.sum((b[members] - centers[j]) ** 2, axis=1)
        reps.append(int(members[np.argmin(d2)]))
    return np.array(sorted(reps), dtype=int)
