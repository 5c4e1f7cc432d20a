"""Adaptive shrinkage of the MLE: eigenvalue ratio, indicators, masking.

A coefficient survives when sqrt(L) * lambda(n) * |coef|^(-gamma) stays
below the threshold epsilon; the shrunk estimate zeroes the rest and the
surviving count estimates the true support size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import IllConditioned
from .numerics import sym_eigenvalues


@dataclass(frozen=True)
class ShrinkageConfig:
    """Threshold epsilon, exponent gamma and schedule lambda(n) = c * n^(-a).

    The exponent a must sit in (1/2, 1/2 + gamma/2) so that some
    delta < 1/2 makes the schedule admissible.
    """

    epsilon: float = 0.5
    gamma: float = 2.0
    lambda_scale: float = 1.0
    lambda_exponent: float = 0.75

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if self.lambda_scale <= 0:
            raise ValueError("lambda_scale must be positive")
        if not 0.5 < self.lambda_exponent < 0.5 + 0.5 * self.gamma:
            raise ValueError(
                "lambda_exponent must lie in (1/2, 1/2 + gamma/2), got "
                f"{self.lambda_exponent}"
            )

    def lambda_at(self, n: int) -> float:
        return self.lambda_scale * float(n) ** (-self.lambda_exponent)


@dataclass(frozen=True)
class ShrinkageState:
    """L, the indicator vector, the shrunk coefficients and support size."""

    L: float
    indicators: np.ndarray
    beta_hat: np.ndarray
    p0_hat: int


def compute_L(fisher: np.ndarray) -> float:
    """nu_min / log(nu_max) of the information matrix."""
    values = sym_eigenvalues(fisher).values
    nu_max, nu_min = float(values[0]), float(values[-1])
    if nu_min <= 0.0 or nu_max <= 1.0:
        raise IllConditioned(f"nu_min={nu_min:.3e}, nu_max={nu_max:.3e}")
    return nu_min / math.log(nu_max)


def indicators(
    beta_tilde: np.ndarray, L: float, n: int, cfg: ShrinkageConfig
) -> np.ndarray:
    """Per-coordinate keep/drop flags; an exact zero coefficient drops."""
    if L <= 0:
        raise ValueError("L must be positive")
    beta_tilde = np.asarray(beta_tilde, dtype=float)
    lam = cfg.lambda_at(n)
    stat = np.full(beta_tilde.shape, np.inf)
    nonzero = beta_tilde != 0.0
    stat[nonzero] = math.sqrt(L) * lam * np.abs(beta_tilde[nonzero]) ** (-cfg.gamma)
    return (stat < cfg.epsilon).astype(np.int8)


def ase(beta_tilde: np.ndarray, ind: np.ndarray) -> tuple[np.ndarray, int]:
    """Componentwise mask of the MLE; returns (beta_hat, p0_hat)."""
    beta_tilde = np.asarray(beta_tilde, dtype=float)
    ind = np.asarray(ind)
    if beta_tilde.shape != ind.shape:
        raise ValueError("beta_tilde and indicators must have equal length")
    beta_hat = np.where(ind == 1, beta_tilde, 0.0)
    return beta_hat, int(np.sum(ind == 1))


def apply_shrinkage(
    beta_tilde: np.ndarray, fisher: np.ndarray, n: int, cfg: ShrinkageConfig
) -> ShrinkageState:
    """Full pipeline: L from the information matrix, indicators, mask."""
    L = compute_L(fisher)
    ind = indicators(beta_tilde, L, n, cfg)
    beta_hat, p0_hat = ase(beta_tilde, ind)
    return ShrinkageState(L=L, indicators=ind, beta_hat=beta_hat, p0_hat=p0_hat)
