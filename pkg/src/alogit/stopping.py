"""Sequential stopping rule and fixed-size confidence ellipsoid.

The monitored quantity nu_n is the largest eigenvalue of the masked
inverse information matrix scaled by the growth function rho(n); the
rule stops as soon as nu_n <= rho(n) d^2 / a_n^2, where a_n^2 is the
(1 - alpha) chi-square quantile at the currently estimated support
size.  At that moment the longest semi-axis of the confidence
ellipsoid is no greater than d.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import NoSelectedVariables, ZeroSupport
from .numerics import chi2_quantile, spd_inverse, sym_eigenvalues

GROWTH_FUNCTIONS: dict[str, Callable[[int], float]] = {
    "n": lambda n: float(n),
}


def resolve_growth(rho_fn) -> Callable[[int], float]:
    if callable(rho_fn):
        return rho_fn
    try:
        return GROWTH_FUNCTIONS[rho_fn]
    except KeyError:
        raise ValueError(f"unknown growth function {rho_fn!r}") from None


@dataclass(frozen=True)
class StoppingConfig:
    """Half-length bound d, coverage level, initial size, growth id."""

    d: float = 0.5
    alpha: float = 0.05
    n0: int = 20
    rho_fn: str = "n"

    def __post_init__(self):
        if self.d <= 0:
            raise ValueError("d must be positive")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must be in (0, 1)")
        if self.n0 < 1:
            raise ValueError("n0 must be >= 1")
        resolve_growth(self.rho_fn)


@dataclass(frozen=True)
class StoppingState:
    nu_n: float
    a_n_sq: float
    threshold: float
    stopped: bool
    kappa: float | None = None


def shrunk_inverse(fisher: np.ndarray, ind: np.ndarray) -> np.ndarray:
    """Full inverse of the information matrix with dropped rows/columns zeroed.

    Equals the partitioned form: the selected block holds the inverse of
    the selected-variable information adjusted for the dropped block,
    and everything else is zero.
    """
    ind = np.asarray(ind)
    if not np.any(ind == 1):
        raise NoSelectedVariables("all indicators are zero")
    inv = spd_inverse(np.asarray(fisher, dtype=float))
    mask = ind == 1
    out = inv.copy()
    out[~mask, :] = 0.0
    out[:, ~mask] = 0.0
    return out


def nu_n(fisher: np.ndarray, ind: np.ndarray, n: int, rho_fn="n") -> float:
    """rho(n) times the largest eigenvalue of the masked inverse information."""
    growth = resolve_growth(rho_fn)
    masked = shrunk_inverse(fisher, ind)
    return growth(n) * float(sym_eigenvalues(masked).values[0])


def should_stop(nu: float, n: int, p0_hat: int, cfg: StoppingConfig) -> StoppingState:
    """Evaluate the stopping inequality at the current stage."""
    if p0_hat < 1:
        raise ZeroSupport("stopping rule undefined at p0_hat = 0")
    if n < cfg.n0:
        raise ValueError(f"n={n} below initial size n0={cfg.n0}")
    a_sq = chi2_quantile(p0_hat, 1.0 - cfg.alpha)
    threshold = resolve_growth(cfg.rho_fn)(n) * cfg.d**2 / a_sq
    return StoppingState(
        nu_n=float(nu),
        a_n_sq=a_sq,
        threshold=threshold,
        stopped=bool(nu <= threshold),
    )


def selected_block_information(fisher: np.ndarray, ind: np.ndarray) -> np.ndarray:
    """Inverse of the selected block of the masked inverse information.

    This is the quadratic-form matrix of the confidence ellipsoid,
    restricted to the selected coordinates (in ascending index order).
    """
    masked = shrunk_inverse(fisher, ind)
    sel = np.flatnonzero(np.asarray(ind) == 1)
    block = masked[np.ix_(sel, sel)]
    return spd_inverse(block)


def ellipsoid_contains(
    z: np.ndarray,
    beta_hat_sel: np.ndarray,
    sigma11_tilde: np.ndarray,
    nu: float,
    n: int,
    d: float,
    ind: np.ndarray,
    rho_fn="n",
) -> bool:
    """Whether z lies in the closed confidence ellipsoid.

    Requires z to vanish exactly on every dropped coordinate and the
    quadratic form over the selected coordinates to satisfy
    S / rho(n) <= d^2 / nu.
    """
    z = np.asarray(z, dtype=float)
    ind = np.asarray(ind)
    sel = ind == 1
    if np.any(z[~sel] != 0.0):
        return False
    diff = z[sel] - np.asarray(beta_hat_sel, dtype=float)
    s = float(diff @ sigma11_tilde @ diff)
    return s / resolve_growth(rho_fn)(n) <= d**2 / nu


def max_semi_axis(
    sigma11_tilde: np.ndarray, nu: float, n: int, d: float, rho_fn="n"
) -> float:
    """Longest semi-axis of the ellipsoid {S/rho(n) <= d^2/nu}; <= d at stopping."""
    lam_min = float(sym_eigenvalues(sigma11_tilde).values[-1])
    radius_sq = resolve_growth(rho_fn)(n) * d**2 / nu
    return float(np.sqrt(radius_sq / lam_min))


def kappa(n_stop: int, d: float, a_sq: float, nu: float) -> float:
    """Efficiency diagnostic d^2 N / (a^2 nu); tends to 1 as d shrinks."""
    if min(n_stop, d, a_sq, nu) <= 0:
        raise ValueError("all arguments must be positive")
    return d * d * n_stop / (a_sq * nu)
