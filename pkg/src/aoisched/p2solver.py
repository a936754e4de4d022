"""Optimal deterministic service rates for FCFS queues (mean peak AoI).

Minimises ``(1/N) sum_n f_n(beta_n)`` with
``f_n(b) = 1/lam_n + (1/(b - lam_n) + 1/b) / 2`` subject to ``beta_n > lam_n``
and ``sum beta_n = 1``.  The objective is separable and strictly convex, so
at the optimum ``phi_n(beta_n) = (beta_n - lam_n)^-2 + beta_n^-2`` takes one
common value ``2 nu``.  For a given ``nu`` each ``beta_n`` is found by
bisection (``phi_n`` is strictly decreasing); an outer bisection on
``log nu`` then matches the rate budget.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleError, InstabilityError, NonConvergenceError

FEASIBILITY_MARGIN = 1e-9


@dataclass(frozen=True)
class P2Instance:
    lam: tuple
    tolerance: float = 1e-10
    bracket: tuple = (1e-12, 1e30)  # search range for nu
    max_outer: int = 200
    max_inner: int = 200

    def __post_init__(self):
        object.__setattr__(self, "lam", tuple(float(x) for x in self.lam))
        lam = np.asarray(self.lam)
        if lam.size == 0 or np.any(lam <= 0):
            raise InfeasibleError("arrival rates must be positive")
        if lam.sum() > 1 - FEASIBILITY_MARGIN:
            raise InfeasibleError(f"total arrival rate {lam.sum():.12g} leaves no room for stable service")


@dataclass(frozen=True)
class P2Solution:
    beta: np.ndarray
    objective: float
    multiplier: float  # nu; the common stationarity value is 2 nu
    iterations: int

    @property
    def intervals(self) -> np.ndarray:
        return 1.0 / self.beta


def p2_objective(lam, beta) -> float:
    lam = np.asarray(lam, dtype=float)
    beta = np.asarray(beta, dtype=float)
    if np.any(beta <= lam):
        raise InstabilityError("every service rate must exceed its arrival rate")
    return float(np.mean(1 / lam + 0.5 * (1 / (beta - lam) + 1 / beta)))


def stationarity(lam, beta) -> np.ndarray:
    lam = np.asarray(lam, dtype=float)
    beta = np.asarray(beta, dtype=float)
    return (beta - lam) ** -2 + beta ** -2


def _rates_for(nu: float, lam: np.ndarray, max_inner: int) -> tuple[np.ndarray, int]:
    """Solve ``phi_n(beta) = 2 nu`` for every n by vectorised bisection."""
    lo = lam.copy()
    # phi(lam + 1/sqrt(nu)) <= nu + nu, so the root lies below this
    hi = lam + 1.0 / np.sqrt(nu)
    target = 2.0 * nu
    for it in range(1, max_inner + 1):
        mid = 0.5 * (lo + hi)
        above = stationarity(lam, mid) > target
        lo = np.where(above, mid, lo)
        hi = np.where(above, hi, mid)
        if np.all(hi - lo <= 2 * np.spacing(hi)):
            break
    return 0.5 * (lo + hi), it


def solve_p2(inst: P2Instance) -> P2Solution:
    lam = np.asarray(inst.lam)
    log_lo, log_hi = np.log(inst.bracket[0]), np.log(inst.bracket[1])
    total_iter = 0

    def budget(log_nu):
        nonlocal total_iter
        beta, k = _rates_for(float(np.exp(log_nu)), lam, inst.max_inner)
        total_iter += k
        return beta, beta.sum() - 1.0

    beta_lo, excess_lo = budget(log_lo)  # small nu -> large rates
    beta_hi, excess_hi = budget(log_hi)
    if excess_lo < 0 or excess_hi > 0:
        raise NonConvergenceError("multiplier bracket does not contain the solution")

    for outer in range(1, inst.max_outer + 1):
        mid = 0.5 * (log_lo + log_hi)
        beta, excess = budget(mid)
        if abs(excess) <= inst.tolerance:
            break
        if excess > 0:
            log_lo = mid
        else:
            log_hi = mid
        if mid in (log_lo, log_hi) and log_hi - log_lo <= 4 * np.spacing(abs(mid) + 1):
            break
    else:
        raise NonConvergenceError(
            f"rate budget residual {abs(excess):.3g} above tolerance after {inst.max_outer} iterations",
            residual=abs(excess), iterations=inst.max_outer,
        )
    if abs(excess) > inst.tolerance:
        raise NonConvergenceError(
            f"rate budget residual {abs(excess):.3g} above tolerance at floating-point resolution",
            residual=abs(excess), iterations=outer,
        )
    nu = float(np.exp(mid))
    return P2Solution(beta=beta, objective=p2_objective(lam, beta), multiplier=nu, iterations=total_iter)


def kkt_residual(sol: P2Solution, lam) -> float:
    two_nu = 2 * sol.multiplier
    return float(np.max(np.abs(stationarity(lam, sol.beta) - two_nu)) / two_nu)
