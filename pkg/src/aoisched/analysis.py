"""Closed-form AoI values, bounds and distributions used as simulation oracles.

A zero arrival rate makes some averages infinite.  Those functions return
``math.inf`` and emit :class:`~aoisched.errors.DivergentAoIWarning` so callers
can tell a divergent value from a large finite one.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DivergentAoIWarning, DomainError, InfeasibleError, InstabilityError


def _rates(lam) -> np.ndarray:
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    if lam.size == 0 or np.any(lam < 0) or np.any(lam > 1):
        raise DomainError(f"arrival rates must lie in [0, 1], got {lam}")
    return lam


def _mean_interarrival(lam: np.ndarray) -> float:
    if np.any(lam == 0):
        warnings.warn("a terminal with zero arrival rate has infinite AoI", DivergentAoIWarning, stacklevel=3)
        return math.inf
    return float(np.mean(1.0 / lam))


def rr_one_avg_aoi(lam) -> float:
    """Time-average AoI of round-robin with one-packet buffers."""
    lam = _rates(lam)
    n = lam.size
    return _mean_interarrival(lam) + (n - 1) / 2


def lower_bounds(lam) -> tuple[float, float]:
    """Collision bound ``(N+1)/2`` and arrival bound ``mean(1/lambda)``."""
    lam = _rates(lam)
    return (lam.size + 1) / 2, _mean_interarrival(lam)


def un_one_floor(n: int) -> float:
    if n < 1:
        raise DomainError("N must be positive")
    return float(n)


@dataclass(frozen=True)
class StationaryDistribution:
    """Probability mass over AoI values ``1..len(pmf)`` plus an exact tail.

    ``pmf[j - 1]`` is the mass at ``j``; everything from ``tail_from`` on is
    summarised by ``tail_mass`` and its first moment ``tail_moment``.
    """

    pmf: np.ndarray
    tail_mass: float
    tail_moment: float
    lam: float
    n_terminals: int

    @property
    def tail_from(self) -> int:
        return len(self.pmf) + 1

    def prob(self, j: int) -> float:
        return float(self.pmf[j - 1]) if 1 <= j <= len(self.pmf) else 0.0

    def total_mass(self) -> float:
        return math.fsum(self.pmf) + self.tail_mass

    def mean(self) -> float:
        j = np.arange(1, len(self.pmf) + 1)
        return math.fsum(j * self.pmf) + self.tail_moment

    def tv_distance(self, empirical) -> float:
        """Total variation to an empirical pmf on ``1..len(empirical)``.

        Entries past ``len(self.pmf)`` are lumped with the analytic tail.
        """
        emp = np.asarray(empirical, dtype=float)
        k = min(len(emp), len(self.pmf))
        head = np.abs(emp[:k] - self.pmf[:k]).sum()
        model_rest = self.pmf[k:].sum() + self.tail_mass
        emp_rest = emp[k:].sum()
        return 0.5 * float(head + abs(model_rest - emp_rest))


def _geom_tail_moments(c: float, q: float, start: int, offset: int) -> tuple[float, float]:
    """Sum of ``c q^(j-offset)`` and ``j c q^(j-offset)`` over ``j >= start``."""
    if q == 0.0:
        return (c, c * start) if start == offset else (0.0, 0.0)
    lead = c * q ** (start - offset)
    mass = lead / (1 - q)
    moment = lead * (start - (start - 1) * q) / (1 - q) ** 2
    return mass, moment


def rr_one_stationary(lam: float, n: int, j_max: int | None = None) -> StationaryDistribution:
    """Per-terminal stationary AoI law under round-robin with one-packet buffers."""
    if not 0 < lam <= 1:
        raise DomainError("arrival rate must lie in (0, 1]")
    if n < 1:
        raise DomainError("N must be positive")
    q = 1.0 - lam
    if j_max is None:
        j_max = n + (int(math.ceil(40 / -math.log(q))) if q > 0 else 0)
    j = np.arange(1, j_max + 1)
    cyc = 1 - q ** n
    pmf = np.where(j <= n, (1 - q ** j) / n, q ** np.maximum(j - n, 0) * cyc / n)

    tail_mass = tail_moment = 0.0
    for jj in range(j_max + 1, n + 1):  # only when the cutoff falls inside the ramp
        p = (1 - q ** jj) / n
        tail_mass += p
        tail_moment += jj * p
    m, mom = _geom_tail_moments(cyc / n, q, max(j_max + 1, n + 1), n)
    return StationaryDistribution(pmf, tail_mass + m, tail_moment + mom, lam, n)


def terminal_age_stationary(lam: float, j_max: int | None = None) -> StationaryDistribution:
    """Geometric law of a one-packet buffer's age, ``lam (1-lam)^(j-1)``."""
    if not 0 < lam <= 1:
        raise DomainError("arrival rate must lie in (0, 1]")
    q = 1.0 - lam
    if j_max is None:
        j_max = 1 + (int(math.ceil(40 / -math.log(q))) if q > 0 else 0)
    j = np.arange(1, j_max + 1)
    pmf = lam * q ** (j - 1)
    m, mom = _geom_tail_moments(lam, q, j_max + 1, 1)
    return StationaryDistribution(pmf, m, mom, lam, 1)


def paoi_formula(lam: float, beta: float) -> float:
    """Mean peak AoI of one FCFS queue served at deterministic rate ``beta``."""
    if not lam > 0:
        raise DomainError("arrival rate must be positive")
    if not beta > lam:
        raise InstabilityError(f"service rate {beta} does not exceed arrival rate {lam}")
    return 1 / lam + 0.5 * (1 / (beta - lam) + 1 / beta)


def heavy_traffic_beta(lam) -> tuple[np.ndarray, float]:
    """Equal-slack rates ``lambda_n + eps/N`` and the mean peak AoI they achieve."""
    lam = np.asarray(lam, dtype=float)
    if np.any(lam <= 0):
        raise DomainError("arrival rates must be positive")
    n = lam.size
    eps = 1.0 - lam.sum()
    if eps <= 0:
        raise InfeasibleError(f"total arrival rate {lam.sum()} leaves no slack")
    beta = eps / n + lam
    value = float(np.mean(1 / lam + 0.5 * (n / eps + 1 / beta)))
    return beta, value


@dataclass(frozen=True)
class CounterexampleParams:
    """Two-terminal, two-slot instance where greedy scheduling is not optimal.

    Terminal 1 receives packets with probability ``delta`` and terminal 2
    with ``1 - delta``; ``gains`` are the AoI reductions the packets held at
    time zero would give and ``aoi`` the AoIs at time zero.
    """

    delta: float
    gains: tuple
    aoi: tuple

    def __post_init__(self):
        g1, g2 = self.gains
        h1, h2 = self.aoi
        if not 0 < self.delta < 1:
            raise DomainError("delta must lie in (0, 1)")
        if not g2 / 2 < g1 < g2:
            raise DomainError("need g2/2 < g1 < g2")
        if not h2 - g2 > h1:
            raise DomainError("need h2 - g2 > h1")


def counterexample_constant(p: CounterexampleParams) -> float:
    return 0.5 * (p.aoi[0] + p.aoi[1]) + 1.5


def counterexample_myopic(p: CounterexampleParams) -> float:
    """Expected two-slot average AoI when the larger gain is served first.

    Summed outcome by outcome: both arrive, only terminal 1, neither, only
    terminal 2.  The collapsed polynomial sometimes quoted for this value
    drops the ``-delta (h2 + 1 - 2 g2)`` term and is not used.
    """
    d = p.delta
    g1, g2 = p.gains
    h1, h2 = p.aoi
    return counterexample_constant(p) - 0.25 * (
        g2
        + d * (1 - d) * (h2 + 1)
        + d * d * (g2 + h1 + 1)
        + d * (1 - d) * (g1 + g2)
        + (1 - d) ** 2 * (h2 + 1)
    )


def counterexample_alternative(p: CounterexampleParams) -> float:
    """Expected two-slot average AoI when terminal 1 is served first, then terminal 2."""
    d = p.delta
    g1, g2 = p.gains
    h1, h2 = p.aoi
    return counterexample_constant(p) - 0.25 * (2 * g1 + h2 + 1 - d * (h2 + 1 - g2))


def counterexample_gap(p: CounterexampleParams) -> float:
    """Greedy-first value minus terminal-1-first value; positive means greedy loses."""
    return counterexample_myopic(p) - counterexample_alternative(p)


def enumerate_two_slot(p: CounterexampleParams, first=None, second=None) -> float:
    """Brute-force expected two-slot average AoI over all arrival outcomes.

    Slot 1 serves terminal ``first`` (0-based) from the packets held at time
    zero; arrivals are then drawn and slot 2 serves ``second``.  Either may
    be None for the greedy rule (largest AoI reduction, ties to the smaller
    index).  A delivered packet sets the AoI to its age; ages are
    tracked as ``h - g`` at time zero and a fresh arrival delivered next slot
    brings the AoI to one.
    """
    lam = (p.delta, 1 - p.delta)
    h0 = list(p.aoi)
    age = [h - g for h, g in zip(p.aoi, p.gains)]  # age at time zero, may be notional

    if first is None:
        first = 0 if p.gains[0] >= p.gains[1] else 1
    h1 = [h0[0] + 1, h0[1] + 1]
    held = [True, True]
    h1[first] = age[first] + 1
    held[first] = False
    age1 = [a + 1 for a in age]

    total = 0.0
    for arrivals in itertools.product((0, 1), repeat=2):
        prob = 1.0
        for i in range(2):
            prob *= lam[i] if arrivals[i] else 1 - lam[i]
        if prob == 0.0:
            continue
        pkt = [None, None]
        for i in range(2):
            if arrivals[i]:
                pkt[i] = 0
            elif held[i]:
                pkt[i] = age1[i]
        after = [h1[i] + 1 if pkt[i] is None else pkt[i] + 1 for i in range(2)]
        if second is None:
            gains = [h1[i] + 1 - after[i] for i in range(2)]
            pick = 0 if gains[0] >= gains[1] else 1
        else:
            pick = second
        h2 = [h1[0] + 1, h1[1] + 1]
        h2[pick] = after[pick]
        total += prob * (h1[0] + h1[1] + h2[0] + h2[1]) / 4
    return total
