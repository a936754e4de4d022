"""Scheduling policies behind a single decision interface.

Each ``*_decide`` function is a pure rule over the observables that policy is
allowed to read; :func:`make_scheduler` wraps one in a small stateful object
that the reference simulator calls once per slot.  Ties always go to the
smallest terminal index.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError


class PolicyName(str, enum.Enum):
    RR_ONE = "rr_one"
    UN_ONE = "un_one"
    AGE_GREEDY = "age_greedy"
    MYOPIC_GSI = "myopic_gsi"
    RR_LAMBDA = "rr_lambda"
    FIXED_SEQUENCE = "fixed_sequence"


# what each policy is allowed to look at
OBSERVABLES = {
    PolicyName.RR_ONE: frozenset({"since_service"}),
    PolicyName.UN_ONE: frozenset(),
    PolicyName.AGE_GREEDY: frozenset({"aoi"}),
    PolicyName.MYOPIC_GSI: frozenset({"aoi", "head_ages", "lam"}),
    PolicyName.RR_LAMBDA: frozenset({"t"}),
    PolicyName.FIXED_SEQUENCE: frozenset({"t"}),
}


@dataclass(frozen=True)
class PolicyKind:
    name: PolicyName
    rates: tuple | None = None  # RR_LAMBDA service rates
    slots: tuple | None = None  # FIXED_SEQUENCE terminal order

    def __post_init__(self):
        object.__setattr__(self, "name", PolicyName(self.name))
        if self.name is PolicyName.RR_LAMBDA:
            if self.rates is None:
                raise ConfigError("rr_lambda needs a rate vector")
            object.__setattr__(self, "rates", tuple(float(b) for b in self.rates))
        if self.name is PolicyName.FIXED_SEQUENCE:
            if not self.slots:
                raise ConfigError("fixed_sequence needs a non-empty slot list")
            object.__setattr__(self, "slots", tuple(int(s) for s in self.slots))

    def validate(self, lam: Sequence[float]):
        n = len(lam)
        if self.name is PolicyName.RR_LAMBDA:
            beta = np.asarray(self.rates)
            if len(beta) != n:
                raise ConfigError(f"rr_lambda has {len(beta)} rates for {n} terminals")
            if np.any(beta <= 0) or beta.sum() > 1 + 1e-9:
                raise ConfigError("rr_lambda rates must be positive and sum to at most 1")
        if self.name is PolicyName.FIXED_SEQUENCE:
            bad = [s for s in self.slots if not 0 <= s < n]
            if bad:
                raise ConfigError(f"fixed_sequence has invalid terminal indices {bad}")

    def is_stable_for(self, lam: Sequence[float]) -> bool:
        """Whether every FCFS queue would be served faster than it fills."""
        if self.name is not PolicyName.RR_LAMBDA:
            return True
        return all(b > l for b, l in zip(self.rates, lam))


def rr_lambda(rates):
    return PolicyKind(PolicyName.RR_LAMBDA, rates=tuple(rates))


def fixed_sequence(slots):
    return PolicyKind(PolicyName.FIXED_SEQUENCE, slots=tuple(slots))


def parse_policy(name: str, rates=None, slots=None) -> PolicyKind:
    try:
        pname = PolicyName(name)
    except ValueError:
        raise ConfigError(f"unknown policy {name!r}") from None
    return PolicyKind(pname, rates=rates, slots=slots)


def _first_argmax(values) -> int:
    return int(np.argmax(np.asarray(values)))  # numpy returns the first maximum


def rr_one_decide(since_service) -> int:
    return _first_argmax(since_service)


def un_one_decide(u: float, n: int) -> int:
    return min(int(u * n), n - 1)


def age_greedy_decide(aoi) -> int:
    return _first_argmax(aoi)


def myopic_gain(aoi, head_ages, lam) -> np.ndarray:
    """Expected drop in next-slot AoI from scheduling each terminal.

    ``head_ages[n]`` is the end-of-last-slot age of the packet terminal ``n``
    would send, or 0/None when its buffer is empty.  Unscheduled, the next
    AoI is ``h + 1``.  Scheduled with an empty buffer it is 1 with
    probability ``lam`` (fresh arrival) and ``h + 1`` otherwise.  A held
    packet of age ``a`` yields ``a + 1`` unless a fresh arrival replaces it.

    The same rule is used with FCFS queues, where it reads ``a`` as the head
    of line.  The literal FCFS expectation ``h - a`` does not grow while a
    terminal waits (``h`` and ``a`` age together), so it starves backlogged
    terminals; the term in ``lam * h`` here keeps every queue served.
    """
    h = np.asarray(aoi, dtype=float)
    lam = np.asarray(lam, dtype=float)
    a = np.array([0 if x is None else x for x in head_ages], dtype=float)
    return np.where(a > 0, lam * h + (1.0 - lam) * (h - a), lam * h)


def myopic_gsi_decide(aoi, head_ages, lam) -> int:
    return _first_argmax(myopic_gain(aoi, head_ages, lam))


def rr_lambda_decide(rates, deficits) -> int | None:
    """Deficit round-robin step; mutates ``deficits`` in place.

    Returns None (idle slot) when no terminal has positive credit, which can
    only happen when the rates sum to less than one.
    """
    deficits += rates
    best = deficits.max()
    if best <= 1e-9:
        return None
    # accumulated rounding must not break exact ties, so compare with slack
    n = int(np.flatnonzero(deficits >= best - 1e-9)[0])
    deficits[n] -= 1.0
    return n


class Scheduler:
    """Per-run decision state for one policy."""

    def __init__(self, policy: PolicyKind, n_terminals: int):
        self.policy = policy
        self.n = n_terminals
        self.deficits = np.zeros(n_terminals)
        self._rates = np.asarray(policy.rates) if policy.rates is not None else None

    def decide(self, system, rng) -> frozenset:
        name = self.policy.name
        terms = system.terminals
        if name is PolicyName.RR_ONE:
            return frozenset({rr_one_decide([x.since_service for x in terms])})
        if name is PolicyName.UN_ONE:
            return frozenset({un_one_decide(rng.scheduler_uniform(), self.n)})
        if name is PolicyName.AGE_GREEDY:
            return frozenset({age_greedy_decide([x.aoi for x in terms])})
        if name is PolicyName.MYOPIC_GSI:
            return frozenset({myopic_gsi_decide(
                [x.aoi for x in terms], [x.head_age for x in terms],
                [x.lam for x in terms])})
        if name is PolicyName.RR_LAMBDA:
            n = rr_lambda_decide(self._rates, self.deficits)
            return frozenset() if n is None else frozenset({n})
        if name is PolicyName.FIXED_SEQUENCE:
            slots = self.policy.slots
            return frozenset({slots[system.t % len(slots)]})
        raise ConfigError(f"unhandled policy {name}")


def make_scheduler(policy: PolicyKind, config) -> Scheduler:
    policy.validate(config.arrival_rates)
    return Scheduler(policy, config.n_terminals)
