"""Slot-accurate system state for N terminals sharing a collision uplink.

Every age in this module is an end-of-slot value.  Within a slot the order
is fixed: arrivals are drawn, the scheduled terminal transmits, then all
ages grow.  A packet that arrives in slot ``t`` therefore has age 1 at the
end of ``t`` and can be delivered in that same slot.

Terminal indices are 0-based throughout the library.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, InstabilityError

MAX_QUEUE = 10**6


class Buffer(str, enum.Enum):
    ONE_PACKET = "one_packet"
    FCFS = "fcfs"


class Mode(str, enum.Enum):
    NORMAL = "normal"
    # every successful schedule resets the AoI to one
    A0 = "a0"
    # collision-free: every scheduled terminal delivers
    A1 = "a1"


@dataclass
class ScenarioConfig:
    """Full description of one simulated experiment."""

    n_terminals: int
    arrival_rates: Sequence[float]
    buffer: Buffer = Buffer.ONE_PACKET
    horizon: int = 100_000
    warmup: int | None = None
    seed: int = 0
    mode: Mode = Mode.NORMAL

    def __post_init__(self):
        self.buffer = Buffer(self.buffer)
        self.mode = Mode(self.mode)
        self.arrival_rates = tuple(float(x) for x in self.arrival_rates)
        if self.warmup is None:
            self.warmup = self.horizon // 10
        self.validate()

    def validate(self):
        if int(self.n_terminals) != self.n_terminals or self.n_terminals < 1:
            raise ConfigError(f"n_terminals must be a positive integer, got {self.n_terminals!r}")
        if len(self.arrival_rates) != self.n_terminals:
            raise ConfigError(
                f"arrival_rates has {len(self.arrival_rates)} entries for {self.n_terminals} terminals"
            )
        for lam in self.arrival_rates:
            if not 0.0 <= lam <= 1.0:
                raise ConfigError(f"arrival rate {lam} outside [0, 1]")
        if self.horizon < 1:
            raise ConfigError("horizon must be positive")
        if not 0 <= self.warmup < self.horizon:
            raise ConfigError(f"warmup {self.warmup} must lie in [0, horizon={self.horizon})")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")

    @property
    def lam(self) -> np.ndarray:
        return np.asarray(self.arrival_rates, dtype=float)


class RngStream:
    """Independent, reproducible random substreams for one run.

    Terminal ``n`` draws its arrivals from substream ``n`` and the scheduler
    draws from one extra substream, so a policy that never touches the
    scheduler stream leaves arrival trajectories unchanged.  Draws are made
    in fixed-size blocks; consumers taking one slot or many slots at a time
    see the same sequence.
    """

    def __init__(self, seed: int, n_terminals: int, block: int = 4096):
        self.seed = int(seed)
        self.n_terminals = int(n_terminals)
        self.block = int(block)
        children = np.random.SeedSequence(self.seed).spawn(self.n_terminals + 1)
        self._arrival_gens = [np.random.Generator(np.random.Philox(c)) for c in children[:-1]]
        self._sched_gen = np.random.Generator(np.random.Philox(children[-1]))
        self._u = np.empty((0, self.n_terminals))
        self._upos = 0
        self._s = np.empty(0)
        self._spos = 0

    def _refill_arrivals(self):
        self._u = np.column_stack([g.random(self.block) for g in self._arrival_gens]) \
            if self.n_terminals else np.empty((self.block, 0))
        self._upos = 0

    def take_uniforms(self, k: int) -> np.ndarray:
        """Next ``k`` slots of per-terminal uniforms, shape ``(k, N)``."""
        out = np.empty((k, self.n_terminals))
        filled = 0
        while filled < k:
            if self._upos >= len(self._u):
                self._refill_arrivals()
            m = min(k - filled, len(self._u) - self._upos)
            out[filled:filled + m] = self._u[self._upos:self._upos + m]
            self._upos += m
            filled += m
        return out

    def take_scheduler(self, k: int) -> np.ndarray:
        """Next ``k`` scheduler uniforms in [0, 1)."""
        out = np.empty(k)
        filled = 0
        while filled < k:
            if self._spos >= len(self._s):
                self._s = self._sched_gen.random(self.block)
                self._spos = 0
            m = min(k - filled, len(self._s) - self._spos)
            out[filled:filled + m] = self._s[self._spos:self._spos + m]
            self._spos += m
            filled += m
        return out

    def scheduler_uniform(self) -> float:
        return float(self.take_scheduler(1)[0])


@dataclass
class TerminalState:
    aoi: int
    lam: float
    buffer_ages: list = field(default_factory=list)
    since_service: int = 0

    @property
    def head_age(self):
        """Age of the packet that would be sent if scheduled now, or None."""
        return self.buffer_ages[0] if self.buffer_ages else None


@dataclass(frozen=True)
class SlotOutcome:
    scheduled: frozenset
    # (terminal, delivered age) pairs; more than one only in mode A1
    delivered: tuple = ()
    collided: bool = False
    blank: bool = False


@dataclass
class SystemState:
    config: ScenarioConfig
    terminals: list
    t: int = 0

    @property
    def aoi(self) -> np.ndarray:
        return np.array([term.aoi for term in self.terminals])


def init_system(config: ScenarioConfig) -> SystemState:
    config.validate()
    terms = [TerminalState(aoi=1, lam=lam) for lam in config.arrival_rates]
    return SystemState(config=config, terminals=terms)


def _check_decision(decision: Iterable[int], n: int) -> frozenset:
    chosen = frozenset(int(i) for i in decision)
    for i in chosen:
        if not 0 <= i < n:
            raise ConfigError(f"unknown terminal index {i} (N={n})")
    return chosen


def advance_slot(system: SystemState, decision: Iterable[int], rng: RngStream) -> SlotOutcome:
    """Run one slot: arrivals, transmission, then the global age increment."""
    cfg = system.config
    terms = system.terminals
    chosen = _check_decision(decision, len(terms))
    u = rng.take_uniforms(1)[0]

    one_packet = cfg.buffer is Buffer.ONE_PACKET
    for n, term in enumerate(terms):
        ages = term.buffer_ages
        for i in range(len(ages)):
            ages[i] += 1
        if u[n] < term.lam:
            if one_packet:
                ages.clear()
            ages.append(1)
            if len(ages) > MAX_QUEUE:
                raise InstabilityError(
                    f"queue of terminal {n} exceeded {MAX_QUEUE} packets at slot {system.t + 1}; "
                    "its service rate does not exceed its arrival rate"
                )

    collided = len(chosen) >= 2 and cfg.mode is not Mode.A1
    delivered = []
    blank = False
    new_aoi = [term.aoi + 1 for term in terms]
    if chosen and not collided:
        for n in sorted(chosen):
            term = terms[n]
            if term.buffer_ages:
                age = term.buffer_ages.pop(0)
                new_aoi[n] = age
                delivered.append((n, age))
            else:
                blank = True
            if cfg.mode is Mode.A0:
                new_aoi[n] = 1

    for n, term in enumerate(terms):
        term.aoi = new_aoi[n]
        term.since_service = 0 if n in chosen else term.since_service + 1
    system.t += 1
    return SlotOutcome(scheduled=chosen, delivered=tuple(delivered), collided=collided, blank=blank)
