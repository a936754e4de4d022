"""Decentralized round-robin (DRR) protocol with terminal churn.

Each terminal keeps a countdown ``gamma`` to its own slot and a belief ``w``
of the frame length.  It transmits when ``gamma == 0`` (a blank packet if
its buffer is empty), reloads ``gamma <- w``, applies the broadcast
feedback and counts down by one.  The base station only observes the
channel and broadcasts ACK, NACK or COLLISION{N, W}.

Reload arithmetic used here:

* ``W`` is the BS's countdown to the rotation head.  It starts at 1, which
  is the countdown of terminal 1 when ``gamma_n = n mod N``.
* A newly appeared terminal starts with ``gamma = 0`` and ``w = 1``, so it
  transmits at once and collides with the slot owner.  The BS sets
  ``N <- N + 1`` and broadcasts the new ``N`` with its current ``W``.  The
  insertion point is ``d = W`` if ``W >= 1``, otherwise the old ``N``; with
  ``W = 0`` the head itself owned the collided slot and has just reloaded
  to the old ``N``.  The new terminal takes ``gamma <- d``.  Incumbents take
  ``w <- N`` and shift ``gamma <- gamma + 1`` if ``gamma >= d``.  The new
  terminal thus sits just before the head, at the end of the rotation, and
  the collided slot stays with its owner.  The BS bumps ``W`` by one when
  ``W >= 1`` since the head moved back one slot.
* A departed terminal's slot is silent.  The BS broadcasts NACK and sets
  ``N <- N - 1``, every terminal sets ``w <- w - 1``, and the countdowns
  (already distinct) close the gap.
* Everyone then decrements ``gamma``; the BS sets ``W <- (W - 1) mod N``.

With these rules the live countdowns stay a permutation of ``0..N-1``
whenever no event is in flight.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .core import RngStream, ScenarioConfig
from .errors import ConfigError


class Feedback(str, Enum):
    ACK = "ACK"
    NACK = "NACK"
    COLLISION = "COLLISION"


class Observation(str, Enum):
    UPDATE = "update"
    BLANK = "blank"
    NOTHING = "nothing"
    COLLISION = "collision"


@dataclass(frozen=True)
class FeedbackMsg:
    kind: Feedback
    n: int | None = None  # post-increment terminal count, COLLISION only
    w: int | None = None  # BS rotation spot, COLLISION only


@dataclass
class TerminalProtoState:
    ident: int
    gamma: int
    w: int
    fresh: bool = False
    buffer_age: int | None = None  # end-of-slot age of the held packet
    aoi: int = 1
    lam: float = 0.0


@dataclass
class BsProtoState:
    n: int
    w: int = 1


@dataclass(frozen=True)
class Transmit:
    blank: bool


SILENT = None


def terminal_slot(state: TerminalProtoState):
    """Transmit (possibly a blank) iff the countdown is zero; reload on transmit."""
    if state.gamma != 0:
        return SILENT
    state.gamma = state.w
    return Transmit(blank=state.buffer_age is None)


def bs_slot(observed: Observation, state: BsProtoState) -> FeedbackMsg:
    if observed in (Observation.UPDATE, Observation.BLANK):
        msg = FeedbackMsg(Feedback.ACK)
    elif observed is Observation.NOTHING:
        msg = FeedbackMsg(Feedback.NACK)
        state.n -= 1
    else:
        state.n += 1
        msg = FeedbackMsg(Feedback.COLLISION, n=state.n, w=state.w)
        if state.w >= 1:
            state.w += 1
    state.w = (state.w - 1) % state.n
    return msg


def terminal_feedback(state: TerminalProtoState, msg: FeedbackMsg) -> TerminalProtoState:
    if msg.kind is Feedback.COLLISION:
        d = msg.w if msg.w >= 1 else msg.n - 1
        if state.fresh:
            state.gamma = d
            state.fresh = False
        elif state.gamma >= d:
            state.gamma += 1
        state.w = msg.n
    elif msg.kind is Feedback.NACK:
        state.w -= 1
    state.gamma -= 1
    return state


@dataclass(frozen=True)
class ChurnEvent:
    slot: int
    action: str  # "join" or "leave"
    ident: int


@dataclass
class ChurnSchedule:
    events: list = field(default_factory=list)

    def __post_init__(self):
        self.events = sorted(self.events, key=lambda e: e.slot)

    @classmethod
    def parse(cls, text: str) -> "ChurnSchedule":
        """One ``slot,join|leave,id`` line per event; ``#`` starts a comment."""
        events = []
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = [p.strip() for p in line.split(",")]
            if len(parts) != 3 or parts[1] not in ("join", "leave"):
                raise ConfigError(f"churn line {lineno}: expected 'slot,join|leave,id', got {raw!r}")
            try:
                slot, ident = int(parts[0]), int(parts[2])
            except ValueError:
                raise ConfigError(f"churn line {lineno}: slot and id must be integers") from None
            events.append(ChurnEvent(slot, parts[1], ident))
        return cls(events)

    def validate(self, n_initial: int, horizon: int):
        """Reject overlapping or impossible events; returns the largest terminal id used."""
        if n_initial < 1:
            raise ConfigError("DRR needs at least one initial terminal")
        live = set(range(1, n_initial + 1))
        used = set(live)
        last = None
        for ev in self.events:
            if not 1 <= ev.slot <= horizon:
                raise ConfigError(f"churn event at slot {ev.slot} outside 1..{horizon}")
            if last is not None and ev.slot - last <= len(live):
                raise ConfigError(
                    f"churn events at slots {last} and {ev.slot} are closer than one frame; need {len(live) + 1} slots"
                )
            if ev.action == "join":
                if ev.ident < 1 or ev.ident in used:
                    raise ConfigError(f"join of terminal {ev.ident}: ids must be new positive integers")
                live.add(ev.ident)
                used.add(ev.ident)
            else:
                if ev.ident not in live:
                    raise ConfigError(f"leave of terminal {ev.ident}, which is not present")
                if len(live) == 1:
                    raise ConfigError("the last terminal cannot leave")
                live.remove(ev.ident)
            last = ev.slot
        return max(used)


@dataclass
class DrrResult:
    """Slot-level record and AoI accumulators of a DRR run.

    ``transmitter[t-1]`` is the id sent in slot ``t``, 0 for a silent slot
    and -1 for a collision.  AoI accumulators are indexed by ``id - 1`` and
    cover the post-warmup window only.
    """

    transmitter: np.ndarray
    feedback: list
    n_bs: np.ndarray
    w_bs: np.ndarray
    slots: int
    aoi_sum: np.ndarray
    alive_slots: np.ndarray
    hist_counts: np.ndarray
    live_mean_sum: float
    collisions: int
    nacks: int
    blanks: int
    terminals: dict = field(default_factory=dict, repr=False)  # final protocol states by id
    trace_rows: list | None = None

    @property
    def per_terminal_aoi(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return self.aoi_sum / self.alive_slots

    @property
    def time_avg_aoi(self) -> float:
        return self.live_mean_sum / self.slots

    @property
    def aoi_histogram(self) -> np.ndarray:
        return self.hist_counts / np.maximum(self.alive_slots, 1)[:, None]

    def collision_slots(self) -> np.ndarray:
        return np.flatnonzero(self.transmitter == -1) + 1

    def service_slots(self, ident: int) -> np.ndarray:
        return np.flatnonzero(self.transmitter == ident) + 1


def run_drr(config: ScenarioConfig, churn: ChurnSchedule | None = None, trace: bool = False,
            hist_cap: int = 4096) -> DrrResult:
    """Run DRR for ``config.horizon`` slots.

    ``config`` gives the initial terminals and their rates; a joining
    terminal with id ``k`` takes rate ``arrival_rates[(k-1) % N0]``.
    Arrivals of terminal ``k`` come from substream ``k-1``.
    """
    config.validate()
    churn = churn or ChurnSchedule()
    n0 = config.n_terminals
    max_id = churn.validate(n0, config.horizon)
    rates = list(config.arrival_rates)
    rng = RngStream(config.seed, max_id)

    terms = {
        i: TerminalProtoState(ident=i, gamma=i % n0, w=n0, lam=float(rates[i - 1]))
        for i in range(1, n0 + 1)
    }
    bs = BsProtoState(n=n0, w=1)
    events = {ev.slot: ev for ev in churn.events}

    horizon = config.horizon
    transmitter = np.zeros(horizon, dtype=np.int64)
    feedback: list = []
    n_bs = np.empty(horizon, dtype=np.int64)
    w_bs = np.empty(horizon, dtype=np.int64)
    aoi_sum = np.zeros(max_id)
    alive = np.zeros(max_id, dtype=np.int64)
    hist = np.zeros((max_id, hist_cap), dtype=np.int64)
    live_mean_sum = 0.0
    collisions = nacks = blanks = 0
    rows = [] if trace else None

    u_block = None
    pos = 0
    for t in range(1, horizon + 1):
        if u_block is None or pos == len(u_block):
            u_block = rng.take_uniforms(min(rng.block, horizon - t + 1))
            pos = 0
        u = u_block[pos]
        pos += 1

        ev = events.get(t)
        if ev is not None:
            if ev.action == "join":
                terms[ev.ident] = TerminalProtoState(
                    ident=ev.ident, gamma=0, w=1, fresh=True, lam=float(rates[(ev.ident - 1) % n0])
                )
            else:
                del terms[ev.ident]

        senders = []
        for term in terms.values():
            # arrivals: a new packet replaces the held one
            if term.buffer_age is not None:
                term.buffer_age += 1
            if u[term.ident - 1] < term.lam:
                term.buffer_age = 1
            tx = terminal_slot(term)
            if tx is not SILENT:
                senders.append((term, tx))

        if not senders:
            obs = Observation.NOTHING
        elif len(senders) > 1:
            obs = Observation.COLLISION
        else:
            obs = Observation.BLANK if senders[0][1].blank else Observation.UPDATE
        msg = bs_slot(obs, bs)

        for term in terms.values():
            term.aoi += 1
        if obs is Observation.UPDATE:
            term = senders[0][0]
            term.aoi = term.buffer_age
            term.buffer_age = None
        for term in terms.values():
            terminal_feedback(term, msg)

        transmitter[t - 1] = senders[0][0].ident if len(senders) == 1 else (-1 if senders else 0)
        feedback.append(msg.kind)
        n_bs[t - 1] = bs.n
        w_bs[t - 1] = bs.w
        if obs is Observation.COLLISION:
            collisions += 1
        elif obs is Observation.NOTHING:
            nacks += 1
        elif obs is Observation.BLANK:
            blanks += 1
        if trace:
            rows.append((t, ";".join(str(s.ident) for s, _ in senders), msg.kind.value, bs.n, bs.w))

        if t > config.warmup:
            total = 0
            for term in terms.values():
                k = term.ident - 1
                aoi_sum[k] += term.aoi
                alive[k] += 1
                hist[k, min(term.aoi, hist_cap) - 1] += 1
                total += term.aoi
            live_mean_sum += total / len(terms)

    return DrrResult(
        transmitter=transmitter, feedback=feedback, n_bs=n_bs, w_bs=w_bs,
        slots=horizon - config.warmup, aoi_sum=aoi_sum, alive_slots=alive, hist_counts=hist,
        live_mean_sum=live_mean_sum, collisions=collisions, nacks=nacks, blanks=blanks,
        terminals=terms, trace_rows=rows,
    )
