"""Scenario execution: binds core and policies, accumulates metrics.

:func:`run_scenario` uses the compiled slot loop; :func:`run_reference`
drives :func:`aoisched.core.advance_slot` one slot at a time and exists to
cross-check it.  Both consume the same random substreams, so for a given
seed they produce identical metrics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernel
from .core import MAX_QUEUE, Buffer, Mode, RngStream, ScenarioConfig, advance_slot, init_system
from .errors import InstabilityError
from .policies import PolicyKind, PolicyName, make_scheduler

HIST_CAP = 4096

_POLICY_CODE = {
    PolicyName.RR_ONE: _kernel.RR_ONE,
    PolicyName.UN_ONE: _kernel.UN_ONE,
    PolicyName.AGE_GREEDY: _kernel.AGE_GREEDY,
    PolicyName.MYOPIC_GSI: _kernel.MYOPIC_GSI,
    PolicyName.RR_LAMBDA: _kernel.RR_LAMBDA,
    PolicyName.FIXED_SEQUENCE: _kernel.FIXED_SEQUENCE,
}
_MODE_CODE = {Mode.NORMAL: _kernel.NORMAL, Mode.A0: _kernel.A0, Mode.A1: _kernel.A1}


@dataclass
class Metrics:
    """Raw accumulators over the post-warmup window; mergeable by addition."""

    slots: int
    aoi_sum: np.ndarray
    hist_counts: np.ndarray
    paoi_sum: np.ndarray
    paoi_count: np.ndarray
    delivered: np.ndarray
    collisions: int = 0
    blanks: int = 0
    unstable: bool = False
    aoi_trace: np.ndarray | None = field(default=None, repr=False)

    @property
    def per_terminal_aoi(self) -> np.ndarray:
        return self.aoi_sum / self.slots

    @property
    def time_avg_aoi(self) -> float:
        return float(self.per_terminal_aoi.mean())

    @property
    def per_terminal_paoi(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.paoi_count > 0, self.paoi_sum / np.maximum(self.paoi_count, 1), np.inf)

    @property
    def time_avg_paoi(self) -> float:
        return float(self.per_terminal_paoi.mean())

    @property
    def aoi_histogram(self) -> np.ndarray:
        """Empirical pmf per terminal; column ``j-1`` holds AoI ``j``, the last column is overflow."""
        return self.hist_counts / self.slots

    def merge(self, other: "Metrics") -> "Metrics":
        return Metrics(
            slots=self.slots + other.slots,
            aoi_sum=self.aoi_sum + other.aoi_sum,
            hist_counts=self.hist_counts + other.hist_counts,
            paoi_sum=self.paoi_sum + other.paoi_sum,
            paoi_count=self.paoi_count + other.paoi_count,
            delivered=self.delivered + other.delivered,
            collisions=self.collisions + other.collisions,
            blanks=self.blanks + other.blanks,
            unstable=self.unstable or other.unstable,
        )


def _empty_metrics(n, slots, hist_cap, unstable):
    return Metrics(
        slots=slots,
        aoi_sum=np.zeros(n),
        hist_counts=np.zeros((n, hist_cap), dtype=np.int64),
        paoi_sum=np.zeros(n, dtype=np.int64),
        paoi_count=np.zeros(n, dtype=np.int64),
        delivered=np.zeros(n, dtype=np.int64),
        unstable=unstable,
    )


def _grow(qbuf, qhead, qlen, need):
    n, cap = qbuf.shape
    new_cap = max(need, 2 * cap)
    out = np.zeros((n, new_cap), dtype=np.int64)
    for i in range(n):
        idx = (qhead[i] + np.arange(qlen[i])) % cap
        out[i, :qlen[i]] = qbuf[i, idx]
    qhead[:] = 0
    return out


def run_scenario(config: ScenarioConfig, policy: PolicyKind, hist_cap: int = HIST_CAP,
                 trace: bool = False, block: int = 4096) -> Metrics:
    """Simulate ``config.horizon`` slots under ``policy``."""
    config.validate()
    policy.validate(config.arrival_rates)
    n = config.n_terminals
    lam = config.lam
    one_packet = config.buffer is Buffer.ONE_PACKET
    unstable = (not one_packet) and not policy.is_stable_for(lam)
    rng = RngStream(config.seed, n, block=block)

    rates = np.asarray(policy.rates if policy.rates is not None else np.zeros(n), dtype=float)
    sequence = np.asarray(policy.slots if policy.slots is not None else [0], dtype=np.int64)
    aoi = np.ones(n, dtype=np.int64)
    since = np.zeros(n, dtype=np.int64)
    qbuf = np.zeros((n, 1 if one_packet else 64), dtype=np.int64)
    qhead = np.zeros(n, dtype=np.int64)
    qlen = np.zeros(n, dtype=np.int64)
    deficits = np.zeros(n)
    m = _empty_metrics(n, config.horizon - config.warmup, hist_cap, unstable)
    stats = np.zeros(2, dtype=np.int64)
    trace_all = np.empty(config.horizon) if trace else None
    uses_sched = policy.name is PolicyName.UN_ONE

    t = 0
    while t < config.horizon:
        k = min(block, config.horizon - t)
        u = rng.take_uniforms(k)
        s = rng.take_scheduler(k) if uses_sched else np.zeros(k)
        if not one_packet:
            longest = int(qlen.max())
            if longest > MAX_QUEUE:
                raise InstabilityError(
                    f"a queue exceeded {MAX_QUEUE} packets by slot {t}; "
                    "service rate does not exceed arrival rate"
                )
            if longest + k > qbuf.shape[1]:
                qbuf = _grow(qbuf, qhead, qlen, longest + k)
        tr = np.empty(k) if trace else np.empty(0)
        _kernel.run_block(
            _POLICY_CODE[policy.name], _MODE_CODE[config.mode], one_packet, lam, rates, sequence,
            u, s, t, config.warmup, aoi, since, qbuf, qhead, qlen, deficits,
            m.aoi_sum, m.hist_counts, m.paoi_sum, m.paoi_count, m.delivered, stats, tr,
        )
        if trace:
            trace_all[t:t + k] = tr
        t += k
    m.collisions = int(stats[0])
    m.blanks = int(stats[1])
    m.aoi_trace = trace_all
    return m


def run_reference(config: ScenarioConfig, policy: PolicyKind, hist_cap: int = HIST_CAP,
                  trace: bool = False) -> Metrics:
    """Slow pure-Python twin of :func:`run_scenario`."""
    system = init_system(config)
    sched = make_scheduler(policy, config)
    rng = RngStream(config.seed, config.n_terminals)
    n = config.n_terminals
    unstable = config.buffer is Buffer.FCFS and not policy.is_stable_for(config.arrival_rates)
    m = _empty_metrics(n, config.horizon - config.warmup, hist_cap, unstable)
    trace_all = np.empty(config.horizon) if trace else None
    for t in range(1, config.horizon + 1):
        decision = sched.decide(system, rng)
        before = system.aoi
        out = advance_slot(system, decision, rng)
        h = system.aoi
        if trace:
            trace_all[t - 1] = h.mean()
        if t <= config.warmup:
            continue
        m.aoi_sum += h
        m.hist_counts[np.arange(n), np.minimum(h, hist_cap) - 1] += 1
        for i, _age in out.delivered:
            m.delivered[i] += 1
            m.paoi_sum[i] += before[i]
            m.paoi_count[i] += 1
        m.collisions += int(out.collided)
        m.blanks += int(out.blank)
    m.aoi_trace = trace_all
    return m


@dataclass(frozen=True)
class ReplicationPlan:
    replications: int = 5
    master_seed: int = 0

    def seeds(self) -> list[int]:
        children = np.random.SeedSequence(self.master_seed).spawn(self.replications)
        return [int(c.generate_state(1, np.uint64)[0]) for c in children]


@dataclass
class ReplicatedMetrics:
    runs: list
    seeds: list

    def _stat(self, values):
        values = np.asarray(values, dtype=float)
        mean = float(values.mean())
        std = float(values.std(ddof=1)) if len(values) > 1 else 0.0
        return mean, std

    @property
    def aoi(self):
        """(mean, sample std) of the aggregate time-average AoI."""
        return self._stat([r.time_avg_aoi for r in self.runs])

    @property
    def paoi(self):
        return self._stat([r.time_avg_paoi for r in self.runs])

    @property
    def stderr_aoi(self) -> float:
        return self.aoi[1] / math.sqrt(len(self.runs))

    @property
    def stderr_paoi(self) -> float:
        return self.paoi[1] / math.sqrt(len(self.runs))

    @property
    def pooled(self) -> Metrics:
        out = self.runs[0]
        for r in self.runs[1:]:
            out = out.merge(r)
        return out


def run_replicated(plan: ReplicationPlan, config: ScenarioConfig, policy: PolicyKind,
                   **kwargs) -> ReplicatedMetrics:
    seeds = plan.seeds()
    runs = []
    for seed in seeds:
        cfg = ScenarioConfig(
            n_terminals=config.n_terminals, arrival_rates=config.arrival_rates,
            buffer=config.buffer, horizon=config.horizon, warmup=config.warmup,
            seed=seed, mode=config.mode,
        )
        runs.append(run_scenario(cfg, policy, **kwargs))
    return ReplicatedMetrics(runs=runs, seeds=seeds)
