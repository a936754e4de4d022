"""Average-cost optimum for two terminals with one-packet buffers.

The state is ``(h1, a1, h2, a2)``: end-of-slot AoI and held-packet age per
terminal, with ``a = 0`` for an empty buffer.  Every slot schedules exactly
one terminal (no idling), and the slot rule is the simulator's: arrivals,
then delivery, then the global increment.

Two facts keep the state space small.  A held packet arrived after the last
delivery, so ``a < h``.  The scheduled terminal always ends the slot with an
empty buffer, so after the first slot at least one ``a`` is zero.  Only
states satisfying both are enumerated; the start state ``(1, 0, 1, 0)`` is
one of them.  AoI is capped at ``h_max`` and ages at ``h_max - 1``.

Relative value iteration runs on the lazy kernel ``(P + I) / 2``.  It has
the same gain and optimal policy as ``P`` but is aperiodic, which matters at
``lambda = 1`` where the optimal chain alternates deterministically.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConfigError, DomainError, ModelSizeError, NonConvergenceError

DEFAULT_H_MAX = 60
MEMORY_CAP = 2 * 1024**3  # bytes
AUDIT_THRESHOLD = 1e-6
REFERENCE = (1, 0, 1, 0)


def _pair_index(h, a):
    # pairs (h, a) with 0 <= a < h, ordered by h then a
    return h * (h - 1) // 2 + a


def state_count(h_max: int) -> int:
    f = h_max * (h_max + 1) // 2
    return 2 * h_max * f - h_max * h_max


def memory_estimate(h_max: int) -> int:
    """Rough peak bytes for the model and one RVI solve."""
    s = state_count(h_max)
    return s * (2 * 4 * 16 + 12 * 8)


@dataclass
class MdpModel:
    h_max: int
    lam: tuple
    states: np.ndarray  # (S, 4) int array of (h1, a1, h2, a2)
    transitions: tuple  # one CSR matrix per action
    costs: np.ndarray  # (S, 2) expected end-of-slot mean AoI
    _keys: np.ndarray = field(repr=False, default=None)
    _pairs: int = 0

    @property
    def n_states(self) -> int:
        return self.states.shape[0]

    def index(self, state) -> int:
        h1, a1, h2, a2 = state
        key = _pair_index(h1, a1) * self._pairs + _pair_index(h2, a2)
        i = int(np.searchsorted(self._keys, key))
        if i >= len(self._keys) or self._keys[i] != key:
            raise KeyError(state)
        return i

    def boundary_mask(self) -> np.ndarray:
        s = self.states
        return (s[:, 0] == self.h_max) | (s[:, 2] == self.h_max) | \
            (s[:, 1] == self.h_max - 1) | (s[:, 3] == self.h_max - 1)


@dataclass
class MdpSolution:
    gain: float
    bias: np.ndarray
    policy: np.ndarray  # 0 schedules terminal 1, 1 schedules terminal 2
    span: float
    iterations: int

    def action(self, model: MdpModel, state) -> int:
        return int(self.policy[model.index(state)])


@dataclass(frozen=True)
class AuditReport:
    boundary_mass: float
    threshold: float

    @property
    def passed(self) -> bool:
        return self.boundary_mass < self.threshold


def _enumerate(h_max):
    hs, as_ = [], []
    for h in range(1, h_max + 1):
        hs.append(np.full(h, h))
        as_.append(np.arange(h))
    h = np.concatenate(hs)
    a = np.concatenate(as_)
    f = h.size
    idx = np.arange(f)
    empty = np.flatnonzero(a == 0)
    held = np.flatnonzero(a > 0)
    p1 = np.concatenate([np.repeat(empty, f), np.repeat(held, empty.size)])
    p2 = np.concatenate([np.tile(idx, empty.size), np.tile(empty, held.size)])
    keys = p1.astype(np.int64) * f + p2
    order = np.argsort(keys, kind="stable")
    p1, p2, keys = p1[order], p2[order], keys[order]
    states = np.stack([h[p1], a[p1], h[p2], a[p2]], axis=1).astype(np.int64)
    return states, keys, f


def build_model(lam, h_max: int = DEFAULT_H_MAX, memory_cap: int = MEMORY_CAP) -> MdpModel:
    lam = tuple(float(x) for x in lam)
    if len(lam) != 2:
        raise ConfigError(f"the exact MDP benchmark supports N=2 only, got N={len(lam)}")
    if not all(0 < x <= 1 for x in lam):
        raise DomainError("arrival rates must lie in (0, 1]")
    if h_max < 4:
        raise DomainError("h_max must be at least 4")
    need = memory_estimate(h_max)
    if need > memory_cap:
        raise ModelSizeError(f"h_max={h_max} needs about {need / 2**20:.0f} MiB, cap is {memory_cap / 2**20:.0f} MiB")

    states, keys, f = _enumerate(h_max)
    n = states.shape[0]
    h = states[:, [0, 2]]
    a = states[:, [1, 3]]
    rows = np.arange(n)
    mats, costs = [], np.zeros((n, 2))
    for k in (0, 1):
        o = 1 - k
        r_all, c_all, p_all = [], [], []
        for x in ((0, 0), (0, 1), (1, 0), (1, 1)):
            prob = (lam[0] if x[0] else 1 - lam[0]) * (lam[1] if x[1] else 1 - lam[1])
            if prob == 0.0:
                continue
            nh = np.empty_like(h)
            na = np.zeros_like(a)
            # scheduled terminal: fresh arrival, else held packet, else blank
            if x[k]:
                nh[:, k] = 1
            else:
                nh[:, k] = np.where(a[:, k] > 0, a[:, k] + 1, h[:, k] + 1)
            nh[:, o] = h[:, o] + 1
            if x[o]:
                na[:, o] = 1
            else:
                na[:, o] = np.where(a[:, o] > 0, a[:, o] + 1, 0)
            nh = np.minimum(nh, h_max)
            na = np.minimum(na, h_max - 1)
            costs[:, k] += prob * nh.sum(axis=1) / 2
            nk = _pair_index(nh[:, 0], na[:, 0]) * f + _pair_index(nh[:, 1], na[:, 1])
            cols = np.searchsorted(keys, nk)
            r_all.append(rows)
            c_all.append(cols)
            p_all.append(np.full(n, prob))
        m = sp.csr_matrix(
            (np.concatenate(p_all), (np.concatenate(r_all), np.concatenate(c_all))), shape=(n, n)
        )
        m.sum_duplicates()
        mats.append(m)
    return MdpModel(h_max=h_max, lam=lam, states=states, transitions=tuple(mats), costs=costs,
                    _keys=keys, _pairs=f)


def relative_value_iteration(model: MdpModel, tol: float = 1e-9, max_iter: int = 200000) -> MdpSolution:
    """Average-cost RVI with reference state ``(1, 0, 1, 0)`` and span stopping rule."""
    ref = model.index(REFERENCE)
    p0, p1 = model.transitions
    c0, c1 = model.costs[:, 0], model.costs[:, 1]
    v = np.zeros(model.n_states)
    span = np.inf
    for it in range(1, max_iter + 1):
        q0 = c0 + 0.5 * (p0 @ v + v)
        q1 = c1 + 0.5 * (p1 @ v + v)
        tv = np.minimum(q0, q1)
        diff = tv - v
        lo, hi = diff.min(), diff.max()
        span = hi - lo
        v = tv - tv[ref]
        if span < tol:
            policy = (q1 < q0).astype(np.int8)
            return MdpSolution(gain=float(0.5 * (lo + hi)), bias=v, policy=policy, span=float(span), iterations=it)
    raise NonConvergenceError(
        f"relative value iteration span {span:.3g} above {tol:g} after {max_iter} iterations",
        residual=float(span), iterations=max_iter,
    )


def policy_matrix(model: MdpModel, policy) -> sp.csr_matrix:
    policy = np.asarray(policy)
    p0, p1 = model.transitions
    d0 = sp.diags((policy == 0).astype(float))
    d1 = sp.diags((policy == 1).astype(float))
    return (d0 @ p0 + d1 @ p1).tocsr()


def stationary_distribution(model: MdpModel, policy, tol: float = 1e-13, max_iter: int = 1000000) -> np.ndarray:
    """Stationary law of the policy's chain started from the reference state (lazy power iteration)."""
    pt = policy_matrix(model, policy).T.tocsr()
    pi = np.zeros(model.n_states)
    pi[model.index(REFERENCE)] = 1.0
    for _ in range(max_iter):
        nxt = 0.5 * (pt @ pi + pi)
        if np.abs(nxt - pi).sum() < tol:
            return nxt
        pi = nxt
    raise NonConvergenceError("stationary distribution did not converge", iterations=max_iter)


def truncation_audit(solution: MdpSolution, model: MdpModel, threshold: float = AUDIT_THRESHOLD) -> AuditReport:
    pi = stationary_distribution(model, solution.policy)
    return AuditReport(boundary_mass=float(pi[model.boundary_mask()].sum()), threshold=threshold)


def evaluate_policy(model: MdpModel, policy) -> float:
    """Gain of a fixed policy from ``g + h = c + P h`` with ``h(ref) = 0``, solved directly."""
    policy = np.asarray(policy)
    n = model.n_states
    ref = model.index(REFERENCE)
    p = policy_matrix(model, policy)
    c = np.where(policy == 0, model.costs[:, 0], model.costs[:, 1])
    # unknowns: h with h[ref] replaced by g
    a = (sp.identity(n, format="csr") - p).tolil()
    a[:, ref] = np.ones((n, 1))
    x = spla.spsolve(a.tocsc(), c)
    return float(x[ref])


@dataclass
class OptimalResult:
    model: MdpModel
    solution: MdpSolution
    audit: AuditReport

    @property
    def gain(self) -> float:
        return self.solution.gain


def solve_optimal(lam, h_max: int = DEFAULT_H_MAX, tol: float = 1e-9, max_iter: int = 200000,
                  memory_cap: int = MEMORY_CAP) -> OptimalResult:
    """Solve, doubling ``h_max`` until the truncation audit passes."""
    while True:
        model = build_model(lam, h_max, memory_cap=memory_cap)
        sol = relative_value_iteration(model, tol=tol, max_iter=max_iter)
        audit = truncation_audit(sol, model)
        if audit.passed:
            return OptimalResult(model, sol, audit)
        h_max *= 2
