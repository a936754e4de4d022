import numpy as np
import pytest

from aoisched import analysis
from aoisched.drr import (
    SILENT, BsProtoState, ChurnEvent, ChurnSchedule, Feedback, FeedbackMsg, Observation,
    TerminalProtoState, Transmit, bs_slot, run_drr, terminal_feedback, terminal_slot,
)
from aoisched.errors import ConfigError
from aoisched.policies import fixed_sequence
from aoisched.sim import run_scenario

from conftest import scenario


def test_terminal_slot():
    s = TerminalProtoState(ident=1, gamma=0, w=4)
    assert terminal_slot(s) == Transmit(blank=True) and s.gamma == 4
    s = TerminalProtoState(ident=1, gamma=0, w=4, buffer_age=2)
    assert terminal_slot(s) == Transmit(blank=False)
    s = TerminalProtoState(ident=1, gamma=3, w=4)
    assert terminal_slot(s) is SILENT and s.gamma == 3


def test_bs_slot():
    bs = BsProtoState(n=4, w=2)
    assert bs_slot(Observation.UPDATE, bs).kind is Feedback.ACK and bs.w == 1
    assert bs_slot(Observation.BLANK, bs).kind is Feedback.ACK and bs.w == 0
    assert bs_slot(Observation.NOTHING, bs).kind is Feedback.NACK and bs.n == 3
    bs = BsProtoState(n=4, w=2)
    msg = bs_slot(Observation.COLLISION, bs)
    assert msg == FeedbackMsg(Feedback.COLLISION, n=5, w=2)
    assert bs.n == 5 and bs.w == 2


def test_terminal_feedback():
    s = TerminalProtoState(ident=1, gamma=3, w=4)
    terminal_feedback(s, FeedbackMsg(Feedback.ACK))
    assert (s.gamma, s.w) == (2, 4)
    terminal_feedback(s, FeedbackMsg(Feedback.NACK))
    assert (s.gamma, s.w) == (1, 3)
    s = TerminalProtoState(ident=1, gamma=3, w=4)
    terminal_feedback(s, FeedbackMsg(Feedback.COLLISION, n=5, w=2))
    assert (s.gamma, s.w) == (3, 5)
    fresh = TerminalProtoState(ident=6, gamma=1, w=1, fresh=True)
    terminal_feedback(fresh, FeedbackMsg(Feedback.COLLISION, n=5, w=2))
    assert (fresh.gamma, fresh.w, fresh.fresh) == (1, 5, False)


def test_no_churn_is_collision_free_round_robin():
    n = 5
    res = run_drr(scenario([0.5] * n, horizon=100_000, seed=3))
    assert res.collisions == 0 and res.nacks == 0
    for ident in range(1, n + 1):
        assert set(np.diff(res.service_slots(ident))) == {n}
    gammas = sorted(t.gamma for t in res.terminals.values())
    assert gammas == list(range(n))
    assert res.time_avg_aoi == pytest.approx(analysis.rr_one_avg_aoi([0.5] * n), rel=0.02)


def test_no_churn_matches_centralised_rotation():
    # the countdowns start at id mod N, so terminal N goes first
    lam = [0.3, 0.9, 0.6, 0.45]
    cfg = scenario(lam, horizon=20_000, seed=12)
    res = run_drr(cfg)
    ref = run_scenario(cfg, fixed_sequence([3, 0, 1, 2]))
    assert np.array_equal(res.aoi_sum, ref.aoi_sum)
    assert np.array_equal(res.hist_counts, ref.hist_counts)


def test_drr_histogram_matches_stationary_law():
    lam = [0.3, 0.6, 1.0]
    res = run_drr(scenario(lam, horizon=200_000, seed=1))
    for k, rate in enumerate(lam):
        dist = analysis.rr_one_stationary(rate, len(lam), j_max=4095)
        assert dist.tv_distance(res.aoi_histogram[k]) < 0.03


def test_single_join():
    n = 4
    churn = ChurnSchedule([ChurnEvent(1000, "join", 5)])
    res = run_drr(scenario([0.7] * n, horizon=3000), churn)
    assert res.collision_slots().tolist() == [1000]
    settle = 1000 + 2 * (n + 1)
    for ident in range(1, n + 2):
        slots = res.service_slots(ident)
        assert set(np.diff(slots[slots > settle])) == {n + 1}
    assert res.n_bs[-1] == n + 1


def test_single_leave():
    n = 5
    churn = ChurnSchedule([ChurnEvent(500, "leave", 2)])
    res = run_drr(scenario([0.5] * n, horizon=2000), churn)
    assert res.nacks == 1 and res.collisions == 0
    assert res.n_bs[-1] == n - 1
    assert res.service_slots(2).max() < 500
    for ident in (1, 3, 4, 5):
        slots = res.service_slots(ident)
        assert set(np.diff(slots[slots > 500 + 2 * n])) == {n - 1}


def _random_churn(rng, n0, horizon):
    live = list(range(1, n0 + 1))
    next_id = n0 + 1
    events = []
    t = 50
    while True:
        t += len(live) + 1 + int(rng.integers(2 * len(live) + 2, 60))
        if t > horizon - 100:
            break
        if len(live) > 1 and rng.random() < 0.5:
            ident = int(rng.choice(live))
            live.remove(ident)
            events.append(ChurnEvent(t, "leave", ident))
        else:
            events.append(ChurnEvent(t, "join", next_id))
            live.append(next_id)
            next_id += 1
    return ChurnSchedule(events)


@pytest.mark.parametrize("seed", range(8))
def test_random_churn(seed):
    rng = np.random.default_rng(seed)
    n0 = int(rng.integers(1, 7))
    churn = _random_churn(rng, n0, 4000)
    res = run_drr(scenario([0.6] * n0, horizon=4000, seed=seed), churn)
    joins = [e.slot for e in churn.events if e.action == "join"]
    leaves = [e for e in churn.events if e.action == "leave"]
    assert res.collision_slots().tolist() == joins
    assert res.nacks == len(leaves)
    live = set(range(1, n0 + 1))
    bounds = [e.slot for e in churn.events] + [4001]
    start = 1
    for ev, end in zip([None] + churn.events, bounds):
        if ev is not None:
            (live.add if ev.action == "join" else live.discard)(ev.ident)
            start = ev.slot + 2 * (len(live) + 1)
        window = res.transmitter[start - 1:end - 1]
        # every slot of a settled frame belongs to exactly one live terminal, in a fixed order
        assert set(window.tolist()) <= live and np.all(window > 0)
        for ident in live:
            s = np.flatnonzero(window == ident)
            assert len(s) >= 1 and set(np.diff(s)) <= {len(live)}
        assert res.n_bs[end - 2] == len(live)
    gammas = sorted(t.gamma for t in res.terminals.values())
    assert gammas == list(range(len(live)))


def test_churn_parse():
    text = "# events\n10, join, 4\n40,leave,1  # gone\n\n"
    churn = ChurnSchedule.parse(text)
    assert churn.events == [ChurnEvent(10, "join", 4), ChurnEvent(40, "leave", 1)]
    for bad in ("10,join", "10,hop,3", "x,join,3"):
        with pytest.raises(ConfigError):
            ChurnSchedule.parse(bad)


@pytest.mark.parametrize("events,n0", [
    ([ChurnEvent(10, "join", 2)], 3),
    ([ChurnEvent(10, "leave", 7)], 3),
    ([ChurnEvent(10, "leave", 1)], 1),
    ([ChurnEvent(10, "join", 4), ChurnEvent(12, "join", 5)], 3),
    ([ChurnEvent(0, "join", 4)], 3),
    ([], 0),
])
def test_churn_validation(events, n0):
    with pytest.raises(ConfigError):
        ChurnSchedule(events).validate(n0, 1000)


def test_trace_rows():
    res = run_drr(scenario([1.0] * 3, horizon=20), ChurnSchedule([ChurnEvent(8, "join", 4)]), trace=True)
    assert len(res.trace_rows) == 20
    slot, senders, kind, n, _w = res.trace_rows[7]
    assert slot == 8 and kind == "COLLISION" and n == 4 and len(senders.split(";")) == 2
