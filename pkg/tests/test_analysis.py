import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aoisched.analysis import (
    CounterexampleParams, counterexample_alternative, counterexample_constant, counterexample_gap,
    counterexample_myopic, enumerate_two_slot, heavy_traffic_beta, lower_bounds, paoi_formula,
    rr_one_avg_aoi, rr_one_stationary, terminal_age_stationary, un_one_floor,
)
from aoisched.errors import DivergentAoIWarning, DomainError, InfeasibleError, InstabilityError

rates = st.lists(st.floats(0.01, 1.0), min_size=1, max_size=30)


def test_rr_one_examples():
    assert rr_one_avg_aoi([0.5, 0.5]) == pytest.approx(2.5)
    for n in (1, 3, 10, 57):
        assert rr_one_avg_aoi([1.0] * n) == pytest.approx((n + 1) / 2)


def test_zero_rate_is_signaled_infinity():
    with pytest.warns(DivergentAoIWarning):
        assert rr_one_avg_aoi([0.0, 0.5]) == math.inf
    with pytest.warns(DivergentAoIWarning):
        lb = lower_bounds([0.0, 0.5])
    assert lb == (1.5, math.inf)


def test_lower_bounds_examples():
    assert lower_bounds([0.5, 0.5]) == (1.5, 2.0)
    assert lower_bounds([1.0]) == (1.0, 1.0)
    assert un_one_floor(1) == 1 and un_one_floor(20) == 20
    with pytest.raises(DomainError):
        un_one_floor(0)
    with pytest.raises(DomainError):
        rr_one_avg_aoi([1.2])


@settings(max_examples=300, deadline=None)
@given(rates)
def test_sandwich(lam):
    n = len(lam)
    value = rr_one_avg_aoi(lam)
    best = max(lower_bounds(lam))
    assert best <= value + 1e-12
    assert value - best <= (n - 1) / 2 + 1e-9


def test_scaling():
    n = 10**4
    assert abs(rr_one_avg_aoi([0.7] * n) / n - 0.5) < 0.01
    lam = [1e-5] + [0.6] * 9
    assert lam[0] * rr_one_avg_aoi(lam) == pytest.approx(1 / 10, rel=1e-3)


def _periodic_chain_pmf(lam, n, cap):
    """Marginal AoI law of one terminal served every n-th slot, by iterating the joint law.

    State is (AoI, buffered age or 0) at the end of each slot.  An oracle
    independent of the closed form.
    """
    p = np.zeros((cap + 1, cap + 1))
    p[1, 0] = 1.0
    marg = np.zeros(cap + 1)
    for rep in range(60):
        for phase in range(n):
            q = np.zeros_like(p)
            served = phase == 0
            for h in range(1, cap + 1):
                for a in range(cap + 1):
                    w = p[h, a]
                    if w == 0:
                        continue
                    for arrive, pr in ((True, lam), (False, 1 - lam)):
                        if pr == 0:
                            continue
                        age = 1 if arrive else (a + 1 if a else 0)
                        if served and age:
                            nh, na = age, 0
                        else:
                            nh, na = h + 1, age
                        q[min(nh, cap), min(na, cap)] += w * pr
            p = q
            if rep == 59:
                marg += p.sum(axis=1)
    return marg[1:] / n


@pytest.mark.parametrize("lam,n", [(0.3, 2), (0.6, 4), (1.0, 3), (0.5, 1)])
def test_rr_one_stationary_matches_chain(lam, n):
    dist = rr_one_stationary(lam, n, j_max=30)
    oracle = _periodic_chain_pmf(lam, n, cap=120)
    assert np.allclose(dist.pmf, oracle[:30], atol=1e-10)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.01, 1.0), st.integers(1, 40), st.none() | st.integers(1, 80))
def test_rr_one_stationary_mass_and_mean(lam, n, j_max):
    dist = rr_one_stationary(lam, n, j_max)
    assert np.all(dist.pmf >= 0) and dist.tail_mass >= 0
    assert dist.total_mass() == pytest.approx(1.0, abs=1e-12)
    assert dist.mean() == pytest.approx(1 / lam + (n - 1) / 2, rel=1e-10)


def test_rr_one_stationary_full_rate_uniform():
    dist = rr_one_stationary(1.0, 5)
    assert np.allclose(dist.pmf[:5], 0.2, atol=0) and dist.pmf[5:].sum() == 0
    assert dist.tail_mass == 0


def test_terminal_age_geometric():
    d = terminal_age_stationary(0.5)
    assert [d.prob(j) for j in (1, 2, 3)] == [0.5, 0.25, 0.125]
    assert terminal_age_stationary(1.0).prob(1) == 1.0
    for lam in (0.05, 0.3, 0.9):
        d = terminal_age_stationary(lam, j_max=7)
        assert d.total_mass() == pytest.approx(1, abs=1e-12)
        assert d.mean() == pytest.approx(1 / lam, rel=1e-12)


def test_tv_distance():
    d = rr_one_stationary(1.0, 4)
    assert d.tv_distance([0.25] * 4) == pytest.approx(0.0, abs=1e-15)
    assert d.tv_distance([0.5, 0.5]) == pytest.approx(0.5)


def test_paoi_formula():
    assert paoi_formula(0.25, 0.5) == pytest.approx(7.0)
    assert paoi_formula(0.25, 1e12) == pytest.approx(4.0)
    with pytest.raises(InstabilityError):
        paoi_formula(0.5, 0.5)


def test_heavy_traffic_beta():
    beta, value = heavy_traffic_beta([0.4, 0.4])
    assert np.allclose(beta, [0.5, 0.5])
    assert value == pytest.approx(paoi_formula(0.4, 0.5))
    lam = np.random.default_rng(3).dirichlet(np.ones(5)) * 0.8
    assert heavy_traffic_beta(lam)[0].sum() == pytest.approx(1.0)
    with pytest.raises(InfeasibleError):
        heavy_traffic_beta([0.5, 0.5])


def _draw_params(rng):
    g2 = rng.uniform(0.5, 20)
    g1 = rng.uniform(g2 / 2, g2)
    h1 = g1 + rng.uniform(0, 10)
    h2 = h1 + g2 + rng.uniform(1e-3, 20)
    return CounterexampleParams(rng.uniform(1e-3, 1 - 1e-3), (g1, g2), (h1, h2))


def test_counterexample_matches_enumeration():
    rng = np.random.default_rng(2024)
    for _ in range(1000):
        p = _draw_params(rng)
        brute = enumerate_two_slot(p) - enumerate_two_slot(p, first=0, second=1)
        assert counterexample_gap(p) == pytest.approx(brute, abs=1e-12)
        assert counterexample_alternative(p) == pytest.approx(enumerate_two_slot(p, 0, 1), abs=1e-12)


def test_counterexample_instance():
    p = CounterexampleParams(0.01, (3, 4), (1, 10))
    assert counterexample_constant(p) == pytest.approx(7.0)
    gap = counterexample_gap(p)
    assert gap > 0
    # value of the exhaustive two-slot enumeration
    assert gap == pytest.approx(0.492525, abs=1e-12)
    assert counterexample_myopic(p) == pytest.approx(enumerate_two_slot(p), abs=1e-12)


def test_counterexample_gap_vanishes_for_large_delta():
    gaps = [counterexample_gap(CounterexampleParams(d, (3, 4), (1, 10))) for d in (0.5, 0.9, 0.99, 0.999)]
    assert all(x > y for x, y in zip(gaps, gaps[1:]))
    assert abs(gaps[-1]) < 1e-3


@pytest.mark.parametrize("delta,gains,aoi", [
    (0.0, (3, 4), (1, 10)),
    (0.5, (1, 4), (1, 10)),
    (0.5, (3, 4), (1, 4)),
])
def test_counterexample_domain(delta, gains, aoi):
    with pytest.raises(DomainError):
        CounterexampleParams(delta, gains, aoi)


def test_warnings_do_not_leak_for_valid_rates():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        rr_one_avg_aoi([0.2, 0.9])
