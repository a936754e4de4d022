"""Figure recipes: sweeps, reference curves and the orderings each must satisfy.

Every recipe is deterministic given its parameters.  Each sweep point
derives its own seed from the master seed, the figure id and the point index,
and all policies at a point share that seed, so their arrival sequences are
coupled.  Checks are returned with the data rather than raised, so that the
outputs are still written when a check fails.
"""

from __future__ import annotations

import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import analysis, mdp
from .core import Buffer, ScenarioConfig
from .errors import ConfigError
from .p2solver import P2Instance, solve_p2
from .policies import PolicyKind, PolicyName, rr_lambda
from .sim import ReplicationPlan, run_replicated

FIG7_N_CAP = 500
TOL = 1e-6  # slack for exact ties such as the lambda = 1 point of fig5


@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class FigureResult:
    fig_id: str
    kind: str  # "sweep" or "distribution"
    tables: dict  # file name -> (header, rows)
    checks: list = field(default_factory=list)
    notes: list = field(default_factory=list)
    title: str = ""
    xlabel: str = ""
    ylabel: str = ""

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def point_seed(master: int, fig_id: str, index: int) -> int:
    ss = np.random.SeedSequence([int(master), zlib.crc32(fig_id.encode()), int(index)])
    return int(ss.generate_state(1, np.uint64)[0])


def _simulate(task):
    lam, buffer, policy, horizon, reps, seed, metric = task
    cfg = ScenarioConfig(n_terminals=len(lam), arrival_rates=lam, buffer=buffer, horizon=horizon, seed=seed)
    rep = run_replicated(ReplicationPlan(reps, seed), cfg, policy)
    if metric == "paoi":
        mean, _ = rep.paoi
        return mean, rep.stderr_paoi if reps > 1 else 0.0
    mean, _ = rep.aoi
    return mean, rep.stderr_aoi if reps > 1 else 0.0


def _mdp_gain(task):
    lam, h_max = task
    return mdp.solve_optimal(lam, h_max=h_max).gain


def _map(func, tasks, jobs):
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(func, tasks))
    return [func(t) for t in tasks]


def _sweep_rows(xs, series):
    """Long-format rows ordered by x, then by series insertion order."""
    rows = []
    for i, x in enumerate(xs):
        for name, values in series.items():
            v, e = values[i]
            rows.append((x, name, float(v), float(e)))
    return rows


def _params(p, key, default):
    v = p.get(key)
    return default if v is None else v


# --- two-terminal benchmarks -------------------------------------------------

def _two_terminal(fig_id, xs, rates_for, p):
    horizon = _params(p, "horizon", 100_000)
    reps = _params(p, "replications", 5)
    seed = _params(p, "seed", 0)
    jobs = _params(p, "jobs", 1)
    h_max = _params(p, "h_max", mdp.DEFAULT_H_MAX)
    lams = [rates_for(x) for x in xs]
    for lam in lams:
        if not all(0 < l <= 1 for l in lam):
            raise ConfigError(f"{fig_id}: rates {lam} outside (0, 1]")

    gains = _map(_mdp_gain, [(lam, h_max) for lam in lams], jobs)
    policies = [("un_one", PolicyName.UN_ONE), ("age_greedy", PolicyName.AGE_GREEDY), ("rr_one", PolicyName.RR_ONE)]
    tasks = [
        (lam, Buffer.ONE_PACKET, PolicyKind(pol), horizon, reps, point_seed(seed, fig_id, i), "aoi")
        for _, pol in policies for i, lam in enumerate(lams)
    ]
    sims = _map(_simulate, tasks, jobs)
    k = len(lams)
    series = {
        "lb_collision": [(analysis.lower_bounds(lam)[0], 0.0) for lam in lams],
        "lb_arrival": [(analysis.lower_bounds(lam)[1], 0.0) for lam in lams],
        "mdp": [(g, 0.0) for g in gains],
    }
    for j, (name, _) in enumerate(policies):
        series[name] = sims[j * k:(j + 1) * k]
    rows = _sweep_rows(xs, series)

    checks = []
    lb = [max(a[0], b[0]) for a, b in zip(series["lb_collision"], series["lb_arrival"])]
    bad = [x for x, l, g in zip(xs, lb, gains) if l > g + TOL]
    checks.append(Check("bounds <= mdp", not bad, f"violations at x={bad}" if bad else ""))
    bad = [(x, name) for name, _ in policies for x, g, (v, _e) in zip(xs, gains, series[name]) if g > v + TOL]
    checks.append(Check("mdp <= policies", not bad, f"violations {bad}" if bad else ""))
    gap = [v - g for g, (v, _e) in zip(gains, series["rr_one"])]
    checks.append(Check("rr_one - mdp <= 0.5", max(gap) <= 0.5, f"max gap {max(gap):.4g}"))
    return series, rows, checks


def fig5(p) -> FigureResult:
    xs = list(_params(p, "sweep", (0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0)))
    series, rows, checks = _two_terminal("fig5", xs, lambda x: (x, x), p)
    mid = [i for i, x in enumerate(xs) if 0.4 <= x <= 0.8]
    bad = [xs[i] for i in mid if not (series["rr_one"][i][0] <= series["age_greedy"][i][0] <= series["un_one"][i][0])]
    checks.append(Check("rr_one <= age_greedy <= un_one for 0.4 <= lambda <= 0.8", not bad,
                        f"violations at {bad}" if bad else ""))
    if 1.0 in xs:
        i = xs.index(1.0)
        vals = [series[s][i][0] for s in ("mdp", "age_greedy", "rr_one")]
        ok = all(abs(v - 1.5) <= TOL for v in vals)
        checks.append(Check("mdp = age_greedy = rr_one = 1.5 at lambda = 1", ok, f"values {vals}"))
    return FigureResult("fig5", "sweep", {"fig5.csv": (("x", "policy", "value", "stderr"), rows)}, checks,
                        title="N = 2, equal arrival rates", xlabel="arrival rate", ylabel="time-average AoI")


def fig6(p) -> FigureResult:
    fixed = _params(p, "fixed_rate", 0.5)
    xs = list(_params(p, "sweep", (0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0)))
    series, rows, checks = _two_terminal("fig6", xs, lambda x: (x, fixed), p)
    notes = [
        f"lambda_2 = {fixed:g} fixed and lambda_1 swept, following the figure caption; "
        "the accompanying text states the roles the other way round"
    ]
    return FigureResult("fig6", "sweep", {"fig6.csv": (("x", "policy", "value", "stderr"), rows)}, checks, notes,
                        title=f"N = 2, lambda_2 = {fixed:g}", xlabel="lambda_1", ylabel="time-average AoI")


# --- many terminals ----------------------------------------------------------

def fig7_rates(master: int, index: int, n: int) -> tuple:
    rng = np.random.default_rng(point_seed(master, "fig7-rates", index))
    return tuple(1.0 - rng.random(n))  # uniform on (0, 1]


def fig7(p) -> FigureResult:
    xs = [int(x) for x in _params(p, "sweep", (10, 20, 50, 100, 200))]
    if any(n < 1 or n > FIG7_N_CAP for n in xs):
        raise ConfigError(f"fig7: N must lie in 1..{FIG7_N_CAP}")
    horizon = _params(p, "horizon", 100_000)
    reps = _params(p, "replications", 5)
    seed = _params(p, "seed", 0)
    jobs = _params(p, "jobs", 1)
    lams = [fig7_rates(seed, i, n) for i, n in enumerate(xs)]
    policies = [("rr_one", PolicyName.RR_ONE), ("myopic_gsi", PolicyName.MYOPIC_GSI), ("un_one", PolicyName.UN_ONE)]
    tasks = [
        (lam, Buffer.ONE_PACKET, PolicyKind(pol), horizon, reps, point_seed(seed, "fig7", i), "aoi")
        for _, pol in policies for i, lam in enumerate(lams)
    ]
    sims = _map(_simulate, tasks, jobs)
    k = len(xs)
    series = {"rr_one_formula": [(analysis.rr_one_avg_aoi(lam), 0.0) for lam in lams]}
    for j, (name, _) in enumerate(policies):
        series[name] = sims[j * k:(j + 1) * k]
    rows = _sweep_rows(xs, series)

    checks = []
    bad = [n for n, (r, _), (u, _e) in zip(xs, series["rr_one"], series["un_one"]) if r > u]
    checks.append(Check("rr_one <= un_one", not bad, f"violations at N={bad}" if bad else ""))
    bad = [n for n, (m, _), (u, _e) in zip(xs, series["myopic_gsi"], series["un_one"]) if m > u]
    checks.append(Check("myopic_gsi <= un_one", not bad, f"violations at N={bad}" if bad else ""))
    big = [i for i, n in enumerate(xs) if n >= 200]
    if big:
        i = big[-1]
        n = xs[i]
        rr = series["rr_one"][i][0] / n
        un = series["un_one"][i][0] / n
        checks.append(Check(f"rr_one / N near 0.5 at N={n}", abs(rr - 0.5) < 0.1, f"ratio {rr:.4g}"))
        checks.append(Check(f"un_one / N >= 1 at N={n}", un >= 1.0, f"ratio {un:.4g}"))
    notes = ["arrival rates drawn uniformly on (0, 1] per point; all policies at a point share rates and seed"]
    return FigureResult("fig7", "sweep", {"fig7.csv": (("x", "policy", "value", "stderr"), rows)}, checks, notes,
                        title="rates uniform on (0, 1]", xlabel="number of terminals N", ylabel="time-average AoI")


def fig8(p) -> FigureResult:
    xs = [int(x) for x in _params(p, "sweep", (5, 10, 20, 50, 100))]
    eps = _params(p, "epsilon", 0.1)
    if not 0 < eps < 1:
        raise ConfigError("fig8: epsilon must lie in (0, 1)")
    horizon = _params(p, "horizon", 100_000)
    reps = _params(p, "replications", 5)
    seed = _params(p, "seed", 0)
    jobs = _params(p, "jobs", 1)
    lams = [tuple([(1 - eps) / n] * n) for n in xs]
    sols = [solve_p2(P2Instance(lam)) for lam in lams]
    pols = [
        ("rr_lambda", [rr_lambda(s.beta) for s in sols]),
        ("un_one", [PolicyKind(PolicyName.UN_ONE)] * len(xs)),
        ("myopic_gsi", [PolicyKind(PolicyName.MYOPIC_GSI)] * len(xs)),
    ]
    tasks = [
        (lam, Buffer.FCFS, pol, horizon, reps, point_seed(seed, "fig8", i), "paoi")
        for _, plist in pols for i, (lam, pol) in enumerate(zip(lams, plist))
    ]
    sims = _map(_simulate, tasks, jobs)
    k = len(xs)
    series = {"p2_objective": [(s.objective, 0.0) for s in sols]}
    for j, (name, _) in enumerate(pols):
        series[name] = sims[j * k:(j + 1) * k]
    rows = _sweep_rows(xs, series)
    bad = [n for n, (r, _), (u, _e) in zip(xs, series["rr_lambda"], series["un_one"]) if r > u]
    checks = [Check("rr_lambda <= un_one", not bad, f"violations at N={bad}" if bad else "")]
    notes = [
        f"FCFS buffers, equal rates (1 - {eps:g}) / N; values are time-average peak AoI",
        "un_one plays the uniformly random scheduler",
    ]
    return FigureResult("fig8", "sweep", {"fig8.csv": (("x", "policy", "value", "stderr"), rows)}, checks, notes,
                        title=f"FCFS, equal rates, epsilon = {eps:g}", xlabel="number of terminals N",
                        ylabel="time-average peak AoI")


# --- distribution ------------------------------------------------------------

def fig3(p) -> FigureResult:
    lam = tuple(_params(p, "arrival_rates", (0.2, 0.4, 0.6, 0.8, 1.0)))
    if not all(0 < l <= 1 for l in lam):
        raise ConfigError("fig3: arrival rates must lie in (0, 1]")
    n = len(lam)
    j_max = _params(p, "j_max", n + 25)
    horizon = _params(p, "horizon", 100_000)
    reps = _params(p, "replications", 5)
    seed = _params(p, "seed", 0)
    cfg = ScenarioConfig(n_terminals=n, arrival_rates=lam, horizon=horizon, seed=point_seed(seed, "fig3", 0))
    rep = run_replicated(ReplicationPlan(reps, cfg.seed), cfg, PolicyKind(PolicyName.RR_ONE))
    emp = rep.pooled.aoi_histogram
    analytic, empirical, checks = [], [], []
    worst = 0.0
    for i, l in enumerate(lam):
        dist = analysis.rr_one_stationary(l, n)
        worst = max(worst, dist.tv_distance(emp[i]))
        for j in range(1, j_max + 1):
            analytic.append((i + 1, j, dist.prob(j)))
            empirical.append((i + 1, j, float(emp[i, j - 1]) if j <= emp.shape[1] else 0.0))
    checks.append(Check("total variation < 0.03 per terminal", worst < 0.03, f"worst {worst:.4g}"))
    ones = [i for i, l in enumerate(lam) if l == 1.0]
    for i in ones:
        uniform = np.allclose(emp[i, :n], 1.0 / n, atol=1e-12) and emp[i, n:].sum() == 0
        checks.append(Check(f"terminal {i + 1} (lambda = 1) exactly uniform on 1..N", bool(uniform)))
    header = ("terminal", "j", "mu")
    tables = {"fig3_analytic.csv": (header, analytic), "fig3_empirical.csv": (header, empirical)}
    return FigureResult("fig3", "distribution", tables, checks,
                        notes=[f"RR-ONE, N = {n}, rates {','.join('%g' % l for l in lam)}"],
                        title=f"RR-ONE stationary AoI, N = {n}", xlabel="AoI j", ylabel="probability")


RECIPES = {"fig3": fig3, "fig5": fig5, "fig6": fig6, "fig7": fig7, "fig8": fig8}


def reproduce(fig_id: str, params: dict | None = None) -> FigureResult:
    if fig_id not in RECIPES:
        raise ConfigError(f"unknown figure {fig_id!r}; choose from {', '.join(sorted(RECIPES))}")
    params = dict(params or {})
    if fig_id != "fig3":
        for key in ("arrival_rates", "n_terminals", "j_max"):
            if params.get(key) is not None:
                raise ConfigError(f"{fig_id} does not take {key}")
    if fig_id == "fig3" and params.get("n_terminals") not in (None, len(params.get("arrival_rates") or ())):
        raise ConfigError("fig3: n_terminals must match arrival_rates")
    return RECIPES[fig_id](params)
