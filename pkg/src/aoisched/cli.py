"""Command-line front end.

Every subcommand writes its CSV files plus ``manifest.txt`` into ``--out``.
The manifest is a valid config file: feeding it back with ``--config``
reproduces the outputs byte for byte.

Exit codes: 0 success, 1 a figure's ordering checks failed, 2 configuration
error, 3 numerical nonconvergence.
"""

from __future__ import annotations

import argparse
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__, analysis, csvio, figures, mdp, plotting
from . import config as cfgmod
from .core import Buffer, Mode, ScenarioConfig
from .drr import ChurnSchedule, run_drr
from .errors import (ConfigError, DivergentAoIWarning, DomainError, InfeasibleError, InstabilityError,
                     ModelSizeError, NonConvergenceError)
from .p2solver import P2Instance, kkt_residual, solve_p2
from .policies import PolicyName, parse_policy
from .sim import ReplicationPlan, run_replicated

EXIT_OK, EXIT_CHECKS, EXIT_CONFIG, EXIT_NONCONVERGENCE = 0, 1, 2, 3


def _write_manifest(out: Path, command: str, values: dict, notes=()):
    lines = [
        "# aoisched run manifest; usable as --config to reproduce these outputs",
        f"# command: {command}",
        f"# version: {__version__}",
        f"# seed: {values['seed'] if values.get('seed') is not None else 'none'}",
    ]
    lines += [f"# note: {n}" for n in notes]
    with open(out / "manifest.txt", "w") as fh:
        fh.write("\n".join(lines) + "\n" + cfgmod.dump(values))


def _rates(values) -> tuple:
    lam = values.get("arrival_rates")
    if lam is None:
        raise ConfigError("arrival_rates is required")
    return lam


# --- subcommands -------------------------------------------------------------

def cmd_simulate(values, out: Path, args):
    lam = _rates(values)
    try:
        buffer, mode = Buffer(values["buffer"]), Mode(values["mode"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    name = values["policy"]
    rates = values["beta"]
    slots = None
    if values["sequence"] is not None:
        slots = tuple(s - 1 for s in values["sequence"])
    notes = []
    if name == PolicyName.RR_LAMBDA.value and rates is None:
        rates = tuple(solve_p2(P2Instance(lam)).beta)
        notes.append("rr_lambda rates solved from the mean peak AoI allocation problem")
    policy = parse_policy(name, rates=rates, slots=slots)
    sc = ScenarioConfig(n_terminals=len(lam), arrival_rates=lam, buffer=buffer, horizon=values["horizon"],
                        warmup=values["warmup"], seed=values["seed"], mode=mode)
    reps = values["replications"]
    rep = run_replicated(ReplicationPlan(reps, values["seed"]), sc, policy)
    se = math.sqrt(reps)

    def stat(xs):
        xs = np.asarray(xs, dtype=float)
        return float(xs.mean()), float(xs.std(ddof=1) / se) if len(xs) > 1 else 0.0

    rows = []
    rows.append(("aoi", "all", *stat([r.time_avg_aoi for r in rep.runs])))
    rows.append(("paoi", "all", *stat([r.time_avg_paoi for r in rep.runs])))
    for n in range(len(lam)):
        rows.append(("aoi", n + 1, *stat([r.per_terminal_aoi[n] for r in rep.runs])))
    for n in range(len(lam)):
        rows.append(("paoi", n + 1, *stat([r.per_terminal_paoi[n] for r in rep.runs])))
    for n in range(len(lam)):
        rows.append(("delivered", n + 1, *stat([r.delivered[n] for r in rep.runs])))
    rows.append(("blanks", "all", *stat([r.blanks for r in rep.runs])))
    rows.append(("collisions", "all", *stat([r.collisions for r in rep.runs])))
    rows.append(("unstable", "all", float(any(r.unstable for r in rep.runs)), 0.0))
    csvio.write(out / "simulate.csv", ("quantity", "terminal", "value", "stderr"), rows)
    _write_manifest(out, "simulate", values, notes)
    return EXIT_OK


def cmd_analyze(values, out: Path, args):
    lam = _rates(values)
    n = len(lam)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DivergentAoIWarning)
        rr = analysis.rr_one_avg_aoi(lam)
        lb_c, lb_a = analysis.lower_bounds(lam)
    rows = [
        ("rr_one", "all", rr),
        ("lb_collision", "all", lb_c),
        ("lb_arrival", "all", lb_a),
        ("un_one_floor", "all", analysis.un_one_floor(n)),
    ]
    for i, l in enumerate(lam):
        rows.append(("rr_one", i + 1, 1 / l + (n - 1) / 2 if l > 0 else math.inf))
    if all(l > 0 for l in lam) and sum(lam) < 1:
        beta, bound = analysis.heavy_traffic_beta(lam)
        rows.append(("heavy_traffic_bound", "all", bound))
        rows += [("beta_ub", i + 1, float(b)) for i, b in enumerate(beta)]
    csvio.write(out / "analyze.csv", ("quantity", "terminal", "value"), rows)

    pmf_rows = []
    for i, l in enumerate(lam):
        if l <= 0:
            continue
        dist = analysis.rr_one_stationary(l, n, values["j_max"])
        pmf_rows += [(i + 1, j, float(mu)) for j, mu in enumerate(dist.pmf, 1)]
    csvio.write(out / "analyze_pmf.csv", csvio.DIST_HEADER, pmf_rows)
    _write_manifest(out, "analyze", values)
    return EXIT_OK


def cmd_solve_p2(values, out: Path, args):
    lam = _rates(values)
    kw = {} if values["tolerance"] is None else {"tolerance": values["tolerance"]}
    sol = solve_p2(P2Instance(lam, **kw))
    rows = [(i + 1, l, float(b), float(1 / b)) for i, (l, b) in enumerate(zip(lam, sol.beta))]
    csvio.write(out / "p2.csv", ("terminal", "lambda", "beta", "interval"), rows)
    _, bound = analysis.heavy_traffic_beta(lam)
    summary = [
        ("objective", sol.objective),
        ("multiplier", sol.multiplier),
        ("iterations", sol.iterations),
        ("kkt_residual", kkt_residual(sol, lam)),
        ("heavy_traffic_bound", bound),
    ]
    csvio.write(out / "p2_summary.csv", ("quantity", "value"), summary)
    _write_manifest(out, "solve-p2", values)
    return EXIT_OK


def cmd_mdp(values, out: Path, args):
    lam = _rates(values)
    if len(lam) != 2:
        raise ConfigError(f"mdp-optimal supports exactly 2 terminals, got {len(lam)}")
    kw = {} if values["tolerance"] is None else {"tol": values["tolerance"]}
    res = mdp.solve_optimal(lam, h_max=values["h_max"], **kw)
    model, sol = res.model, res.solution
    pi = mdp.stationary_distribution(model, sol.policy)
    s = model.states
    greedy = np.where(s[:, 0] >= s[:, 2], 0, 1)
    recurrent = pi > 1e-12
    agree = float(pi[recurrent & (sol.policy == greedy)].sum() / pi[recurrent].sum())
    lb_c, lb_a = analysis.lower_bounds(lam)
    summary = [
        ("gain", sol.gain),
        ("span", sol.span),
        ("iterations", sol.iterations),
        ("h_max", model.h_max),
        ("states", model.n_states),
        ("boundary_mass", res.audit.boundary_mass),
        ("audit_passed", res.audit.passed),
        ("rr_one", analysis.rr_one_avg_aoi(lam)),
        ("lb_collision", lb_c),
        ("lb_arrival", lb_a),
        ("age_greedy_agreement", agree),
    ]
    csvio.write(out / "mdp.csv", ("quantity", "value"), summary)
    keep = np.flatnonzero(pi >= 1e-6)
    rows = [(*map(int, s[i]), int(sol.policy[i]) + 1, float(pi[i])) for i in keep]
    csvio.write(out / "mdp_policy.csv", ("h1", "a1", "h2", "a2", "schedule", "mass"), rows)
    _write_manifest(out, "mdp-optimal", values,
                    ["mdp_policy.csv lists states with stationary mass >= 1e-06 under the optimal policy"])
    return EXIT_OK


def cmd_drr(values, out: Path, args):
    lam = _rates(values)
    churn = ChurnSchedule()
    notes = []
    if args.churn:
        try:
            text = Path(args.churn).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read churn file: {exc}") from None
        churn = ChurnSchedule.parse(text)
        (out / "churn.txt").write_text(text)
        notes.append("churn schedule copied to churn.txt; pass it with --churn to reproduce")
    sc = ScenarioConfig(n_terminals=len(lam), arrival_rates=lam, horizon=values["horizon"],
                        warmup=values["warmup"], seed=values["seed"])
    res = run_drr(sc, churn, trace=True)
    csvio.write(out / "drr_trace.csv", ("slot", "transmitters", "feedback", "N", "W"), res.trace_rows)
    summary = [
        ("time_avg_aoi", res.time_avg_aoi),
        ("rr_one", analysis.rr_one_avg_aoi(lam)),
        ("collisions", res.collisions),
        ("nacks", res.nacks),
        ("blanks", res.blanks),
        ("final_n", int(res.n_bs[-1])),
    ]
    csvio.write(out / "drr_summary.csv", ("quantity", "value"), summary)
    _write_manifest(out, "drr-demo", values, notes)
    return EXIT_OK


def cmd_reproduce(values, out: Path, args):
    res = figures.reproduce(args.figure, values)
    for name, (header, rows) in res.tables.items():
        csvio.write(out / name, header, rows)
    script = out / f"{res.fig_id}_plot.py"
    png = f"{res.fig_id}.png"
    plotting.write_script(script, res.kind, list(res.tables), png, res.title, res.xlabel, res.ylabel)
    plotting.render(script)
    lines = [f"{'PASS' if c.passed else 'FAIL'} {c.name}" + (f" ({c.detail})" if c.detail else "")
             for c in res.checks]
    (out / f"{res.fig_id}_checks.txt").write_text("\n".join(lines) + "\n")
    for line in lines:
        print(line)
    _write_manifest(out, f"reproduce {res.fig_id}", values, res.notes)
    return EXIT_OK if res.passed else EXIT_CHECKS


COMMANDS = {
    "simulate": cmd_simulate,
    "analyze": cmd_analyze,
    "solve-p2": cmd_solve_p2,
    "mdp-optimal": cmd_mdp,
    "drr-demo": cmd_drr,
    "reproduce": cmd_reproduce,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value config file")
    common.add_argument("--out", default=".", help="output directory (created if missing)")
    common.add_argument("--seed", type=int, help="master seed, overrides the config")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config key; repeatable")
    p = argparse.ArgumentParser(prog="aoisched", description="AoI scheduling simulator and solvers")
    p.add_argument("--version", action="version", version=f"aoisched {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="simulate one scenario")
    sub.add_parser("analyze", parents=[common], help="closed-form values and distributions")
    sub.add_parser("solve-p2", parents=[common], help="optimal FCFS service rates")
    sub.add_parser("mdp-optimal", parents=[common], help="two-terminal average-cost optimum")
    d = sub.add_parser("drr-demo", parents=[common], help="run the decentralized round-robin protocol")
    d.add_argument("--churn", help="file of 'slot,join|leave,id' lines")
    r = sub.add_parser("reproduce", parents=[common], help="regenerate a figure's data, script and plot")
    r.add_argument("figure", choices=sorted(figures.RECIPES))
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        values = cfgmod.load(args.config, args.overrides, subcommand=args.command, seed=args.seed)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](values, out, args)
    except (ConfigError, DomainError, InfeasibleError, InstabilityError, ModelSizeError) as exc:
        print(f"aoisched: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NonConvergenceError as exc:
        print(f"aoisched: did not converge: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE


if __name__ == "__main__":
    sys.exit(main())
