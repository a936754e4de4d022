import math

import pytest

from aoisched import cli, csvio
from aoisched import config as cfgmod
from aoisched.errors import ConfigError


def run(*argv):
    return cli.main([str(a) for a in argv])


def rows_by_key(path):
    header, rows = csvio.read(path)
    return {(r[0], r[1]): r[2] for r in rows}


def test_parse_text():
    raw = cfgmod.parse_text("# c\narrival_rates = 0.5, 0.25  # two\n\nhorizon=10\n")
    assert raw == {"arrival_rates": "0.5, 0.25", "horizon": "10"}
    with pytest.raises(ConfigError):
        cfgmod.parse_text("horizon 10")
    with pytest.raises(ConfigError):
        cfgmod.parse_text("horizon = 1\nhorizon = 2")


def test_resolve():
    values = cfgmod.resolve({"arrival_rates": "0.5,0.25"}, "simulate")
    assert values["arrival_rates"] == (0.5, 0.25) and values["n_terminals"] == 2
    assert values["horizon"] == 100_000 and values["replications"] == 5
    with pytest.raises(ConfigError):
        cfgmod.resolve({"h_max": "30"}, "simulate")
    with pytest.raises(ConfigError):
        cfgmod.resolve({"arrival_rates": "0.5", "n_terminals": "2"}, "analyze")
    with pytest.raises(ConfigError):
        cfgmod.resolve({"horizon": "ten"}, "simulate")


def test_dump_round_trip():
    values = cfgmod.resolve({"arrival_rates": "0.1,0.3333333333333333", "seed": "7"}, "drr-demo")
    text = cfgmod.dump(values)
    again = cfgmod.resolve(cfgmod.parse_text(text), "drr-demo")
    assert again == values and cfgmod.dump(again) == text
    assert "seed = 7" in text and "warmup" not in text


def test_analyze_values(tmp_path):
    assert run("analyze", "--set", "arrival_rates=0.5,0.5", "--out", tmp_path) == 0
    got = rows_by_key(tmp_path / "analyze.csv")
    assert got[("rr_one", "all")] == 2.5
    assert got[("lb_collision", "all")] == 1.5
    assert got[("lb_arrival", "all")] == 2.0
    header, pmf = csvio.read(tmp_path / "analyze_pmf.csv")
    assert header == ("terminal", "j", "mu")
    assert pmf[0] == [1, 1, 0.25]


def test_analyze_zero_rate(tmp_path):
    assert run("analyze", "--set", "arrival_rates=0,0.5", "--out", tmp_path) == 0
    got = rows_by_key(tmp_path / "analyze.csv")
    assert got[("lb_arrival", "all")] == math.inf
    assert "inf" in (tmp_path / "analyze.csv").read_text()


def test_analyze_reemit_is_byte_identical(tmp_path):
    assert run("analyze", "--set", "arrival_rates=0.3,0.7,0.123456789", "--out", tmp_path) == 0
    for name in ("analyze.csv", "analyze_pmf.csv"):
        original = (tmp_path / name).read_bytes()
        header, rows = csvio.read(tmp_path / name)
        assert csvio.render(header, rows).encode() == original


def test_manifest_reproduces_outputs(tmp_path):
    first, second = tmp_path / "a", tmp_path / "b"
    args = ["simulate", "--set", "arrival_rates=0.4,0.8", "--set", "horizon=5000", "--set", "replications=3",
            "--seed", 11]
    assert run(*args, "--out", first) == 0
    manifest = (first / "manifest.txt").read_text()
    assert "# seed: 11" in manifest and "seed = 11" in manifest
    assert run("simulate", "--config", first / "manifest.txt", "--out", second) == 0
    assert (first / "simulate.csv").read_bytes() == (second / "simulate.csv").read_bytes()
    assert (first / "manifest.txt").read_bytes() == (second / "manifest.txt").read_bytes()


def test_simulate_rr_lambda_solves_rates(tmp_path):
    assert run("simulate", "--set", "arrival_rates=0.2,0.3", "--set", "policy=rr_lambda",
               "--set", "buffer=fcfs", "--set", "horizon=5000", "--set", "replications=2", "--out", tmp_path) == 0
    got = rows_by_key(tmp_path / "simulate.csv")
    assert got[("unstable", "all")] == 0
    assert "solved" in (tmp_path / "manifest.txt").read_text()


def test_solve_p2_and_mdp(tmp_path):
    assert run("solve-p2", "--set", "arrival_rates=0.2,0.3", "--out", tmp_path) == 0
    header, rows = csvio.read(tmp_path / "p2.csv")
    assert header == ("terminal", "lambda", "beta", "interval")
    assert sum(r[2] for r in rows) == pytest.approx(1.0, abs=1e-9)
    assert run("mdp-optimal", "--set", "arrival_rates=1,1", "--set", "h_max=10", "--out", tmp_path) == 0
    got = dict(csvio.read(tmp_path / "mdp.csv")[1])
    assert got["gain"] == pytest.approx(1.5, abs=1e-6)
    assert got["audit_passed"] is True


def test_drr_demo_with_churn(tmp_path):
    churn = tmp_path / "churn.in"
    churn.write_text("100,join,4\n300,leave,1\n")
    out = tmp_path / "out"
    assert run("drr-demo", "--set", "arrival_rates=0.5,0.5,0.5", "--set", "horizon=1000",
               "--churn", churn, "--out", out) == 0
    got = dict(csvio.read(out / "drr_summary.csv")[1])
    assert got["collisions"] == 1 and got["nacks"] == 1 and got["final_n"] == 3
    assert (out / "churn.txt").read_text() == churn.read_text()
    header, rows = csvio.read(out / "drr_trace.csv")
    assert header == ("slot", "transmitters", "feedback", "N", "W") and len(rows) == 1000


def test_reproduce_fig3(tmp_path):
    code = run("reproduce", "fig3", "--set", "horizon=20000", "--set", "replications=2", "--out", tmp_path)
    assert code == 0
    for name in ("fig3_analytic.csv", "fig3_empirical.csv", "fig3_plot.py", "fig3.png", "fig3_checks.txt"):
        assert (tmp_path / name).exists()
    header, _ = csvio.read(tmp_path / "fig3_analytic.csv")
    assert header == ("terminal", "j", "mu")


@pytest.mark.parametrize("argv,code", [
    (["analyze", "--set", "horizon=10"], 2),
    (["analyze", "--set", "arrival_rates=1.5"], 2),
    (["analyze", "--config", "/nonexistent/cfg"], 2),
    (["simulate"], 2),
    (["solve-p2", "--set", "arrival_rates=0.6,0.6"], 2),
    (["mdp-optimal", "--set", "arrival_rates=0.5,0.5,0.5"], 2),
    (["reproduce", "fig5", "--set", "arrival_rates=0.5"], 2),
    (["drr-demo", "--set", "arrival_rates=0.5", "--churn", "/nonexistent/churn"], 2),
    (["solve-p2", "--set", "arrival_rates=0.1,0.2,0.3", "--set", "tolerance=1e-30"], 3),
])
def test_exit_codes(tmp_path, argv, code):
    assert run(*argv, "--out", tmp_path) == code


def test_argparse_errors_exit_2():
    with pytest.raises(SystemExit) as info:
        cli.main(["reproduce", "fig4"])
    assert info.value.code == 2
