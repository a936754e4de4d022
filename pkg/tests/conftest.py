import contextlib

import numpy as np
import pytest

from aoisched.core import Buffer, Mode, ScenarioConfig

ACCEPTANCE = []  # (criterion number, passed, summary, details) in run order


@contextlib.contextmanager
def criterion(number, summary):
    """Record a PASS/FAIL line for an acceptance criterion, re-raising failures.

    The yielded dict collects measured values, printed after the summary.
    """
    info = {}
    try:
        yield info
    except BaseException:
        ACCEPTANCE.append((number, False, summary, info))
        raise
    ACCEPTANCE.append((number, True, summary, info))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, ok, summary, info in sorted(ACCEPTANCE, key=lambda r: r[0]):
        extra = "; ".join(f"{k}={v}" for k, v in info.items())
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {summary}"
        terminalreporter.write_line(line + (f" [{extra}]" if extra else ""))


def scenario(lam, buffer=Buffer.ONE_PACKET, horizon=10_000, seed=0, mode=Mode.NORMAL, warmup=None):
    return ScenarioConfig(n_terminals=len(lam), arrival_rates=lam, buffer=buffer, horizon=horizon,
                          warmup=warmup, seed=seed, mode=mode)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
