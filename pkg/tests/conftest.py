import numpy as np
import pytest

from anomalyscan.panel import MonthKey, MonthlyPanel
from anomalyscan.synth import SynthSpec, gen_sample

ACCEPTANCE_RESULTS = []


def record_acceptance(name, passed, detail=""):
    line = f"{'PASS' if passed else 'FAIL'}  {name}" + (f"  [{detail}]" if detail else "")
    ACCEPTANCE_RESULTS.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_RESULTS:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20240101)


@pytest.fixture(scope="session")
def synth_sample():
    return gen_sample(SynthSpec(seed=11, n_stocks=60, n_months=180,
                                regimes=(((0, 90), -0.6),)))


def make_panel(returns, start=MonthKey(2001, 1), prefix="S"):
    returns = np.asarray(returns, dtype=float)
    months = tuple(start + i for i in range(returns.shape[0]))
    stocks = tuple(f"{prefix}{i:03d}" for i in range(returns.shape[1]))
    return MonthlyPanel(months, stocks, returns)
