import numpy as np
import pytest

from sim2real.dataset import Dataset, Domain, Schema


@pytest.fixture
def toy_schema():
    return Schema(("f1", "f2"), label_column="signal")


@pytest.fixture
def separable():
    """500 points in 2-D split by a margin of 1 around the line x0 + x1 = 0."""
    rng = np.random.default_rng(12)
    x = rng.uniform(-3, 3, size=(4000, 2))
    s = x.sum(axis=1) / np.sqrt(2)
    x = x[np.abs(s) > 0.5][:500]
    y = (x.sum(axis=1) > 0).astype(int)
    return Dataset(x, Schema(("a", "b"), "y"), Domain.SOURCE, labels=y)


def pytest_addoption(parser):
    parser.addoption(
        "--kaggle-dir",
        default=None,
        help="directory holding training.csv and check_agreement.csv from the LHCb tau->3mu challenge",
    )
    parser.addoption("--kaggle-epochs", type=int, default=100, help="epochs for the real-data reproduction")


_VERDICTS: list[str] = []


@pytest.fixture
def verdict():
    """Record one acceptance line; printed together at the end of the run."""

    def record(label: str, passed, detail: str):
        status = "SKIP" if passed is None else "PASS" if passed else "FAIL"
        _VERDICTS.append(f"{label}: {status} ({detail})")
        print(_VERDICTS[-1])
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in _VERDICTS:
            terminalreporter.write_line(line)
