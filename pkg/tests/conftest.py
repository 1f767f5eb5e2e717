import numpy as np
import pandas as pd
import pytest
from hypothesis import settings

from panelfx.panel import PanelFrame

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")

ACCEPTANCE = {}


def random_panel(rng, n=400, dims=(8, 12), k=3):
    """Random multi-way FE panel with k continuous regressors and an outcome."""
    data = {f"fe{i}": rng.integers(0, g, n) for i, g in enumerate(dims)}
    X = rng.normal(size=(n, k))
    beta = rng.normal(size=k)
    y = X @ beta + rng.normal(size=n)
    for i, g in enumerate(dims):
        y += rng.normal(size=g)[data[f"fe{i}"]]
    df = pd.DataFrame({**{f"fe{i}": data[f"fe{i}"].astype(str) for i in range(len(dims))},
                       "outcome": y, **{f"x{j}": X[:, j] for j in range(k)}})
    return PanelFrame.from_dataframe(df, fe_dims=[f"fe{i}" for i in range(len(dims))]), X, y


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def acceptance():
    return ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])
