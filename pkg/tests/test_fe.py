import numpy as np
import pandas as pd
import pytest
from hypothesis import given, strategies as st

from conftest import random_panel
from oracles import dummy_ols
from panelfx.binning import from_columns
from panelfx.errors import EmptyDesign, InvalidConfig, NoConvergence, ZeroRows
from panelfx.fe import ModelSpec, absorb, fit_model, ols
from panelfx.panel import PanelFrame


def _fit(frame, X, names=None, **kw):
    names = names or [f"x{j}" for j in range(X.shape[1])]
    return fit_model(frame, ModelSpec(from_columns(names, list(X.T)), frame.fe_dims, **kw))


@given(st.integers(0, 2**31 - 1), st.sampled_from([(6, 9), (5, 7, 4), (12, 3, 8)]))
def test_matches_dummy_regression(seed, dims):
    rng = np.random.default_rng(seed)
    frame, X, y = random_panel(rng, n=int(rng.integers(80, 400)), dims=dims)
    fit = _fit(frame, X, tol=1e-12)
    ref, resid = dummy_ols(y, X, frame.dim_codes(frame.fe_dims))
    np.testing.assert_allclose(fit.vector(), ref, atol=1e-7)
    np.testing.assert_allclose(fit.residuals, resid, atol=1e-6)


def test_absorbed_column_is_dropped(rng):
    frame, X, y = random_panel(rng, n=300, dims=(6, 10))
    fe_col = rng.normal(size=6)[frame.codes["fe0"]]
    X2 = np.column_stack([X, fe_col])
    fit = _fit(frame, X2)
    assert fit.demeaned_design_cols_dropped == ["x3"]
    ref, _ = dummy_ols(y, X, frame.dim_codes(frame.fe_dims))
    np.testing.assert_allclose(fit.vector(), ref, atol=1e-7)


def test_collinear_column_is_dropped(rng):
    frame, X, y = random_panel(rng, n=300)
    X2 = np.column_stack([X, X[:, 0] + 2 * X[:, 1]])
    fit = _fit(frame, X2)
    assert len(fit.names) == 3 and len(fit.demeaned_design_cols_dropped) == 1


def test_ols_pivoting_original_order(rng):
    X = rng.normal(size=(50, 4)) * np.array([1e-3, 10, 1, 100])
    b = np.array([1.0, -2.0, 3.0, 0.5])
    res = ols(X @ b, X)
    np.testing.assert_allclose(res.coef, b, rtol=1e-10)
    np.testing.assert_array_equal(res.retained, [0, 1, 2, 3])


def test_absorb_vector_and_tolerance(rng):
    frame, X, y = random_panel(rng, n=500, dims=(9, 11, 5))
    r, sweeps = absorb(y, frame.dim_codes(frame.fe_dims), tol=1e-10)
    assert r.shape == y.shape and sweeps >= 1
    for c in frame.dim_codes(frame.fe_dims):
        assert np.abs(np.bincount(c, weights=r) / np.bincount(c)).max() <= 1e-10


def test_no_convergence(rng):
    frame, X, y = random_panel(rng, n=500, dims=(9, 11, 5))
    with pytest.raises(NoConvergence):
        _fit(frame, X, tol=1e-14, max_iter=2)


def test_constant_column_one_sweep():
    df = pd.DataFrame({"g": list("aabbcc"), "outcome": [1.0, 2, 3, 4, 5, 6], "x": [1.0] * 6})
    fr = PanelFrame.from_dataframe(df, fe_dims=["g"])
    with pytest.raises(EmptyDesign):
        _fit(fr, np.ones((6, 1)))
    _, sweeps = absorb(np.ones(6), [fr.codes["g"]])
    assert sweeps == 1


def test_errors():
    df = pd.DataFrame({"g": pd.Series([], dtype=str), "outcome": pd.Series([], dtype=float)})
    fr = PanelFrame.from_dataframe(df, fe_dims=["g"])
    with pytest.raises(ZeroRows):
        _fit(fr, np.zeros((0, 1)))
    with pytest.raises(InvalidConfig):
        ModelSpec(from_columns(["x"], [np.zeros(2)]), ())


def test_dof_and_log(rng):
    frame, X, y = random_panel(rng, n=300, dims=(6, 10))
    fit = _fit(frame, X)
    assert fit.dof_absorbed == frame.n_levels("fe0") + frame.n_levels("fe1") - 1
    assert "sweeps" in fit.run_log() and fit.dof_model == 3
