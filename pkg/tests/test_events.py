from dataclasses import replace

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, strategies as st

from panelfx import synth
from panelfx.binning import marginal_design
from panelfx.errors import CollinearEvent, EventOutOfRange, InvalidConfig, ZeroSd
from panelfx.events import (EventSpec, describe_sd_multiple, fit_with_events, pool_platforms, read_events,
                            residualize, sd_multiple, write_events)
from panelfx.fe import ModelSpec
from panelfx.panel import PanelFrame


def _pure_fe_panel(rng, n_city=6, n_day=60):
    city = np.repeat(np.arange(n_city), n_day)
    day = np.tile(np.arange(n_day), n_city)
    month = day // 30
    cm = city * 10 + month
    y = rng.normal(size=n_city * 3)[city * 3 + month] + rng.normal(size=n_day)[day]
    df = pd.DataFrame({"cm": cm.astype(str), "day": day.astype(str), "outcome": y})
    return PanelFrame.from_dataframe(df, fe_dims=["cm", "day"])


def test_pure_fe_outcome_has_zero_residual(rng):
    r = residualize(_pure_fe_panel(rng))
    assert np.abs(r.values).max() < 1e-9
    assert r.sd < 1e-9


def test_residuals_are_idempotent_and_demeaned(rng):
    frame = _pure_fe_panel(rng)
    frame = frame.with_columns(outcome=frame.column("outcome") + rng.normal(size=frame.n))
    r1 = residualize(frame)
    r2 = residualize(frame.with_columns(outcome=r1.values))
    np.testing.assert_allclose(r1.values, r2.values, atol=1e-9)
    for d in frame.fe_dims:
        means = np.bincount(frame.codes[d], weights=r1.values) / np.bincount(frame.codes[d])
        assert np.abs(means).max() <= 1e-10


def test_residual_sd_of_synthetic_noise():
    cfg = replace(synth.SynthConfig(seed=5, n_cities=30, n_days=300), count_mode="continuous")
    frame, _ = synth.simulate(cfg, validated=True)
    r = residualize(frame)
    assert r.sd_pct == pytest.approx(100 * r.sd)
    # residual variance = noise + weather-driven variation, so at least the noise sd (less dof loss)
    assert 0.06 < r.sd < 0.12


def test_sd_multiple_examples():
    assert sd_multiple(34.22, 7.0) == pytest.approx(4.8886, abs=1e-4)
    assert describe_sd_multiple(sd_multiple(34.22, 7.0)) == "≈ 4.9 (≈ 5 standard deviations)"
    assert describe_sd_multiple(1.04) == "≈ 1.0 (≈ 1 standard deviation)"
    assert describe_sd_multiple(-2.6) == "≈ -2.6 (≈ -3 standard deviations)"
    with pytest.raises(ZeroSd):
        sd_multiple(1.0, 0.0)


@given(st.floats(-200, 200), st.floats(0.01, 100), st.floats(0.1, 10))
def test_sd_multiple_homogeneous(e, s, c):
    assert sd_multiple(c * e, c * s) == pytest.approx(sd_multiple(e, s), rel=1e-12, abs=1e-12)


@pytest.fixture(scope="module")
def fb():
    cfg = synth.SynthConfig(seed=3, n_cities=12, n_days=500, planted_events=[
        synth.EventPlant("party", "new_york", ("2009-03-01", "2009-07-04", "2010-01-01"), float(np.log(1.2)))])
    frame, truth = synth.simulate(cfg, validated=True)
    return frame, truth, ModelSpec(marginal_design(frame), frame.fe_dims)


def test_event_rows_match_truth(fb):
    frame, truth, spec = fb
    ev = EventSpec("party", "new_york", ("2009-03-01", "2009-07-04", "2010-01-01"))
    assert ev.indicator(frame).sum() == truth.events["n_rows"].iloc[0] == 3


def test_event_recovered_and_orthogonal(fb):
    frame, truth, spec = fb
    from panelfx.fe import fit_model

    base = fit_model(frame, spec)
    ev = EventSpec("party", "new_york", ("2009-03-01", "2009-07-04", "2010-01-01"))
    ef = fit_with_events(frame, spec, [ev], level=0.99)
    row = ef.table["party"]
    assert row["pct_lo"] < 20.0 < row["pct_hi"]
    # a handful of event rows barely moves the weather coefficients
    for n in base.names:
        assert abs(ef.fit.coef[n] - base.coef[n]) < 1e-3
    cmp = ef.comparison(0.99, extra={"freezing": {"tmax<0": 1.0}})
    assert list(cmp["label"]) == ["party", "freezing"]
    assert (cmp["lo"] <= cmp["pct_effect"]).all() and (cmp["pct_effect"] <= cmp["hi"]).all()


def test_event_vcv_choices(fb):
    frame, truth, spec = fb
    ev = EventSpec("party", "new_york", ("2009-03-01",))
    a = fit_with_events(frame, spec, [ev], vcv="iid")
    b = fit_with_events(frame, spec, [ev], vcv="cluster")
    assert a.table.metadata["event_vcv"] == "iid" and b.table.metadata["event_vcv"] == "cluster"
    with pytest.raises(InvalidConfig):
        fit_with_events(frame, spec, [ev], vcv="hc9")


def test_event_errors(fb):
    frame, truth, spec = fb
    with pytest.raises(EventOutOfRange):
        fit_with_events(frame, spec, [EventSpec("x", "new_york", ("2001-01-01",))])
    with pytest.raises(EventOutOfRange):
        fit_with_events(frame, spec, [EventSpec("x", "atlantis", ("2009-03-01",))])
    month = tuple(f"2009-03-{d:02d}" for d in range(1, 32))
    with pytest.raises(CollinearEvent):
        fit_with_events(frame, spec, [EventSpec("whole_month", "boston", month)])


def test_events_csv_roundtrip(tmp_path):
    evs = [EventSpec("a", "new_york", ("2009-01-01", "2009-02-01")), EventSpec("b", "boston", ("2010-04-19",))]
    write_events(tmp_path / "e.csv", evs)
    assert read_events(tmp_path / "e.csv") == evs
    (tmp_path / "bad.csv").write_text("name,city_id,date\na,x,2009-01-01\na,y,2009-01-02\n")
    with pytest.raises(InvalidConfig):
        read_events(tmp_path / "bad.csv")


def test_pool_platforms_prefixes_nested_dims():
    a, _ = synth.simulate(synth.SynthConfig(seed=1, n_cities=3, n_days=40, platform="facebook"))
    b, _ = synth.simulate(synth.SynthConfig(seed=2, n_cities=3, n_days=40, platform="twitter"))
    p = pool_platforms({"facebook": a, "twitter": b})
    assert p.n == a.n + b.n
    assert p.n_levels("city_month_id") == a.n_levels("city_month_id") + b.n_levels("city_month_id")
    assert p.n_levels("day_id") == a.n_levels("day_id")
    assert set(p.data["platform"]) == {"facebook", "twitter"}


def test_pooled_preset_has_platform_split_city_months():
    cfg = synth.preset("paper-fig4c", 0)
    cfg = synth.PooledConfig([replace(c, n_cities=4, n_days=60) for c in cfg.platforms], 0)
    frame, truth = synth.simulate(cfg)
    per = frame.data.groupby("city_month_id")["platform"].nunique()
    assert (per == 1).all()
    assert set(truth.events["name"]) == {"new_years_eve", "mardi_gras", "boston_marathon"}
