from dataclasses import replace

import numpy as np
import pandas as pd
import pytest

from panelfx import synth
from panelfx._resample import draw_counts, fe_layout
from panelfx.binning import surface_design, surface_specs
from panelfx.errors import InsufficientReplicates, InvalidConfig, MissingTerm, TooFewClusters
from panelfx.fe import ModelSpec, fit_model
from panelfx.inference import pct_effect
from panelfx.surface import BootstrapRun, cell_terms, cluster_bootstrap, simple_effects, star_grid

REF = (5, 0)


@pytest.fixture(scope="module")
def small():
    cfg = replace(synth.preset("paper-fig2-facebook", 11), n_cities=14, n_days=150)
    frame, truth = synth.simulate(cfg, validated=True)
    spec = ModelSpec(surface_design(frame, min_support=1), frame.fe_dims)
    return frame, truth, spec


@pytest.fixture(scope="module")
def full_scale():
    frame, truth = synth.simulate(synth.preset("paper-fig2-facebook", 21), validated=True)
    spec = ModelSpec(surface_design(frame), frame.fe_dims)
    return frame, truth, spec


def test_reference_and_reference_row(small):
    frame, truth, spec = small
    fit = fit_model(frame, spec)
    eff = simple_effects(fit)
    assert eff[REF] == 0.0
    assert eff[(0, 0)] == fit.coef["tmax<-5"]
    assert eff[(5, 3)] == fit.coef["precip(1,1.5]"]
    assert eff[(0, 4)] == fit.coef["tmax<-5"] + fit.coef["precip(1.5,2]"] + fit.coef["tmax<-5*precip(1.5,2]"]


def test_missing_marginal_term(small):
    frame, truth, spec = small
    fit = fit_model(frame, spec)
    del fit.coef["tmax<-5"]
    with pytest.raises(MissingTerm):
        simple_effects(fit)


def test_dropped_terms_count_as_zero(small):
    frame, truth, spec = small
    fit = fit_model(frame, spec)
    c = fit.coef.pop("tmax<-5*precip(1.5,2]")
    fit.demeaned_design_cols_dropped.append("tmax<-5*precip(1.5,2]")
    assert simple_effects(fit)[(0, 4)] == pytest.approx(fit.coef["tmax<-5"] + fit.coef["precip(1.5,2]"])
    assert c != 0


def test_recovers_cold_wet_cell(full_scale):
    frame, truth, spec = full_scale
    eff = simple_effects(fit_model(frame, spec))
    assert truth.cell("tmax<-5", "precip(1.5,2]") == pytest.approx(np.log(1.3422))
    assert abs(pct_effect(eff[(0, 4)]) - 34.22) < 1.5


def test_weighted_equals_refit(small):
    frame, truth, spec = small
    a = cluster_bootstrap(frame, spec, B=6, seed=3, method="weighted")
    b = cluster_bootstrap(frame, spec, B=6, seed=3, method="refit")
    assert a.method == "weighted" and b.method == "refit"
    assert a.failures == b.failures
    np.testing.assert_allclose(a.draws_matrix(), b.draws_matrix(), atol=1e-6)


def test_identity_resample_gives_point_estimates(small):
    frame, truth, spec = small
    G = frame.n_levels("city_id")
    for method in ("weighted", "refit"):
        run = cluster_bootstrap(frame, spec, resamples=[np.arange(G)], method=method)
        assert run.B == 1 and run.failures == 0
        for c in run.cells:
            assert run.cell_draws[c][0] == pytest.approx(run.point[c], abs=1e-9)


def test_deterministic(small):
    frame, truth, spec = small
    a = cluster_bootstrap(frame, spec, B=30, seed=9)
    b = cluster_bootstrap(frame, spec, B=30, seed=9)
    assert np.array_equal(a.draws_matrix(), b.draws_matrix())
    c = cluster_bootstrap(frame, spec, B=30, seed=9, threads=3)
    assert np.array_equal(a.draws_matrix(), c.draws_matrix())
    d = cluster_bootstrap(frame, spec, B=30, seed=10)
    assert not np.array_equal(a.draws_matrix(), d.draws_matrix())


def test_draw_counts_seeded():
    assert np.array_equal(draw_counts(1, 5, 40), draw_counts(1, 5, 40))
    assert draw_counts(1, 5, 40).sum() == 40


def test_failures_are_counted(small):
    frame, truth, spec = small
    G = frame.n_levels("city_id")
    cold = frame.data.groupby("city_id", sort=False)["tmax"].min()
    warm = [i for i, c in enumerate(frame.levels["city_id"]) if cold[c] > -5]
    assert warm, "fixture needs a city that never drops below -5"
    run = cluster_bootstrap(frame, spec, resamples=[np.arange(G), np.array(warm * (G // len(warm) + 1))[:G]])
    assert run.failures == 1 and len(run.cell_draws[(0, 0)]) == 1


def test_layout_and_fallback(small):
    frame, truth, spec = small
    assert fe_layout(frame, spec.fe_dims, "city_id") == (["city_month_id"], ["day_id"])
    fr2 = frame.with_dims(fe_dims=["city_month_id", "day_id", "date"])
    assert fe_layout(fr2, ("city_month_id", "day_id", "date"), "city_id") is None
    with pytest.raises(InvalidConfig):
        cluster_bootstrap(fr2, ModelSpec(spec.design, fr2.fe_dims), B=2, method="weighted")
    run = cluster_bootstrap(fr2, ModelSpec(spec.design, fr2.fe_dims), B=2, seed=1)
    assert run.method == "refit"


def test_too_few_clusters(small):
    frame, truth, spec = small
    one = frame.take(np.flatnonzero(frame.codes["city_id"] == 0))
    with pytest.raises(TooFewClusters):
        cluster_bootstrap(one, ModelSpec(surface_design(one, min_support=1), one.fe_dims), B=2)


def _run(draws, B=None):
    cells = list(cell_terms())
    d = {c: np.asarray(draws, dtype=float) for c in cells}
    d[REF] = np.zeros(len(draws))
    n = len(draws) if B is None else B
    return BootstrapRun(n, 0, cells, d, n - len(draws), {c: 0.0 for c in cells})


def test_star_grid_trivial():
    g = star_grid(_run([-1.0, 0.0, 1.0]), min_replicates=3)
    assert not g.frame["starred"].any()
    pos = star_grid(_run(np.linspace(0.01, 0.2, 1000)))
    r = pos.cell(0, 4)
    assert r["starred"] and r["lo_pct"] > 0
    ref = pos.cell(*REF)
    assert not ref["starred"] and ref["median_pct"] == 0.0


def test_star_grid_degenerate_and_order():
    g = star_grid(_run(np.full(200, 0.05)))
    r = g.cell(2, 2)
    assert r["lo_pct"] == r["median_pct"] == r["hi_pct"]
    rng = np.random.default_rng(0)
    g2 = star_grid(_run(rng.normal(0.02, 0.01, 500)))
    assert (g2.frame["lo_pct"] <= g2.frame["median_pct"]).all()
    assert (g2.frame["median_pct"] <= g2.frame["hi_pct"]).all()


def test_star_grid_log_vs_pct_consistent():
    rng = np.random.default_rng(1)
    d = rng.normal(0.004, 0.002, 1000)
    g = star_grid(_run(d))
    lo, hi = np.quantile(d, [0.005, 0.995])
    pl, ph = np.quantile(pct_effect(d), [0.005, 0.995], method="inverted_cdf")
    assert g.cell(1, 1)["starred"] == (lo > 0 or hi < 0) == (pl > 0 or ph < 0)


def test_median_stable_when_dropping_one():
    rng = np.random.default_rng(2)
    d = rng.normal(0.0, 0.03, 1000)
    a = star_grid(_run(d)).cell(3, 3)["median_pct"]
    b = star_grid(_run(d[:999])).cell(3, 3)["median_pct"]
    s = np.sort(pct_effect(d))
    gap = np.max(np.diff(s[497:503]))
    assert abs(a - b) <= gap + 1e-12


def test_insufficient_replicates():
    with pytest.raises(InsufficientReplicates):
        star_grid(_run(np.zeros(40), B=1000))


def test_outputs(tmp_path):
    g = star_grid(_run(np.linspace(0.01, 0.2, 200)))
    g.to_csv(tmp_path / "g.csv")
    df = pd.read_csv(tmp_path / "g.csv")
    assert list(df.columns[:7]) == ["t_bin", "p_bin", "median_pct", "lo_pct", "hi_pct", "starred", "support"]
    ts, ps = surface_specs()
    assert len(df) == ts.n_bins * ps.n_bins
    text = g.render()
    assert "ref" in text and "< −5°C" in text and "*" in text
    assert g.metadata["quantile_method"] == "linear"


def test_planted_null_interval_contains_zero(full_scale):
    frame, truth, spec = full_scale
    g = star_grid(cluster_bootstrap(frame, spec, B=1000, seed=4))
    t = truth.surface.set_index(["t_bin", "p_bin"])["log_effect"]
    for (tb, pb), v in t.items():
        r = g.cell(tb, pb)
        if v != 0:
            assert r["starred"], (tb, pb)
    zero = [(tb, pb) for (tb, pb), v in t.items() if v == 0 and (tb, pb) != REF]
    assert sum(bool(g.cell(*c)["starred"]) for c in zero) <= 2
    assert not g.cell(3, 3)["starred"] or t[(3, 3)] != 0
