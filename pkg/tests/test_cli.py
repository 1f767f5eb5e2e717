import json
import subprocess
import sys

import pandas as pd
import pytest

from panelfx.binning import surface_specs
from panelfx.cli import COMMANDS, main
from panelfx.config import write_kv

SMALL = {"synth": {"preset": "paper-fig2-facebook", "n_cities": "12", "n_days": "200", "seed": "3"}}


@pytest.fixture(scope="module")
def panel(tmp_path_factory):
    d = tmp_path_factory.mktemp("synth")
    write_kv(d / "synth.txt", SMALL)
    assert main(["synth", "--config", str(d / "synth.txt"), "--out-dir", str(d), "--posts-rate", "0.04"]) == 0
    return d


def _manifest(d):
    return json.loads((d / "manifest.json").read_text())


def test_entry_point_help():
    out = subprocess.run([sys.executable, "-m", "panelfx.cli", "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    for c in COMMANDS:
        assert c in out.stdout


@pytest.mark.parametrize("command", COMMANDS)
def test_subcommand_help(command, capsys):
    with pytest.raises(SystemExit) as e:
        main([command, "--help"])
    assert e.value.code == 0
    assert "--out-dir" in capsys.readouterr().out


def test_synth_outputs(panel):
    for name in ("panel.csv", "schema.txt", "truth_surface.csv", "truth_marginals.csv", "synth_config.txt",
                 "posts.csv"):
        assert (panel / name).exists()
    m = _manifest(panel)
    assert m["status"] == "ok" and m["seed"] == 3
    assert {a["path"] for a in m["artifacts"]} >= {"panel.csv", "posts.csv"}
    assert len(pd.read_csv(panel / "panel.csv")) == 12 * 200


def _data(panel):
    return ["--input", str(panel / "panel.csv"), "--schema", str(panel / "schema.txt")]


def test_fit_and_rerun_identical(panel, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["fit", *_data(panel), "--out-dir", str(a)]) == 0
    assert main(["fit", *_data(panel), "--out-dir", str(b)]) == 0
    ha = {x["path"]: x["sha256"] for x in _manifest(a)["artifacts"]}
    hb = {x["path"]: x["sha256"] for x in _manifest(b)["artifacts"]}
    assert ha == hb and "coefficients.csv" in ha
    m = _manifest(a)
    assert list(m["inputs"].values())[0] == _manifest(b)["inputs"][str(panel / "panel.csv")]
    coef = pd.read_csv(a / "coefficients.csv")
    assert {"term", "estimate", "se", "p", "pct_effect", "pct_lo", "pct_hi"} <= set(coef.columns)


def test_surface_command(panel, tmp_path):
    assert main(["surface", *_data(panel), "--B", "120", "--seed", "1", "--min-support", "1",
                 "--out-dir", str(tmp_path)]) == 0
    g = pd.read_csv(tmp_path / "surface_grid.csv")
    ts, ps = surface_specs()
    assert len(g) == ts.n_bins * ps.n_bins
    assert "ref" in (tmp_path / "surface_grid.txt").read_text()


def test_residualize_command(panel, tmp_path):
    assert main(["residualize", *_data(panel), "--effect-pct", "34.22", "--out-dir", str(tmp_path)]) == 0
    text = (tmp_path / "residualize.txt").read_text()
    assert "standard deviation" in text


def test_events_command(panel, tmp_path):
    ev = tmp_path / "events.csv"
    ev.write_text("name,city_id,date\nparty,new_york,2009-03-01\nparty,new_york,2009-05-01\n")
    assert main(["events", *_data(panel), "--events", str(ev), "--out-dir", str(tmp_path)]) == 0
    cmp = pd.read_csv(tmp_path / "events_comparison.csv")
    assert "party" in set(cmp["label"])


def test_classify_command(panel, tmp_path):
    assert main(["classify", "--posts", str(panel / "posts.csv"), "--out-dir", str(tmp_path)]) == 0
    out = pd.read_csv(tmp_path / "outcomes.csv")
    assert abs(out["weather_count"].sum() / out["total_count"].sum() - 0.04) < 0.01


def test_validation_error_exit_2(panel, tmp_path):
    df = pd.read_csv(panel / "panel.csv").drop(columns=["precip"])
    df.to_csv(tmp_path / "bad.csv", index=False)
    code = main(["fit", "--input", str(tmp_path / "bad.csv"), "--schema", str(panel / "schema.txt"),
                 "--out-dir", str(tmp_path / "o")])
    assert code == 2
    m = _manifest(tmp_path / "o")
    assert m["status"] == "validation_error" and "MissingColumn" in m["error"]
    assert main(["fit", "--out-dir", str(tmp_path / "o2")]) == 2
    assert main(["fit", "--config", str(tmp_path / "nope.txt"), "--out-dir", str(tmp_path / "o3")]) == 2


def test_estimation_error_exit_3(panel, tmp_path):
    # dropping a few rows unbalances the panel so one sweep cannot converge
    df = pd.read_csv(panel / "panel.csv")
    df.drop(index=range(0, len(df), 7)).to_csv(tmp_path / "unbal.csv", index=False)
    code = main(["fit", "--input", str(tmp_path / "unbal.csv"), "--schema", str(panel / "schema.txt"),
                 "--max-iter", "1", "--tol", "1e-14", "--out-dir", str(tmp_path)])
    assert code == 3
    assert "NoConvergence" in _manifest(tmp_path)["error"]
    code = main(["surface", *_data(panel), "--B", "20", "--out-dir", str(tmp_path / "s")])
    assert code == 3
    assert "InsufficientReplicates" in _manifest(tmp_path / "s")["error"]


def test_reproduce_marginals_preset(tmp_path):
    assert main(["reproduce", "--preset", "paper-fig2-facebook-marginals", "--seed", "7",
                 "--out-dir", str(tmp_path)]) == 0
    rep = pd.read_csv(tmp_path / "reproduce_report.csv")
    assert rep["error_pp"].abs().max() < 1.0
    assert "preset = paper-fig2-facebook-marginals" in (tmp_path / "reproduce_report.txt").read_text()


def test_threads_env(panel, tmp_path, monkeypatch):
    monkeypatch.setenv("PANELFX_THREADS", "1")
    assert main(["validate", *_data(panel), "--out-dir", str(tmp_path)]) == 0
    assert (tmp_path / "validation.txt").exists()
