import numpy as np
import pandas as pd
import pytest

from panelfx.errors import AllRowsDropped, EmptyFile, InvalidConfig, MissingColumn, ParseError, ValidationError
from panelfx.panel import PanelFrame, load_panel, parse_schema, validate, write_panel_csv

SCHEMA = {"posts": "outcome_raw", "tmax": "tmax", "precip": "precip", "city": "city, cluster",
          "day": "date, fe, cluster", "cm": "fe"}


def _csv(tmp_path, text):
    p = tmp_path / "panel.csv"
    p.write_text(text, encoding="utf-8")
    return p


BASIC = """posts,tmax,precip,city,day,cm
10,1.5,0,a,d1,a:1
0,2.0,0.3,a,d2,a:1
5,,0.1,b,d1,b:1
7,3.5,0,b,d2,b:1
"""


def test_load_maps_roles(tmp_path):
    fr = load_panel(_csv(tmp_path, BASIC), SCHEMA)
    assert fr.n == 4
    assert fr.fe_dims == ("day", "cm") and fr.cluster_dims == ("city", "day")
    assert fr.city_col == "city" and fr.date_col == "day"
    assert np.isnan(fr.column("tmax")[2])
    np.testing.assert_array_equal(fr.codes["city"], [0, 0, 1, 1])


def test_validate_drops_missing_then_zero(tmp_path):
    fr = load_panel(_csv(tmp_path, BASIC), SCHEMA)
    report, clean = validate(fr)
    assert (report.n_input, report.n_kept, report.dropped_missing, report.dropped_zero_outcome) == (4, 2, 1, 1)
    np.testing.assert_allclose(clean.column("outcome"), np.log([10, 7]))
    # codes are re-densified after dropping
    assert clean.n_levels("cm") == 2 and clean.codes["day"].max() == 1
    assert any("rows_kept = 2" == line for line in report.lines())


def test_level_transform_keeps_zeros(tmp_path):
    fr = load_panel(_csv(tmp_path, BASIC), SCHEMA)
    report, clean = validate(fr, transform="level")
    assert report.n_kept == 3 and report.dropped_zero_outcome == 0
    np.testing.assert_allclose(clean.column("outcome"), [10, 0, 7])


def test_missing_column(tmp_path):
    with pytest.raises(MissingColumn) as e:
        load_panel(_csv(tmp_path, "posts,tmax,city,day,cm\n1,2,a,d,a:1\n"), SCHEMA)
    assert e.value.name == "precip"


def test_parse_error_reports_row(tmp_path):
    with pytest.raises(ParseError) as e:
        load_panel(_csv(tmp_path, BASIC.replace("3.5", "warm")), SCHEMA)
    assert (e.value.row, e.value.column) == (4, "tmax")


def test_empty_file(tmp_path):
    with pytest.raises(EmptyFile):
        load_panel(_csv(tmp_path, ""), SCHEMA)
    with pytest.raises(EmptyFile):
        load_panel(_csv(tmp_path, "posts,tmax,precip,city,day,cm\n"), SCHEMA)


def test_all_rows_dropped(tmp_path):
    fr = load_panel(_csv(tmp_path, "posts,tmax,precip,city,day,cm\n0,1,0,a,d,a:1\n"), SCHEMA)
    with pytest.raises(AllRowsDropped):
        validate(fr)


def test_negative_counts_rejected(tmp_path):
    fr = load_panel(_csv(tmp_path, BASIC.replace("10,", "-1,")), SCHEMA)
    with pytest.raises(ValidationError):
        validate(fr)


def test_schema_from_file_and_unknown_role(tmp_path):
    p = tmp_path / "schema.txt"
    p.write_text("[schema]\nposts = outcome_raw\ncity = city, cluster\n", encoding="utf-8")
    assert parse_schema(p) == {"posts": ["outcome_raw"], "city": ["city", "cluster"]}
    with pytest.raises(InvalidConfig):
        parse_schema({"posts": "outcome_raw", "x": "colour"})
    with pytest.raises(MissingColumn):
        parse_schema({"city": "city"})


def test_write_roundtrip(tmp_path):
    df = pd.DataFrame({"outcome_raw": [1.0 / 3, 2.0], "tmax": [0.1, np.pi], "city": ["a", "b"]})
    fr = PanelFrame.from_dataframe(df, city="city")
    write_panel_csv(fr, tmp_path / "o.csv")
    back = load_panel(tmp_path / "o.csv", {"outcome_raw": "outcome_raw", "tmax": "tmax", "city": "city"})
    np.testing.assert_array_equal(back.column("tmax"), df["tmax"].to_numpy())


def test_take_recodes():
    df = pd.DataFrame({"g": ["x", "y", "z", "y"], "outcome": [1.0, 2, 3, 4]})
    fr = PanelFrame.from_dataframe(df, fe_dims=["g"])
    sub = fr.take([1, 3])
    assert sub.n_levels("g") == 1 and list(sub.codes["g"]) == [0, 0]
