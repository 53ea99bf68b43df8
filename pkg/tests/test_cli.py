import io
import json
import math

import pytest

from episurv import cli
from episurv import cohort as co
from episurv.report import Report, render_report

COX_TERMS = [
    "age_dec",
    "male",
    "Baratheon",
    "Greyjoy",
    "Lannister",
    "Martell",
    "Targaryen",
    "Tyrell",
    "OtherAllegiance",
    "Advisor",
    "KnightSoldier",
    "OtherOccupation",
    "South",
    "Essos",
]


def invoke(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = cli.run([str(a) for a in argv], out, err)
    return code, out.getvalue(), err.getvalue()


def test_no_arguments_is_usage_error():
    code, out, err = invoke()
    assert code == 2
    assert out == ""
    assert "missing subcommand" in err


@pytest.mark.parametrize(
    "argv, fragment",
    [
        (["frobnicate"], "invalid choice"),
        (["cox"], "requires --data"),
        (["cox", "--data", "/nonexistent.csv"], "no such file"),
        (["km", "--data", "{golden}"], "requires --by"),
        (["cox", "--data", "{golden}", "--conf", "1.5"], "strictly between"),
        (["cox", "--data", "{golden}", "--format", "xml"], "invalid choice"),
        (["synth", "--seed", "-3"], "unsigned"),
        (["cox", "--data", "{golden}", "--only", "Stark"], "--only needs --by"),
    ],
)
def test_usage_errors(argv, fragment, golden_path):
    argv = [a.replace("{golden}", golden_path) for a in argv]
    code, out, err = invoke(*argv)
    assert code == 2
    assert fragment in err


def test_synth_is_deterministic_and_matches_golden(golden_path):
    code1, a, _ = invoke("synth")
    code2, b, _ = invoke("synth", "--seed", 67)
    assert code1 == code2 == 0
    assert a == b
    with open(golden_path, encoding="utf-8") as fh:
        assert a == fh.read()
    _, c, _ = invoke("synth", "--seed", 68)
    assert c != a


def test_synth_output_round_trips(tmp_path):
    path = tmp_path / "c.csv"
    assert invoke("synth", "--out", path, "--seed", 3)[0] == 0
    cohort = co.read_cohort(path)
    assert len(cohort) == 132
    assert int(cohort.events.sum()) == 89
    assert co.serialize_cohort(cohort) == path.read_text(encoding="utf-8")


def test_cox_rows_in_table_order(golden_path):
    code, out, err = invoke("cox", "--data", golden_path, "--format", "json")
    assert code == 0
    rows = json.loads(out)["models"][0]["rows"]
    assert [r["term"] for r in rows] == COX_TERMS
    for r in rows:
        assert math.isclose(r["hr"], math.exp(r["coef"]), rel_tol=1e-12)


def test_cox_warns_on_sparse_columns(golden_path):
    _, _, err = invoke("cox", "--data", golden_path)
    assert "episurv: warning:" in err
    assert "Tyrell" in err


def test_cox_breslow_differs_from_efron(golden_path):
    _, efron, _ = invoke("cox", "--data", golden_path, "--format", "csv")
    _, breslow, _ = invoke("cox", "--data", golden_path, "--format", "csv", "--ties", "breslow")
    assert efron != breslow
    assert efron.splitlines()[1] == "term,coef,hr,ci_lower,ci_upper,z,p"


def test_cox_conf_level_changes_interval(golden_path):
    def martell(conf):
        _, out, _ = invoke("cox", "--data", golden_path, "--format", "json", "--conf", conf)
        (row,) = [r for r in json.loads(out)["models"][0]["rows"] if r["term"] == "Martell"]
        return row

    r95, r80 = martell(0.95), martell(0.80)
    assert r95["coef"] == r80["coef"]
    assert r80["ci_lower"] > r95["ci_lower"]
    assert r80["ci_upper"] < r95["ci_upper"]


def test_logit_on_golden_reports_separation(golden_path, tmp_path):
    out_path = tmp_path / "logit.md"
    code, out, err = invoke("logit", "--data", golden_path, "--out", out_path)
    assert code == 1
    assert "Tyrell" in err and "separation" in err
    assert not out_path.exists()
    assert list(tmp_path.iterdir()) == []


def test_km_only_writes_requested_strata(golden_path, tmp_path):
    code, out, _ = invoke(
        "km", "--data", golden_path, "--by", "allegiance", "--only", "Stark,Targaryen,Lannister", "--out", tmp_path
    )
    assert code == 0
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == ["km_allegiance_Lannister.csv", "km_allegiance_Stark.csv", "km_allegiance_Targaryen.csv"]
    assert "on 2 df" in out
    header = (tmp_path / "km_allegiance_Stark.csv").read_text().splitlines()[0]
    assert header == "time,n_risk,n_event,n_censor,survival,var,ci_lower,ci_upper"


def test_km_json_summary(golden_path, tmp_path):
    code, out, _ = invoke("km", "--data", golden_path, "--by", "sex", "--format", "json", "--out", tmp_path)
    assert code == 0
    obj = json.loads(out)
    assert obj["log_rank"]["df"] == 1
    assert 0.0 <= obj["log_rank"]["p"] <= 1.0
    assert sum(s["events"] for s in obj["strata"].values()) == 89


def test_km_unknown_level_is_data_error(golden_path, tmp_path):
    code, _, err = invoke("km", "--data", golden_path, "--by", "allegiance", "--only", "Bolton", "--out", tmp_path)
    assert code == 1
    assert list(tmp_path.iterdir()) == []


def test_table1_markdown_totals(golden_path):
    code, out, _ = invoke("table1", "--data", golden_path)
    assert code == 0
    assert "| Characteristic | Study Population (n=132) | Deaths [n(%)] |" in out
    assert "| Total | | 89 (67.4) |" in out
    assert "| Male | 100 (75.8) | 68 (68.0) |" in out
    assert "Median follow-up: 32 episodes" in out


def test_table1_json_round_trip(golden_path, golden):
    _, out, _ = invoke("table1", "--data", golden_path, "--format", "json")
    obj = json.loads(out)["baseline"]
    bt = co.baseline_table(golden)
    assert obj["n"] == bt.n and obj["deaths"] == bt.deaths
    assert [(s["variable"], s["level"], s["n"], s["deaths"]) for s in obj["strata"]] == [
        (s.variable, s.level, s.population_count, s.death_count) for s in bt.strata
    ]


def test_report_records_model_failure_as_note(golden_path):
    code, out, err = invoke("report", "--data", golden_path)
    assert code == 0
    assert "Multivariable Cox model" in out
    assert "logit model not estimable" in out
    assert "Kaplan-Meier survival by allegiance" in out


def test_config_file_precedence(golden_path, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(f"# defaults\ndata = {golden_path}\nformat = csv\nties = breslow\n", encoding="utf-8")
    _, from_cfg, _ = invoke("cox", "--config", cfg)
    _, explicit, _ = invoke("cox", "--data", golden_path, "--format", "csv", "--ties", "breslow")
    assert from_cfg == explicit
    _, overridden, _ = invoke("cox", "--config", cfg, "--format", "json")
    assert json.loads(overridden)["models"][0]["title"].endswith("(breslow ties)")


def test_bad_config_line_is_usage_error(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("just words\n", encoding="utf-8")
    code, _, err = invoke("cox", "--config", cfg)
    assert code == 2
    assert "bad.cfg:1" in err


def test_malformed_data_names_row_and_writes_nothing(golden_path, tmp_path):
    lines = open(golden_path, encoding="utf-8").read().splitlines()
    fields = lines[3].split(",")
    fields[2] = "-4"  # age
    lines[3] = ",".join(fields)
    bad = tmp_path / "bad.csv"
    bad.write_text("\n".join(lines) + "\n", encoding="utf-8")
    out_path = tmp_path / "out.md"
    code, out, err = invoke("table1", "--data", bad, "--out", out_path)
    assert code == 1
    assert "row 4" in err
    assert out == ""
    assert not out_path.exists()


def test_everyone_excluded_is_data_error(golden, tmp_path):
    text = co.serialize_cohort(golden)
    rows = [r.split(",") for r in text.splitlines()]
    col = rows[0].index("screen_minutes")
    for r in rows[1:]:
        r[col] = "1"
    data = tmp_path / "short.csv"
    data.write_text("\n".join(",".join(r) for r in rows) + "\n", encoding="utf-8")
    code, _, err = invoke("table1", "--data", data)
    assert code == 1
    assert "data error" in err


def test_output_is_byte_identical_across_runs(golden_path, tmp_path):
    a, b = tmp_path / "a.md", tmp_path / "b.md"
    invoke("report", "--data", golden_path, "--out", a)
    invoke("report", "--data", golden_path, "--out", b)
    assert a.read_bytes() == b.read_bytes()


def test_origin_entry_mode_changes_fit(golden_path):
    _, staggered, _ = invoke("cox", "--data", golden_path, "--format", "csv")
    _, origin, _ = invoke("cox", "--data", golden_path, "--format", "csv", "--entry-mode", "origin")
    assert staggered != origin


def test_render_empty_report_rejected():
    with pytest.raises(ValueError, match="nothing to render"):
        render_report(Report())


def test_render_unknown_format_rejected(golden):
    with pytest.raises(ValueError, match="unknown format"):
        render_report(Report(baseline=co.baseline_table(golden)), "xml")
