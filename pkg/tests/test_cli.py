import json
import math

import pytest
from hypothesis import given, settings, strategies as st

from relaxshock.cli import dumps17, explain_lines, main, run_pipeline
from relaxshock.config import ConfigError, parse_config, resolve_stages

MINIMAL = """\
model:
  name: jin_xin_1d
  params:
    a: 1.0
    f: {kind: burgers}
endpoints:
  u_minus: 0.3
  u_plus: 0.1
stages: [hypotheses, profile]
"""


def test_minimal_pipeline(tmp_path):
    cfg = parse_config(MINIMAL)
    rep, timings = run_pipeline(cfg, out_dir=str(tmp_path))
    st_ = rep["stages"]
    assert st_["profile"]["results"]["s"] == pytest.approx(0.2, abs=1e-15)
    assert st_["profile"]["results"]["residual"] <= 1e-9
    assert all(st_["hypotheses"]["results"]["checks"].values())
    assert rep["exit_code"] == 0 and rep["overall"] == "pass"
    assert (tmp_path / "profile.csv").read_text().startswith("z,u,v1")
    assert set(timings) == {"profile", "hypotheses"}
    on_disk = json.loads((tmp_path / "report.json").read_text())
    assert on_disk["config_hash"] == rep["config_hash"]
    assert "wall_seconds" in json.loads((tmp_path / "timings.json").read_text())
    lines = explain_lines(on_disk)
    assert any(l.startswith("H3:") and l.endswith("PASS") for l in lines)


def test_equal_endpoints_rejected(tmp_path, capsys):
    bad = MINIMAL.replace("u_plus: 0.1", "u_plus: 0.3")
    with pytest.raises(ConfigError, match="endpoints"):
        parse_config(bad)
    p = tmp_path / "c.yaml"
    p.write_text(bad)
    assert main(["pipeline", "--config", str(p), "--out", str(tmp_path / "o")]) == 2
    assert not (tmp_path / "o").exists()
    assert "endpoints" in capsys.readouterr().err


def test_strict_keys_with_line_numbers():
    with pytest.raises(ConfigError, match=r"unknown key 'profile.Lx' \(line 11\)"):
        parse_config(MINIMAL + "profile:\n  Lx: 3\n")
    with pytest.raises(ConfigError, match="unknown key 'model.params.b'"):
        parse_config(MINIMAL.replace("    a: 1.0\n", "    a: 1.0\n    b: 2.0\n"))
    with pytest.raises(ConfigError, match="missing required key 'model.params.f'"):
        parse_config(MINIMAL.replace("    f: {kind: burgers}\n", ""))
    with pytest.raises(ConfigError, match="missing required key 'endpoints'"):
        parse_config("model: {name: jin_xin_1d, params: {a: 1, f: {kind: burgers}}}\n")
    with pytest.raises(ConfigError, match="duplicate key"):
        parse_config(MINIMAL + "seed: 1\nseed: 2\n")
    with pytest.raises(ConfigError, match="stages"):
        parse_config(MINIMAL.replace("[hypotheses, profile]", "[evans, plotting]"))
    with pytest.raises(ConfigError, match="YAML"):
        parse_config("model: [unclosed\n")


def test_defaults_filled():
    cfg = parse_config(MINIMAL)
    assert cfg["evans"]["h"] == 0.05 and cfg["model"]["params"]["tau"] == 1.0
    assert cfg["simulate"]["nx1"] == 2000


def test_stage_resolution():
    assert resolve_stages(["evans"]) == ["profile", "evans"]
    assert resolve_stages(["simulate", "hypotheses"]) == ["hypotheses", "profile", "simulate"]


def test_failed_prerequisite_skips_dependents(tmp_path):
    # expansive endpoints: no Lax shock, the profile fails and evans must not run
    cfg = parse_config(MINIMAL.replace("u_minus: 0.3", "u_minus: 0.05").replace("[hypotheses, profile]", "[evans]"))
    rep, timings = run_pipeline(cfg, out_dir=str(tmp_path))
    assert rep["stages"]["profile"]["status"] == "fail"
    assert rep["stages"]["evans"]["status"] == "skipped"
    assert "evans" not in timings
    assert rep["exit_code"] == 1
    assert "D1–D3: SKIPPED (profile failed)" in explain_lines(rep)


def test_optional_stage_does_not_set_exit_code(tmp_path):
    text = MINIMAL.replace("u_minus: 0.3", "u_minus: 0.05").replace("[hypotheses, profile]", "[profile]")
    cfg = parse_config(text + "optional_stages: [profile]\n")
    rep, _ = run_pipeline(cfg, out_dir=str(tmp_path))
    assert rep["stages"]["profile"]["status"] == "fail" and rep["exit_code"] == 0


def test_enskog_discrepancy_explained(tmp_path):
    cfg = parse_config(MINIMAL.replace("[hypotheses, profile]", "[enskog]"))
    rep, _ = run_pipeline(cfg, out_dir=str(tmp_path))
    text = "\n".join(explain_lines(rep))
    assert "closed-form b*" in text and "dispersion fit" in text


def test_explain_cli(tmp_path, capsys):
    p = tmp_path / "c.yaml"
    p.write_text(MINIMAL)
    assert main(["profile", "--config", str(p), "--out", str(tmp_path / "o"), "--seed", "5", "--quiet"]) == 0
    rep = json.loads((tmp_path / "o" / "report.json").read_text())
    assert rep["seed"] == 5 and list(rep["stages"]) == ["profile"]
    assert main(["explain", str(tmp_path / "o" / "report.json")]) == 0
    assert "profile: s = 0.2" in capsys.readouterr().out
    (tmp_path / "bad.json").write_text("{}")
    assert main(["explain", str(tmp_path / "bad.json")]) == 2


@settings(max_examples=200)
@given(st.floats(allow_nan=False, allow_infinity=False))
def test_float_serialization_round_trips(x):
    s = dumps17({"x": x})
    assert json.loads(s)["x"] == x


def test_serialization_details():
    s = dumps17({"a": 0.1, "c": 1 + 2j, "n": float("nan"), "b": [True, None, 3]})
    d = json.loads(s)
    assert "0.10000000000000001" in s
    assert d["c"] == {"re": 1.0, "im": 2.0} and d["n"] is None and d["b"] == [True, None, 3]
    assert not math.isnan(json.loads(dumps17(2.5)))
