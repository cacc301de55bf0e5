import json
import math

import pytest

from collisim import __version__
from collisim.cli import ConfigError, main, parse_config


def vacuum_config(**overrides):
    doc = {
        "scenario": "spontaneous_emission",
        "field": {"kind": "vacuum", "gamma": 1.0, "t_final": 1.0, "n_steps": 1000},
        "output": "csv",
    }
    doc.update(overrides)
    return doc


def write_config(tmp_path, doc, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------

def test_parse_minimal_vacuum_config():
    cfg = parse_config(json.dumps(vacuum_config()))
    assert cfg.scenario == "spontaneous_emission"
    assert cfg.field.gamma == 1.0
    assert cfg.field.n_steps == 1000
    assert cfg.output == "csv"


def test_parse_rejects_negative_gamma():
    doc = vacuum_config()
    doc["field"]["gamma"] = -1.0
    with pytest.raises(ConfigError, match="gamma must be positive"):
        parse_config(json.dumps(doc))


def test_parse_rejects_unknown_key():
    doc = vacuum_config()
    doc["field"]["gama"] = 1.0
    with pytest.raises(ConfigError, match="gama"):
        parse_config(json.dumps(doc))
    with pytest.raises(ConfigError, match="extra"):
        parse_config(json.dumps(vacuum_config(extra=1)))


def test_parse_reports_json_error_location():
    with pytest.raises(ConfigError, match=r"line \d+, column \d+"):
        parse_config('{"scenario": }')


def test_parse_rejects_scenario_kind_mismatch():
    doc = vacuum_config()
    doc["field"]["kind"] = "coherent"
    doc["field"]["z"] = 3.0
    with pytest.raises(ConfigError, match="not valid for scenario"):
        parse_config(json.dumps(doc))


def test_parse_rejects_coherent_fields_on_vacuum():
    doc = vacuum_config()
    doc["field"]["z"] = 1.0
    with pytest.raises(ConfigError, match="coherent"):
        parse_config(json.dumps(doc))


def test_parse_requires_n_list_for_convergence():
    doc = vacuum_config(scenario="convergence")
    with pytest.raises(ConfigError, match="n_list"):
        parse_config(json.dumps(doc))
    doc["n_list"] = [100, 200]
    with pytest.raises(ConfigError, match="at least 3"):
        parse_config(json.dumps(doc))


def test_parse_accepts_custom_system():
    doc = vacuum_config()
    doc["field"]["n_steps"] = 10
    doc["field"]["system"] = {
        "h_sys": [[0, 0], [0, 0]],
        "coupling": [[0, 1], [0, 0]],
        "rho0": [[0, 0], [0, 1]],
    }
    cfg = parse_config(json.dumps(doc))
    assert cfg.field.rho0.data[1, 1] == 1.0


def test_parse_rejects_invalid_rho0():
    doc = vacuum_config()
    doc["field"]["system"] = {
        "h_sys": [[0, 0], [0, 0]],
        "coupling": [[0, 1], [0, 0]],
        "rho0": [[0.5, 0], [0, 0.2]],
    }
    with pytest.raises(ConfigError, match="rho0|trace"):
        parse_config(json.dumps(doc))


# ---------------------------------------------------------------------------
# runs
# ---------------------------------------------------------------------------

def test_vacuum_run_writes_expected_csv(tmp_path, capsys):
    out = tmp_path / "vac.csv"
    cfg_path = write_config(tmp_path, vacuum_config(out_path=str(out)))
    assert main(["run", "--config", cfg_path]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == f"# collisim {__version__}"
    assert lines[1].startswith("# config: ")
    assert lines[2].startswith("# meta: ")
    header = lines[3].split(",")
    assert header[:2] == ["step", "t"]
    assert "excited_population_re" in header
    last = lines[-1].split(",")
    rho_ee = float(last[header.index("excited_population_re")])
    assert abs(rho_ee - math.exp(-1.0)) < 5e-3


def test_convergence_run_emits_slope_json(tmp_path):
    doc = vacuum_config(scenario="convergence", output="json")
    doc["field"]["n_steps"] = 100
    doc["n_list"] = [50, 100, 200]
    out = tmp_path / "conv.json"
    cfg_path = write_config(tmp_path, doc)
    assert main(["run", "--config", cfg_path, "--out", str(out)]) == 0
    report = json.loads(out.read_text())
    assert -1.3 <= report["meta"]["fitted_slope"] <= -0.7
    assert report["version"] == __version__
    assert report["config"]["scenario"] == "convergence"
    assert [row["n_steps"] for row in report["rows"]] == [50, 100, 200]


def test_json_output_encodes_complex_as_re_im(tmp_path):
    doc = vacuum_config(output="json")
    doc["field"]["n_steps"] = 20
    out = tmp_path / "vac.json"
    cfg_path = write_config(tmp_path, doc)
    assert main(["run", "--config", cfg_path, "--out", str(out)]) == 0
    report = json.loads(out.read_text())
    first = report["rows"][0]["excited_population"]
    assert set(first) == {"re", "im"}
    assert first["re"] == pytest.approx(1.0)


def test_missing_output_directory_exits_one(tmp_path, capsys):
    cfg_path = write_config(
        tmp_path, vacuum_config(out_path=str(tmp_path / "no_such_dir" / "x.csv"))
    )
    assert main(["run", "--config", cfg_path]) == 1
    assert "no_such_dir" in capsys.readouterr().err


def test_bad_config_exits_one(tmp_path, capsys):
    doc = vacuum_config()
    doc["field"]["gamma"] = -2.0
    cfg_path = write_config(tmp_path, doc)
    assert main(["run", "--config", cfg_path]) == 1
    assert "gamma" in capsys.readouterr().err


def test_missing_config_file_exits_one(tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path / "absent.json")]) == 1


def test_resource_cap_exits_three(tmp_path, capsys):
    doc = {
        "scenario": "single_photon",
        "field": {
            "kind": "single_photon",
            "gamma": 1.0,
            "t_final": 6.0,
            "n_steps": 20,
            "envelope": {"type": "gaussian", "center": 3.0, "width": 1.0},
        },
        "out_path": str(tmp_path / "sp.csv"),
    }
    cfg_path = write_config(tmp_path, doc)
    assert main(["run", "--config", cfg_path]) == 3


def test_validate_subcommand(tmp_path, capsys):
    cfg_path = write_config(tmp_path, vacuum_config())
    assert main(["validate", "--config", cfg_path]) == 0
    assert "config OK" in capsys.readouterr().out
    bad = write_config(tmp_path, vacuum_config(extra=1), name="bad.json")
    assert main(["validate", "--config", bad]) == 1


def test_identical_configs_give_byte_identical_outputs(tmp_path):
    doc = vacuum_config(output="json")
    doc["field"]["n_steps"] = 200
    cfg_path = write_config(tmp_path, doc)
    out_a, out_b = tmp_path / "a.json", tmp_path / "b.json"
    assert main(["run", "--config", cfg_path, "--out", str(out_a)]) == 0
    assert main(["run", "--config", cfg_path, "--out", str(out_b)]) == 0
    assert out_a.read_bytes() == out_b.read_bytes()


def test_format_override(tmp_path):
    doc = vacuum_config()
    doc["field"]["n_steps"] = 20
    cfg_path = write_config(tmp_path, doc)
    out = tmp_path / "o.json"
    assert main(["run", "--config", cfg_path, "--out", str(out), "--format", "json"]) == 0
    json.loads(out.read_text())  # parses as JSON despite csv in config
