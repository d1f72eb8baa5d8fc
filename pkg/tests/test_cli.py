import csv
import json
import subprocess
import sys
import xml.etree.ElementTree as ET

import pytest

from rwre.cli import main
from rwre.config import ExperimentConfig
from rwre.errors import ConfigInvalid, MissingManifest
from rwre.report import emit_report
from rwre.runner import RunManifest, resolve_out_dir, run_experiment

SIMPLEX = {"d": 2, "kappa": 0.1, "kind": "simplex_uniform_floor", "params": {}}
DRIFT = {"d": 2, "kappa": 0.2, "kind": "deterministic_drift", "params": {"eps": 0.05}}
SYM = {"d": 2, "kappa": 0.25, "kind": "deterministic_drift", "params": {"eps": 0.0}}

PM = {"kind": "pm-check", "law": SYM, "geometry": {"direction": [1, 0], "M": 2, "L": 20}, "seed": 7}
DECAY = {"kind": "decay-fit", "law": DRIFT, "geometry": {"direction": [1, 0], "scales": [10, 15, 20, 25, 30]}}
VERIFY = {"kind": "renorm-verify", "law": SIMPLEX, "geometry": {"direction": [1, 0], "L0": 5, "Lt1": 40, "N": 3},
          "sampling": {"n_env": 3}, "seed": 11}
LADDER = {"kind": "renorm-ladder", "law": SIMPLEX, "geometry": {"L0": 7, "Lt0": 49, "nu": 7, "k_max": 3,
                                                                 "E_q0": 0.001}}
MC = {"kind": "exit-mc", "law": DRIFT, "geometry": {"direction": [1, 0], "L": 10},
      "sampling": {"n_env": 2, "n_walk": 500}, "seed": 3}


def write_cfg(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


def run_cli(*argv):
    return subprocess.run([sys.executable, "-m", "rwre.cli", *argv], capture_output=True, text=True)


def test_pm_check_end_to_end(tmp_path):
    out = tmp_path / "pm"
    assert main(["pm-check", "--config", write_cfg(tmp_path, PM), "--out", str(out)]) == 0
    man = RunManifest.load(out / "manifest.json")
    assert man.kind == "pm-check" and "verdicts.json" in man.files
    verdicts = json.loads((out / "verdicts.json").read_text())
    assert verdicts[0]["verdict"] == "fail"
    assert abs(verdicts[0]["estimate"] - 0.5) <= 0.02


def test_rerun_gives_identical_checksums(tmp_path):
    cfg = ExperimentConfig.from_dict(MC)
    a = run_experiment(cfg, tmp_path / "a")
    b = run_experiment(cfg, tmp_path / "b")
    assert a.files == b.files and a.config_hash == b.config_hash


def test_bad_ladder_is_config_error(tmp_path, capsys):
    bad = dict(LADDER, geometry={"L0": 4, "Lt0": 16, "nu": 2, "k_max": 3})
    with pytest.raises(ConfigInvalid) as exc:
        ExperimentConfig.from_dict(bad)
    assert "(scalesk0)" in str(exc.value)
    assert main(["renorm-ladder", "--config", write_cfg(tmp_path, bad), "--out", str(tmp_path / "o")]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["code"] and "(scalesk0)" in json.dumps(err)
    assert not (tmp_path / "o" / "manifest.json").exists()


def test_decay_report_bundle(tmp_path):
    out = tmp_path / "decay"
    run_experiment(ExperimentConfig.from_dict(DECAY), out)
    bundle = emit_report(out)
    names = {p.name for p in bundle.plots}
    assert names == {"decay_vs_L.svg", "decay_vs_Lgamma.svg"}
    svg = ET.parse(out / "decay_vs_L.svg").getroot()
    circles = [e for e in svg.iter() if e.tag.endswith("circle")]
    assert len(circles) == len(DECAY["geometry"]["scales"])
    assert any(e.tag.endswith("line") and e.get("class") == "fit" for e in svg.iter())
    with open(out / "decay_table.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 5
    assert "report_files" in json.loads((out / "manifest.json").read_text())


def test_report_needs_manifest(tmp_path, capsys):
    with pytest.raises(MissingManifest):
        emit_report(tmp_path)
    assert main(["report", str(tmp_path)]) == 2
    assert json.loads(capsys.readouterr().err)["code"]


def test_verify_report_counts(tmp_path):
    out = tmp_path / "verify"
    run_experiment(ExperimentConfig.from_dict(VERIFY), out)
    summary = emit_report(out).summary.read_text()
    for key in ("in_T", "quenine_ok", "eqcom_ok"):
        assert key in summary
    s = json.loads((out / "verify_summary.json").read_text())
    assert s["n_env"] == 3 and s["quenine_violations"] == 0 and s["eqcom_violations"] == 0


@pytest.mark.parametrize("doc", [PM, DECAY, VERIFY, LADDER, MC], ids=lambda d: d["kind"])
def test_outputs_parse(tmp_path, doc):
    out = tmp_path / "run"
    run_experiment(ExperimentConfig.from_dict(doc), out)
    emit_report(out)
    for p in out.iterdir():
        if p.suffix == ".json":
            json.loads(p.read_text(), parse_constant=lambda c: pytest.fail(f"non-standard constant in {p.name}"))
        elif p.suffix == ".csv":
            with open(p) as fh:
                rows = list(csv.reader(fh))
            assert rows and all(len(r) == len(rows[0]) for r in rows)
        elif p.suffix == ".svg":
            ET.parse(p)


def test_config_round_trip():
    for doc in (PM, DECAY, VERIFY, LADDER, MC):
        cfg = ExperimentConfig.from_dict(doc)
        back = ExperimentConfig.from_json(cfg.to_json())
        assert back == cfg and back.hash == cfg.hash


def test_hash_ignores_out():
    a = ExperimentConfig.from_dict(PM)
    b = ExperimentConfig.from_dict(dict(PM, out="/somewhere"))
    assert a.hash == b.hash


def test_env_var_sets_out_dir(tmp_path, monkeypatch):
    cfg = ExperimentConfig.from_dict(dict(LADDER, out=str(tmp_path / "from_cfg")))
    monkeypatch.setenv("RWRE_OUT", str(tmp_path / "from_env"))
    assert resolve_out_dir(cfg) == tmp_path / "from_env"
    assert resolve_out_dir(cfg, tmp_path / "flag") == tmp_path / "flag"
    monkeypatch.delenv("RWRE_OUT")
    assert resolve_out_dir(cfg) == tmp_path / "from_cfg"


@pytest.mark.parametrize("doc,field", [
    (dict(PM, kind="nope"), "kind"),
    (dict(PM, geometry={"direction": [1, 0], "M": 2}), "geometry.L"),
    (dict(PM, geometry={"direction": [1, 1], "M": 2, "L": 20}), "geometry.direction"),
    (dict(DECAY, geometry={"direction": [1, 0], "scales": [10, 20]}), "geometry.scales"),
    (dict(PM, sampling={"n_env": 0}), "sampling.n_env"),
    (dict(PM, extra=1), "extra"),
])
def test_invalid_configs_name_the_field(doc, field):
    with pytest.raises(ConfigInvalid) as exc:
        ExperimentConfig.from_dict(doc)
    assert exc.value.context.get("field", field) == field or field in str(exc.value)


def test_runtime_error_exit_code(tmp_path):
    # strong drift and few walks: every MC estimate is zero, so no decay rate can be fitted
    doc = {"kind": "decay-fit", "law": {"d": 2, "kappa": 0.05, "kind": "deterministic_drift", "params": {"eps": 0.2}},
           "geometry": {"direction": [1, 0], "scales": [20, 30, 40]}, "sampling": {"n_walk": 50}}
    res = run_cli("decay-fit", "--config", write_cfg(tmp_path, doc), "--out", str(tmp_path / "o"))
    assert res.returncode == 3
    assert json.loads(res.stderr)["code"]


def test_unreadable_config_exit_code(tmp_path):
    res = run_cli("exit-exact", "--config", str(tmp_path / "missing.json"))
    assert res.returncode == 2 and json.loads(res.stderr)["code"] == "config_invalid"
    res = run_cli("pm-check", "--config", write_cfg(tmp_path, PM), "--threads", "0")
    assert res.returncode == 2


def test_cli_subprocess_prints_out_dir(tmp_path):
    res = run_cli("renorm-ladder", "--config", write_cfg(tmp_path, LADDER), "--out", str(tmp_path / "lad"))
    assert res.returncode == 0, res.stderr
    info = json.loads(res.stdout)
    assert info["out"] == str(tmp_path / "lad") and "ladder.json" in info["files"]
