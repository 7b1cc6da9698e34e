"""Config validation, exit codes, artifacts, and reproducibility."""

import json
import subprocess
import sys

import numpy as np
import pytest

import hqlab.cli as cli


def run(tmp_path, sub, cfg, out=None, extra=()):
    p = tmp_path / f"{sub}.json"
    p.write_text(json.dumps(cfg))
    argv = [sub, "--config", str(p),
            "--out", str(out or tmp_path / f"{sub}-out")]
    argv += list(extra)
    return cli.main(argv)


BASE = {"seed": 2026, "domain": {"resolution": 13},
        "metric": {"preset": "flat"}}


def test_missing_seed_listed(tmp_path, capsys):
    p = tmp_path / "c.json"
    p.write_text("{}")
    assert cli.main(["solve", "--config", str(p)]) == 2
    assert "'seed' is a required property" in capsys.readouterr().err


def test_unknown_keys_listed(tmp_path, capsys):
    cfg = dict(BASE)
    cfg["metrik"] = {}
    cfg["solve"] = {"typo_key": 1}
    assert run(tmp_path, "solve", cfg) == 2
    err = capsys.readouterr().err
    assert "'metrik' was unexpected" in err
    assert "'typo_key' was unexpected" in err


def test_invalid_json_rejected(tmp_path, capsys):
    p = tmp_path / "c.json"
    p.write_text("{not json")
    assert cli.main(["solve", "--config", str(p)]) == 2
    assert "not valid JSON" in capsys.readouterr().err


def test_missing_file_rejected(tmp_path, capsys):
    assert cli.main(["solve", "--config", str(tmp_path / "nope.json")]) == 2


def test_wrong_enum_rejected(tmp_path, capsys):
    cfg = {"seed": 1, "metric": {"preset": "curvy"}}
    assert run(tmp_path, "solve", cfg) == 2


def test_solve_writes_field_and_manifest(tmp_path):
    out = tmp_path / "out"
    cfg = dict(BASE, solve={"control": "x1*x2"})
    assert run(tmp_path, "solve", cfg, out=out) == 0
    rep = json.loads((out / "solve.json").read_text())
    assert rep["control"] == "x1*x2"
    assert rep["relative_defect"] < 1e-10
    man = json.loads((out / "manifest.json").read_text())
    assert man["subcommand"] == "solve"
    assert man["seed"] == 2026
    assert set(man["versions"]) == {"hqlab", "numpy", "scipy", "python"}
    assert sorted(man["outputs"]) == man["outputs"]
    assert (out / "w.field").exists() and (out / "w.field.json").exists()


def test_unknown_control_name_is_numerical_failure(tmp_path, capsys):
    out = tmp_path / "out"
    cfg = dict(BASE, solve={"control": "nonexistent"})
    assert run(tmp_path, "solve", cfg, out=out) == 3
    diag = json.loads((out / "diagnostics.json").read_text())
    assert "nonexistent" in diag["message"]
    assert "manifest.json" not in [p.name for p in out.iterdir()]


def test_stale_diagnostics_removed_on_success(tmp_path):
    out = tmp_path / "out"
    cfg = dict(BASE, solve={"control": "nonexistent"})
    assert run(tmp_path, "solve", cfg, out=out) == 3
    cfg["solve"] = {"control": "x1"}
    assert run(tmp_path, "solve", cfg, out=out) == 0
    assert not (out / "diagnostics.json").exists()


def test_control_rank_eight(tmp_path):
    out = tmp_path / "out"
    cfg = dict(BASE, dictionary={"size": 24})
    assert run(tmp_path, "control", cfg, out=out) == 0
    rep = json.loads((out / "control.json").read_text())
    assert rep["rank"] == 8
    assert len(rep["points"]) == 2
    svals = (out / "svals.csv").read_text().strip().splitlines()
    assert len(svals) == 4 * len(rep["points"]) + 1


def test_convergence_ratio_exceeds_three_and_a_half(tmp_path):
    out = tmp_path / "out"
    cfg = {"seed": 5, "metric": {"preset": "flat"},
           "convergence": {"study": "solve", "resolutions": [17, 33]}}
    assert run(tmp_path, "convergence", cfg, out=out) == 0
    rows = (out / "convergence.csv").read_text().strip().splitlines()
    assert rows[0] == "resolution,h,sup_error,ratio"
    assert float(rows[2].split(",")[3]) >= 3.5


def test_convergence_needs_constant_metric(tmp_path, capsys):
    out = tmp_path / "out"
    cfg = {"seed": 5, "metric": {"preset": "conformal-sine"},
           "convergence": {"study": "solve", "resolutions": [9, 13]}}
    assert run(tmp_path, "convergence", cfg, out=out) == 3
    assert (out / "diagnostics.json").exists()


def test_determinism_byte_for_byte(tmp_path):
    cfg = dict(BASE, dictionary={"size": 20})
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(tmp_path, "control", cfg, out=a) == 0
    assert run(tmp_path, "control", cfg, out=b) == 0
    for f in sorted(x.name for x in a.iterdir()):
        fa, fb = (a / f).read_bytes(), (b / f).read_bytes()
        if f == "manifest.json":
            ja, jb = json.loads(fa), json.loads(fb)
            ja.pop("wall_time_s"), jb.pop("wall_time_s")
            assert ja == jb
        else:
            assert fa == fb, f


def test_seed_override_changes_hash(tmp_path):
    cfg = dict(BASE, dictionary={"size": 20})
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(tmp_path, "control", cfg, out=a) == 0
    assert run(tmp_path, "control", cfg, out=b, extra=["--seed", "7"]) == 0
    ma = json.loads((a / "manifest.json").read_text())
    mb = json.loads((b / "manifest.json").read_text())
    assert ma["config_hash"] != mb["config_hash"]
    assert mb["seed"] == 7


def test_recover_writes_metric_table(tmp_path):
    out = tmp_path / "out"
    cfg = {"seed": 2026, "domain": {"resolution": 13},
           "metric": {"preset": "flat"},
           "recover": {"samples": 20, "margin": 4}}
    assert run(tmp_path, "recover", cfg, out=out) == 0
    rows = (out / "metric.csv").read_text().strip().splitlines()
    assert rows[0].startswith("i1,i2,i3,g11")
    rep = json.loads((out / "recover.json").read_text())
    assert rep["n_nodes"] == len(rows) - 1
    assert rep["max_frobenius_error"] < 0.2


def test_recover_empty_harmonics_dir(tmp_path, capsys):
    out = tmp_path / "out"
    (tmp_path / "hdir").mkdir()
    cfg = {"seed": 1, "domain": {"resolution": 13},
           "recover": {"harmonics_dir": str(tmp_path / "hdir")}}
    assert run(tmp_path, "recover", cfg, out=out) == 3


def test_dumps17_formats():
    txt = cli.dumps17({"a": 1.0 / 3.0, "b": [1, True, None], "c": "x"})
    assert '"a": 0.33333333333333331' in txt
    assert json.loads(txt) == {"a": 1.0 / 3.0, "b": [1, True, None], "c": "x"}
    with pytest.raises(ValueError):
        cli.dumps17(float("nan"))


def test_csv17_formats():
    txt = cli.csv17(("a", "b"), [(1, 2.0 / 3.0)])
    assert txt == "a,b\n1,0.66666666666666663\n"


def test_console_script_entry_point(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps(dict(BASE, solve={"control": "x1"})))
    r = subprocess.run(
        [sys.executable, "-m", "hqlab.cli", "solve", "--config", str(p),
         "--out", str(tmp_path / "o")],
        capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    assert (tmp_path / "o" / "manifest.json").exists()
