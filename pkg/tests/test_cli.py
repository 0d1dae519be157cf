import csv
import json
import subprocess
import sys

import pytest

from lrising.cli import DEFAULT_CONFIG, emit, main

SMALL = {"volume": {"shape": [3, 3]}, "run": {"betas": [0.2, 0.6], "sweeps": 400, "burn_in": 50,
                                             "thinning": 1, "n_batches": 10}}


def write(tmp_path, name, obj):
    p = tmp_path / name
    p.write_text(obj if isinstance(obj, str) else json.dumps(obj))
    return str(p)


def test_malformed_json_exit_2(tmp_path, capsys):
    cfg = write(tmp_path, "bad.json", '{"model": {\n  "d": 2,\n  "alpha": }\n}')
    assert main(["enumerate", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    assert "bad.json:3:" in err


def test_invalid_values_exit_2(tmp_path):
    for bad in ({"model": {"alpha": 1.5}}, {"nope": 1}, {"run": {"betas": []}},
                {"volume": {"shape": [3, 3, 3]}}, {"run": {"bcs": ["up"]}}):
        assert main(["enumerate", "--config", write(tmp_path, "c.json", bad),
                     "--out", str(tmp_path / "o")]) == 2


def test_scale_guard_exit_3(tmp_path):
    cfg = write(tmp_path, "big.json", {"volume": {"shape": [5, 6]}})
    assert main(["enumerate", "--config", cfg, "--out", str(tmp_path / "o")]) == 3
    assert main(["contours", "--config", cfg, "--out", str(tmp_path / "o")]) == 3


def test_verify_peierls_strict_default(tmp_path):
    out = tmp_path / "p"
    assert main(["verify", "peierls", "--strict", "--out", str(out)]) == 0
    rep = json.loads((out / "verify_peierls.json").read_text())
    assert rep["verdict"] == "holds"
    man = json.loads((out / "manifest.json").read_text())
    assert man["config"] == json.loads(json.dumps(DEFAULT_CONFIG))
    assert set(man["files"]) == {"verify_peierls.csv", "verify_peierls.json"}


def test_strict_violation_exit_4(tmp_path):
    # at beta = 0 the two boundary conditions give the same law, so no gap
    cfg = write(tmp_path, "g.json", {"verify": {"gap": {"shape": [3, 3], "beta": 0.0, "chains": 2,
                                                        "sweeps": 300, "burn_in": 50}}})
    assert main(["verify", "gap", "--config", cfg, "--out", str(tmp_path / "g")]) == 0
    assert main(["verify", "gap", "--strict", "--config", cfg, "--out", str(tmp_path / "g")]) == 4


@pytest.mark.parametrize("command", ["enumerate", "sample", "sweep", "contours"])
def test_rerun_byte_identical(tmp_path, command):
    cfg = write(tmp_path, "c.json", SMALL)
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    assert main([command, "--config", cfg, "--out", str(a), "--workers", "1"]) == 0
    assert main([command, "--config", cfg, "--out", str(b), "--workers", "2"]) == 0
    # the manifest alone reproduces the run
    assert main([command, "--config", str(a / "manifest.json"), "--out", str(c)]) == 0
    for f in a.glob("*.csv"):
        assert f.read_bytes() == (b / f.name).read_bytes() == (c / f.name).read_bytes()


def test_sweep_row_per_grid_point(tmp_path):
    cfg = dict(SMALL, run=dict(SMALL["run"], epss=[0.0, 0.3], replicas=2))
    assert main(["sweep", "--config", write(tmp_path, "c.json", cfg), "--out", str(tmp_path / "s"),
                 "--workers", "1"]) == 0
    rows = list(csv.DictReader(open(tmp_path / "s" / "sweep.csv")))
    assert len(rows) == 2 * 2 * 2
    assert {(r["beta"], r["eps"], r["bc"]) for r in rows} == {
        (b, e, bc) for b in ("0.2", "0.6") for e in ("0.0", "0.3") for bc in ("plus", "minus")}


def test_seed_flag_changes_sample(tmp_path):
    cfg = write(tmp_path, "c.json", SMALL)
    main(["sample", "--config", cfg, "--out", str(tmp_path / "a"), "--seed", "1"])
    main(["sample", "--config", cfg, "--out", str(tmp_path / "b"), "--seed", "2"])
    assert (tmp_path / "a" / "sample.csv").read_bytes() != (tmp_path / "b" / "sample.csv").read_bytes()
    man = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert man["config"]["run"]["seed"] == 1


def test_env_output_root(tmp_path, monkeypatch):
    monkeypatch.setenv("LRISING_OUT", str(tmp_path / "root"))
    assert main(["enumerate", "--config", write(tmp_path, "c.json", SMALL)]) == 0
    assert (tmp_path / "root" / "enumerate" / "enumerate.csv").exists()


def test_empty_artifact_set(tmp_path):
    p = emit(tmp_path / "e", "noop", {}, [], {}, 0.0)
    assert [x.name for x in (tmp_path / "e").iterdir()] == ["manifest.json"]
    assert json.loads(p.read_text())["files"] == {}


def test_input_config_untouched(tmp_path):
    cfg = write(tmp_path, "c.json", SMALL)
    before = open(cfg).read()
    main(["enumerate", "--config", cfg, "--out", str(tmp_path / "o")])
    assert open(cfg).read() == before


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "lrising", "enumerate", "--out", str(tmp_path / "m"),
                        "--config", write(tmp_path, "c.json", SMALL)], capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
