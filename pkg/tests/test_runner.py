import csv
import json

import pytest

from cdimlab.cli import main
from cdimlab.report import emit_report
from cdimlab.runner import ExperimentConfig, RunRecord, get_space, run_sweep

SMALL = {"space": {"copies": [12, 3, 9], "max_level": 3, "level": 3},
         "n_range": [1, 2, 3], "solver": {"tol": 0.05, "batch": 500},
         "recursion": {"p": 1.5, "depth": 5}}


@pytest.fixture(scope="module")
def record():
    return run_sweep(ExperimentConfig.from_dict(SMALL))


def _strip(rec_json):
    d = json.loads(rec_json)
    d.pop("started"), d.pop("finished")
    d["config"].pop("jobs"), d["config"].pop("out")
    for c in d["cells"]:
        c.pop("seconds")
    return d


def test_sweep_deterministic(record):
    again = run_sweep(ExperimentConfig.from_dict(dict(SMALL, jobs=2, out="elsewhere")))
    assert again.config_hash == record.config_hash
    assert _strip(again.to_json()) == _strip(record.to_json())


def test_sweep_contents(record):
    assert [c["n"] for c in record.cells] == [1, 2, 3]
    assert all(c["status"] == "converged" for c in record.cells)
    assert all(c["certificate_low"] <= c["value"] <= c["certificate_high"] for c in record.cells)
    assert record.checks["weights_admissible"] and record.checks["lemma34"]
    assert record.checks["recursion"]
    assert all(k.startswith("coupling") is False or v for k, v in record.checks.items())
    back = RunRecord.from_json(record.to_json())
    assert back.checks == record.checks


def test_empty_p_grid_gives_stats_only():
    rec = run_sweep(ExperimentConfig.from_dict(dict(SMALL, p_grid=[])))
    assert rec.space["circles"] == 1969 and len(rec.covers) == 3
    assert not rec.cells and not rec.weights and not rec.recursion and rec.passed


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict(dict(SMALL, n_range=[5]))
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict(dict(SMALL, p_grid=[1.0]))
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict(dict(SMALL, family={"kind": "Nope"}))
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict(dict(SMALL, jobs=0))
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict({"space": {"level": 3, "margin": 1, "max_level": 3,
                                              "copies": [12, 3, 9]}, "n_range": [3]})


def test_digest_ignores_paths():
    a = ExperimentConfig.from_dict(SMALL)
    b = ExperimentConfig.from_dict(dict(SMALL, out="x", cache="y", jobs=3))
    c = ExperimentConfig.from_dict(dict(SMALL, seed=1))
    assert a.digest() == b.digest() != c.digest()


def test_space_cache(tmp_path):
    cfg = ExperimentConfig.from_dict(dict(SMALL, cache=str(tmp_path)))
    s1 = get_space(cfg)
    files = list(tmp_path.glob("space-*.npz"))
    assert len(files) == 1
    s2 = get_space(cfg)
    assert s1.content_hash() == s2.content_hash()
    files[0].write_bytes(b"corrupt")
    s3 = get_space(cfg)  # unusable entry: rebuilt and rewritten
    assert s3.content_hash() == s1.content_hash()


def test_report_files(tmp_path, record):
    paths = emit_report(record, tmp_path)
    names = {p.name for p in paths}
    assert names == {"modulus_sweep.csv", "mod_vs_n.svg", "weight_diagnostics.csv",
                     "max_norm_vs_n.svg", "volume_vs_n.svg", "recursion.svg",
                     "acceptance_summary.csv", "run_summary.json"}
    rows = list(csv.DictReader(open(tmp_path / "modulus_sweep.csv")))
    assert len(rows) == 3 and {r["config_hash"] for r in rows} == {record.config_hash}
    assert float(rows[0]["value"]) == record.cells[0]["value"]
    svg1 = (tmp_path / "mod_vs_n.svg").read_bytes()
    emit_report(record, tmp_path)
    assert (tmp_path / "mod_vs_n.svg").read_bytes() == svg1


def test_report_bad_output_dir(tmp_path, record):
    f = tmp_path / "file"
    f.write_text("")
    with pytest.raises(OSError):
        emit_report(record, f / "sub")


def test_cli_exit_codes(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps(SMALL))
    assert main(["recursion", "--config", str(cfg), "--out", str(tmp_path / "r")]) == 0
    assert (tmp_path / "r" / "recursion.svg").exists()
    assert main(["cylinders", "--out", str(tmp_path / "c")]) == 0
    assert main(["cover", "--config", str(cfg), "--out", str(tmp_path / "cv")]) == 0
    assert main(["space", "--config", str(cfg), "--cache", str(tmp_path / "cache"),
                 "--out", str(tmp_path / "s")]) == 0
    # n = 1 -> 2 increases on this small space, so the sweep reports a failure
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(dict(SMALL, n_range=[1, 2], recursion=None)))
    assert main(["modulus", "--config", str(bad), "--out", str(tmp_path / "m")]) == 1
    out = capsys.readouterr().out
    assert "[FAIL] mod_decreasing_p1.5" in out


def test_cli_report_from_record(tmp_path, record):
    emit_report(record, tmp_path / "a")
    code = main(["report", "--record", str(tmp_path / "a" / "run_summary.json"),
                 "--out", str(tmp_path / "b"), "--acceptance", "2", "6"])
    rows = list(csv.DictReader(open(tmp_path / "b" / "acceptance_summary.csv")))
    assert any(r["check"].startswith("criterion 2") for r in rows)
    assert code == (0 if record.passed else 1)
