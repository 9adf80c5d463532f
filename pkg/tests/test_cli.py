import csv
import json
import subprocess
import sys

import pytest

from rdfinsight.cli import main
from rdfinsight.config import RunConfig, load_config, parse_config_text
from rdfinsight.pipeline import STEPS


def test_explore_outputs(ceos_path, tmp_path):
    out = tmp_path / "out"
    rc = main(["explore", ceos_path, "--out", str(out), "-k", "5", "--threads", "1",
               "--explain", "--trace-earlystop"])
    assert rc == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["k"] == 5 and len(rep["aggregates"]) == 5
    for a in rep["aggregates"]:
        assert (out / a["rows_file"]).exists()
    assert len(list((out / "plots").iterdir())) == 5
    with open(out / "timing.csv") as fh:
        steps = [r["step"] for r in csv.DictReader(fh)]
    assert steps == list(STEPS)
    assert (out / "plan.json").exists() and (out / "earlystop_trace.csv").exists()


def test_k_zero_is_an_error(ceos_path, tmp_path, capsys):
    assert main(["explore", ceos_path, "--out", str(tmp_path), "-k", "0"]) == 2
    assert "k must be" in capsys.readouterr().err


def test_missing_input(tmp_path):
    assert main(["explore", str(tmp_path / "nope.nt"), "--out", str(tmp_path)]) == 2
    assert main(["explore", "--out", str(tmp_path)]) == 2


def test_derivations_flag(ceos_path, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["explore", ceos_path, "--out", str(a), "--early-stop", "off", "--threads", "1"]) == 0
    assert main(["explore", ceos_path, "--out", str(b), "--early-stop", "off", "--threads", "1",
                 "--no-derivations"]) == 0
    ra = json.loads((a / "report.json").read_text())
    rb = json.loads((b / "report.json").read_text())
    assert ra["specs"] > rb["specs"] and rb["pruned"] == 0


def test_analyze(ceos_path, tmp_path):
    assert main(["analyze", ceos_path, "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "analysis.json").read_text())
    ceo = next(c for c in rep["cfs"] if c["id"].endswith("CEO"))
    nat = next(a for a in ceo["attributes"] if a["name"] == "nationality")
    assert (nat["support"], nat["multi_count"], nat["distinct"]) == (2, 1, 5)
    assert "count(nationality)" in ceo["derivations"]["count"]
    assert list((tmp_path / "preagg").rglob("*.csv"))


def test_oracle_check(ceos_path, tmp_path):
    assert main(["oracle-check", ceos_path, "--out", str(tmp_path), "--threads", "1"]) == 0
    res = json.loads((tmp_path / "oracle_check.json").read_text())
    assert res["checked_specs"] > 0 and res["mismatched_specs"] == 0


def test_bench_small(tmp_path):
    assert main(["bench", "--out", str(tmp_path), "--facts", "500", "--extents", "6:4:2",
                 "--n-sweep", "1,2", "--measures", "1"]) == 0
    with open(tmp_path / "bench_timing.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["N"] for r in rows] == ["1", "2"] and all(r["equal"] == "True" for r in rows)
    with open(tmp_path / "errors.csv") as fh:
        buckets = {r["ratio_bucket"] for r in csv.DictReader(fh)}
    assert "=1" in buckets and buckets & {"(1.0,1.5]", "(1.5,2.0]", "(2.0,5.0]"}


def test_config_file(ceos_path, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(f"# comment\ninputs = {ceos_path}\nk = 3\nearly_stop = off\nh = skewness\n")
    c = load_config(str(cfg), k=4)
    assert (c.k, c.early_stop, c.h, c.inputs) == (4, False, "skewness", [ceos_path])
    with pytest.raises(ValueError):
        parse_config_text("bogus = 1")
    assert main(["explore", "--config", str(cfg), "--out", str(tmp_path / "o"), "--threads", "1"]) == 0


def test_config_validation():
    with pytest.raises(ValueError):
        RunConfig(alpha=1.5)
    assert RunConfig(sample_size=60, batches=2).batch_size == 30


def test_module_entry_point(ceos_path, tmp_path):
    r = subprocess.run([sys.executable, "-m", "rdfinsight", "explore", ceos_path, "--out", str(tmp_path),
                        "-k", "3", "--threads", "1"], capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    assert "3 aggregates" in r.stdout
