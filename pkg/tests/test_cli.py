import json
import subprocess
import sys

import pytest

from causallp.cli import main, parse_grid, thread_cap
from causallp.errors import ConfigError
from causallp.fixtures import reference_path

FAST = ["--model", "DistMult", "--dim", "8", "--epochs", "6", "--eval-every", "2", "--learning-rate", "0.01"]


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture
def synth_split(tmp_path):
    cegs = tmp_path / "synth.jsonl"
    assert run("synth", "--n-cegs", 30, "--seed", 1, "--out", cegs) == 0
    assert run("ingest", "--input", cegs, "--out", tmp_path / "ing") == 0
    split = tmp_path / "split"
    assert run("split", "--input", tmp_path / "ing", "--strategy", "markov", "--task", "prediction",
               "--view", "CT", "--seed", 2, "--out", split) == 0
    return split


@pytest.fixture
def ref_dir(tmp_path):
    out = tmp_path / "ref"
    assert run("ingest", "--input", reference_path(), "--out", out) == 0
    return out


def test_build_needs_ingested_input(tmp_path, capsys):
    assert run("build", "--input", reference_path(), "--out", tmp_path / "kg.tsv") == 1
    assert "no parsed event" in capsys.readouterr().err


def test_ingest_fixture(tmp_path):
    assert run("ingest", "--input", reference_path(), "--out", tmp_path) == 0
    report = dict(line.split("\t") for line in (tmp_path / "report.tsv").read_text().splitlines())
    assert report["cegs_in"] == report["cegs_out"] == "1"
    assert all(v == "0" for k, v in report.items() if k not in ("cegs_in", "cegs_out"))
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["command"] == "ingest" and manifest["version"]


def test_ingest_empty_file(tmp_path):
    empty = tmp_path / "empty.jsonl"
    empty.write_text("")
    assert run("ingest", "--input", empty, "--out", tmp_path / "o") == 0
    assert "cegs_out\t0\n" in (tmp_path / "o" / "report.tsv").read_text()


def test_ingest_truncated_record(tmp_path, capsys):
    bad = tmp_path / "bad.jsonl"
    bad.write_text(reference_path().read_text().splitlines()[0] + "\n" + '{"video_id": "x", "nodes": [\n')
    assert run("ingest", "--input", bad, "--out", tmp_path / "o") == 1
    assert "line 2" in capsys.readouterr().err


def test_missing_input_is_io_error(tmp_path):
    assert run("ingest", "--input", tmp_path / "nope.jsonl", "--out", tmp_path / "o") == 2


def test_usage_error_exit_code(capsys):
    assert run("train") == 1


def test_build_and_query(tmp_path, ref_dir, capsys):
    kg = tmp_path / "kg.tsv"
    assert run("build", "--input", ref_dir, "--view", "CTP", "--out", kg) == 0
    assert len(kg.read_text().splitlines()) == 67
    assert (tmp_path / "kg.stats.tsv").exists() and (tmp_path / "kg.tsv.manifest.json").exists()
    split = tmp_path / "split"
    assert run("split", "--input", kg, "--strategy", "random", "--seed", 0, "--out", split) == 0
    ckpt = tmp_path / "m.ckpt"
    assert run("train", "--split", split, "--out", ckpt, *FAST) == 0
    capsys.readouterr()
    assert run("query", "--checkpoint", ckpt, "--kg", kg, "--mode", "predict", "--entity", "ref/G",
               "--top-k", 3) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 3 and all(len(l.split("\t")) == 2 for l in lines)
    assert run("query", "--checkpoint", ckpt, "--kg", kg, "--mode", "explain", "--entity", "nobody") == 4
    assert "unknown entity" in capsys.readouterr().err


def test_split_tiny_kg_keeps_entities_covered(tmp_path):
    kg = tmp_path / "kg.tsv"
    kg.write_text("a\trdfType\tT\t1.0\nb\trdfType\tT\t1.0\n")
    assert run("split", "--input", kg, "--out", tmp_path / "s") == 0
    assert len((tmp_path / "s" / "train.tsv").read_text().splitlines()) == 2


def test_split_markov_on_quads_rejected(tmp_path, ref_dir):
    kg = tmp_path / "kg.tsv"
    assert run("build", "--input", ref_dir, "--out", kg) == 0
    assert run("split", "--input", kg, "--strategy", "markov", "--task", "prediction", "--out", tmp_path / "s") == 1


def test_leakage_failure_is_exit_3(tmp_path, ref_dir, monkeypatch):
    import causallp.cli as cli
    from causallp.split import Violation

    kg = tmp_path / "kg.tsv"
    assert run("build", "--input", ref_dir, "--out", kg) == 0
    fake = lambda bundle, prov=None: [Violation("overlap", bundle.train[0], "planted")]
    monkeypatch.setattr(cli, "leakage_audit", fake)
    assert run("split", "--input", kg, "--out", tmp_path / "s") == 3


def test_train_eval_and_replay(tmp_path, synth_split):
    ckpt = tmp_path / "m.ckpt"
    assert run("train", "--split", synth_split, "--out", ckpt, *FAST, "--weight-mode", "weighted") == 0
    manifest = json.loads((tmp_path / "m.ckpt.manifest.json").read_text())
    assert manifest["config"]["weight_mode"] == "weighted" and manifest["valid_mrr"] is not None
    report = tmp_path / "r.tsv"
    assert run("eval", "--checkpoint", ckpt, "--split", synth_split, "--out", report) == 0
    first = (ckpt.read_bytes(), report.read_bytes())
    ckpt.unlink()
    report.unlink()
    assert run("replay", tmp_path / "m.ckpt.manifest.json") == 0
    assert run("replay", tmp_path / "r.tsv.manifest.json") == 0
    assert (ckpt.read_bytes(), report.read_bytes()) == first


def test_config_file_and_unknown_key(tmp_path, synth_split):
    conf = tmp_path / "train.conf"
    conf.write_text("# tiny run\ndim = 4\nepochs = 2\n")
    assert run("train", "--split", synth_split, "--config", conf, "--out", tmp_path / "a.ckpt") == 0
    assert "dim\t4" in (tmp_path / "a.ckpt").read_text().splitlines()[0]
    conf.write_text("dimension = 4\n")
    assert run("train", "--split", synth_split, "--config", conf, "--out", tmp_path / "b.ckpt") == 1


def test_grid(tmp_path, synth_split):
    grid = tmp_path / "grid.conf"
    grid.write_text("weight_mode = base, weighted\ndim = 4\n")
    base = tmp_path / "base.conf"
    base.write_text("epochs = 2\nmodel = TransE\n")
    out = tmp_path / "g"
    assert run("grid", "--split", synth_split, "--grid", grid, "--config", base, "--out", out) == 0
    rows = (out / "summary.tsv").read_text().splitlines()
    assert len(rows) == 3 and rows[0].split("\t")[-1] == "mrr"
    for cell in ("cell_000", "cell_001"):
        assert {p.name for p in (out / cell).iterdir()} >= {"checkpoint.tsv", "report.tsv", "config.conf",
                                                            "manifest.json"}


def test_parse_grid():
    cells = parse_grid("eta = 1, 2\nmodel = TransE, HolE\n")
    assert len(cells) == 4 and cells[0] == {"eta": 1, "model": "TransE"}
    with pytest.raises(ConfigError):
        parse_grid("eta = \n")


def test_thread_cap(monkeypatch):
    monkeypatch.setenv("CAUSALLP_THREADS", "2")
    assert thread_cap() == 2
    monkeypatch.setenv("CAUSALLP_THREADS", "zero")
    with pytest.raises(ConfigError):
        thread_cap()


def test_synth_deterministic(tmp_path):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    assert run("synth", "--n-cegs", 5, "--out", a) == 0
    assert run("synth", "--n-cegs", 5, "--out", b) == 0
    assert a.read_bytes() == b.read_bytes()


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "causallp.cli", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.startswith("causallp ")
