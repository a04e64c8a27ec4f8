import json
import subprocess
import sys

import pytest

from elicitagg.cli import main

DIRICHLET_INI = """
[family]
name = CategoricalDirichlet
K = 3

[prior]
alpha = 1, 1, 1

[scenario]
mechanism = TwoSampleDirichlet
agents = 2
samples = 20, 22
trials = 100
seed = 42
"""

POISSON_INI = """
[family]
name = PoissonGamma

[prior]
nu = 2
n = 1

[scenario]
mechanism = SingleSampleMoments
agents = 3
samples_range = 0, 10
trials = 100
seed = 7
"""


@pytest.fixture
def write(tmp_path):
    def _write(name, text):
        p = tmp_path / name
        p.write_text(text)
        return str(p)
    return _write


def test_run_dirichlet(write, tmp_path, capsys):
    out = tmp_path / "o.jsonl"
    assert main(["run", "--config", write("d.ini", DIRICHLET_INI), "--out", str(out)]) == 0
    assert "pass_rate=1.0" in capsys.readouterr().out
    lines = out.read_text().splitlines()
    assert len(lines) == 102
    head = json.loads(lines[0])
    assert head["config"]["seed"] == 42 and head["config"]["prior"] == {"alpha": [1.0, 1.0, 1.0]}


def test_seed_and_trial_overrides(write, tmp_path):
    out = tmp_path / "o.jsonl"
    assert main(["run", "--config", write("d.ini", DIRICHLET_INI), "--out", str(out),
                 "--seed", "5", "--trials", "3"]) == 0
    recs = [json.loads(s) for s in out.read_text().splitlines()]
    assert recs[0]["config"]["seed"] == 5 and recs[-1]["trials"] == 3


def test_single_sample_categorical_exit_2(write, capsys):
    cfg = write("bad.ini", DIRICHLET_INI.replace("TwoSampleDirichlet", "SingleSampleMoments"))
    assert main(["run", "--config", cfg]) == 2
    assert "scaling the Dirichlet pseudo-counts" in capsys.readouterr().err


def test_missing_config_exit_2(tmp_path):
    assert main(["run", "--config", str(tmp_path / "nope.ini")]) == 2


def test_usage_errors_exit_2():
    assert main([]) == 2
    assert main(["run"]) == 2
    assert main(["frobnicate"]) == 2


def test_oracle_mismatch_exit_1(write, monkeypatch, capsys):
    import elicitagg.simharness as sh
    real = sh.pool

    def broken(prior, decoded, spec, integer_samples=True):
        h = real(prior, decoded, spec, integer_samples)
        return type(h)(h.nu, h.n + 1)

    monkeypatch.setattr(sh, "pool", broken)
    assert main(["run", "--config", write("p.ini", POISSON_INI), "--trials", "2"]) == 1
    err = capsys.readouterr().err
    assert err.startswith("first failing trial: ")
    assert json.loads(err.split(": ", 1)[1])["trial"] == 0


def test_report_poisson(write, tmp_path, capsys):
    out = tmp_path / "p.jsonl"
    assert main(["run", "--config", write("p.ini", POISSON_INI), "--out", str(out)]) == 0
    capsys.readouterr()
    assert main(["report", str(out)]) == 0
    rows = capsys.readouterr().out.strip().splitlines()
    assert len(rows) == 2
    fields = rows[1].split()
    assert fields[0] == "PoissonGamma" and fields[1] == "100" and float(fields[3]) <= 1e-10


def test_report_mixed_families(write, tmp_path, capsys):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    main(["run", "--config", write("p.ini", POISSON_INI), "--out", str(a), "--trials", "5"])
    main(["run", "--config", write("d.ini", DIRICHLET_INI), "--out", str(b), "--trials", "5"])
    both = tmp_path / "both.jsonl"
    both.write_text(a.read_text() + b.read_text())
    capsys.readouterr()
    assert main(["report", str(both)]) == 0
    rows = capsys.readouterr().out.strip().splitlines()[1:]
    assert sorted(r.split()[0] for r in rows) == ["CategoricalDirichlet", "PoissonGamma"]


def test_report_empty_file(tmp_path, capsys):
    p = tmp_path / "empty.jsonl"
    p.write_text("")
    assert main(["report", str(p)]) == 0
    assert capsys.readouterr().out.strip().splitlines() == [
        "family  trials  pass_rate  max_err  min_margin  mean_score"]


def test_report_malformed_line_number(tmp_path, capsys):
    p = tmp_path / "bad.jsonl"
    p.write_text('{"type": "summary"}\n{"type": "trial", "family": "x"}\n')
    assert main(["report", str(p)]) == 2
    assert f"{p}:2" in capsys.readouterr().err
    p.write_text('{"type": "summary"}\n\nnot json\n')
    assert main(["report", str(p)]) == 2
    assert f"{p}:3" in capsys.readouterr().err


def test_check_propriety(write, tmp_path, capsys):
    out = tmp_path / "m.jsonl"
    assert main(["check-propriety", "--config", write("d.ini", DIRICHLET_INI), "--trials", "5",
                 "--out", str(out)]) == 0
    recs = [json.loads(s) for s in out.read_text().splitlines()]
    assert recs[-1]["type"] == "propriety" and recs[-1]["all_positive"]
    assert sum(r["type"] == "margin" for r in recs) == 10


def test_probe_injectivity(write, capsys):
    ini = DIRICHLET_INI.replace("K = 3", "K = 2").replace("alpha = 1, 1, 1", "alpha = 1, 1")
    assert main(["probe-injectivity", "--config", write("d.ini", ini)]) == 0
    probe, demo = [json.loads(s) for s in capsys.readouterr().out.splitlines()]
    assert probe["ok"] is False and probe["witness"]["ppd_gap"] == 0.0
    assert demo["type"] == "non_aggregability" and demo["global_tv"] > 1e-3


def test_conjectures_and_report(tmp_path, capsys):
    out = tmp_path / "e.jsonl"
    assert main(["conjectures", "--out", str(out)]) == 0
    assert main(["report", str(out)]) == 0
    text = capsys.readouterr().out
    assert "categorical K=3 non-injective" in text
    assert "dirichlet trace strictly decreasing" in text


def test_module_entry_point(write, tmp_path):
    out = tmp_path / "o.jsonl"
    proc = subprocess.run([sys.executable, "-m", "elicitagg", "run", "--config",
                           write("d.ini", DIRICHLET_INI), "--trials", "4", "--out", str(out)],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "pass_rate=1.0" in proc.stdout


def test_run_files_byte_identical(write, tmp_path):
    cfg = write("p.ini", POISSON_INI)
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    main(["run", "--config", cfg, "--out", str(a), "--trials", "20"])
    main(["run", "--config", cfg, "--out", str(b), "--trials", "20"])
    assert a.read_bytes() == b.read_bytes()
