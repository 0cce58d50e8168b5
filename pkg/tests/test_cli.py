import hashlib
import json

import pytest

from eqc_tsp import __version__
from eqc_tsp.cli import main
from eqc_tsp.instances import load


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def data(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    for role, seed in (("train", 0), ("validation", 1), ("test", 2)):
        raw = d / f"{role}.json"
        assert run("gen", "--size", 6, "--count", 20, "--seed", seed, "--role", role, "--out", raw) == 0
        assert run("solve", "--in", raw, "--out", d / f"{role}_ref.json") == 0
    return d


def test_gen_is_byte_identical(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert run("gen", "--size", 7, "--count", 5, "--seed", 3, "--out", a) == 0
    assert run("gen", "--size", 7, "--count", 5, "--seed", 3, "--out", b) == 0
    assert a.read_bytes() == b.read_bytes()


def test_gen_default_count(tmp_path):
    out = tmp_path / "v.json"
    assert run("gen", "--size", 10, "--role", "validation", "--out", out) == 0
    assert len(load(out).instances) == 100


def test_manifest_records_digests_and_flags(tmp_path):
    out = tmp_path / "g.json"
    assert run("gen", "--size", 5, "--count", 3, "--seed", 9, "--out", out) == 0
    man = json.loads((tmp_path / "g.json.manifest.json").read_text())
    assert man["command"] == "gen" and man["seed"] == 9 and man["version"] == __version__
    assert man["outputs"][str(out)] == hashlib.sha256(out.read_bytes()).hexdigest()
    assert man["flags"]["size"] == 5 and "total" in man["wall_time_seconds"]


def test_solve_attaches_exact_references(data):
    ds = load(data / "test_ref.json")
    assert all(r.exact for r in ds.optimal)


def test_sigs_and_eval(data, tmp_path):
    out = tmp_path / "sigs.json"
    assert run("sigs", "--val", data / "validation_ref.json", "--test", data / "test_ref.json",
               "--out", out, "--csv", tmp_path / "g.csv") == 0
    res = json.loads(out.read_text())
    assert len(res["per_gamma_gaps"]) == 16 and res["test"]["mean"] >= 1.0
    ev = tmp_path / "eval.json"
    assert run("eval", "--in", data / "test_ref.json", "--gamma", res["gamma_star"], "--out", ev) == 0
    assert json.loads(ev.read_text())["mean"] == res["test"]["mean"]


def test_sigs_refuses_positive_sine(data, tmp_path, capsys):
    code = run("sigs", "--val", data / "validation_ref.json", "--test", data / "test_ref.json",
               "--beta", 0.5, "--out", tmp_path / "x.json")
    assert code == 1
    assert "must be negative" in capsys.readouterr().err
    assert not (tmp_path / "x.json").exists()


def test_rl_small_run(data, tmp_path):
    out = tmp_path / "rl.json"
    assert run("rl", "--train", data / "train_ref.json", "--val", data / "validation_ref.json",
               "--test", data / "test_ref.json", "--max-episodes", 40, "--out", out) == 0
    res = json.loads(out.read_text())
    assert res["episodes_run"] <= 40


def test_rl_rejects_unknown_config_field(data, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text('{"learning_rate_typo": 0.1}')
    assert run("rl", "--config", cfg, "--train", data / "train_ref.json", "--val", data / "validation_ref.json",
               "--test", data / "test_ref.json", "--out", tmp_path / "r.json") == 1


def test_figure_commands(data, tmp_path):
    ref = data / "validation_ref.json"
    assert run("heatmap", "--val", ref, "--gammas", "0.5,1.0", "--betas", "1.1,0.5", "--out", tmp_path / "h.csv") == 0
    assert run("pc-rate", "--in", ref, "--gammas", "0.1:0.5:0.2", "--out", tmp_path / "pc.csv") == 0
    assert len((tmp_path / "pc.csv").read_text().splitlines()) == 4
    assert run("policy-vis", "--in", ref, "--gamma", 1.0, "--out", tmp_path / "r.csv",
               "--scatter", tmp_path / "s.csv") == 0
    assert run("gamma-transfer", "--in", ref, "--out", tmp_path / "t.csv") == 0


def test_verify_statevector(tmp_path):
    out = tmp_path / "v.json"
    assert run("verify", "--statevector", "--sizes", "3..5", "--samples", 5, "--out", out) == 0
    assert json.loads(out.read_text())["passed"]


@pytest.mark.parametrize("argv", [["gen", "--size", "5"], ["bogus"], ["sigs", "--nope"],
                                  ["verify"], ["--threads", "0", "verify", "--statevector"]])
def test_usage_errors_exit_one(argv):
    assert main(argv) == 1


def test_runtime_errors_exit_two(tmp_path):
    assert run("eval", "--in", tmp_path / "missing.json", "--gamma", 1.0, "--out", tmp_path / "o.json") == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run("solve", "--in", bad, "--out", tmp_path / "o.json") == 2


def test_eval_without_references_fails(data, tmp_path):
    assert run("eval", "--in", data / "test.json", "--gamma", 1.0, "--out", tmp_path / "o.json") == 2


def test_help_and_version(capsys):
    assert main(["--help"]) == 0
    assert main(["--version"]) == 0
    assert __version__ in capsys.readouterr().out
