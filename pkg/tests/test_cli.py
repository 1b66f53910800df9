import json

import pytest

from seqcomp import cli
from seqcomp.errors import ConvergenceError


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    gen = root / "gen.txt"
    gen.write_text("n_tracks=60\nn_frames=120\nn_ratings=400\n")
    assert cli.main(["synth", "--config", str(gen), "--seed", "3", "--out", str(root / "corpus")]) == 0
    cfg = root / "exp.txt"
    cfg.write_text(
        "manifest=corpus/manifest.txt\nlambdas=3\nfactors=1,2\nsets=3,4\n"
        "nu=0.5\nn_eta=8\nbootstrap=100\nyear_sets=fmd\n"
    )
    return root, cfg


def _files(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir()) if p.name != "runtime.json"}


@pytest.mark.parametrize("command", ["descriptors", "similarity", "year"])
def test_commands_rerun_identically(corpus, command):
    root, cfg = corpus
    for sub in ("a", "b"):
        assert cli.main([command, "--config", str(cfg), "--out", str(root / command / sub)]) == 0
    a, b = _files(root / command / "a"), _files(root / command / "b")
    assert a == b and "descriptors.csv" in a
    if command != "descriptors":
        assert {"model.json", "metrics.json", "report.json"} <= set(a)
        report = json.loads(a["report.json"])
        assert report["task"] == command
    runtime = json.loads((root / command / "a" / "runtime.json").read_text())
    assert runtime["command"] == command and runtime["seconds"] >= 0


def test_seed_flag_changes_split(corpus):
    root, cfg = corpus
    out = root / "seeded"
    assert cli.main(["similarity", "--config", str(cfg), "--seed", "11", "--out", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["config"]["seed"] == 11


def test_synth_seed_reproducible(tmp_path):
    gen = tmp_path / "gen.txt"
    gen.write_text("n_tracks=5\nn_frames=40\n")
    for sub in ("a", "b", "c"):
        seed = "8" if sub == "c" else "7"
        assert cli.main(["synth", "--config", str(gen), "--seed", seed, "--out", str(tmp_path / sub)]) == 0
    a = (tmp_path / "a" / "tracks" / "t00000" / "dynamics.rms.csv").read_bytes()
    assert a == (tmp_path / "b" / "tracks" / "t00000" / "dynamics.rms.csv").read_bytes()
    assert a != (tmp_path / "c" / "tracks" / "t00000" / "dynamics.rms.csv").read_bytes()


def test_validation_errors_exit_1(tmp_path, capsys):
    assert cli.main(["year", "--config", str(tmp_path / "absent.txt"), "--out", str(tmp_path / "o")]) == 1
    bad = tmp_path / "bad.txt"
    bad.write_text("sets=9\n")
    assert cli.main(["similarity", "--config", str(bad), "--out", str(tmp_path / "o")]) == 1
    bad.write_text("manifest=nowhere/manifest.txt\n")
    assert cli.main(["descriptors", "--config", str(bad), "--out", str(tmp_path / "o")]) == 1
    assert "error" in capsys.readouterr().err


def test_convergence_failure_exit_2(corpus, monkeypatch, tmp_path):
    root, cfg = corpus

    def fail(*args, **kwargs):
        raise ConvergenceError("no grid point converged")

    monkeypatch.setattr(cli, "run_year", fail)
    assert cli.main(["year", "--config", str(cfg), "--out", str(tmp_path)]) == 2


def test_out_is_required():
    with pytest.raises(SystemExit):
        cli.main(["synth"])
