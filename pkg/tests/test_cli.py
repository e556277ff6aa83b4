import json
import subprocess
import sys

import pytest

from rshe_lab import __version__, cli
from rshe_lab.scheme import NumericalAbort


@pytest.fixture
def outdir(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUTPUT_ENV, str(tmp_path))
    return tmp_path


def last_error(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


def test_zero_step_rejected(outdir, capsys):
    assert cli.main(["simulate", "--h", "0"]) == 2
    err = last_error(capsys)
    assert err == {"error": "invalid_config", "field": "h", "message": "must be positive"}


@pytest.mark.parametrize(
    "argv,field",
    [
        (["simulate", "--M", "7"], "M"),
        (["simulate", "--N", "200"], "N"),
        (["simulate", "--lambda", "0.5"], "lambda_exponent"),
        (["simulate", "--h", "0.3"], "h"),
        (["ito-verify", "--phi", "nope"], "phi"),
        (["ito-verify", "--h-list", "2^-8,2^-7"], "h_list"),
        (["moments", "--paths", "1"], "n_paths"),
        (["simulate", "--x0", "cos:0,-1"], "x0"),
        (["simulate", "--format", "xml"], "format"),
        (["eta-check", "--eps-list", "0.1,-1"], "eps_list"),
        (["simulate", "--seed", "abc"], "seed"),
    ],
)
def test_field_level_errors(outdir, capsys, argv, field):
    assert cli.main(argv) == 2
    assert last_error(capsys)["field"] == field


def test_config_file_with_overrides(outdir, tmp_path, capsys):
    conf = tmp_path / "run.cfg"
    conf.write_text("# small run\nM = 32\nN = 16\nh = 2^-6\nT = 0.0625\nformat = csv\n")
    assert cli.main(["simulate", "--config", str(conf), "--seed", "4"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("simulate:") and out.count("\n") == 1
    text = (outdir / "simulate.csv").read_text()
    meta = json.loads(text.splitlines()[0].split("=", 1)[1])
    assert meta["M"] == 32 and meta["seed"] == 4 and meta["h"] == 2.0**-6
    assert f'# version="{__version__}"' in text


def test_bad_config_file(outdir, tmp_path, capsys):
    conf = tmp_path / "bad.cfg"
    conf.write_text("M 32\n")
    assert cli.main(["simulate", "--config", str(conf)]) == 2
    assert last_error(capsys)["field"] == "config"
    conf.write_text("colour = blue\n")
    assert cli.main(["simulate", "--config", str(conf)]) == 2
    assert last_error(capsys)["field"] == "colour"
    assert cli.main(["simulate", "--config", str(tmp_path / "missing.cfg")]) == 2


def test_replay_is_byte_identical(tmp_path, capsys):
    conf = tmp_path / "c.cfg"
    conf.write_text("M = 32\nN = 16\nh_list = 2^-5,2^-6\nT = 0.0625\nn_paths = 6\nphi = linear_sin_a1,interaction_cos\n")
    for fmt in ("json", "csv"):
        runs = []
        for d in ("a", "b"):
            assert cli.main(["ito-verify", "--config", str(conf), "--format", fmt, "--out", str(tmp_path / fmt / d)]) == 0
            runs.append({p.name: p.read_bytes() for p in sorted((tmp_path / fmt / d).iterdir())})
        assert runs[0] == runs[1] and len(runs[0]) == (2 if fmt == "json" else 4)
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 8 and all(l.startswith("ito-verify ") for l in lines)


def test_every_command_embeds_config_and_version(outdir, capsys):
    small = ["--M", "32", "--N", "16", "--T", "0.0625", "--paths", "4", "--h-list", "2^-5,2^-6", "--h", "2^-6"]
    for cmd in ("simulate", "ito-verify", "eta-check", "moments", "generator-check"):
        assert cli.main([cmd, *small]) == 0, cmd
    assert cli.main(["inequalities", "--count", "5", "--M", "32", "--N", "16"]) == 0
    files = sorted(outdir.glob("*.json"))
    assert len(files) == 6
    for f in files:
        doc = json.loads(f.read_text())
        assert doc["meta"]["version"] == __version__
        assert doc["meta"]["config"]["M"] == 32
    summary = capsys.readouterr().out.strip().splitlines()
    assert len(summary) == 6


def test_inequalities_records_zero_violations(outdir, capsys):
    assert cli.main(["inequalities", "--count", "50"]) == 0
    doc = json.loads((outdir / "inequalities.json").read_text())
    assert doc["result"]["violations"] == 0 and doc["result"]["count"] == 50
    assert "violations=0" in capsys.readouterr().out


def test_numerical_abort_exit_code(outdir, capsys, monkeypatch):
    def boom(cfg, path_index=0):
        raise NumericalAbort("non-finite", step=3, path=path_index, seed=cfg.noise.seed)

    monkeypatch.setattr(cli, "run", boom)
    assert cli.main(["simulate", "--seed", "17", "--path-index", "2"]) == 3
    err = last_error(capsys)
    assert err["error"] == "numerical_abort" and err["path"] == 2 and err["seed"] == 17


def test_console_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "rshe_lab.cli", "simulate", "--h", "0", "--out", str(tmp_path)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 2 and '"field": "h"' in proc.stderr
