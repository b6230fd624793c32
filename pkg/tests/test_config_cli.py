from __future__ import annotations

import json
from pathlib import Path

import pytest

from bdsdelab import cli
from bdsdelab.config import STUDIES, STUDY_DEFAULTS, build_config, default_config, parse_config, read_flat
from bdsdelab.errors import ConfigError


def write(tmp_path: Path, text: str) -> Path:
    path = tmp_path / "exp.ini"
    path.write_text(text)
    return path


def test_minimal_config_fills_defaults(tmp_path):
    cfg = parse_config(write(tmp_path, "[study]\nname = ou-oracle\n[seeds]\nmaster = 11\ncount = 16\n"))
    assert cfg.problem == "ou" and cfg.seed == 11 and cfg.n_seeds == 16
    assert cfg.discretization["dt"] == STUDY_DEFAULTS["ou-oracle"]["disc"]["dt"]


def test_read_flat_literals():
    flat = read_flat("[discretization]\ndt = 0.01\nhorizons = [4, 8]  # doubling\n[problem]\nid = ou\n")
    assert flat == {"discretization.dt": 0.01, "discretization.horizons": [4, 8], "problem.id": "ou"}


@pytest.mark.parametrize(
    "extra,needle",
    [
        ({"discretization.d": 3}, "d <= 2"),
        ({"constants.alphaj": [0.3, 0.3]}, "alphaj sums to 0.6"),
        ({"constants.q": 3.0}, "must exceed 3"),
        ({"discretization.spacing": 1}, "unknown key discretization.spacing"),
        ({"problem.beta": 1.0}, "unknown key problem.beta"),
        ({"seeds.count": 4}, "at least 8"),
    ],
)
def test_single_violation(extra, needle):
    with pytest.raises(ConfigError) as info:
        build_config({"study.name": "ou-oracle", **extra})
    assert any(needle in v for v in info.value.violations)


def test_violations_are_collected():
    with pytest.raises(ConfigError) as info:
        build_config({"study.name": "ou-oracle", "discretization.d": 3, "seeds.count": 2, "output.colour": "red"})
    assert len(info.value.violations) == 3


def test_every_study_has_a_default_and_a_battery():
    assert len(STUDIES) == 10
    for study in STUDIES:
        assert default_config(study).study == study
    parser = cli._parser()
    for study in STUDIES:
        assert parser.parse_args([study]).command == study


def test_hash_ignores_output_dir():
    cfg = default_config("validate")
    assert cfg.config_hash() == cfg.with_overrides(output_dir="/elsewhere").config_hash()
    assert cfg.config_hash() != cfg.with_overrides(seed=5).config_hash()


def test_validate_cli_passes_and_writes_report(tmp_path, capsys):
    out = tmp_path / "v"
    assert cli.main(["validate", "--out", str(out)]) == 0
    assert "PASS validate" in capsys.readouterr().out
    manifest = json.loads((out / "manifest.json").read_text())
    assert set(manifest["files"]) == {"conditions.csv", "config.json", "summary.json"}


def test_failing_verdict_exits_one(tmp_path):
    cfg = write(tmp_path, "[study]\nname = validate\n[constants]\nmu = 0.01\n")
    assert cli.main(["run", str(cfg), "--out", str(tmp_path / "f")]) == 1
    summary = json.loads((tmp_path / "f" / "summary.json").read_text())
    assert "H7" in summary["summary"]["failures"]


def test_config_error_exits_two(tmp_path, capsys):
    cfg = write(tmp_path, "[study]\nname = ou-oracle\n[seeds]\ncount = 7\n")
    assert cli.main(["run", str(cfg), "--out", str(tmp_path / "e")]) == 2
    assert "at least 8" in capsys.readouterr().err
    assert not (tmp_path / "e").exists()
    assert cli.main(["validate", "--config", str(cfg)]) == 2
    assert cli.main(["run", str(tmp_path / "missing.ini")]) == 2


def test_stationarity_cli(tmp_path):
    out = tmp_path / "s"
    assert cli.main(["stationarity", "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["summary"]["max_discrepancy"] <= 1e-12


def test_picard_cli_table(tmp_path):
    out = tmp_path / "p"
    assert cli.main(["picard-study", "--out", str(out)]) == 0
    header = (out / "contraction.csv").read_text().splitlines()[0]
    assert "ratio" in header.split(",")


def test_runs_are_reproducible_and_out_independent(tmp_path):
    hashes = []
    for name in ("a", "b"):
        assert cli.main(["stationarity", "--seed", "3", "--out", str(tmp_path / name)]) == 0
        files = json.loads((tmp_path / name / "manifest.json").read_text())["files"]
        hashes.append(files)
    assert hashes[0] == hashes[1]
    a = json.loads((tmp_path / "a" / "manifest.json").read_text())
    b = json.loads((tmp_path / "b" / "manifest.json").read_text())
    assert a["config_hash"] == b["config_hash"]
    assert (tmp_path / "a" / "config.json").read_text() == (tmp_path / "b" / "config.json").read_text()
