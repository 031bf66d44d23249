import json
import math

import pytest

from phipsim import catalog
from phipsim.cli import RunConfig, apply_overrides, main, slug
from phipsim.errors import ConfigError


def _run(tmp_path, *argv):
    return main(list(argv) + ["--out", str(tmp_path)])


def test_simulate_writes_outputs(tmp_path, capsys):
    assert _run(tmp_path, "simulate", "--seq", "SLIC", "--set", "n_samples=50") == 0
    out = json.loads(capsys.readouterr().out)
    assert out["p_final"] >= 0.98
    for ext in ("csv", "svg", "json"):
        assert (tmp_path / f"slic_traj.{ext}").exists()
    header = (tmp_path / "slic_traj.csv").read_text().splitlines()[0]
    assert header.startswith("t_s,Sx,Sy,Sz")
    assert (tmp_path / "slic_traj.svg").read_text().lstrip().startswith("<?xml")


def test_simulate_from_program_file(tmp_path, params, capsys):
    prog_file = tmp_path / "prog.json"
    prog_file.write_text(catalog.build("PulsePol", params).dumps())
    assert _run(tmp_path, "simulate", "--program", str(prog_file), "--formats", "json",
                "--set", "n_samples=20") == 0
    assert json.loads(capsys.readouterr().out)["p_final"] > 0.98


def test_large_offset_kills_pulsepol(tmp_path, capsys):
    assert _run(tmp_path, "simulate", "--seq", "PulsePol", "--set", "d0_hz=1000",
                "--set", "n_samples=20", "--formats", "json") == 0
    assert abs(json.loads(capsys.readouterr().out)["p_final"]) < 0.1


def test_sweep_command(tmp_path, capsys):
    code = _run(tmp_path, "sweep", "--seq", "SLIC", "--error", "dDF", "--set", "points_per_decade=4",
                "--stop-after", "2", "--refine", "2")
    assert code == 0
    summary = json.loads(capsys.readouterr().out)
    assert 0.05 < summary["threshold90"]["value_Hz"] < 1.0
    assert (tmp_path / "slic_dDF_sweep.csv").read_text().startswith("error_Hz,p_final")
    assert (tmp_path / "slic_dDF_sweep.svg").exists()


def test_aht_alpha_report(tmp_path, capsys):
    assert _run(tmp_path, "aht", "--seq", "PulsePol", "--report", "alpha") == 0
    line = capsys.readouterr().out.strip()
    assert line.startswith("alpha = ") and line.endswith(" rad")
    assert float(line.split()[2]) == pytest.approx(math.pi / 2)


def test_aht_outputs(tmp_path, capsys):
    assert _run(tmp_path, "aht", "--seq", "MREVpol") == 0
    out = json.loads(capsys.readouterr().out)
    assert out["suppression"] == "suppressing"
    for name in ("mrevpol_aht_b.csv", "mrevpol_aht_c.csv", "mrevpol_aht.json"):
        assert (tmp_path / name).exists()


@pytest.mark.parametrize("argv", [
    ["simulate"],
    ["simulate", "--seq", "Foo"],
    ["simulate", "--seq", "SLIC", "--set", "bogus=1"],
    ["sweep", "--seq", "SLIC", "--error", "dXX"],
    ["table", "--rows", "SLIC", "--errors", "dXX"],
    ["simulate", "--seq", "PulsePol", "--set", "options.phi=0.7853981633974483",
     "--set", "options.J_tau=9.42477796076938"],
])
def test_usage_errors_exit_2(tmp_path, argv, capsys):
    assert _run(tmp_path, *argv) == 2


def test_config_file(tmp_path, capsys):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"sequence": "SLIC*", "n_samples": 10, "formats": ["json"]}))
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    assert (tmp_path / "slic_star_traj.json").exists()


def test_overrides_and_validation():
    d = apply_overrides({}, ["d0_hz=2.5", "options.phi=0.5", "sequence=SLIC"])
    assert d == {"d0_hz": 2.5, "options": {"phi": 0.5}, "sequence": "SLIC"}
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"colour": 1})
    cfg = RunConfig.from_dict({"sequence": "SLIC", "J_hz": 20.0})
    assert cfg.molecule().J == pytest.approx(2 * math.pi * 20.0)
    assert RunConfig.from_dict(cfg.to_dict()) == cfg


def test_slug():
    assert slug("SLIC*") == "slic_star"
    assert slug("amp swept SLIC") == "amp_swept_slic"
