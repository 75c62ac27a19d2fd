import json
import os

import numpy as np
import pytest

from hsgs.cli import main
from hsgs.config import RunManifest, parse_config, smallness_warnings
from hsgs.errors import ConfigurationError


def _write_cfg(tmp_path, extra=""):
    cfg = tmp_path / "run.ini"
    cfg.write_text(
        f"""
[domain]
nx = 8
ny = 8
nz = 6
[basis]
n = 4
n_z = 2
cache_dir = {tmp_path}/cache
[sim]
dt = 1e-3
t_end = 0.005
seed = 11
[output]
dir = {tmp_path}/out
{extra}
"""
    )
    return str(cfg)


def test_parse_defaults_and_minimal(tmp_path):
    setup = parse_config(None)
    assert setup.domain.Nx == 16
    assert setup.sim.mode == "raw"
    cfg = _write_cfg(tmp_path)
    setup = parse_config(cfg)
    assert setup.domain.Nx == 8
    assert setup.n == 4


def test_parse_rejects_bad_values(tmp_path):
    cfg = _write_cfg(tmp_path)
    with pytest.raises(ConfigurationError):
        parse_config(cfg, {"sim.dt": "-1"})
    with pytest.raises(ConfigurationError):
        parse_config(cfg, {"sim.mode": "nope"})
    with pytest.raises(ConfigurationError):
        parse_config("/nonexistent/file.ini")
    with pytest.raises(ConfigurationError):
        parse_config(cfg, {"bogus_section.key": "1"})
    with pytest.raises(ConfigurationError):
        parse_config(cfg, {"flat_key_without_section": "1"})


def test_smallness_warning(tmp_path):
    cfg = _write_cfg(tmp_path)
    setup = parse_config(cfg, {"physics.nu_v": "0.001"})
    warnings = smallness_warnings(setup, eta=1.0)
    assert warnings
    assert "smallness" in warnings[0]
    assert not smallness_warnings(setup, eta=0.0)


def test_manifest_hash_excludes_wall_time(tmp_path):
    setup = parse_config(_write_cfg(tmp_path))
    m1 = RunManifest.build(setup, n_paths=2)
    m2 = RunManifest.build(setup, n_paths=2)
    m2.wall_seconds = 123.0
    assert m1.hash() == m2.hash()


def test_cli_run_determinism(tmp_path):
    cfg = _write_cfg(tmp_path)
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "a")]) == 0
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "b")]) == 0
    a = (tmp_path / "a" / "ledger.csv").read_bytes()
    b = (tmp_path / "b" / "ledger.csv").read_bytes()
    assert a == b
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert a.decode().splitlines()[0].endswith(manifest["manifest_hash"])


def test_cli_usage_and_config_errors(tmp_path, capsys):
    assert main(["run", "--config", "/does/not/exist.ini"]) == 1
    assert main(["frobnicate"]) == 1


def test_cli_export_lid_condition(tmp_path):
    cfg = _write_cfg(tmp_path, extra="")
    assert main(["run", "--config", cfg]) == 0
    out = str(tmp_path / "exp")
    assert (
        main(
            [
                "export",
                "--config",
                cfg,
                "--checkpoint",
                str(tmp_path / "out" / "final.bin"),
                "--what",
                "w,ps,vbar",
                "--out",
                out,
            ]
        )
        == 0
    )
    rows = []
    with open(os.path.join(out, "w.csv")) as f:
        f.readline()  # manifest comment
        header = f.readline().strip().split(",")
        for line in f:
            rows.append([float(v) for v in line.split(",")])
    rows = np.array(rows)
    zi = header.index("z")
    wi = header.index("w")
    lid = np.abs(rows[rows[:, zi] == 0.0][:, wi])
    assert lid.max() <= 1e-10


def test_cli_ensemble(tmp_path):
    cfg = _write_cfg(tmp_path)
    out = str(tmp_path / "ens")
    assert main(["ensemble", "--config", cfg, "--paths", "2", "--out", out]) == 0
    data = json.loads((tmp_path / "ens" / "ensemble.json").read_text())
    assert data["n_paths"] == 2
    assert data["n_failed"] == 0


def test_cli_check_exit_codes(tmp_path, monkeypatch):
    out = tmp_path / "report.json"
    assert main(["check", "--suites", "holder", "--out", str(out)]) == 0
    data = json.loads(out.read_text())
    assert data["pass"] is True
    # a failing suite maps to exit code 3
    from hsgs import cli as cli_mod

    monkeypatch.setattr(
        cli_mod.checks,
        "run_suites",
        lambda names: [{"suite": "holder", "pass": False, "items": []}],
    )
    assert main(["check", "--suites", "holder", "--out", str(out)]) == 3


def test_noise_params_roundtrip(tmp_path):
    setup = parse_config(
        _write_cfg(tmp_path), {"noise.k": "5", "noise.amp_psi": "0.25"}
    )
    d = setup.noise.to_dict()
    assert d["K"] == 5 and d["amp_psi"] == 0.25


def test_cli_basis_command(tmp_path, capsys):
    cfg = _write_cfg(tmp_path)
    assert main(["basis", "--config", cfg]) == 0
    printed = capsys.readouterr().out
    assert "lambda_bar" in printed
    assert os.path.exists(printed.splitlines()[0])
