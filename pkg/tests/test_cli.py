import json
import math

import numpy as np
import pytest

from chiralcurrent import cli
from chiralcurrent import runner as rn

TP = 2 * math.pi

SMALL = """\
scenario: n3/g
tier: effective
params:
  Omega: 2pi*405 MHz
time:
  periods: 1
  points_per_period: 31
output:
  stem: small
"""


def write(tmp_path, text, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_parse_frequency():
    assert cli.parse_frequency("2pi*405 MHz") == pytest.approx(TP * 405, rel=1e-15)
    assert cli.parse_frequency("2pi * 8.1 GHz") == pytest.approx(TP * 8100, rel=1e-15)
    assert cli.parse_frequency("2pi*61.171 THz") == pytest.approx(TP * 61.171e6, rel=1e-15)
    assert cli.parse_frequency("2pi*5 kHz") == pytest.approx(TP * 0.005, rel=1e-15)
    assert cli.parse_frequency("3 MHz") == 3.0
    assert cli.parse_frequency("1e2 rad/us") == 100.0
    assert cli.parse_frequency(12) == 12.0
    for bad in ("2pi*", "405 Hz", "fast", True):
        with pytest.raises(cli.ConfigError):
            cli.parse_frequency(bad)


@pytest.mark.parametrize("mhz", [405.0, 90.0, 112.5, 8100.0, 0.005])
def test_unit_round_trip(mhz):
    # rad/us -> MHz/(2 pi) is exact to one unit in the last place
    back = cli.parse_frequency(f"2pi*{mhz} MHz") / TP
    assert back == pytest.approx(mhz, rel=4e-16)


def test_schema_rejects_unknown_key_with_line(tmp_path, capsys):
    p = write(tmp_path, SMALL.replace("  Omega:", "  Omegaa:"))
    assert cli.main(["run", "--config", str(p), "--out-dir", str(tmp_path)]) == cli.EXIT_CONFIG
    err = capsys.readouterr().err
    assert "unknown key 'params.Omegaa'" in err
    assert f"{p}:4" in err


def test_schema_reports_bad_value_with_line(tmp_path, capsys):
    p = write(tmp_path, SMALL.replace("periods: 1", "periods: -1"))
    assert cli.main(["run", "--config", str(p)]) == cli.EXIT_CONFIG
    err = capsys.readouterr().err
    assert "'time.periods'" in err and f"{p}:6" in err


def test_config_errors(tmp_path, capsys):
    assert cli.main(["run", "--config", str(tmp_path / "missing.yaml")]) == cli.EXIT_CONFIG
    p = write(tmp_path, "scenario: [n3\n")
    assert cli.main(["run", "--config", str(p)]) == cli.EXIT_CONFIG
    p = write(tmp_path, SMALL.replace("n3/g", "n3/g\ninjection: s"))
    assert cli.main(["run", "--config", str(p)]) == cli.EXIT_CONFIG
    assert "disagrees" in capsys.readouterr().err


def test_config_mapping(tmp_path):
    cfg, doc = cli.load_config(write(tmp_path, SMALL))
    assert cfg.scenario == "n3" and cfg.injection == "g" and cfg.tier == "effective"
    assert cfg.Omega == pytest.approx(TP * 405)
    assert cfg.points_per_period == 31
    cfg, _ = cli.load_config("toggling")
    assert cfg.toggling_segments == (("R", 1), ("R", 1), ("R", 1))


def test_run_outputs_are_deterministic(tmp_path):
    p = write(tmp_path, SMALL)
    blobs = []
    for sub in ("a", "b"):
        assert cli.main(["run", "--config", str(p), "--out-dir", str(tmp_path / sub)]) == 0
        blobs.append(((tmp_path / sub / "small.csv").read_bytes(),
                      (tmp_path / sub / "small.summary.json").read_bytes()))
    assert blobs[0] == blobs[1]
    summary = json.loads(blobs[0][1])
    assert summary["parameter_echo"]["Omega"]["MHz_over_2pi"] == pytest.approx(405.0, rel=1e-15)
    header = blobs[0][0].decode().splitlines()[0].split(",")
    assert header[0] == "time_us" and "pop_gss" in header and "leakage" in header
    data = np.loadtxt(tmp_path / "a" / "small.csv", delimiter=",", skiprows=1)
    assert data.shape == (31, len(header))


def test_tier_override(tmp_path):
    p = write(tmp_path, SMALL)
    assert cli.main(["run", "--config", str(p), "--out-dir", str(tmp_path), "--model-tier", "analytic"]) == 0
    s = json.loads((tmp_path / "small.summary.json").read_text())
    assert s["tier"] == "analytic"


def test_check_and_mutation(capsys):
    assert cli.main(["check"]) == cli.EXIT_OK
    out = capsys.readouterr().out
    assert "FAIL" not in out
    assert cli.main(["check", "--mutate", "kappa"]) == cli.EXIT_CHECK
    assert "FAIL" in capsys.readouterr().out


def test_tables_schedule(tmp_path):
    assert cli.main(["tables", "--which", "schedule", "--out-dir", str(tmp_path)]) == cli.EXIT_OK
    rows = json.loads((tmp_path / "schedule_table.json").read_text())
    assert len(rows) == 44 and all(r["passed"] for r in rows)
    assert (tmp_path / "schedule_table.csv").exists()


def test_sweep(tmp_path):
    p = write(tmp_path, SMALL)
    rc = cli.main(["sweep", "--config", str(p), "--param", "Omega", "--values", "2pi*300 MHz", "2pi*405 MHz",
                   "--out-dir", str(tmp_path)])
    assert rc == 0
    rows = json.loads((tmp_path / "small_Omega_sweep.json").read_text())
    assert len(rows) == 2
    assert (tmp_path / "small_Omega_000.csv").exists()
    assert cli.main(["sweep", "--config", str(p), "--param", "bogus", "--values", "1"]) == cli.EXIT_CONFIG


def test_shipped_configs_validate():
    names = cli.shipped_configs()
    for fig in ("fig3a_closed", "fig3a_master", "fig3b_closed", "fig3b_master", "toggling", "default"):
        assert fig in names
    for k in range(4, 9):
        assert f"fig{k}_g" in names and f"fig{k}_s" in names
    for name in names:
        cfg, _ = cli.load_config(name)
        assert isinstance(cfg, rn.RunConfig)


def test_configs_command(capsys):
    assert cli.main(["configs"]) == 0
    assert "fig8_s" in capsys.readouterr().out.split()
