import json
import subprocess
import sys
from pathlib import Path

import pytest

from vridyn import cli
from vridyn import experiments as exp_mod
from vridyn.config import (
    ExperimentConfig,
    RunConfig,
    format_grid,
    parse_config,
    parse_config_text,
    parse_grid_spec,
    serialize_config,
)
from vridyn.exceptions import ConfigError, IntegrationStalled
from vridyn.integrator import IntegratorConfig, State
from vridyn.output import PARTIAL_SUFFIX, fmt
from vridyn.pes import PesSpec


def test_grid_spec_parsing():
    assert parse_grid_spec("0.1:0.3:0.1") == (0.1, 0.2, 0.3)
    assert parse_grid_spec("0.5, 0.25") == (0.5, 0.25)
    assert parse_grid_spec(format_grid((0.1, 0.35))) == (0.1, 0.35)
    for bad in ("0.1:0.3", "a,b", "0.3:0.1:0.1", "0:1:0"):
        with pytest.raises(ConfigError):
            parse_grid_spec(bad)


def test_round_trip():
    cfg = RunConfig(
        pes=PesSpec(vri_x=0.41, barrier_height=0.55),
        integrator=IntegratorConfig(rtol=3e-12, method="symplectic4", step_size=2e-3),
        experiment=ExperimentConfig(name="sweep-slice", h0=0.04, grid=(64, 32), xi_grid=(0.1, 0.2)),
        out="somewhere",
        workers=3,
    )
    back = parse_config_text(serialize_config(cfg))
    assert back == cfg


def test_defaults_are_reference_setup():
    cfg = parse_config(experiment="line-run")
    assert cfg.pes == PesSpec()
    assert cfg.experiment.h0 == 0.03 and cfg.experiment.density == 500
    assert cfg.integrator.t_max == 200 and cfg.integrator.capture_radius == 0.2


def test_precedence(tmp_path):
    f = tmp_path / "c.ini"
    f.write_text("[pes]\nvri_x = 0.2\n\n[line-run]\nh0 = 0.05\ndensity = 100\n\n[run]\nworkers = 2\n")
    cfg = parse_config(f, "line-run", {"h0": 0.07, "workers": None})
    assert (cfg.pes.vri_x, cfg.experiment.h0, cfg.experiment.density, cfg.workers) == (0.2, 0.07, 100, 2)


@pytest.mark.parametrize(
    "text, match",
    [
        ("[pes]\nvri_x = 1.5\n", "vri_x"),
        ("[pes]\nfoo = 1\n", "foo"),
        ("[bogus]\n", "bogus"),
        ("[integrator]\nrtol = abc\n", "rtol"),
        ("[line-run]\ngrid = 4,4\n", "grid"),
        ("[line-run]\n[fate-map]\n", "more than one"),
    ],
)
def test_config_errors(tmp_path, text, match):
    f = tmp_path / "bad.ini"
    f.write_text(text)
    with pytest.raises(ConfigError, match=match):
        parse_config(f)


def test_override_not_applicable():
    with pytest.raises(ConfigError, match="--grid"):
        parse_config(experiment="line-run", overrides={"grid": (8, 8)})


def test_main_reports_config_error(tmp_path, capsys):
    assert cli.main(["pes-info", "--xi", "1.5", "--out", str(tmp_path)]) == 2
    err = capsys.readouterr().err
    assert err.count("\n") == 1 and "vri_x" in err


def test_fmt_is_round_trip():
    for v in (0.1, 1 / 3, 1e-300, -0.0, 12345678.9):
        assert float(fmt(v)) == v
    assert fmt(float("nan")) == "nan"


def read_all(d: Path) -> dict:
    return {p.name: p.read_bytes() for p in sorted(d.iterdir()) if p.name != "manifest.json"}


SMALL_RUNS = [
    ["pes-info"],
    ["line-run", "--density", "60"],
    ["stats", "--density", "120"],
    ["traces", "--density", "15"],
    ["sweep-surface", "--h0-grid", "0.02,0.03", "--xi-grid", "0.3,0.35", "--density", "40"],
    ["fate-map", "--grid", "24,24"],
    ["sweep-slice", "--grid", "16,16", "--xi-grid", "0.2,0.4,0.6"],
]

EXPECTED_FILES = {
    "pes-info": {"pes_info.json"},
    "line-run": {"fates.csv", "ensemble.csv", "ensemble.json", "summary.json"},
    "stats": {"stats.csv", "angle_histogram.csv", "angle_summary.json"},
    "traces": {"paths.csv", "fates.csv", "recross_series.csv", "limiting.json"},
    "sweep-surface": {"surface.csv", "peaks.json"},
    "fate-map": {"fatemap_xi0.3265.csv", "summary.json"},
    "sweep-slice": {
        "slice_sweep.csv",
        "fit.json",
        "fatemap_xi0.2000.csv",
        "fatemap_xi0.4000.csv",
        "fatemap_xi0.6000.csv",
    },
}


@pytest.mark.parametrize("argv", SMALL_RUNS, ids=[a[0] for a in SMALL_RUNS])
def test_cli_outputs_and_determinism(tmp_path, argv, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(argv + ["--out", str(a), "--workers", "1"]) == 0
    assert cli.main(argv + ["--out", str(b), "--workers", "3"]) == 0
    files_a = read_all(a)
    assert set(files_a) == EXPECTED_FILES[argv[0]]
    assert files_a == read_all(b)
    manifest = json.loads((a / "manifest.json").read_text())
    assert set(manifest["files"]) == EXPECTED_FILES[argv[0]]
    assert manifest["experiment"] == argv[0]
    assert not list(a.glob("*" + PARTIAL_SUFFIX))


def test_manifest_replay(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["line-run", "--density", "50", "--xi", "0.41", "--out", str(a)]) == 0
    assert cli.main(["line-run", "--config", str(a / "manifest.json"), "--out", str(b)]) == 0
    assert read_all(a) == read_all(b)


def test_interrupted_run_leaves_partial_files(tmp_path, monkeypatch):
    real = exp_mod.fate_map
    calls = []

    def flaky(*args, **kwargs):
        calls.append(1)
        if len(calls) == 2:
            raise IntegrationStalled(State(0, 0, 0, 0), traj_id=(3, 4))
        return real(*args, **kwargs)

    monkeypatch.setattr(exp_mod, "fate_map", flaky)
    out = tmp_path / "run"
    code = cli.main(["sweep-slice", "--grid", "8,8", "--xi-grid", "0.2,0.4", "--out", str(out)])
    assert code == 1
    names = {p.name for p in out.iterdir()}
    assert "manifest.json" not in names
    assert names == {"fatemap_xi0.2000.csv" + PARTIAL_SUFFIX}


def test_fatemap_csv_layout(tmp_path):
    assert cli.main(["fate-map", "--grid", "8,6", "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "fatemap_xi0.3265.csv").read_text().splitlines()
    assert lines[0] == "iy,ipy,y,py,fate"
    assert len(lines) == 1 + 8 * 6
    assert {ln.rsplit(",", 1)[1] for ln in lines[1:]} <= {"TOP", "BOTTOM", "RECROSS", "TIMEOUT", "INACCESSIBLE"}


def test_entry_point_runs(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "vridyn.cli", "pes-info", "--out", str(tmp_path)],
        capture_output=True,
        text=True,
        check=True,
    )
    info = json.loads(proc.stdout)
    assert info["vri"]["expected_x"] == 0.3265
    assert abs(info["coefficients"]["A"] - 1.4254534380075796) < 1e-12
