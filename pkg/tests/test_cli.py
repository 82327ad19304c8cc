"""Tests for the command-line interface: subcommands, exit codes, config
merging, diagram sweeps, caching, and CSV/JSON/SVG emission."""

import json
import os
import subprocess

import pytest

from mhdstab.cli import (
    DiagramCell,
    SweepConfig,
    cells_from_csv,
    cells_to_csv,
    main,
    run_diagram,
)
from mhdstab.errors import ValidationError

GAMMA = repr(5.0 / 3.0)


def run_cli(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr().out
    return code, (json.loads(out) if out.strip() else None)


# ---------------------------------------------------------------------------
# basic subcommands and exit codes


def test_endstates_subcommand(capsys):
    code, out = run_cli(capsys, "endstates", "--gamma", GAMMA,
                        "--u1-plus", "0.6", "--h1", "3")
    assert code == 0
    assert out["u1_plus"] == pytest.approx(0.6)
    assert out["R"] == pytest.approx(1.0 / 0.6)


def test_classify_subcommand(capsys):
    code, out = run_cli(capsys, "classify", "--gamma", GAMMA,
                        "--u1-plus", "0.6", "--h1", "3")
    assert code == 0
    assert out["kind"] == "slow_lax_2"


def test_lop_eval_subcommand(capsys):
    code, out = run_cli(capsys, "lop", "eval", "--u1-plus", "0.6",
                        "--h1", "3", "--lam", "0.1", "--xi", "1.0")
    assert code == 0
    # the reference normalization point evaluates to exactly 1
    assert out["delta"][0] == pytest.approx(1.0, abs=1e-12)
    assert out["delta"][1] == pytest.approx(0.0, abs=1e-12)


def test_validation_error_exits_2(capsys):
    code, _ = run_cli(capsys, "endstates", "--u1-plus", "1.5")
    assert code == 2
    assert "error" in capsys.readouterr().err


def test_numerical_failure_exits_3(tmp_path, capsys):
    # zero viscosity makes every viscous cell fail; the sweep completes,
    # records the failures, and the command reports a numerical failure
    code = main(["diagram", "--mode", "viscous", "--u1-grid", "0.6",
                 "--h1-grid", "3", "--xi-grid", "0.1", "--mu", "0",
                 "--out", str(tmp_path)])
    capsys.readouterr()
    assert code == 3
    cells = cells_from_csv(tmp_path / "diagram.csv")
    assert len(cells) == 1
    assert cells[0].error != ""


def test_missing_config_file_exits_2(capsys):
    code, _ = run_cli(capsys, "endstates", "--config", "/nonexistent.json")
    assert code == 2


def test_config_file_merges_defaults(tmp_path, capsys):
    cfg = tmp_path / "defaults.json"
    cfg.write_text(json.dumps({"u1-plus": 0.7, "h1": 2.5}))
    code, out = run_cli(capsys, "endstates", "--config", str(cfg))
    assert code == 0
    assert out["u1_plus"] == pytest.approx(0.7)
    # explicit flags still win over config values
    code, out = run_cli(capsys, "endstates", "--config", str(cfg),
                        "--u1-plus", "0.8")
    assert code == 0
    assert out["u1_plus"] == pytest.approx(0.8)


def test_console_script_installed():
    out = subprocess.run(["mhdstab", "classify", "--u1-plus", "0.6",
                          "--h1", "3"], capture_output=True, text=True)
    assert out.returncode == 0
    assert json.loads(out.stdout)["kind"] == "slow_lax_2"


# ---------------------------------------------------------------------------
# CSV round trip


def test_csv_round_trip(tmp_path):
    cells = [
        DiagramCell(mode="inviscid", gamma=5 / 3, u1_plus=0.86, h1=4.0,
                    xi=None, winding=1, root=complex(2.009e-3, 0.0),
                    radius=None, radius_fit_converged=None, n_points=400,
                    run_time_s=0.125),
        DiagramCell(mode="viscous", gamma=5 / 3, u1_plus=0.2, h1=1.1,
                    xi=0.2, winding=1, root=complex(0.0137, 0.0),
                    radius=4.0, radius_fit_converged=True, n_points=141,
                    run_time_s=84.2),
        DiagramCell(mode="viscous", gamma=7 / 5, u1_plus=0.2, h1=16.0,
                    xi=0.1, winding=0, root=None, radius=8.0,
                    radius_fit_converged=True, n_points=251,
                    run_time_s=521.0, error=""),
    ]
    path = tmp_path / "cells.csv"
    cells_to_csv(cells, path)
    assert cells_from_csv(path) == sorted(
        cells, key=lambda c: (c.mode, c.gamma, c.u1_plus, c.h1))


# ---------------------------------------------------------------------------
# diagram sweeps


@pytest.fixture(scope="module")
def diagram_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("diagram")
    code = main(["diagram", "--mode", "inviscid", "--gamma", GAMMA,
                 "--u1-grid", "0.86,0.9", "--h1-grid", "1.5,4",
                 "--out", str(out)])
    assert code == 0
    return out


def test_diagram_stable_unstable_partition(diagram_dir):
    cells = cells_from_csv(diagram_dir / "diagram.csv")
    assert len(cells) == 4
    got = {(c.u1_plus, c.h1): c.winding for c in cells}
    # the critical field sits between 1.5 and 4 for both shock strengths
    assert got[(0.86, 1.5)] == 0 and got[(0.9, 1.5)] == 0
    assert got[(0.86, 4.0)] == 1 and got[(0.9, 4.0)] == 1
    for c in cells:
        assert (c.root is not None) == (c.winding >= 1)


def test_diagram_svg_markers(diagram_dir):
    svg = (diagram_dir / "diagram.svg").read_text()
    assert svg.count('data-cell="marker"') == 4
    assert svg.count('fill="red"') == 2           # unstable cells
    assert svg.count("<path d=") == 2             # stable plus signs
    assert "stroke-dasharray" in svg              # critical-curve overlay


def test_diagram_json_report(diagram_dir):
    rows = json.loads((diagram_dir / "diagram.json").read_text())
    assert len(rows) == 4
    for row in rows:
        assert set(row) == {
            "mode", "gamma", "u1_plus", "h1", "xi", "winding", "root_re",
            "root_im", "radius", "radius_fit_converged", "n_points",
            "run_time_s", "error",
        }
        assert int(row["winding"]) >= 0


def test_diagram_determinism_and_cache(diagram_dir, capsys):
    first = (diagram_dir / "diagram.csv").read_bytes()
    cache = diagram_dir / "cache"
    entries = sorted(os.listdir(cache))
    assert len(entries) == 4

    # warm rerun: byte-identical output
    code = main(["diagram", "--mode", "inviscid", "--gamma", GAMMA,
                 "--u1-grid", "0.86,0.9", "--h1-grid", "1.5,4",
                 "--out", str(diagram_dir)])
    capsys.readouterr()
    assert code == 0
    assert (diagram_dir / "diagram.csv").read_bytes() == first

    # invalidate one cell and re-run: the value is recomputed identically
    victim = cache / entries[0]
    before = json.loads(victim.read_text())
    victim.unlink()
    code = main(["diagram", "--mode", "inviscid", "--gamma", GAMMA,
                 "--u1-grid", "0.86,0.9", "--h1-grid", "1.5,4",
                 "--out", str(diagram_dir)])
    capsys.readouterr()
    assert code == 0
    after = json.loads(victim.read_text())
    before.pop("run_time_s")
    after.pop("run_time_s")
    assert after == before
    assert (diagram_dir / "diagram.csv").read_bytes() == first


def test_sweep_config_validation():
    with pytest.raises(ValidationError):
        SweepConfig(gamma=5 / 3, u1_grid=(), h1_grid=(0.5,))
    with pytest.raises(ValidationError):
        SweepConfig(gamma=5 / 3, u1_grid=(0.5,), h1_grid=(1.0,),
                    mode="viscous", xi_grid=())
    with pytest.raises(ValidationError):
        SweepConfig(gamma=5 / 3, u1_grid=(0.5,), h1_grid=(1.0,),
                    mode="bogus")


def test_run_diagram_records_cell_failures(tmp_path):
    # one good cell and one failing cell: the sweep completes
    sweep = SweepConfig(gamma=5 / 3, u1_grid=(0.6,), h1_grid=(0.9, 3.0),
                        mode="inviscid", out_dir=str(tmp_path), workers=1)
    cells = run_diagram(sweep)
    assert len(cells) == 2
    by_h1 = {c.h1: c for c in cells}
    assert by_h1[3.0].error == ""
    assert by_h1[0.9].error != ""   # overcompressive: no Lax structure
