import json
import math
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from principal_config import cli, foliation
from principal_config.cli import (load_config_file, main,
                                  parse_quadric_spec, parse_surface_spec)
from principal_config.geometry import MAXIMAL, MINIMAL
from principal_config.report import (CSV_COLUMNS, ReportDocument, RunConfig,
                                     trajectories_csv)
from principal_config.svg_render import render_svg


def run_cli(args):
    return main(list(args))


def test_parse_surface_spec():
    s = parse_surface_spec("ellipsoid:3,2,1")
    assert s.params == {"a": 3.0, "b": 2.0, "c": 1.0}
    t = parse_surface_spec("torus:2,1")
    assert t.params == {"R": 2.0, "r": 1.0}


def test_parse_quadric_spec_with_fractions():
    q = parse_quadric_spec("diag:1/9,1/4,1")
    assert q.matrix[0, 0] == pytest.approx(1.0 / 9.0)
    q2 = parse_quadric_spec("sym:1,1,1,0,0,0")
    assert np.allclose(q2.matrix, np.eye(3))
    with pytest.raises(Exception):
        parse_quadric_spec("diag:1,2")


def test_config_file_parsing(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# comment\ngrid = 20\nno-separatrices = true\n")
    opts = load_config_file(cfg)
    assert opts == {"grid": "20", "no_separatrices": "true"}


def test_report_document_roundtrip():
    doc = ReportDocument(RunConfig("umbilics", "torus:2,1",
                                   {"grid": 24}, ".", 7),
                         results={"umbilics": [], "x": 1.5},
                         work={"steps": 10})
    text = doc.to_json()
    parsed = ReportDocument.parse(text)
    assert parsed["schema_version"] == 1
    assert parsed["config"]["seed"] == 7
    assert json.dumps(parsed, sort_keys=True, indent=2) + "\n" == text


def test_csv_columns(torus):
    traj = foliation.trace(torus, (0.3, 0.9), MAXIMAL,
                           foliation.TraceOptions())
    text = trajectories_csv([traj])
    header = text.splitlines()[0].split(",")
    assert header == CSV_COLUMNS
    row = text.splitlines()[1].split(",")
    assert row[-1] == MAXIMAL
    assert len(row) == 5


def test_render_svg_deterministic_and_structured(torus):
    traj = foliation.trace(torus, (0.3, 0.9), MAXIMAL,
                           foliation.TraceOptions())
    svg1 = render_svg([traj], view="+y")
    svg2 = render_svg([traj], view="+y")
    assert svg1 == svg2
    assert svg1.startswith("<?xml")
    assert "<polyline" in svg1
    with pytest.raises(ValueError):
        render_svg([], view="+y")
    with pytest.raises(ValueError):
        render_svg([traj], view="sideways")


def test_cli_strata_and_exit_codes(tmp_path, capsys):
    out = tmp_path / "o1"
    assert run_cli(["strata", "--quadric", "diag:1/9,1/4,1",
                    "--out", str(out)]) == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["results"]["stratum"]["tag"] == "E3_triaxial"

    assert run_cli(["strata", "--quadric", "bogus",
                    "--out", str(out)]) == 2
    assert run_cli(["umbilics", "--surface", "nosuch:1",
                    "--out", str(out)]) == 2


def test_cli_umbilics_torus_empty(tmp_path):
    out = tmp_path / "o2"
    assert run_cli(["umbilics", "--surface", "torus:2,1", "--grid", "20",
                    "--no-separatrices", "--out", str(out)]) == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["results"]["umbilics"] == []
    assert rep["results"]["index_sum"]["sum"] == 0


def test_cli_umbilics_sphere_marker(tmp_path):
    out = tmp_path / "o3"
    assert run_cli(["umbilics", "--surface", "sphere:1", "--grid", "20",
                    "--out", str(out)]) == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["results"]["all_umbilic"] is True


def test_cli_trace_writes_csv_and_svg(tmp_path):
    out = tmp_path / "o4"
    assert run_cli(["trace", "--surface", "torus:2,1", "--start", "0.3,0.9",
                    "--foliation", "maximal", "--svg",
                    "--out", str(out)]) == 0
    assert (out / "trajectories.csv").exists()
    assert (out / "scene.svg").exists()
    rep = json.loads((out / "report.json").read_text())
    assert rep["results"]["traces"][0]["termination"] == "Closed"


def test_cli_rerun_byte_identical(tmp_path):
    outs = []
    for name in ("r1", "r2"):
        out = tmp_path / name
        assert run_cli(["umbilics", "--surface", "ellipsoid:3,2,1",
                        "--grid", "24", "--no-separatrices",
                        "--out", str(out), "--seed", "5"]) == 0
        outs.append((out / "report.json").read_bytes())
    assert outs[0] == outs[1]


def test_cli_config_file_merges(tmp_path):
    cfg = tmp_path / "a.cfg"
    cfg.write_text("grid = 20\nno_separatrices = true\n")
    out = tmp_path / "o5"
    assert run_cli(["umbilics", "--surface", "torus:2,1",
                    "--config", str(cfg), "--out", str(out)]) == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["config"]["options"]["grid"] == 20


def test_cli_entrypoint_subprocess():
    r = subprocess.run([sys.executable, "-m", "principal_config.cli",
                        "strata", "--quadric", "diag:1,1,1",
                        "--out", "/tmp/pc-entry-test"],
                       capture_output=True, text=True, timeout=120)
    assert r.returncode == 0
    assert "Sphere" in r.stdout
