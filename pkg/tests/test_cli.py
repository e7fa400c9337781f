import json
from pathlib import Path

import numpy as np
import pytest

from logicsmooth import cli
from logicsmooth import quadrotor as qd

GOLDEN = Path(__file__).parent / "golden"


@pytest.fixture(autouse=True)
def fixed_width(monkeypatch):
    monkeypatch.setenv("COLUMNS", "100")
    monkeypatch.delenv(cli.CONFIG_ENV, raising=False)


@pytest.mark.parametrize("command", ["", "transform", "solve", "bench", "demo", "check"])
def test_help_matches_golden(command, capsys):
    argv = [command, "--help"] if command else ["--help"]
    assert cli.main(argv) == 0
    name = f"help_{command}.txt" if command else "help.txt"
    assert capsys.readouterr().out == (GOLDEN / name).read_text()


def test_usage_errors(capsys, tmp_path):
    assert cli.main([]) == cli.EXIT_USAGE
    assert cli.main(["solve", "nope"]) == cli.EXIT_USAGE
    assert cli.main(["bench", "p3"]) == cli.EXIT_USAGE
    bad = tmp_path / "bad.lc"
    bad.write_text("horizon -1\n")
    assert cli.main(["transform", str(bad)]) == cli.EXIT_USAGE
    err = capsys.readouterr().err
    assert "bad.lc" in err and "missing section" in err


def test_config_file(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"trials": "ten"}))
    assert cli.main(["--config", str(cfg), "transform", "p1"]) == cli.EXIT_USAGE
    cfg.write_text(json.dumps({"bogus": 1}))
    assert cli.main(["--config", str(cfg), "transform", "p1"]) == cli.EXIT_USAGE
    cfg.write_text(json.dumps({"sharing": "shared"}))
    assert cli.main(["--config", str(cfg), "transform", "p1", "--dump", "smoothed"]) == 0
    assert "3 weights" in capsys.readouterr().out
    assert cli.main(["--config", str(cfg), "transform", "p1", "--dump", "smoothed",
                     "--sharing", "per_clause"]) == 0
    assert "15 weights" in capsys.readouterr().out


def test_transform_problem1(capsys):
    assert cli.main(["transform", str(cli.dsl.bundled_path("problem1")), "--dump", "cnf"]) == 0
    out = capsys.readouterr().out
    assert "5 clause(s), arities [3, 3, 3, 3, 3]" in out


def test_check_point(tmp_path, capsys):
    prm = qd.QuadParams()
    us = np.full((prm.horizon, 2), prm.hover_thrust)
    z = qd.pack(prm, qd.rollout(prm, us), us)
    pt = tmp_path / "z.json"
    pt.write_text(json.dumps(z.tolist()))
    # hovering at the origin never enters the obstacle
    assert cli.main(["check", "p1", str(pt)]) == cli.EXIT_OK
    assert "logic holds: True" in capsys.readouterr().out
    # problem 2 requires reaching a target, which hovering does not
    assert cli.main(["check", "p2", str(pt)]) == cli.EXIT_INFEASIBLE
    pt.write_text("1 2 3")
    assert cli.main(["check", "p1", str(pt)]) == cli.EXIT_USAGE


def test_solve_writes_report(tmp_path):
    rep, traj = tmp_path / "r.json", tmp_path / "t.csv"
    code = cli.main(["solve", "p1", "--method", "bigm", "--report", str(rep),
                     "--trajectory", str(traj)])
    assert code in (cli.EXIT_OK, cli.EXIT_INFEASIBLE)
    data = json.loads(rep.read_text())
    assert data["status"] and len(data["point"]) > 0
    assert traj.read_text().startswith("k,x1")


def test_demo_writes_trajectory(tmp_path, capsys):
    code = cli.main(["demo", "p1", "--trials", "3", "--seed", "7", "--out-dir", str(tmp_path)])
    out = capsys.readouterr().out
    assert "Opt. #" in out
    if code == cli.EXIT_OK:
        assert (tmp_path / "p1_best.csv").exists()
    else:
        assert code == cli.EXIT_INFEASIBLE
