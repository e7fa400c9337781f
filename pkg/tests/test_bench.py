import json

import numpy as np
import pytest

from logicsmooth import bench
from logicsmooth import expr as ex
from logicsmooth import quadrotor as qd
from logicsmooth.logic_ast import le
from logicsmooth.nlp import BaseOcp, assemble_smooth_ocp, solve


@pytest.fixture(scope="module")
def small_p1():
    cfg = bench.TrialConfig(n_trials=4, seed=3)
    return cfg, bench.run_trials(cfg)


def test_config_validation():
    with pytest.raises(ValueError):
        bench.TrialConfig(n_trials=0)
    with pytest.raises(ValueError):
        bench.TrialConfig(method="sos")


def test_single_analytic_trial_is_optimal():
    x0 = ex.var(0)
    base = BaseOcp(vars=ex.VarSpace(1), cost=x0 ** 2, logic=le(1 - x0))
    nlp = assemble_smooth_ocp(base)
    rep = solve(nlp, [5.0, 1.0])
    res = bench.TrialResult(0, rep.status, rep.cost, rep.wall_time, rep.feasible, True, rep.point)
    report = bench.summarize(bench.TrialConfig(n_trials=1), [res], nlp)
    assert report.counts() == {"optimal": 1, "suboptimal": 0, "infeasible": 0}
    assert abs(report.best_trajectory[0] - 1) <= 1e-6


def test_partition_and_determinism(small_p1):
    cfg, report = small_p1
    assert report.optimal + report.suboptimal + report.infeasible == cfg.n_trials
    assert len(report.trials) == cfg.n_trials
    again = bench.run_trials(cfg)
    assert [t.status for t in again.trials] == [t.status for t in report.trials]
    assert [t.cost for t in again.trials] == [t.cost for t in report.trials]
    for a, b in zip(again.trials, report.trials):
        assert np.array_equal(a.point, b.point)


def test_feasible_trials_pass_oracle(small_p1):
    _, report = small_p1
    for t in report.trials:
        if t.feasible:
            assert t.oracle
            xs, _ = qd.QuadParams().layout().split(t.point)
            assert qd.problem1_holds(xs)


def test_absent_marker_for_empty_feasible_set():
    cfg = bench.TrialConfig(n_trials=2)
    dead = [bench.TrialResult(i, "infeasible", 5.0, 0.01, False, False, np.zeros(1)) for i in range(2)]
    report = bench.summarize(cfg, dead)
    assert report.avg_cost is None and report.best_trajectory is None
    table = bench.emit_table(report)
    assert bench.ABSENT in table.splitlines()[2]
    assert json.loads(bench.emit_table(report, "json"))[0]["avg_cost"] is None


def test_table_layout(small_p1):
    _, report = small_p1
    header = bench.emit_table(report).splitlines()[0].split("  ")
    cols = [c.strip() for c in header if c.strip()]
    assert cols == ["Method", "Opt. #", "Sub-Opt. #", "Inf. #", "Avg. Cost", "Avg. Time",
                    "Avg. Time (Feas.)", "Max Time"]
    with pytest.raises(ValueError):
        bench.emit_table(report, "xml")


def test_trajectory_csv_round_trip(small_p1, tmp_path):
    _, report = small_p1
    if report.best_trajectory is None:
        pytest.skip("no feasible trial in the small batch")
    table = bench.trajectory_from_report(report)
    assert bench.parse_trajectory(bench.format_trajectory(table)) == table
    path = bench.emit_trajectory(report, tmp_path / "best.csv")
    assert bench.parse_trajectory(path.read_text()) == table
    with pytest.raises(OSError, match="missing"):
        bench.emit_trajectory(report, tmp_path / "missing" / "x.csv")


def test_trajectory_parse_rejects_bad_header():
    with pytest.raises(ValueError):
        bench.parse_trajectory("a,b\n1,2\n")
