import json
import os

import pytest

from cqfdip.cli import main, parse_rate
from cqfdip.exceptions import ParseError
from cqfdip.report import (ReportError, Scenario, emit_report, load_scenario, paper_scale,
                           parse_scenario, run_experiment1, run_experiment2)
from cqfdip.scheduler import Schedule

SMALL = Scenario(per_access=5, horizon=3, ladder_mbps=(0, 400), load_levels=(0, 20))


def test_scenario_file(tmp_path):
    p = tmp_path / "sc.cfg"
    p.write_text("# desk run\ncore = desk8\nladder_mbps = 0, 50\nshaping = false\nhorizon=7\n")
    sc = load_scenario(p)
    assert sc.ladder_mbps == (0.0, 50.0) and sc.shaping is False and sc.horizon == 7
    with pytest.raises(ParseError, match="unknown scenario key"):
        parse_scenario("colour = blue\n")
    with pytest.raises(ParseError, match="boolean"):
        parse_scenario("shaping = maybe\n")
    with pytest.raises(FileNotFoundError):
        parse_scenario("topology = missing.topo\n")
    with pytest.raises(ValueError, match="ladder"):
        Scenario(ladder_mbps=())


def test_paper_scale_preset():
    sc = paper_scale()
    assert (sc.core, sc.n_access, sc.per_access) == ("atlanta15", 10, 200)
    assert sc.load_levels == (800, 1000, 1200, 1500, 1700, 1725, 1800)


def test_experiment1_rows_and_files(tmp_path):
    rep = run_experiment1(SMALL)
    assert len(rep.rows) == 4
    for rate in SMALL.ladder_mbps:
        row = rep.row("scheduled", rate)
        assert row["observed"]["jitter_us"] == 0
        assert row["lost"] == 0 and row["bound_violations"] == 0
    assert rep.row("scheduled", 0)["observed"] == rep.row("scheduled", 400)["observed"]
    assert rep.row("besteffort", 0)["observed"]["beyond_deadline"] == 0
    files = {p.name for p in emit_report(rep, tmp_path / "a")}
    assert {"exp1_stats.json", "exp1_cdf.csv", "exp1_schedule.json"} <= files
    assert "exp1_trace_besteffort_400.csv" in files
    emit_report(run_experiment1(SMALL), tmp_path / "b")
    for name in files:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_experiment2_rows(tmp_path):
    rep = run_experiment2(SMALL)
    assert [r["rejected"] for r in rep.rows if r["load"] == 0] == [0, 0, 0]
    emit_report(rep, tmp_path)
    lines = (tmp_path / "exp2_rejections.csv").read_text().splitlines()
    assert lines[0] == "load,joint,no_path_selection,no_shaping"
    assert len(lines) == 3
    with pytest.raises(ValueError, match="ascending"):
        run_experiment2(SMALL, [20, 0])


@pytest.mark.skipif(hasattr(os, "geteuid") and os.geteuid() == 0,
                    reason="root ignores directory permissions")
def test_unwritable_directory_is_named(tmp_path):
    ro = tmp_path / "ro"
    ro.mkdir()
    ro.chmod(0o500)
    with pytest.raises(ReportError, match=str(ro)):
        emit_report(run_experiment2(SMALL, [0]), ro)


def test_output_path_blocked_by_file(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(ReportError, match=str(blocker)):
        emit_report(run_experiment2(SMALL, [0]), blocker)


@pytest.mark.parametrize("text,bps", [("500k", 500_000), ("1.5M", 1_500_000), ("2000", 2000),
                                      ("1Gbps", 10**9)])
def test_parse_rate(text, bps):
    assert parse_rate(text) == bps


def test_cli_schedule_and_simulate(tmp_path, capsys):
    out = tmp_path / "o"
    assert main(["schedule", "--gen-flows", "5", "--rate", "500k", "--seed", "3",
                 "--out", str(out)]) == 0
    s = Schedule.from_json((out / "schedule.json").read_text())
    assert s.n_accepted == 20
    assert main(["simulate", "--gen-flows", "5", "--seed", "3", "--schedule",
                 str(out / "schedule.json"), "--interference-mbps", "300", "--horizon", "2",
                 "--out", str(out)]) == 0
    assert (out / "trace.csv").read_text().startswith("flow,seq,send_us,recv_us,delay_us,met\n")
    stats = json.loads((out / "stats.json").read_text())
    assert stats["aggregate"]["jitter_us"] >= 0 and stats["lost"] == 0
    assert main(["simulate", "--mode", "besteffort", "--gen-flows", "5", "--horizon", "2"]) == 0
    assert "besteffort" in capsys.readouterr().out


def test_cli_experiments(tmp_path, capsys):
    cfg = tmp_path / "sc.cfg"
    cfg.write_text("per_access = 5\nhorizon = 2\nladder_mbps = 0 200\nload_levels = 0 10\n")
    assert main(["exp1", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    assert main(["exp2", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    assert (tmp_path / "exp1_stats.json").exists() and (tmp_path / "exp2_stats.json").exists()
    assert "observed flow" in capsys.readouterr().out


def test_cli_validate(tmp_path, capsys):
    assert main(["validate", "--gen-core", "atlanta15", "--n-access", "3"]) == 0
    assert "ok:" in capsys.readouterr().out
    bad = tmp_path / "bad.topo"
    bad.write_text("node s source x\nnode r dip_router dip\nlink s r 1 1000\n")
    assert main(["validate", "--topology", str(bad)]) == 2
    assert "illegal role adjacency" in capsys.readouterr().err


def test_cli_errors_are_reported(capsys):
    assert main(["schedule", "--flows", "/nonexistent/flows.txt"]) == 2
    assert "error:" in capsys.readouterr().err
