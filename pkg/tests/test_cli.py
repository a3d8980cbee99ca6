import json
import xml.etree.ElementTree as ET

import pytest
from click.testing import CliRunner

from swapsched.cli import main
from swapsched.instance import check_feasible, load_instance, save_instance
from swapsched.report import schedule_from_csv, segments
from helpers import fig8_instance


@pytest.fixture
def runner():
    return CliRunner()


def test_generate(runner, tmp_path):
    out = tmp_path / "i.json"
    args = ["generate", "--B", "100", "--N", "50", "--gamma", "13", "--profile", "base",
            "--seed", "1", "-o", str(out)]
    assert runner.invoke(main, args).exit_code == 0
    inst = load_instance(out.read_text())
    assert (inst.num_batteries, inst.num_ports, inst.gamma) == (100, 50, 13)
    first = out.read_text()
    runner.invoke(main, args)
    assert out.read_text() == first
    assert runner.invoke(main, ["generate", "--N", "5", "--gamma", "1"]).exit_code == 2
    # demand that cannot fit the ports
    assert runner.invoke(main, ["generate", "--B", "30", "--N", "1", "--gamma", "1"]).exit_code == 2


def test_solve_outputs(runner, tmp_path):
    inst_path = tmp_path / "i.json"
    runner.invoke(main, ["generate", "--B", "12", "--N", "6", "--gamma", "2", "--seed", "4",
                         "-o", str(inst_path)])
    inst = load_instance(inst_path.read_text())
    files = {k: tmp_path / f"{k}" for k in ("trace", "schedule", "gantt")}
    r = runner.invoke(main, ["solve", str(inst_path), "--variation", "13", "--iterations", "30",
                             "--trace", str(files["trace"]), "--schedule", str(files["schedule"]),
                             "--gantt", str(files["gantt"])])
    assert r.exit_code == 0, r.output
    doc = json.loads(r.output)
    assert {"gap", "h_upper", "h_lower", "termination", "variation"} <= set(doc)
    assert doc["variation"] == 13 and doc["termination"] == "iterations"
    assert files["trace"].read_text().startswith("elapsed_s,iter,h_upper,h_lower,source")
    sched = schedule_from_csv(inst, files["schedule"].read_text())
    assert check_feasible(inst, sched).feasible
    root = ET.fromstring(files["gantt"].read_text())
    rects = [e for e in root.iter() if "segment" in e.get("class", "")]
    assert len(rects) == len(segments(inst, sched.x))


def test_solve_tiny_reaches_gap_or_stops(runner, tmp_path):
    p = tmp_path / "tiny.json"
    p.write_text(save_instance(fig8_instance(4)))
    r = runner.invoke(main, ["solve", str(p), "--variation", "2", "--budget", "20"])
    assert r.exit_code == 0
    doc = json.loads(r.output)
    assert doc["gap"] <= 1e-3 or doc["termination"] in ("budget", "iterations")


def test_solve_exit_codes(runner, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"B":2,"N":1,"T":1,"L":1,"window_end":[1],"battery_window":[1,1],'
                   '"p":[1,1],"c":[1],"alpha":1,"gamma":1}')
    assert runner.invoke(main, ["solve", str(bad), "--iterations", "3"]).exit_code == 3
    # gamma = 0 and two one-hour batteries on one port over two periods: no schedule exists
    none = tmp_path / "none.json"
    none.write_text('{"B":2,"N":1,"T":2,"L":1,"window_end":[2],"battery_window":[1,1],'
                    '"p":[1,1],"c":[1,1],"alpha":1,"gamma":0}')
    assert runner.invoke(main, ["solve", str(none), "--iterations", "3"]).exit_code == 4
    assert runner.invoke(main, ["solve", str(none), "--variation", "17"]).exit_code == 2
    garbled = tmp_path / "g.json"
    garbled.write_text("{")
    assert runner.invoke(main, ["solve", str(garbled)]).exit_code == 2


def test_exact(runner, tmp_path):
    p = tmp_path / "f.json"
    p.write_text(save_instance(fig8_instance(4)))
    r = runner.invoke(main, ["exact", str(p), "--backend", "highs", "--schedule",
                             str(tmp_path / "s.csv")])
    assert r.exit_code == 0
    doc = json.loads(r.output)
    assert doc["status"] == "optimal" and doc["gap"] == 0
    assert set(doc) == {"status", "z_upper", "z_lower", "time_s", "gap"}
    big = tmp_path / "big.json"
    runner.invoke(main, ["generate", "--B", "100", "--N", "50", "--gamma", "13", "-o", str(big)])
    r = runner.invoke(main, ["exact", str(big)])
    assert r.exit_code == 2 and "backend" in r.output


def test_sweep(runner, tmp_path):
    p = tmp_path / "i.json"
    runner.invoke(main, ["generate", "--B", "12", "--N", "6", "--gamma", "2", "--seed", "2",
                         "-o", str(p)])
    assert runner.invoke(main, ["sweep", str(p)]).exit_code == 2
    r = runner.invoke(main, ["sweep", str(p), "--gammas", "1,2", "--ports", "5,6",
                             "--iterations", "4", "--variation", "2"])
    assert r.exit_code == 0
    lines = r.output.strip().splitlines()
    assert len(lines) == 1 + 4
    assert lines[0].startswith("gamma,N,plan,electricity_cost,switch_count")
    r = runner.invoke(main, ["sweep", str(p), "--ports", "1", "--iterations", "2"])
    assert r.exit_code == 0 and "infeasible" in r.output


def test_grid(runner, tmp_path):
    p = tmp_path / "i.json"
    runner.invoke(main, ["generate", "--B", "8", "--N", "4", "--gamma", "2", "-o", str(p)])
    r = runner.invoke(main, ["grid", str(p), "--variations", "2,13", "--iterations", "5"])
    assert r.exit_code == 0
    assert len(r.output.strip().splitlines()) == 3
    assert runner.invoke(main, ["grid", str(p), "--variations", "0"]).exit_code == 2


def test_fit(runner, tmp_path):
    out = tmp_path / "fit.json"
    r = runner.invoke(main, ["fit", "--seeds", "500", "--B", "8", "--N", "4", "--iterations", "15",
                             "-o", str(out)])
    assert r.exit_code == 0, r.output
    doc = json.loads(out.read_text())
    assert set(doc["windows"]) == {"1", "2", "3"}
    assert doc["provenance"]["seeds"] == [500]
