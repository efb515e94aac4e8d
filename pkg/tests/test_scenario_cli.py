import csv
import json
import subprocess
import sys

import pytest

from legatosim import cli
from legatosim.errors import ScenarioError
from legatosim.scenario import dumps, from_dict, load_scenario, loads, resolve_path, scenario_hash, to_dict

BUNDLED = ["smart-mirror", "calibration", "undervolt-mix"]


def strict_rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.reader(fh, strict=True))


@pytest.mark.parametrize("name", BUNDLED)
def test_bundled_scenarios_load(name):
    sc = load_scenario(name)
    assert sc.tasks and sc.nodes


def test_smart_mirror_contents():
    sc = load_scenario("smart-mirror")
    gpu, fpga = sc.node_classes["gpu-workstation"], sc.node_classes["fpga-soc"]
    assert gpu.nominal_power == 400.0 and fpga.nominal_power == 50.0
    assert sc.profiles.lookup("vision-frame", "gpu-workstation").throughput == 21.0
    assert sc.profiles.lookup("vision-frame", "fpga-soc").throughput == 10.0


@pytest.mark.parametrize("name", BUNDLED)
def test_round_trip(name):
    sc = load_scenario(name)
    again = loads(dumps(sc))
    assert again == sc
    assert dumps(again) == dumps(sc)
    assert scenario_hash(again) == scenario_hash(sc)


def test_defaults_are_echoed():
    sc = from_dict(
        {
            "node_classes": [{"name": "c", "capacity": {"cores": 1, "memory": 1}, "nominal_power": 1.0}],
            "nodes": [{"class": "c"}],
            "profiles": [{"kind": "k", "node_class": "c", "throughput": 1.0, "active_power": 1.0}],
            "tasks": [{"kind": "k", "work": 1}],
        }
    )
    d = to_dict(sc)
    assert d["scheduler"] == {"reschedule_interval": 30.0, "hysteresis": 0.1, "tie_break": "lexicographic-node-id"}
    assert d["simulation"] == {"idle_fraction": 0.1, "fatal_fraction": 1.0, "migration_overhead": 1.0, "horizon": None}
    assert d["checkpoint"] is None
    assert d["tasks"][0]["energy_weight"] == 0.5 and d["tasks"][0]["footprint"] == 1.0
    assert d["node_classes"][0]["storage_bw"] == 3277.0


def _base():
    return json.loads(resolve_path("smart-mirror").read_text())


def test_unknown_platform_is_named():
    doc = _base()
    doc["node_classes"][1]["platform"] = "VC999"
    with pytest.raises(ScenarioError, match="VC999"):
        from_dict(doc)


@pytest.mark.parametrize(
    "mutate,needle",
    [
        (lambda d: d["tasks"][0].update(kind="nope"), "nope"),
        (lambda d: d["nodes"][0].update({"class": "ghost"}), "ghost"),
        (lambda d: d["tasks"][0].update(bogus=1), "bogus"),
        (lambda d: d["tasks"][0].update(arrival=-1.0), "tasks\\[0\\]"),
        (lambda d: d.update(checkpoint={"mode": "sometimes"}), "sometimes"),
    ],
)
def test_semantic_errors_name_the_reference(mutate, needle):
    doc = _base()
    mutate(doc)
    with pytest.raises(ScenarioError, match=needle):
        from_dict(doc)


def test_parse_error_reports_line_and_column():
    with pytest.raises(ScenarioError, match=r":3:5:"):
        loads('{\n  "name": "x",\n    oops\n}', "bad.json")


def test_task_template_expansion():
    sc = load_scenario("calibration")
    assert [t.id for t in sc.tasks] == ["heat2d-0", "heat2d-1", "heat2d-2", "heat2d-3"]


def test_empty_task_list_runs(tmp_path):
    doc = _base()
    doc["tasks"] = []
    path = tmp_path / "empty.json"
    path.write_text(json.dumps(doc))
    assert cli.main(["run", str(path), "--out", str(tmp_path / "o")]) == 0
    [header, row] = strict_rows(tmp_path / "o" / "summary.csv")
    assert float(row[header.index("makespan")]) == 0.0


def test_run_writes_three_files(tmp_path):
    out = tmp_path / "r"
    assert cli.main(["run", "calibration", "--seed", "1", "--out", str(out)]) == 0
    assert sorted(p.name for p in out.iterdir()) == ["scenario.resolved.json", "summary.csv", "trace.csv"]
    rows = strict_rows(out / "summary.csv")
    assert rows[0] == list(cli.SUMMARY_HEADER) and len(rows) == 2
    trace = strict_rows(out / "trace.csv")
    assert trace[0] == ["time", "event", "task", "node", "detail"]
    assert all(len(r) == 5 for r in trace)
    assert loads((out / "scenario.resolved.json").read_text()) == load_scenario("calibration")


def test_same_seed_same_trace_bytes(tmp_path):
    for d in ("a", "b"):
        assert cli.main(["run", "undervolt-mix", "--seed", "7", "--out", str(tmp_path / d)]) == 0
    assert (tmp_path / "a" / "trace.csv").read_bytes() == (tmp_path / "b" / "trace.csv").read_bytes()


@pytest.mark.parametrize("jobs", ["1", "3"])
def test_sweep_counts_and_order(tmp_path, jobs):
    out = tmp_path / "s"
    rc = cli.main(["sweep", "smart-mirror", "--seeds", "1..10", "--energy-weight", "0..1:0.5", "--out", str(out), "--jobs", jobs])
    assert rc == 0
    header, *rows = strict_rows(out / "summary.csv")
    assert len(rows) == 30
    keys = [(int(r[header.index("seed")]), float(r[header.index("energy_weight")])) for r in rows]
    assert keys == sorted(keys)
    assert {w for _, w in keys} == {0.0, 0.5, 1.0}


def test_sweep_parallel_matches_serial(tmp_path):
    args = ["sweep", "undervolt-mix", "--seeds", "0..3", "--energy-weight", "0,1"]
    cli.main([*args, "--out", str(tmp_path / "p"), "--jobs", "2"])
    cli.main([*args, "--out", str(tmp_path / "q")])
    assert (tmp_path / "p" / "summary.csv").read_bytes() == (tmp_path / "q" / "summary.csv").read_bytes()


def test_unwritable_out_exits_2(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert cli.main(["run", "calibration", "--out", str(blocker / "sub")]) == 2


def test_validation_failure_exits_1(tmp_path, capsys):
    doc = _base()
    doc["node_classes"][1]["platform"] = "VC999"
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(doc))
    assert cli.main(["run", str(path), "--out", str(tmp_path / "o")]) == 1
    assert "VC999" in capsys.readouterr().err
    assert cli.main(["validate", str(tmp_path / "missing.json")]) == 1


def test_validate_print_echoes_resolved(capsys):
    assert cli.main(["validate", "smart-mirror", "--print"]) == 0
    assert loads(capsys.readouterr().out) == load_scenario("smart-mirror")


@pytest.mark.parametrize(
    "spec,expected",
    [("0..1:0.5", [0.0, 0.5, 1.0]), ("0..1:0.25", [0.0, 0.25, 0.5, 0.75, 1.0]), ("0.3", [0.3]), ("0,1", [0.0, 1.0])],
)
def test_parse_weights(spec, expected):
    assert cli.parse_weights(spec) == expected


def test_parse_seeds():
    assert cli.parse_seeds("1..10") == list(range(1, 11))
    assert cli.parse_seeds("4,2") == [4, 2]
    with pytest.raises(Exception):
        cli.parse_seeds("5..1")
    with pytest.raises(Exception):
        cli.parse_weights("0..2:1")


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "legatosim", "validate", "calibration"], capture_output=True, text=True, check=False
    )
    assert proc.returncode == 0 and proc.stdout.startswith("ok: calibration")
