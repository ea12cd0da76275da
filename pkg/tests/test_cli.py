import json

import pytest

from agmarket.cli import main
from agmarket.kernel import AgentId
from agmarket.messaging import Performative, TraceEvent
from agmarket.model import baseline_model

BASELINE = "paper-baseline"


def run_cli(*argv):
    return main(list(argv))


def write_json(tmp_path, name, doc):
    path = tmp_path / name
    path.write_text(json.dumps(doc), encoding="utf-8")
    return str(path)


def minimal_request(request_id="REQ-1"):
    return {
        "request_id": request_id,
        "customer": "c1",
        "origin": "A",
        "destination": "C",
        "constraints": {"earliest_departure": 0, "latest_arrival": 140, "cargo_size": 5, "min_insurance": 0},
        "criteria": {"cost": 0.5, "time": 0.3, "insurance": 0.2},
    }


def baseline_like_scenario(script):
    return {
        "name": "custom",
        "seed": 0,
        "limits": {"max_ticks": 200, "max_legs": 3},
        "broker": {"name": "broker"},
        "providers": [
            {
                "name": "p1",
                "legs": [
                    {"leg_id": "l1", "provider": "p1", "origin": "A", "destination": "B",
                     "depart": 10, "arrive": 40, "cost": "40.00", "insurance": 2, "capacity": 20},
                    {"leg_id": "l3", "provider": "p1", "origin": "B", "destination": "C",
                     "depart": 50, "arrive": 90, "cost": "45.00", "insurance": 3, "capacity": 15},
                ],
            }
        ],
        "customers": [{"name": "c1", "script": script}],
    }


# -- run ------------------------------------------------------------------------


def test_run_baseline_succeeds_and_prints_the_full_report(tmp_path, capsys):
    trace = tmp_path / "trace.jsonl"
    assert run_cli("run", "--scenario", BASELINE, "--trace", str(trace)) == 0
    out = capsys.readouterr().out
    assert "scenario paper-baseline: quiescent after" in out
    assert "REQ-1/0: ok (reservation confirmed)" in out
    assert "conformance violations: 0" in out
    assert "participants: c1 | broker | p1 | p2" in out
    lines = trace.read_text().strip().splitlines()
    assert [json.loads(l)["seq"] for l in lines] == list(range(len(lines)))


def test_run_accepts_a_scenario_path(tmp_path):
    doc = baseline_like_scenario(
        [
            {"action": "request", "request": minimal_request()},
            {"action": "await_proposals"},
            {"action": "select", "itinerary": "best"},
            {"action": "await_result"},
        ]
    )
    path = write_json(tmp_path, "custom.json", doc)
    assert run_cli("run", "--scenario", path) == 0


def test_run_traces_are_byte_identical_across_invocations(tmp_path):
    first = tmp_path / "a.jsonl"
    second = tmp_path / "b.jsonl"
    assert run_cli("run", "--scenario", BASELINE, "--trace", str(first)) == 0
    assert run_cli("run", "--scenario", BASELINE, "--trace", str(second)) == 0
    assert first.read_bytes() == second.read_bytes()


def test_run_exhausted_budget_exits_3(capsys):
    assert run_cli("run", "--scenario", BASELINE, "--max-ticks", "2") == 3
    assert "budget exhausted" in capsys.readouterr().out


def test_run_probe_scenario_exits_4_with_one_violation(capsys):
    assert run_cli("run", "--scenario", "probe") == 4
    out = capsys.readouterr().out
    assert "conformance violations: 1" in out
    assert "c1 -> p1 (no acquaintance arc Customer to Provider)" in out


def test_run_residual_conversation_exits_5(tmp_path, capsys):
    doc = baseline_like_scenario(
        [{"action": "request", "request": minimal_request()}, {"action": "await_proposals"}]
    )
    path = write_json(tmp_path, "residual.json", doc)
    assert run_cli("run", "--scenario", path) == 5
    assert "REQ-1/0: incomplete (ended during negotiation)" in capsys.readouterr().out


def test_run_unknown_scenario_exits_2(capsys):
    assert run_cli("run", "--scenario", "/does/not/exist.json") == 2
    assert "error:" in capsys.readouterr().err


def test_run_invalid_json_exits_2(tmp_path, capsys):
    path = tmp_path / "broken.json"
    path.write_text("{not json", encoding="utf-8")
    assert run_cli("run", "--scenario", str(path)) == 2
    assert "error:" in capsys.readouterr().err


def test_run_unwritable_trace_path_exits_2(tmp_path, capsys):
    target = tmp_path / "missing-dir" / "trace.jsonl"
    assert run_cli("run", "--scenario", BASELINE, "--trace", str(target)) == 2
    assert "cannot write trace" in capsys.readouterr().err


def test_run_json_mode_matches_the_snapshot_file(tmp_path, capsys):
    snapshot = tmp_path / "snap.json"
    assert run_cli("run", "--scenario", BASELINE, "--snapshot", str(snapshot), "--json") == 0
    printed = json.loads(capsys.readouterr().out)
    stored = json.loads(snapshot.read_text())
    assert printed == stored
    assert printed["scenario"] == "paper-baseline"
    assert printed["quiescent"] is True
    assert printed["violations"] == []


def test_run_seed_override_lands_in_the_snapshot(capsys):
    assert run_cli("run", "--scenario", BASELINE, "--seed", "9", "--json") == 0
    assert json.loads(capsys.readouterr().out)["seed"] == 9


# -- validate ---------------------------------------------------------------------


def test_validate_baseline_model_is_valid(capsys):
    assert run_cli("validate", "--scenario", BASELINE) == 0
    out = capsys.readouterr().out
    assert "model: 3 actor(s), 8 dependency(ies), 5 capacity(ies)" in out
    assert "valid" in out


def test_validate_reports_exactly_the_uncovered_dependency(tmp_path, capsys):
    model = baseline_model().to_dict()
    model["capacities"] = [c for c in model["capacities"] if c["name"] != "Get Customer Requirements"]
    path = write_json(tmp_path, "trimmed.json", {"name": "trimmed", "model": model})
    assert run_cli("validate", "--scenario", path) == 4
    out = capsys.readouterr().out
    problems = [l.strip() for l in out.splitlines() if l.strip().startswith("problem:")]
    assert problems == ["problem: dependency 'Customer Requirements' has no covering capacity"]


def test_validate_unknown_actor_reference_exits_2(tmp_path, capsys):
    model = baseline_model().to_dict()
    model["dependencies"][0]["dependee"] = "Brokr"
    path = write_json(tmp_path, "typo.json", {"name": "typo", "model": model})
    assert run_cli("validate", "--scenario", path) == 2
    assert "Brokr" in capsys.readouterr().err


def test_validate_unreadable_scenario_exits_2(capsys):
    assert run_cli("validate", "--scenario", "/does/not/exist.json") == 2
    assert "error:" in capsys.readouterr().err


# -- diagram ------------------------------------------------------------------------


def test_diagram_replays_the_run_output(tmp_path, capsys):
    trace = tmp_path / "trace.jsonl"
    run_cli("run", "--scenario", BASELINE, "--trace", str(trace))
    run_output = capsys.readouterr().out
    assert run_cli("diagram", "--trace", str(trace)) == 0
    diagram = capsys.readouterr().out
    assert diagram.startswith("participants: c1 | broker | p1 | p2\n")
    assert diagram in run_output


def test_diagram_conversation_filter_drops_other_traffic(tmp_path, capsys):
    trace = tmp_path / "trace.jsonl"
    run_cli("run", "--scenario", "probe", "--trace", str(trace))
    capsys.readouterr()
    assert run_cli("diagram", "--trace", str(trace), "--conversation", "REQ-1/0") == 0
    out = capsys.readouterr().out
    rows = [l for l in out.splitlines() if " : " in l]
    assert rows
    assert all("(REQ-1/0)" in row for row in rows)
    assert "probe/p1/0" not in out


def test_diagram_missing_file_exits_2(capsys):
    assert run_cli("diagram", "--trace", "/does/not/exist.jsonl") == 2
    assert "cannot read trace" in capsys.readouterr().err


def test_diagram_rejects_a_gapped_trace(tmp_path, capsys):
    def event(seq):
        return TraceEvent(
            seq=seq,
            tick=0,
            conversation_id="REQ-1/0",
            performative=Performative.INFORM,
            sender=AgentId("a", 0),
            receiver=AgentId("b", 1),
            content_tag="selection",
            content_summary="x",
        )

    path = tmp_path / "gapped.jsonl"
    path.write_text(event(0).to_json() + "\n" + event(2).to_json() + "\n", encoding="utf-8")
    assert run_cli("diagram", "--trace", str(path)) == 2
    assert "error:" in capsys.readouterr().err


def test_serve_rejects_a_missing_console_directory(tmp_path, capsys):
    code = run_cli("serve", "--scenario", "paper-baseline", "--console", str(tmp_path / "nope"))
    assert code == 2
    assert "console directory" in capsys.readouterr().err
