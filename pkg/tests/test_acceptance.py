"""Acceptance gate: one test per headline guarantee, one verdict line each.

Each test exercises a shipped guarantee end to end at its stated tolerance
and prints a single [PASS]/[FAIL] line (visible with -s, or on failure).
Independent oracles live in oracles.py; nothing here reuses the library
code path it is checking.
"""

import json
import time
from decimal import Decimal
from importlib import resources
from random import Random

from agmarket.cli import main
from agmarket.market import (
    CriteriaProfile,
    InsufficientCapacity,
    Itinerary,
    LegBook,
    RouteLeg,
    UnknownReservation,
    compose_itineraries,
    score_pool,
)
from agmarket.messaging import read_trace_jsonl
from agmarket.model import baseline_model
from agmarket.protocol import ConversationOutcome, validate_trace
from agmarket.scenario import load_shipped, run_scenario, shipped_scenario_names

from oracles import exhaustive_chains, random_network, random_pool_rows, random_request

SCORE_TOLERANCE = 1e-9


def verdict(label: str, ok: bool, detail: str) -> None:
    print(f"[{'PASS' if ok else 'FAIL'}] {label}: {detail}")
    assert ok, f"{label}: {detail}"


def test_baseline_scenario_end_to_end(tmp_path):
    scenario = load_shipped("paper-baseline")
    assert len(scenario.customers) == 1 and len(scenario.providers) == 2

    trace_path = tmp_path / "baseline.jsonl"
    started = time.perf_counter()
    code = main(["run", "--scenario", "paper-baseline", "--trace", str(trace_path)])
    elapsed = time.perf_counter() - started

    events = read_trace_jsonl(trace_path)
    reports = validate_trace(events, scenario.actor_map())
    request_report = reports.get("REQ-1/0")
    off_shape = [r.conversation_id for r in reports.values() if r.outcome is not ConversationOutcome.OK]

    ok = (
        code == 0
        and elapsed < 5.0
        and request_report is not None
        and request_report.outcome is ConversationOutcome.OK
        and not off_shape
    )
    verdict(
        "end-to-end baseline",
        ok,
        f"exit {code}, {len(events)} trace events, "
        f"{len(reports)} conversation(s) on shape, {elapsed:.2f}s",
    )


def test_composition_matches_exhaustive_oracle():
    rng = Random(0xA6)
    started = time.perf_counter()
    mismatches = []
    total_chains = 0
    routed = 0
    for case in range(200):
        locations, legs = random_network(rng)
        request = random_request(rng, locations)
        got = frozenset(
            tuple(leg.leg_id for leg in it.legs)
            for it in compose_itineraries(legs, request, max_legs=4)
        )
        want = exhaustive_chains(legs, request, 4)
        total_chains += len(want)
        routed += bool(want)
        if got != want:
            mismatches.append((case, got ^ want))
    elapsed = time.perf_counter() - started

    ok = not mismatches and elapsed < 60.0
    detail = f"200 networks ({routed} routed, {total_chains} chains), exact match, {elapsed:.1f}s"
    if mismatches:
        case, diff = mismatches[0]
        detail = f"network {case} disagrees on {sorted(diff)[:4]} (+{len(mismatches) - 1} more)"
    verdict("composition oracle", ok, detail)


def test_replays_are_byte_identical(tmp_path):
    names = shipped_scenario_names()
    assert len(names) >= 5

    differing = []
    for name in names:
        first = tmp_path / f"{name}-a.jsonl"
        second = tmp_path / f"{name}-b.jsonl"
        code_a = main(["run", "--scenario", name, "--trace", str(first), "--seed", "7"])
        code_b = main(["run", "--scenario", name, "--trace", str(second), "--seed", "7"])
        if code_a != code_b or first.read_bytes() != second.read_bytes():
            differing.append(name)

    verdict(
        "deterministic replay",
        not differing,
        f"{len(names)} scenarios byte-identical across paired runs"
        if not differing
        else f"traces diverge for {differing}",
    )


def _pool_from_rows(rows):
    legs = [
        RouteLeg(
            leg_id=f"r{i:03d}",
            provider="p",
            origin="A",
            destination="B",
            depart=0,
            arrive=int(time_),
            cost=Decimal(str(cost)),
            insurance=int(cover),
            capacity=9,
        )
        for i, (cost, time_, cover) in enumerate(rows)
    ]
    return [Itinerary.from_legs([leg]) for leg in legs]


def _dominates(a, b):
    """All-criteria weak improvement with at least one strict one."""
    return (
        a[0] <= b[0]
        and a[1] <= b[1]
        and a[2] >= b[2]
        and (a[0] < b[0] or a[1] < b[1] or a[2] > b[2])
    )


def test_ranking_invariances():
    rng = Random(41)
    bound_breaches = 0
    scale_flips = 0
    cost_order_breaks = 0
    dominance_breaks = 0
    pair_checks = 0

    for _ in range(500):
        rows = random_pool_rows(rng, rng.randint(2, 12))
        pool = _pool_from_rows(rows)
        weights = (rng.uniform(0.05, 1.0), rng.uniform(0.05, 1.0), rng.uniform(0.05, 1.0))
        ranked = score_pool(pool, CriteriaProfile(*weights))

        for entry in ranked:
            if not -SCORE_TOLERANCE <= entry.score <= 1.0 + SCORE_TOLERANCE:
                bound_breaches += 1

        scale = rng.choice([1e-3, 0.25, 3.0, 250.0])
        rescaled = score_pool(pool, CriteriaProfile(*(w * scale for w in weights)))
        if [e.itinerary.itinerary_id for e in rescaled] != [e.itinerary.itinerary_id for e in ranked]:
            scale_flips += 1

        by_cost = score_pool(pool, CriteriaProfile(1.0, 0.0, 0.0))
        costs = [e.itinerary.total_cost for e in by_cost]
        if any(costs[i] > costs[i + 1] for i in range(len(costs) - 1)):
            cost_order_breaks += 1

        position = {e.itinerary.itinerary_id: e.rank for e in ranked}
        ids = [it.itinerary_id for it in pool]
        for i, row_a in enumerate(rows):
            for j, row_b in enumerate(rows):
                if i == j or not _dominates(row_a, row_b):
                    continue
                pair_checks += 1
                if position[ids[i]] > position[ids[j]]:
                    dominance_breaks += 1

    ok = not (bound_breaches or scale_flips or cost_order_breaks or dominance_breaks)
    verdict(
        "ranking invariances",
        ok,
        f"500 pools: bounds ok, scaling stable, cost order exact, "
        f"{pair_checks} dominance pairs respected"
        if ok
        else f"breaches: bounds={bound_breaches} scaling={scale_flips} "
        f"cost-order={cost_order_breaks} dominance={dominance_breaks}",
    )


def test_capacity_conservation_under_random_ops():
    rng = Random(5150)
    book = LegBook(
        RouteLeg(
            leg_id=f"l{i}",
            provider="p",
            origin="A",
            destination="B",
            depart=i,
            arrive=i + 10,
            cost=Decimal("25.00"),
            insurance=1,
            capacity=capacity,
        )
        for i, capacity in enumerate([40, 25, 60, 15, 8, 33])
    )
    leg_ids = [leg.leg_id for leg in book.legs()]
    initial = {leg.leg_id: leg.capacity for leg in book.legs()}
    held: dict[str, tuple[str, int]] = {}

    def conserved() -> bool:
        return all(
            initial[lid] == book.remaining(lid) + book.reserved_units(lid) for lid in leg_ids
        ) and book.check_conservation()

    ops = 0
    breaks = 0
    for serial in range(1200):
        roll = rng.random()
        if roll < 0.45 or not held:
            rid = f"res-{serial}"
            terms = (rng.choice(leg_ids), rng.randint(1, 9))
            try:
                book.reserve(terms[0], rid, terms[1])
                held[rid] = terms
            except InsufficientCapacity:
                pass
        elif roll < 0.60:
            # retried confirm: same id and terms must stay a single booking
            rid, terms = rng.choice(sorted(held.items()))
            book.reserve(terms[0], rid, terms[1])
        else:
            rid = rng.choice(sorted(held) + [f"ghost-{serial}"])
            try:
                book.release(rid)
                held.pop(rid, None)
            except UnknownReservation:
                pass
        ops += 1
        if not conserved():
            breaks += 1

    outcome = run_scenario(load_shipped("rollback"))
    snapshot = outcome.snapshot()
    rollback_ok = outcome.result.quiescent and all(
        entry["conservation_ok"] for entry in snapshot["legbooks"].values()
    )

    ok = ops >= 1000 and breaks == 0 and rollback_ok
    verdict(
        "capacity conservation",
        ok,
        f"{ops} interleaved ops exact, rollback scenario books balance"
        if ok
        else f"{breaks} conservation break(s), rollback_ok={rollback_ok}",
    )


def test_conformance_flags_only_the_probe(tmp_path):
    offending = {}
    for name in shipped_scenario_names():
        if name == "probe":
            continue
        outcome = run_scenario(load_shipped(name))
        if outcome.violations:
            offending[name] = len(outcome.violations)

    probe = run_scenario(load_shipped("probe"))
    code = main(["run", "--scenario", "probe", "--trace", str(tmp_path / "probe.jsonl")])

    single = (
        len(probe.violations) == 1
        and probe.violations[0].sender == "c1"
        and probe.violations[0].receiver == "p1"
        and probe.violations[0].source_actor == "Customer"
        and probe.violations[0].target_actor == "Provider"
    )
    ok = not offending and single and code == 4
    verdict(
        "conformance checking",
        ok,
        "clean scenarios silent; probe yields one Customer->Provider violation, exit 4"
        if ok
        else f"offending={offending} probe_violations={len(probe.violations)} exit={code}",
    )


def test_validate_reports_uncovered_dependency(tmp_path, capsys):
    base = baseline_model().to_dict()
    base["capacities"] = [c for c in base["capacities"] if c["name"] != "Get Customer Requirements"]
    shipped_text = resources.files("agmarket").joinpath("scenarios/paper-baseline.json").read_text()
    shipped = json.loads(shipped_text)
    shipped["model"] = base
    scenario_path = tmp_path / "trimmed.json"
    scenario_path.write_text(json.dumps(shipped), encoding="utf-8")

    code = main(["validate", "--scenario", str(scenario_path)])
    out = capsys.readouterr().out
    problems = [line.strip() for line in out.splitlines() if line.strip().startswith("problem:")]

    ok = code == 4 and problems == [
        "problem: dependency 'Customer Requirements' has no covering capacity"
    ]
    verdict(
        "model validation",
        ok,
        f"exit {code}, problems={problems}",
    )
