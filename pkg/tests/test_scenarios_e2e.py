from decimal import Decimal

import pytest

from agmarket.market import itinerary_id_for
from agmarket.messaging import Performative
from agmarket.protocol import ConversationOutcome
from agmarket.scenario import (
    ScenarioError,
    load_shipped,
    resolve_scenario,
    run_scenario,
    shipped_scenario_names,
)

ALL_SCENARIOS = (
    "amendment",
    "no-route",
    "paper-baseline",
    "probe",
    "refuse-all",
    "reweight",
    "rollback",
)

BEST_CHAIN = itinerary_id_for(["l1", "l3"])
CHEAPEST_CHAIN = itinerary_id_for(["l4", "l5"])


def run(name):
    return run_scenario(load_shipped(name))


def customer_record(outcome, customer, conversation):
    return outcome.runtime.agent_store(customer)["conversations"][conversation]


def test_shipped_scenario_names_and_resolution():
    assert shipped_scenario_names() == sorted(ALL_SCENARIOS)
    assert resolve_scenario("paper-baseline").name == "paper-baseline"
    assert resolve_scenario("src/agmarket/scenarios/paper-baseline.json").name == "paper-baseline"
    with pytest.raises(ScenarioError):
        resolve_scenario("no-such-scenario")


def test_baseline_confirms_the_best_itinerary():
    outcome = run("paper-baseline")
    assert outcome.result.quiescent
    assert outcome.violations == []
    report = outcome.reports["REQ-1/0"]
    assert report.outcome is ConversationOutcome.OK
    assert report.detail == "reservation confirmed"

    record = customer_record(outcome, "c1", "REQ-1/0")
    assert record["result"].status == "confirmed"
    assert record["result"].reservation_id == f"REQ-1/{BEST_CHAIN}"
    assert BEST_CHAIN == "a992b14246e6"  # pinned: itinerary ids must not drift

    assert outcome.runtime.agent_store("p1")["book"].remaining("l1") == 15
    assert outcome.runtime.agent_store("p2")["book"].remaining("l3") == 10


def test_baseline_presentation_matches_frozen_ranking():
    outcome = run("paper-baseline")
    offers = customer_record(outcome, "c1", "REQ-1/0")["offers"]
    chains = [tuple(l.leg_id for l in o.scored.itinerary.legs) for o in offers]
    assert chains == [("l1", "l3"), ("l4", "l5"), ("l1", "l5"), ("l2",)]
    scores = [o.scored.score for o in offers]
    assert scores == pytest.approx([0.62727272727, 0.575, 0.48636363636, 0.3125], abs=1e-9)
    assert [o.scored.rank for o in offers] == [1, 2, 3, 4]
    costs = [o.scored.itinerary.total_cost for o in offers]
    assert costs == [Decimal("85.00"), Decimal("73.00"), Decimal("78.00"), Decimal("95.00")]


def test_reweight_switches_the_winner_to_the_cheapest():
    outcome = run("reweight")
    report = outcome.reports["REQ-1/0"]
    assert report.outcome is ConversationOutcome.OK
    record = customer_record(outcome, "c1", "REQ-1/0")
    assert record["presented_count"] == 2
    assert record["result"].reservation_id == f"REQ-1/{CHEAPEST_CHAIN}"
    final = record["offers"]
    costs = [o.scored.itinerary.total_cost for o in final]
    assert costs == sorted(costs)
    assert outcome.runtime.agent_store("p2")["book"].remaining("l4") == 7
    assert outcome.runtime.agent_store("p2")["book"].remaining("l5") == 10
    assert outcome.runtime.agent_store("p1")["book"].remaining("l1") == 20


def test_amendment_concedes_in_two_rounds_then_confirms():
    outcome = run("amendment")
    assert outcome.reports["REQ-1/0"].outcome is ConversationOutcome.OK
    record = customer_record(outcome, "c1", "REQ-1/0")
    grants = [a.outcome.granted for a in record["amendments"]]
    assert grants == [Decimal("80.00"), Decimal("76.50")]
    assert all(a.outcome.accepted for a in record["amendments"])

    winning = next(
        o for o in record["offers"] if o.scored.itinerary.itinerary_id == BEST_CHAIN
    )
    assert winning.scored.itinerary.total_cost == Decimal("76.50")
    assert [l.cost for l in winning.scored.itinerary.legs] == [Decimal("36.00"), Decimal("40.50")]
    assert record["result"].status == "confirmed"
    assert record["result"].reservation_id == f"REQ-1/{BEST_CHAIN}"


def test_rollback_releases_partial_reservations_and_conserves_capacity():
    outcome = run("rollback")
    chain = itinerary_id_for(["lx", "ly"])
    assert outcome.reports["REQ-A/0"].outcome is ConversationOutcome.OK
    failed = outcome.reports["REQ-B/0"]
    assert failed.outcome is ConversationOutcome.FAILED
    assert failed.detail == "reservation released"

    p1_book = outcome.runtime.agent_store("p1")["book"]
    p2_book = outcome.runtime.agent_store("p2")["book"]
    assert p1_book.remaining("lx") == 0
    assert p2_book.remaining("ly") == 10
    assert {r.reservation_id for r in p1_book.reservations()} == {f"REQ-A/{chain}/p1:lx"}
    assert {r.reservation_id for r in p2_book.reservations()} == {f"REQ-A/{chain}/p2:ly"}

    books = outcome.snapshot()["legbooks"]
    assert all(b["conservation_ok"] for b in books.values())


def test_no_route_request_fails_after_an_empty_presentation():
    outcome = run("no-route")
    report = outcome.reports["REQ-1/0"]
    assert report.outcome is ConversationOutcome.FAILED
    assert report.detail == "customer declined every offer"
    record = customer_record(outcome, "c1", "REQ-1/0")
    assert record["offers"] == []
    # both providers did offer legs; no chain spans A to C
    proposers = {e.sender.name for e in outcome.trace if e.performative is Performative.PROPOSE}
    assert proposers == {"p1", "p2"}


def test_refuse_all_records_provider_refusals():
    outcome = run("refuse-all")
    report = outcome.reports["REQ-1/0"]
    assert report.outcome is ConversationOutcome.FAILED
    assert report.detail == "customer declined every offer"
    refusers = {
        e.sender.name
        for e in outcome.trace
        if e.performative is Performative.REFUSE and e.receiver.name == "broker"
    }
    # both providers refuse the call, then the customer walks away
    assert refusers == {"p1", "p2", "c1"}


def test_probe_yields_exactly_one_violation_and_an_invalid_side_conversation():
    outcome = run("probe")
    assert len(outcome.violations) == 1
    violation = outcome.violations[0]
    assert (violation.sender, violation.receiver) == ("c1", "p1")
    assert (violation.source_actor, violation.target_actor) == ("Customer", "Provider")

    assert outcome.reports["REQ-1/0"].outcome is ConversationOutcome.OK
    probe_report = outcome.reports["probe/c1/0"]
    assert probe_report.outcome is ConversationOutcome.INVALID
    assert "may not carry" in probe_report.detail
    # the provider's not-understood bounce is exempt, not a second violation
    bounce = [e for e in outcome.trace if e.performative is Performative.NOT_UNDERSTOOD]
    assert len(bounce) == 1


@pytest.mark.parametrize("name", ALL_SCENARIOS)
def test_scenarios_quiesce_and_replay_identically(name):
    first = run(name)
    second = run(name)
    assert first.result.quiescent
    assert first.snapshot() == second.snapshot()
    terminal = {ConversationOutcome.OK, ConversationOutcome.FAILED}
    market_reports = [r for cid, r in first.reports.items() if not cid.startswith("probe/")]
    assert all(r.outcome in terminal for r in market_reports)
