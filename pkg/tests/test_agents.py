import itertools
from dataclasses import replace
from decimal import Decimal

import pytest

from agmarket.agents import (
    SERVICE_PROVIDER,
    BrokerConfig,
    CustomerConfig,
    ProviderConfig,
    ScriptError,
    broker_behaviours,
    build_script_plan,
    customer_behaviours,
    provider_behaviours,
)
from agmarket.content import (
    AmendmentContent,
    ErrorInfoContent,
    PlanUpdateContent,
    ProposalSetContent,
    RequestContent,
    ReservationRequestContent,
    ReservationResultContent,
    SelectionContent,
)
from agmarket.kernel import Behaviour, Block, Runtime, TerminalKind
from agmarket.market import Amendment, ProposalStatus, to_money
from agmarket.messaging import Performative

from conftest import make_leg, make_request

_labels = itertools.count()


def collector() -> Behaviour:
    def drain(ctx):
        while True:
            msg = ctx.receive()
            if msg is None:
                return Block()
            ctx.store.setdefault("inbox", []).append(msg)

    return Behaviour.cyclic("collect", drain)


def silent_provider() -> list[Behaviour]:
    """Registers as a provider but never answers anything."""

    def setup(ctx):
        ctx.register_service(SERVICE_PROVIDER, {"max_discount": "0.10"})

    def drain(ctx):
        while True:
            if ctx.receive() is None:
                return Block()

    return [Behaviour.one_shot("setup", setup), Behaviour.cyclic("mute", drain)]


def market_runtime(legs, driver="c1", probe_target=None, config=None):
    rt = Runtime(seed=7)
    rt.spawn_agent("broker", broker_behaviours(config))
    by_provider = {}
    for leg in legs:
        by_provider.setdefault(leg.provider, []).append(leg)
    for name in sorted(by_provider):
        rt.spawn_agent(
            name,
            provider_behaviours(
                ProviderConfig(
                    legs=tuple(by_provider[name]),
                    probe_target=probe_target if name == "p2" else None,
                )
            ),
        )
    rt.spawn_agent(driver, [collector()])
    return rt


def fire(rt, performative, body, conversation, sender="c1", to="broker", max_ticks=80):
    def send(ctx):
        ctx.send(performative, [rt.live_agent(to)], body, conversation)

    rt.add_behaviour(sender, Behaviour.one_shot(f"fire{next(_labels)}", send))
    return rt.run_until_quiescent(max_ticks)


def bodies(rt, agent, content_type):
    inbox = rt.agent_store(agent).get("inbox", [])
    return [m.content.body for m in inbox if isinstance(m.content.body, content_type)]


def offer_by_legs(pset, *leg_ids):
    for offer in pset.offers:
        if tuple(l.leg_id for l in offer.scored.itinerary.legs) == leg_ids:
            return offer
    raise AssertionError(f"no offer over legs {leg_ids}")


# -- broker: evaluation and reranking ----------------------------------------


def test_broker_presents_ranked_offers(baseline_legs):
    rt = market_runtime(baseline_legs)
    fire(rt, Performative.REQUEST, RequestContent(make_request()), "REQ-1/0")
    (pset,) = bodies(rt, "c1", ProposalSetContent)
    assert pset.request_id == "REQ-1"
    assert [o.scored.rank for o in pset.offers] == [1, 2, 3, 4]
    assert tuple(l.leg_id for l in pset.offers[0].scored.itinerary.legs) == ("l1", "l3")
    assert all(o.status is ProposalStatus.OFFERED for o in pset.offers)


def test_broker_without_providers_presents_empty_set():
    rt = Runtime()
    rt.spawn_agent("broker", broker_behaviours())
    rt.spawn_agent("c1", [collector()])
    fire(rt, Performative.REQUEST, RequestContent(make_request()), "REQ-1/0")
    (pset,) = bodies(rt, "c1", ProposalSetContent)
    assert pset.offers == ()


def test_broker_refuses_foreign_conversation_id(baseline_legs):
    rt = market_runtime(baseline_legs)
    fire(rt, Performative.REQUEST, RequestContent(make_request()), "OTHER/0")
    (refusal,) = bodies(rt, "c1", ErrorInfoContent)
    assert refusal.code == "bad-conversation"
    assert not bodies(rt, "c1", ProposalSetContent)


def test_broker_bounces_unplaceable_message(baseline_legs):
    rt = market_runtime(baseline_legs)
    result = fire(
        rt, Performative.REQUEST, SelectionContent(request_id="REQ-1", itinerary_id="x"), "REQ-1/0"
    )
    assert result.quiescent
    inbox = rt.agent_store("c1")["inbox"]
    assert [m.performative for m in inbox] == [Performative.NOT_UNDERSTOOD]


def test_broker_absorbs_provider_refusals(baseline_legs):
    # only l1 fits the window, so p2 refuses and no chain reaches C
    rt = market_runtime(baseline_legs)
    fire(rt, Performative.REQUEST, RequestContent(make_request(latest=45)), "REQ-1/0")
    (pset,) = bodies(rt, "c1", ProposalSetContent)
    assert pset.offers == ()


def test_broker_proceeds_when_cfp_deadline_expires(baseline_legs):
    rt = market_runtime(baseline_legs, config=BrokerConfig(collect_deadline=5))
    rt.spawn_agent("p3", silent_provider())
    result = fire(rt, Performative.REQUEST, RequestContent(make_request()), "REQ-1/0")
    assert result.quiescent
    (pset,) = bodies(rt, "c1", ProposalSetContent)
    assert len(pset.offers) == 4
    failures = [e for e in rt.bus.export_trace() if e.performative is Performative.FAILURE]
    assert any("p3" in e.content_summary for e in failures)


def test_reweight_reorders_by_cost(baseline_legs):
    rt = market_runtime(baseline_legs)
    fire(rt, Performative.REQUEST, RequestContent(make_request()), "REQ-1/0")
    fire(rt, Performative.REQUEST, RequestContent(make_request(weights=(1.0, 0.0, 0.0))), "REQ-1/0")
    first, second = bodies(rt, "c1", ProposalSetContent)
    assert tuple(l.leg_id for l in first.offers[0].scored.itinerary.legs) == ("l1", "l3")
    costs = [o.scored.itinerary.total_cost for o in second.offers]
    assert costs == sorted(costs)
    assert tuple(l.leg_id for l in second.offers[0].scored.itinerary.legs) == ("l4", "l5")


def test_rerank_with_mismatched_request_id_is_refused(baseline_legs):
    rt = market_runtime(baseline_legs)
    fire(rt, Performative.REQUEST, RequestContent(make_request()), "REQ-1/0")
    fire(rt, Performative.REQUEST, RequestContent(make_request(request_id="REQ-9")), "REQ-1/0")
    (refusal,) = bodies(rt, "c1", ErrorInfoContent)
    assert refusal.code == "bad-request"
    assert len(bodies(rt, "c1", ProposalSetContent)) == 1


# -- broker: amendments -------------------------------------------------------


def amend(rt, itinerary_id, criterion, target, conversation="REQ-1/0"):
    amendment = Amendment(
        request_id="REQ-1",
        itinerary_id=itinerary_id,
        criterion=criterion,
        target=to_money(target) if criterion == "cost" else int(target),
    )
    return fire(rt, Performative.REQUEST, AmendmentContent(amendment), conversation)


def evaluated_market(baseline_legs):
    rt = market_runtime(baseline_legs)
    fire(rt, Performative.REQUEST, RequestContent(make_request()), "REQ-1/0")
    (pset,) = bodies(rt, "c1", ProposalSetContent)
    return rt, pset


def test_cost_amendment_runs_provider_consent_round(baseline_legs):
    rt, pset = evaluated_market(baseline_legs)
    best = offer_by_legs(pset, "l1", "l3").scored.itinerary
    amend(rt, best.itinerary_id, "cost", "80.00")
    (notice,) = bodies(rt, "c1", AmendmentContent)
    assert notice.outcome.accepted
    assert notice.outcome.granted == Decimal("80.00")
    latest = bodies(rt, "c1", ProposalSetContent)[-1]
    amended = offer_by_legs(latest, "l1", "l3")
    assert amended.scored.itinerary.total_cost == Decimal("80.00")
    assert [l.cost for l in amended.scored.itinerary.legs] == [Decimal("37.65"), Decimal("42.35")]
    assert amended.status is ProposalStatus.AMENDED


def test_below_floor_ask_concedes_to_floor_then_refuses(baseline_legs):
    rt, pset = evaluated_market(baseline_legs)
    best = offer_by_legs(pset, "l1", "l3").scored.itinerary
    amend(rt, best.itinerary_id, "cost", "70.00")
    first = bodies(rt, "c1", AmendmentContent)[-1]
    assert first.outcome.accepted
    assert first.outcome.granted == Decimal("76.50")
    assert first.outcome.reason == "partial concession to floor"
    latest = bodies(rt, "c1", ProposalSetContent)[-1]
    amended = offer_by_legs(latest, "l1", "l3").scored.itinerary
    assert amended.total_cost == Decimal("76.50")
    assert [l.cost for l in amended.legs] == [Decimal("36.00"), Decimal("40.50")]

    amend(rt, best.itinerary_id, "cost", "65.00")
    second = bodies(rt, "c1", AmendmentContent)[-1]
    assert not second.outcome.accepted
    assert second.outcome.reason == "target below concession floor"


def test_amendment_already_satisfied_skips_consent(baseline_legs):
    rt, pset = evaluated_market(baseline_legs)
    best = offer_by_legs(pset, "l1", "l3").scored.itinerary
    amend(rt, best.itinerary_id, "cost", "90.00")
    (notice,) = bodies(rt, "c1", AmendmentContent)
    assert notice.outcome.accepted
    assert notice.outcome.granted == Decimal("85.00")
    assert "already" in notice.outcome.reason


def test_time_amendment_is_rejected_when_unmet(baseline_legs):
    rt, pset = evaluated_market(baseline_legs)
    best = offer_by_legs(pset, "l1", "l3").scored.itinerary
    amend(rt, best.itinerary_id, "time", 50)
    (notice,) = bodies(rt, "c1", AmendmentContent)
    assert not notice.outcome.accepted
    assert "fixed" in notice.outcome.reason


def test_amendment_against_unknown_itinerary_is_rejected(baseline_legs):
    rt, _ = evaluated_market(baseline_legs)
    amend(rt, "ffffffffffff", "cost", "10.00")
    (notice,) = bodies(rt, "c1", AmendmentContent)
    assert not notice.outcome.accepted
    assert notice.outcome.reason == "unknown itinerary"
    assert len(bodies(rt, "c1", ProposalSetContent)) == 1


# -- broker: selection and reservation ----------------------------------------


def select(rt, itinerary_id, conversation="REQ-1/0"):
    return fire(
        rt,
        Performative.INFORM,
        SelectionContent(request_id="REQ-1", itinerary_id=itinerary_id),
        conversation,
    )


def test_selection_confirms_and_updates_books(baseline_legs):
    rt, pset = evaluated_market(baseline_legs)
    best = offer_by_legs(pset, "l1", "l3").scored.itinerary
    select(rt, best.itinerary_id)
    (result,) = bodies(rt, "c1", ReservationResultContent)
    assert result.status == "confirmed"
    assert result.reservation_id == f"REQ-1/{best.itinerary_id}"
    assert result.leg_ids == ("l1", "l3")
    assert rt.agent_store("p1")["book"].remaining("l1") == 15
    assert rt.agent_store("p2")["book"].remaining("l3") == 10
    case = rt.agent_store("broker")["cases"]["REQ-1/0"]
    assert case.proposals[best.itinerary_id].status is ProposalStatus.CONFIRMED
    assert case.closed


def test_selection_of_unknown_itinerary_is_refused(baseline_legs):
    rt, _ = evaluated_market(baseline_legs)
    select(rt, "ffffffffffff")
    (result,) = bodies(rt, "c1", ReservationResultContent)
    assert result.status == "refused"
    assert result.reason == "unknown itinerary"


def test_reselecting_a_confirmed_itinerary_is_refused(baseline_legs):
    rt, pset = evaluated_market(baseline_legs)
    best = offer_by_legs(pset, "l1", "l3").scored.itinerary
    select(rt, best.itinerary_id)
    select(rt, best.itinerary_id)
    results = bodies(rt, "c1", ReservationResultContent)
    assert [r.status for r in results] == ["confirmed", "refused"]
    assert results[1].reason == "already being reserved"


def test_partial_confirmation_rolls_back_and_recovers(baseline_legs):
    rt, pset = evaluated_market(baseline_legs)
    # exhaust l3 out of band so p2 must refuse the broker's reservation
    fire(
        rt,
        Performative.REQUEST,
        ReservationRequestContent(reservation_id="PRE-1", request_id="PRE", leg_ids=("l3",), units=15),
        "PRE-1/0",
        to="p2",
    )
    best = offer_by_legs(pset, "l1", "l3").scored.itinerary
    select(rt, best.itinerary_id)
    released = [r for r in bodies(rt, "c1", ReservationResultContent) if r.reservation_id.startswith("REQ-1/")]
    assert [r.status for r in released] == ["released"]
    assert "p2" in released[0].reason
    assert rt.agent_store("p1")["book"].remaining("l1") == 20

    fallback = offer_by_legs(pset, "l4", "l5").scored.itinerary
    select(rt, fallback.itinerary_id)
    results = [r for r in bodies(rt, "c1", ReservationResultContent) if r.reservation_id.startswith("REQ-1/")]
    assert results[-1].status == "confirmed"
    assert rt.agent_store("p2")["book"].remaining("l4") == 7
    assert rt.agent_store("p2")["book"].remaining("l5") == 10


# -- provider: direct handling -------------------------------------------------


def test_provider_offers_only_legs_inside_the_window(baseline_legs):
    rt = market_runtime(baseline_legs)
    fire(rt, Performative.CFP, RequestContent(make_request(latest=100)), "REQ-1/0", to="p2")
    (offer,) = bodies(rt, "c1", PlanUpdateContent)
    assert offer.provider == "p2"
    assert [l.leg_id for l in offer.legs] == ["l3", "l4"]
    assert [l.capacity for l in offer.legs] == [15, 12]


def test_provider_refuses_an_empty_window(baseline_legs):
    rt = market_runtime(baseline_legs)
    fire(rt, Performative.CFP, RequestContent(make_request(latest=10)), "REQ-1/0", to="p2")
    (refusal,) = bodies(rt, "c1", ErrorInfoContent)
    assert refusal.code == "no-offer"


def test_provider_rolls_back_a_partially_reserved_request(baseline_legs):
    rt = market_runtime(baseline_legs)
    fire(
        rt,
        Performative.REQUEST,
        ReservationRequestContent(reservation_id="R-1", request_id="REQ-1", leg_ids=("l3", "l4"), units=13),
        "REQ-1/0",
        to="p2",
    )
    results = bodies(rt, "c1", ReservationResultContent)
    assert [r.status for r in results] == ["refused"]
    # the failed attempt must not leave a partial hold on l3
    fire(
        rt,
        Performative.REQUEST,
        ReservationRequestContent(reservation_id="R-2", request_id="REQ-1", leg_ids=("l3",), units=15),
        "REQ-2/0",
        to="p2",
    )
    assert bodies(rt, "c1", ReservationResultContent)[-1].status == "confirmed"


def test_provider_acknowledges_release_of_unknown_reservation(baseline_legs):
    rt = market_runtime(baseline_legs)
    fire(
        rt,
        Performative.REJECT_PROPOSAL,
        ReservationRequestContent(reservation_id="GHOST", request_id="REQ-1", leg_ids=("l3",), units=5),
        "REQ-1/0",
        to="p2",
    )
    (result,) = bodies(rt, "c1", ReservationResultContent)
    assert result.status == "released"
    assert result.reason == "not held"


def test_provider_release_returns_capacity(baseline_legs):
    rt = market_runtime(baseline_legs)
    hold = ReservationRequestContent(reservation_id="R-1", request_id="REQ-1", leg_ids=("l5",), units=15)
    fire(rt, Performative.REQUEST, hold, "REQ-1/0", to="p2")
    fire(rt, Performative.REJECT_PROPOSAL, hold, "REQ-1/0", to="p2")
    fire(rt, Performative.REQUEST, hold, "REQ-1/0", to="p2")
    statuses = [r.status for r in bodies(rt, "c1", ReservationResultContent)]
    assert statuses == ["confirmed", "released", "confirmed"]
    assert rt.agent_store("p2")["book"].remaining("l5") == 0


def test_probe_fires_on_first_cfp_only(baseline_legs):
    rt = market_runtime(baseline_legs, probe_target="c1")
    fire(rt, Performative.CFP, RequestContent(make_request()), "REQ-1/0", to="p2")
    fire(rt, Performative.CFP, RequestContent(make_request(request_id="REQ-2")), "REQ-2/0", to="p2")
    probes = [
        m
        for m in rt.agent_store("c1")["inbox"]
        if isinstance(m.content.body, ErrorInfoContent) and m.content.body.code == "probe"
    ]
    assert len(probes) == 1
    assert probes[0].performative is Performative.INFORM
    assert probes[0].conversation_id == "probe/p2/0"


def consent_request(leg, cost):
    amendment = Amendment(request_id="REQ-1", itinerary_id="abc123abc123", criterion="cost", target=to_money(cost))
    outcome_granted = to_money(cost)
    from agmarket.market import AmendmentOutcome

    return AmendmentContent(
        amendment=amendment,
        outcome=AmendmentOutcome(True, outcome_granted, "target met"),
        legs=(replace(leg, cost=to_money(cost)),),
    )


def test_provider_consents_to_repricing_at_its_floor(baseline_legs):
    rt = market_runtime(baseline_legs)
    l3 = next(l for l in baseline_legs if l.leg_id == "l3")
    fire(rt, Performative.REQUEST, consent_request(l3, "40.50"), "REQ-1/0", to="p2")
    (reply,) = bodies(rt, "c1", AmendmentContent)
    inbox = rt.agent_store("c1")["inbox"]
    assert inbox[-1].performative is Performative.ACCEPT_PROPOSAL
    assert reply.outcome.accepted


def test_provider_vetoes_repricing_below_its_floor(baseline_legs):
    rt = market_runtime(baseline_legs)
    l3 = next(l for l in baseline_legs if l.leg_id == "l3")
    fire(rt, Performative.REQUEST, consent_request(l3, "40.00"), "REQ-1/0", to="p2")
    (reply,) = bodies(rt, "c1", AmendmentContent)
    assert rt.agent_store("c1")["inbox"][-1].performative is Performative.REJECT_PROPOSAL
    assert "below my floor" in reply.outcome.reason


def test_provider_rejects_amendment_it_cannot_assess(baseline_legs):
    rt = market_runtime(baseline_legs)
    amendment = Amendment(request_id="REQ-1", itinerary_id="abc123abc123", criterion="time", target=10)
    fire(rt, Performative.REQUEST, AmendmentContent(amendment), "REQ-1/0", to="p2")
    (reply,) = bodies(rt, "c1", AmendmentContent)
    assert not reply.outcome.accepted
    assert reply.outcome.reason == "cannot assess the proposed terms"


def test_provider_rejects_repricing_of_unknown_leg(baseline_legs):
    rt = market_runtime(baseline_legs)
    stray = make_leg("lx", "p2", "A", "B", 10, 40, "10.00")
    fire(rt, Performative.REQUEST, consent_request(stray, "9.00"), "REQ-1/0", to="p2")
    (reply,) = bodies(rt, "c1", AmendmentContent)
    assert reply.outcome.reason == "unknown leg lx"


# -- customer scripts ----------------------------------------------------------


def baseline_script(**request_overrides):
    request = make_request(**request_overrides)
    return (
        {"action": "request", "request": request.to_dict()},
        {"action": "await_proposals"},
        {"action": "select", "itinerary": "best"},
        {"action": "await_result"},
    )


def test_script_validation_errors():
    with pytest.raises(ScriptError, match="no steps"):
        build_script_plan("c1", ())
    with pytest.raises(ScriptError, match="exactly one request"):
        build_script_plan("c1", ({"action": "await_proposals"},))
    request = {"action": "request", "request": make_request().to_dict()}
    with pytest.raises(ScriptError, match="exactly one request"):
        build_script_plan("c1", (request, request))
    with pytest.raises(ScriptError, match="unknown script action"):
        build_script_plan("c1", (request, {"action": "teleport"}))
    with pytest.raises(ScriptError, match="probe step needs a target"):
        build_script_plan("c1", (request, {"action": "probe"}))


def test_script_plan_shape():
    spec, caps, conversation_id = build_script_plan("c1", baseline_script())
    assert conversation_id == "REQ-1/0"
    assert spec.initial == "s0.request"
    assert set(caps) == {"s0.request", "s1.await_proposals", "s2.select", "s3.await_result"}


def test_scripted_customer_reaches_ok(baseline_legs):
    rt = market_runtime(baseline_legs, driver="observer")
    rt.spawn_agent("c1", customer_behaviours(CustomerConfig(script=baseline_script())))
    result = rt.run_until_quiescent(80)
    assert result.quiescent
    plan = rt.agent_store("c1")["plans"]["REQ-1/0"]
    assert plan.outcome is TerminalKind.OK
    record = rt.agent_store("c1")["conversations"]["REQ-1/0"]
    assert record["result"].status == "confirmed"
    assert record["presented_count"] == 1


def test_scripted_customer_gives_up_on_empty_presentation():
    rt = Runtime()
    rt.spawn_agent("broker", broker_behaviours())
    script = baseline_script() [:2] + ({"action": "give_up_if_empty"},)
    rt.spawn_agent("c1", customer_behaviours(CustomerConfig(script=script)))
    result = rt.run_until_quiescent(80)
    assert result.quiescent
    plan = rt.agent_store("c1")["plans"]["REQ-1/0"]
    assert plan.outcome is TerminalKind.FAIL
    assert rt.agent_store("broker")["cases"]["REQ-1/0"].closed


def test_customer_bounces_stray_messages(baseline_legs):
    rt = Runtime()
    rt.spawn_agent("c1", customer_behaviours())
    rt.spawn_agent("d1", [collector()])
    fire(
        rt,
        Performative.PROPOSE,
        PlanUpdateContent(provider="d1", legs=(baseline_legs[0],)),
        "REQ-1/0",
        sender="d1",
        to="c1",
    )
    inbox = rt.agent_store("d1")["inbox"]
    assert [m.performative for m in inbox] == [Performative.NOT_UNDERSTOOD]


def test_customer_records_unsolicited_results(baseline_legs):
    rt = Runtime()
    rt.spawn_agent("c1", customer_behaviours())
    rt.spawn_agent("d1", [collector()])
    fire(
        rt,
        Performative.INFORM,
        ReservationResultContent(reservation_id="REQ-1/x", status="confirmed"),
        "REQ-1/0",
        sender="d1",
        to="c1",
    )
    record = rt.agent_store("c1")["conversations"]["REQ-1/0"]
    assert record["result"].status == "confirmed"
    assert rt.agent_store("d1").get("inbox", []) == []
