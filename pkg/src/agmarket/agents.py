"""The three agent types of the market: customer, broker, provider.

Each agent pairs a cyclic perception behaviour with plans spawned per
incoming conversation. Perception maps (performative, body tag) to a plan,
leaves conversations owned by a live plan alone, and answers anything it
cannot place with a not-understood reply. Plans are FSM behaviours whose
states are the capabilities of the owning actor.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from decimal import Decimal
from typing import Mapping, Optional

from .content import (
    AmendmentContent,
    ErrorInfoContent,
    PlanUpdateContent,
    ProposalSetContent,
    RankedOffer,
    RequestContent,
    ReservationRequestContent,
    ReservationResultContent,
    SelectionContent,
)
from .kernel import (
    AgentContext,
    AgentId,
    Behaviour,
    Block,
    FsmSpec,
    PlanInstance,
    TerminalKind,
)
from .market import (
    CENT,
    Amendment,
    AmendmentOutcome,
    CriteriaProfile,
    LegBook,
    MarketError,
    Proposal,
    ProposalStatus,
    RouteLeg,
    TransportRequest,
    apply_amendment,
    compose_itineraries,
    decide_amendment,
    reprice_itinerary,
    score_pool,
    to_money,
)
from .messaging import AclMessage, MessagePattern, Performative

SERVICE_BROKER = "transport-broker"
SERVICE_PROVIDER = "transport-provider"

_NO_BOUNCE = (Performative.FAILURE, Performative.NOT_UNDERSTOOD)


def _ok_fail(states: set[str], initial: str, transitions: dict) -> FsmSpec:
    return FsmSpec(
        states=frozenset(states | {"Ok", "Fail"}),
        initial=initial,
        terminals={"Ok": TerminalKind.OK, "Fail": TerminalKind.FAIL},
        transitions=transitions,
    )


def _active_conversations(store: dict) -> set[str]:
    plans: dict[str, PlanInstance] = store.get("plans", {})
    return {conv for conv, plan in plans.items() if plan.outcome is None}


def _spawn_plan(ctx: AgentContext, label: str, spec: FsmSpec, capabilities, msg: AclMessage) -> None:
    plan = PlanInstance.start(spec, msg.conversation_id, memory={"msg": msg})
    ctx.store.setdefault("plans", {})[msg.conversation_id] = plan
    ctx.add_behaviour(Behaviour.fsm(label, plan, capabilities))


def _bounce(ctx: AgentContext, msg: AclMessage) -> None:
    if msg.performative in _NO_BOUNCE:
        return
    ctx.reply(
        msg,
        Performative.NOT_UNDERSTOOD,
        ErrorInfoContent("not-understood", f"cannot handle {msg.performative.value}({msg.content.tag})"),
    )


def _fresh_record() -> dict:
    return {
        "request_id": None,
        "offers": [],
        "amendments": [],
        "result": None,
        "refusal": None,
        "presented_count": 0,
        "updated_tick": -1,
    }


def _conversation_record(store: dict, conversation_id: str) -> dict:
    return store.setdefault("conversations", {}).setdefault(conversation_id, _fresh_record())


def _record_message(store: dict, msg: AclMessage, tick: int) -> bool:
    """Fold a protocol notification into the customer-side record.

    Returns False when the message is not one of the notification shapes a
    customer is supposed to absorb.
    """
    body = msg.content.body
    rec = None
    if msg.performative is Performative.INFORM and isinstance(body, ProposalSetContent):
        rec = _conversation_record(store, msg.conversation_id)
        rec["request_id"] = body.request_id
        rec["offers"] = list(body.offers)
        rec["presented_count"] += 1
    elif msg.performative is Performative.INFORM and isinstance(body, AmendmentContent):
        rec = _conversation_record(store, msg.conversation_id)
        rec["amendments"].append(body)
    elif msg.performative is Performative.INFORM and isinstance(body, ReservationResultContent):
        rec = _conversation_record(store, msg.conversation_id)
        rec["result"] = body
    elif msg.performative is Performative.REFUSE and isinstance(body, ErrorInfoContent):
        rec = _conversation_record(store, msg.conversation_id)
        rec["refusal"] = body
    if rec is None:
        return False
    rec["updated_tick"] = tick
    return True


# --------------------------------------------------------------------------
# Broker
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class BrokerConfig:
    max_legs: int = 3
    transfer_slack: int = 0
    collect_deadline: int = 20
    reservation_deadline: int = 20


@dataclass
class BrokerCase:
    """Everything the broker remembers about one conversation."""

    request: TransportRequest
    customer: AgentId
    proposals: dict[str, Proposal] = field(default_factory=dict)
    ranked_ids: list[str] = field(default_factory=list)
    provider_legs: dict[str, list[RouteLeg]] = field(default_factory=dict)
    discounts: dict[str, Decimal] = field(default_factory=dict)
    closed: bool = False


def broker_behaviours(config: Optional[BrokerConfig] = None) -> list[Behaviour]:
    cfg = config or BrokerConfig()

    def setup(ctx: AgentContext) -> None:
        ctx.store["config"] = cfg
        ctx.store["cases"] = {}
        ctx.store["plans"] = {}
        ctx.register_service(SERVICE_BROKER)

    def perceive(ctx: AgentContext) -> Optional[Block]:
        while True:
            msg = ctx.receive(exclude_conversations=_active_conversations(ctx.store))
            if msg is None:
                return Block()
            _broker_dispatch(ctx, msg)

    return [Behaviour.one_shot("setup", setup), Behaviour.cyclic("perceive", perceive)]


def _broker_dispatch(ctx: AgentContext, msg: AclMessage) -> None:
    body = msg.content.body
    cases: dict[str, BrokerCase] = ctx.store["cases"]
    case = cases.get(msg.conversation_id)
    if isinstance(body, RequestContent) and msg.performative in (Performative.REQUEST, Performative.INFORM):
        if case is not None and case.proposals and not case.closed:
            _spawn_plan(ctx, "rerank", RERANK_SPEC, RERANK_CAPS, msg)
        else:
            _spawn_plan(ctx, "evaluate", EVALUATE_SPEC, EVALUATE_CAPS, msg)
        return
    if isinstance(body, AmendmentContent) and msg.performative is Performative.REQUEST:
        _spawn_plan(ctx, "amend", AMENDMENT_SPEC, AMENDMENT_CAPS, msg)
        return
    if isinstance(body, SelectionContent) and msg.performative is Performative.INFORM:
        _spawn_plan(ctx, "selection", SELECTION_SPEC, SELECTION_CAPS, msg)
        return
    if isinstance(body, PlanUpdateContent) and msg.performative is Performative.INFORM:
        if case is not None:
            case.provider_legs[body.provider] = list(body.legs)
        return
    if isinstance(body, ErrorInfoContent) and msg.performative is Performative.REFUSE:
        # the customer walked away from the presented offers
        if case is not None:
            case.closed = True
        return
    _bounce(ctx, msg)


def _broker_present(ctx: AgentContext, conversation_id: str, case: BrokerCase) -> None:
    """Rescore the live proposals and push the ranked set to the customer."""
    pool = [p.itinerary for p in case.proposals.values()]
    scored = score_pool(pool, case.request.criteria)
    offers = tuple(
        RankedOffer(scored=s, status=case.proposals[s.itinerary.itinerary_id].status) for s in scored
    )
    case.ranked_ids = [s.itinerary.itinerary_id for s in scored]
    ctx.send(
        Performative.INFORM,
        [case.customer],
        ProposalSetContent(request_id=case.request.request_id, offers=offers),
        conversation_id,
    )


def _cap_validate_requirements(ctx: AgentContext, plan: PlanInstance):
    msg: AclMessage = plan.working_memory["msg"]
    body = msg.content.body
    if not isinstance(body, RequestContent):
        ctx.reply(msg, Performative.REFUSE, ErrorInfoContent("bad-request", "expected a transport request"))
        return "invalid"
    request = body.request
    if not msg.conversation_id.startswith(request.request_id + "/"):
        ctx.reply(
            msg,
            Performative.REFUSE,
            ErrorInfoContent("bad-conversation", "conversation id does not extend the request id"),
        )
        return "invalid"
    plan.working_memory["request"] = request
    plan.working_memory["customer"] = msg.sender
    return "valid"


def _cap_query_providers(ctx: AgentContext, plan: PlanInstance):
    wm = plan.working_memory
    request: TransportRequest = wm["request"]
    entries = ctx.search(SERVICE_PROVIDER)
    wm["legs"] = {}
    wm["discounts"] = {
        e.agent.name: Decimal(e.attribute_map().get("max_discount", "0.10")) for e in entries
    }
    if not entries:
        wm["awaiting"] = set()
        return "no-providers"
    for entry in entries:
        ctx.send(Performative.CFP, [entry.agent], RequestContent(request), plan.conversation_id)
    wm["awaiting"] = {e.agent.name for e in entries}
    cfg: BrokerConfig = ctx.store["config"]
    wm["deadline"] = ctx.tick + cfg.collect_deadline
    return "queried"


def _cap_collect_responses(ctx: AgentContext, plan: PlanInstance):
    wm = plan.working_memory
    awaiting: set = wm["awaiting"]
    while awaiting:
        msg = ctx.receive(MessagePattern(conversation_id=plan.conversation_id))
        if msg is None:
            break
        body = msg.content.body
        if msg.performative is Performative.PROPOSE and isinstance(body, PlanUpdateContent):
            wm["legs"][body.provider] = list(body.legs)
            awaiting.discard(msg.sender.name)
        elif msg.performative is Performative.REFUSE and isinstance(body, ErrorInfoContent):
            awaiting.discard(msg.sender.name)
        else:
            ctx.note_failure(plan.conversation_id, f"unexpected reply while collecting: {msg.performative.value}")
    if not awaiting:
        return "collected"
    if ctx.tick >= wm["deadline"]:
        ctx.note_failure(plan.conversation_id, f"cfp deadline expired, missing {sorted(awaiting)}")
        return "collected"
    return Block(wake_at=wm["deadline"])


def _cap_compose_and_rank(ctx: AgentContext, plan: PlanInstance):
    wm = plan.working_memory
    request: TransportRequest = wm["request"]
    cfg: BrokerConfig = ctx.store["config"]
    legs = [leg for provider in sorted(wm["legs"]) for leg in wm["legs"][provider]]
    itineraries = compose_itineraries(legs, request, max_legs=cfg.max_legs, transfer_slack=cfg.transfer_slack)
    case = BrokerCase(request=request, customer=wm["customer"])
    case.provider_legs = dict(wm["legs"])
    case.discounts = dict(wm["discounts"])
    for itinerary in itineraries:
        case.proposals[itinerary.itinerary_id] = Proposal(request_id=request.request_id, itinerary=itinerary)
    ctx.store["cases"][plan.conversation_id] = case
    return "ranked"


def _cap_present_results(ctx: AgentContext, plan: PlanInstance):
    case: BrokerCase = ctx.store["cases"][plan.conversation_id]
    _broker_present(ctx, plan.conversation_id, case)
    return "presented"


EVALUATE_SPEC = _ok_fail(
    {"ValidateRequirements", "QueryProviders", "CollectResponses", "ComposeAndRank", "PresentResults"},
    "ValidateRequirements",
    {
        ("ValidateRequirements", "valid"): "QueryProviders",
        ("ValidateRequirements", "invalid"): "Fail",
        ("QueryProviders", "queried"): "CollectResponses",
        ("QueryProviders", "no-providers"): "ComposeAndRank",
        ("CollectResponses", "collected"): "ComposeAndRank",
        ("ComposeAndRank", "ranked"): "PresentResults",
        ("PresentResults", "presented"): "Ok",
    },
)

EVALUATE_CAPS = {
    "ValidateRequirements": _cap_validate_requirements,
    "QueryProviders": _cap_query_providers,
    "CollectResponses": _cap_collect_responses,
    "ComposeAndRank": _cap_compose_and_rank,
    "PresentResults": _cap_present_results,
}


def _cap_rescore_and_present(ctx: AgentContext, plan: PlanInstance):
    msg: AclMessage = plan.working_memory["msg"]
    body = msg.content.body
    case: BrokerCase = ctx.store["cases"][plan.conversation_id]
    if not isinstance(body, RequestContent) or body.request.request_id != case.request.request_id:
        ctx.reply(msg, Performative.REFUSE, ErrorInfoContent("bad-request", "criteria update does not match the case"))
        return "invalid"
    # a reweight adjusts preferences only; hard constraints stay as posted
    case.request = replace(case.request, criteria=body.request.criteria)
    _broker_present(ctx, plan.conversation_id, case)
    return "presented"


RERANK_SPEC = _ok_fail(
    {"RescoreAndPresent"},
    "RescoreAndPresent",
    {
        ("RescoreAndPresent", "presented"): "Ok",
        ("RescoreAndPresent", "invalid"): "Fail",
    },
)

RERANK_CAPS = {"RescoreAndPresent": _cap_rescore_and_present}


def _cap_validate_amendment(ctx: AgentContext, plan: PlanInstance):
    wm = plan.working_memory
    msg: AclMessage = wm["msg"]
    body: AmendmentContent = msg.content.body
    amendment = body.amendment
    wm["amendment"] = amendment
    case: Optional[BrokerCase] = ctx.store["cases"].get(plan.conversation_id)
    if case is None or amendment.itinerary_id not in case.proposals:
        wm["outcome"] = AmendmentOutcome(False, None, "unknown itinerary")
        return "rejected"
    wm["case"] = case
    if amendment.request_id != case.request.request_id:
        wm["outcome"] = AmendmentOutcome(False, None, "request id mismatch")
        return "rejected"
    proposal = case.proposals[amendment.itinerary_id]
    try:
        outcome = decide_amendment(proposal, amendment, case.discounts)
    except MarketError as exc:
        wm["outcome"] = AmendmentOutcome(False, None, str(exc))
        return "rejected"
    wm["outcome"] = outcome
    if not outcome.accepted:
        return "rejected"
    if amendment.criterion != "cost" or outcome.granted == proposal.itinerary.total_cost:
        return "granted-local"
    wm["repriced"] = reprice_itinerary(proposal.itinerary, to_money(outcome.granted))
    return "needs-consent"


def _cap_forward_to_providers(ctx: AgentContext, plan: PlanInstance):
    wm = plan.working_memory
    repriced = wm["repriced"]
    amendment: Amendment = wm["amendment"]
    outcome: AmendmentOutcome = wm["outcome"]
    providers = repriced.providers()
    for provider in providers:
        legs = tuple(leg for leg in repriced.legs if leg.provider == provider)
        ctx.send(
            Performative.REQUEST,
            [provider],
            AmendmentContent(amendment=amendment, outcome=outcome, legs=legs),
            plan.conversation_id,
        )
    wm["awaiting"] = set(providers)
    cfg: BrokerConfig = ctx.store["config"]
    wm["deadline"] = ctx.tick + cfg.collect_deadline
    return "forwarded"


def _cap_collect_decisions(ctx: AgentContext, plan: PlanInstance):
    wm = plan.working_memory
    awaiting: set = wm["awaiting"]
    while awaiting:
        msg = ctx.receive(MessagePattern(conversation_id=plan.conversation_id))
        if msg is None:
            break
        if msg.performative is Performative.ACCEPT_PROPOSAL and msg.sender.name in awaiting:
            awaiting.discard(msg.sender.name)
        elif msg.performative is Performative.REJECT_PROPOSAL and msg.sender.name in awaiting:
            body = msg.content.body
            reason = body.outcome.reason if isinstance(body, AmendmentContent) and body.outcome else "declined"
            wm["veto"] = f"{msg.sender.name}: {reason}"
            awaiting.discard(msg.sender.name)
        else:
            ctx.note_failure(plan.conversation_id, f"unexpected reply while consenting: {msg.performative.value}")
    if not awaiting:
        return "decided"
    if ctx.tick >= wm["deadline"]:
        wm["veto"] = f"no answer from {sorted(awaiting)}"
        return "decided"
    return Block(wake_at=wm["deadline"])


def _cap_apply_and_notify(ctx: AgentContext, plan: PlanInstance):
    wm = plan.working_memory
    msg: AclMessage = wm["msg"]
    amendment: Amendment = wm["amendment"]
    outcome: AmendmentOutcome = wm["outcome"]
    case: Optional[BrokerCase] = wm.get("case")
    if wm.get("veto"):
        outcome = AmendmentOutcome(False, None, f"provider declined: {wm['veto']}")
    if outcome.accepted and case is not None:
        proposal = case.proposals[amendment.itinerary_id]
        case.proposals[amendment.itinerary_id] = apply_amendment(proposal, amendment, outcome)
    ctx.reply(msg, Performative.INFORM, AmendmentContent(amendment=amendment, outcome=outcome))
    if case is not None:
        _broker_present(ctx, plan.conversation_id, case)
    return "notified"


AMENDMENT_SPEC = _ok_fail(
    {"ValidateAmendment", "ForwardToProviders", "CollectDecisions", "ApplyAndNotify"},
    "ValidateAmendment",
    {
        ("ValidateAmendment", "rejected"): "ApplyAndNotify",
        ("ValidateAmendment", "granted-local"): "ApplyAndNotify",
        ("ValidateAmendment", "needs-consent"): "ForwardToProviders",
        ("ForwardToProviders", "forwarded"): "CollectDecisions",
        ("CollectDecisions", "decided"): "ApplyAndNotify",
        ("ApplyAndNotify", "notified"): "Ok",
    },
)

AMENDMENT_CAPS = {
    "ValidateAmendment": _cap_validate_amendment,
    "ForwardToProviders": _cap_forward_to_providers,
    "CollectDecisions": _cap_collect_decisions,
    "ApplyAndNotify": _cap_apply_and_notify,
}


def _cap_validate_selection(ctx: AgentContext, plan: PlanInstance):
    wm = plan.working_memory
    msg: AclMessage = wm["msg"]
    body: SelectionContent = msg.content.body
    case: Optional[BrokerCase] = ctx.store["cases"].get(plan.conversation_id)
    if case is None or body.itinerary_id not in case.proposals:
        wm["final_status"] = "refused"
        wm["reason"] = "unknown itinerary"
        return "invalid"
    proposal = case.proposals[body.itinerary_id]
    if proposal.status in (ProposalStatus.SELECTED, ProposalStatus.CONFIRMED):
        wm["final_status"] = "refused"
        wm["reason"] = "already being reserved"
        return "invalid"
    wm["case"] = case
    wm["itinerary_id"] = body.itinerary_id
    wm["prior_status"] = proposal.status
    wm["itinerary"] = proposal.itinerary
    case.proposals[body.itinerary_id] = replace(proposal, status=ProposalStatus.SELECTED)
    return "valid"


def _cap_request_reservations(ctx: AgentContext, plan: PlanInstance):
    wm = plan.working_memory
    case: BrokerCase = wm["case"]
    itinerary = wm["itinerary"]
    cargo = case.request.constraints.cargo_size
    base = f"{case.request.request_id}/{wm['itinerary_id']}"
    wm["reservation_ids"] = {}
    for provider in itinerary.providers():
        leg_ids = tuple(leg.leg_id for leg in itinerary.legs if leg.provider == provider)
        reservation_id = f"{base}/{provider}"
        wm["reservation_ids"][provider] = (reservation_id, leg_ids)
        ctx.send(
            Performative.REQUEST,
            [provider],
            ReservationRequestContent(
                reservation_id=reservation_id,
                request_id=case.request.request_id,
                leg_ids=leg_ids,
                units=cargo,
            ),
            plan.conversation_id,
        )
    wm["awaiting"] = set(itinerary.providers())
    wm["confirmed"] = {}
    wm["failures"] = {}
    cfg: BrokerConfig = ctx.store["config"]
    wm["deadline"] = ctx.tick + cfg.reservation_deadline
    return "requested"


def _cap_await_confirmations(ctx: AgentContext, plan: PlanInstance):
    wm = plan.working_memory
    awaiting: set = wm["awaiting"]
    case: BrokerCase = wm["case"]
    while awaiting:
        msg = ctx.receive(MessagePattern(conversation_id=plan.conversation_id))
        if msg is None:
            break
        body = msg.content.body
        if msg.performative is Performative.CONFIRM and isinstance(body, ReservationResultContent):
            wm["confirmed"][msg.sender.name] = body.reservation_id
            awaiting.discard(msg.sender.name)
        elif msg.performative is Performative.REFUSE and isinstance(body, ReservationResultContent):
            wm["failures"][msg.sender.name] = body.reason or "refused"
            awaiting.discard(msg.sender.name)
        elif msg.performative is Performative.INFORM and isinstance(body, PlanUpdateContent):
            case.provider_legs[body.provider] = list(body.legs)
        else:
            ctx.note_failure(plan.conversation_id, f"unexpected reply while reserving: {msg.performative.value}")
    if awaiting and ctx.tick < wm["deadline"]:
        return Block(wake_at=wm["deadline"])
    for provider in sorted(awaiting):
        wm["failures"][provider] = "no answer before the deadline"
    awaiting.clear()
    if not wm["failures"]:
        return "all-confirmed"
    if wm["confirmed"]:
        return "partial"
    return "none-confirmed"


def _cap_rollback_reservations(ctx: AgentContext, plan: PlanInstance):
    wm = plan.working_memory
    if "await_release" not in wm:
        for provider in sorted(wm["confirmed"]):
            reservation_id, leg_ids = wm["reservation_ids"][provider]
            ctx.send(
                Performative.REJECT_PROPOSAL,
                [provider],
                ReservationRequestContent(
                    reservation_id=reservation_id,
                    request_id=wm["case"].request.request_id,
                    leg_ids=leg_ids,
                    units=wm["case"].request.constraints.cargo_size,
                ),
                plan.conversation_id,
            )
        wm["await_release"] = set(wm["confirmed"])
        cfg: BrokerConfig = ctx.store["config"]
        wm["release_deadline"] = ctx.tick + cfg.reservation_deadline
    awaiting: set = wm["await_release"]
    while awaiting:
        msg = ctx.receive(MessagePattern(conversation_id=plan.conversation_id))
        if msg is None:
            break
        body = msg.content.body
        if msg.performative is Performative.CONFIRM and isinstance(body, ReservationResultContent):
            awaiting.discard(msg.sender.name)
        else:
            ctx.note_failure(plan.conversation_id, f"unexpected reply while rolling back: {msg.performative.value}")
    if awaiting and ctx.tick < wm["release_deadline"]:
        return Block(wake_at=wm["release_deadline"])
    if awaiting:
        ctx.note_failure(plan.conversation_id, f"release unconfirmed by {sorted(awaiting)}")
        awaiting.clear()
    return "rolled-back"


def _cap_notify_outcome(ctx: AgentContext, plan: PlanInstance):
    wm = plan.working_memory
    msg: AclMessage = wm["msg"]
    body: SelectionContent = msg.content.body
    case: Optional[BrokerCase] = wm.get("case")
    itinerary = wm.get("itinerary")
    success = "final_status" not in wm and not wm.get("failures")
    if success:
        status, reason = "confirmed", ""
        case.proposals[wm["itinerary_id"]] = replace(
            case.proposals[wm["itinerary_id"]], status=ProposalStatus.CONFIRMED
        )
    else:
        if "final_status" in wm:
            status, reason = wm["final_status"], wm.get("reason", "")
        elif wm.get("confirmed"):
            status = "released"
            reason = "; ".join(f"{p}: {r}" for p, r in sorted(wm["failures"].items()))
        else:
            status = "refused"
            reason = "; ".join(f"{p}: {r}" for p, r in sorted(wm["failures"].items()))
        if case is not None and "itinerary_id" in wm:
            case.proposals[wm["itinerary_id"]] = replace(
                case.proposals[wm["itinerary_id"]], status=wm["prior_status"]
            )
    leg_ids = tuple(leg.leg_id for leg in itinerary.legs) if itinerary is not None else ()
    ctx.reply(
        msg,
        Performative.INFORM,
        ReservationResultContent(
            reservation_id=f"{body.request_id}/{body.itinerary_id}",
            status=status,
            leg_ids=leg_ids,
            reason=reason,
        ),
    )
    if case is not None:
        case.closed = success
    return "notified-ok" if success else "notified-fail"


SELECTION_SPEC = _ok_fail(
    {
        "ValidateSelection",
        "RequestReservations",
        "AwaitConfirmations",
        "RollbackReservations",
        "NotifyOutcome",
    },
    "ValidateSelection",
    {
        ("ValidateSelection", "valid"): "RequestReservations",
        ("ValidateSelection", "invalid"): "NotifyOutcome",
        ("RequestReservations", "requested"): "AwaitConfirmations",
        ("AwaitConfirmations", "all-confirmed"): "NotifyOutcome",
        ("AwaitConfirmations", "partial"): "RollbackReservations",
        ("AwaitConfirmations", "none-confirmed"): "NotifyOutcome",
        ("RollbackReservations", "rolled-back"): "NotifyOutcome",
        ("NotifyOutcome", "notified-ok"): "Ok",
        ("NotifyOutcome", "notified-fail"): "Fail",
    },
)

SELECTION_CAPS = {
    "ValidateSelection": _cap_validate_selection,
    "RequestReservations": _cap_request_reservations,
    "AwaitConfirmations": _cap_await_confirmations,
    "RollbackReservations": _cap_rollback_reservations,
    "NotifyOutcome": _cap_notify_outcome,
}


# --------------------------------------------------------------------------
# Provider
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ProviderConfig:
    legs: tuple[RouteLeg, ...]
    max_discount: Decimal = Decimal("0.10")
    probe_target: Optional[str] = None


def provider_behaviours(config: ProviderConfig) -> list[Behaviour]:
    def setup(ctx: AgentContext) -> None:
        ctx.store["book"] = LegBook(config.legs)
        ctx.store["max_discount"] = config.max_discount
        ctx.store["probe_target"] = config.probe_target
        ctx.store["probed"] = False
        ctx.store["reservations"] = {}
        ctx.store["plans"] = {}
        ctx.register_service(SERVICE_PROVIDER, {"max_discount": str(config.max_discount)})

    def perceive(ctx: AgentContext) -> Optional[Block]:
        while True:
            msg = ctx.receive()
            if msg is None:
                return Block()
            _provider_dispatch(ctx, msg)

    return [Behaviour.one_shot("setup", setup), Behaviour.cyclic("perceive", perceive)]


def _provider_dispatch(ctx: AgentContext, msg: AclMessage) -> None:
    body = msg.content.body
    if msg.performative is Performative.CFP and isinstance(body, RequestContent):
        _spawn_provider_plan(ctx, "offer", "ComposeOffer", _cap_compose_offer, msg)
        return
    if msg.performative is Performative.REQUEST and isinstance(body, ReservationRequestContent):
        _spawn_provider_plan(ctx, "reserve", "HandleReservation", _cap_handle_reservation, msg)
        return
    if msg.performative is Performative.REJECT_PROPOSAL and isinstance(body, ReservationRequestContent):
        _spawn_provider_plan(ctx, "release", "HandleRelease", _cap_handle_release, msg)
        return
    if msg.performative is Performative.REQUEST and isinstance(body, AmendmentContent):
        _spawn_provider_plan(ctx, "consider", "ConsiderAmendment", _cap_consider_amendment, msg)
        return
    _bounce(ctx, msg)


def _spawn_provider_plan(ctx: AgentContext, label: str, state: str, capability, msg: AclMessage) -> None:
    spec = _ok_fail({state}, state, {(state, "done"): "Ok"})
    plan = PlanInstance.start(spec, msg.conversation_id, memory={"msg": msg})
    ctx.add_behaviour(Behaviour.fsm(label, plan, {state: capability}))


def _cap_compose_offer(ctx: AgentContext, plan: PlanInstance):
    msg: AclMessage = plan.working_memory["msg"]
    request: TransportRequest = msg.content.body.request
    book: LegBook = ctx.store["book"]
    window = request.constraints
    legs = tuple(
        replace(leg, capacity=book.remaining(leg.leg_id))
        for leg in book.legs()
        if leg.depart >= window.earliest_departure and leg.arrive <= window.latest_arrival
    )
    target = ctx.store.get("probe_target")
    if target and not ctx.store["probed"]:
        # deliberate off-model message used to exercise conformance checking
        ctx.store["probed"] = True
        ctx.send(
            Performative.INFORM,
            [target],
            ErrorInfoContent("probe", "direct line check"),
            f"probe/{ctx.agent.name}/0",
        )
    if legs:
        ctx.reply(msg, Performative.PROPOSE, PlanUpdateContent(provider=ctx.agent.name, legs=legs))
    else:
        ctx.reply(msg, Performative.REFUSE, ErrorInfoContent("no-offer", "no legs inside the requested window"))
    return "done"


def _cap_handle_reservation(ctx: AgentContext, plan: PlanInstance):
    msg: AclMessage = plan.working_memory["msg"]
    body: ReservationRequestContent = msg.content.body
    book: LegBook = ctx.store["book"]
    taken: list[str] = []
    try:
        for leg_id in body.leg_ids:
            key = f"{body.reservation_id}:{leg_id}"
            book.reserve(leg_id, key, body.units)
            taken.append(key)
    except MarketError as exc:
        for key in taken:
            book.release(key)
        ctx.reply(
            msg,
            Performative.REFUSE,
            ReservationResultContent(
                reservation_id=body.reservation_id,
                status="refused",
                leg_ids=body.leg_ids,
                reason=str(exc),
            ),
        )
        return "done"
    ctx.store["reservations"][body.reservation_id] = taken
    ctx.reply(
        msg,
        Performative.CONFIRM,
        ReservationResultContent(
            reservation_id=body.reservation_id,
            status="confirmed",
            leg_ids=body.leg_ids,
        ),
    )
    updated = tuple(replace(book.leg(l), capacity=book.remaining(l)) for l in body.leg_ids)
    ctx.reply(
        msg,
        Performative.INFORM,
        PlanUpdateContent(provider=ctx.agent.name, legs=updated, note="capacity update"),
    )
    return "done"


def _cap_handle_release(ctx: AgentContext, plan: PlanInstance):
    msg: AclMessage = plan.working_memory["msg"]
    body: ReservationRequestContent = msg.content.body
    book: LegBook = ctx.store["book"]
    keys = ctx.store["reservations"].pop(body.reservation_id, None)
    reason = ""
    if keys:
        for key in keys:
            book.release(key)
    else:
        reason = "not held"
    ctx.reply(
        msg,
        Performative.CONFIRM,
        ReservationResultContent(
            reservation_id=body.reservation_id,
            status="released",
            leg_ids=body.leg_ids,
            reason=reason,
        ),
    )
    return "done"


def _cap_consider_amendment(ctx: AgentContext, plan: PlanInstance):
    msg: AclMessage = plan.working_memory["msg"]
    body: AmendmentContent = msg.content.body
    book: LegBook = ctx.store["book"]
    discount: Decimal = ctx.store["max_discount"]
    verdict: Optional[str] = None
    if body.amendment.criterion != "cost" or not body.legs or body.outcome is None:
        verdict = "cannot assess the proposed terms"
    else:
        for leg in body.legs:
            try:
                listed = book.leg(leg.leg_id).cost
            except MarketError:
                verdict = f"unknown leg {leg.leg_id}"
                break
            # one cent of slack absorbs proportional-repricing rounding
            floor = (listed * (Decimal(1) - discount)).quantize(CENT) - CENT
            if leg.cost < floor:
                verdict = f"leg {leg.leg_id} priced below my floor"
                break
    if verdict is None:
        ctx.reply(msg, Performative.ACCEPT_PROPOSAL, AmendmentContent(body.amendment, body.outcome))
    else:
        ctx.reply(
            msg,
            Performative.REJECT_PROPOSAL,
            AmendmentContent(body.amendment, AmendmentOutcome(False, None, verdict)),
        )
    return "done"


# --------------------------------------------------------------------------
# Customer
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class CustomerConfig:
    script: tuple[Mapping, ...] = ()


def customer_behaviours(config: Optional[CustomerConfig] = None) -> list[Behaviour]:
    cfg = config or CustomerConfig()

    def setup(ctx: AgentContext) -> None:
        ctx.store["conversations"] = {}
        ctx.store["plans"] = {}
        ctx.store["conversation_counter"] = 0
        if cfg.script:
            spec, caps, conversation_id = build_script_plan(ctx.agent.name, cfg.script)
            plan = PlanInstance.start(spec, conversation_id)
            ctx.store["plans"][conversation_id] = plan
            ctx.add_behaviour(Behaviour.fsm("script", plan, caps))

    def perceive(ctx: AgentContext) -> Optional[Block]:
        while True:
            msg = ctx.receive(exclude_conversations=_active_conversations(ctx.store))
            if msg is None:
                return Block()
            if not _record_message(ctx.store, msg, ctx.tick):
                _bounce(ctx, msg)

    return [Behaviour.one_shot("setup", setup), Behaviour.cyclic("perceive", perceive)]


class ScriptError(Exception):
    pass


_SCRIPT_ACTIONS = (
    "request",
    "await_proposals",
    "reweight",
    "amend",
    "await_amendment",
    "select",
    "await_result",
    "give_up_if_empty",
    "pause",
    "probe",
)


def _resolve_offer(offers: list, ref) -> Optional[str]:
    """Turn a script itinerary reference into an itinerary id."""
    if ref == "best":
        return offers[0].scored.itinerary.itinerary_id if offers else None
    if isinstance(ref, int):
        for offer in offers:
            if offer.scored.rank == ref:
                return offer.scored.itinerary.itinerary_id
        return None
    for offer in offers:
        if offer.scored.itinerary.itinerary_id == ref:
            return ref
    return None


def build_script_plan(agent_name: str, script):
    """Compile a scenario script into an FSM plan over one conversation.

    Each step becomes one state; "done" advances, and the failure-shaped
    events route to the Fail terminal explicitly so an unhappy ending does
    not masquerade as a protocol error.
    """
    steps = list(script)
    if not steps:
        raise ScriptError("script has no steps")
    requests = [s for s in steps if s.get("action") == "request"]
    if len(requests) != 1:
        raise ScriptError("script must contain exactly one request step")
    for step in steps:
        if step.get("action") not in _SCRIPT_ACTIONS:
            raise ScriptError(f"unknown script action {step.get('action')!r}")
        if step.get("action") == "probe" and not step.get("target"):
            raise ScriptError("probe step needs a target")
    request = TransportRequest.from_dict(requests[0]["request"])
    conversation_id = f"{request.request_id}/0"

    names = [f"s{i}.{step['action']}" for i, step in enumerate(steps)]
    transitions: dict[tuple[str, str], str] = {}
    for i, name in enumerate(names):
        nxt = names[i + 1] if i + 1 < len(names) else "Ok"
        transitions[(name, "done")] = nxt
        for bad in ("failed", "refused", "gave-up"):
            transitions[(name, bad)] = "Fail"
    spec = _ok_fail(set(names), names[0], transitions)

    caps = {}
    probe_seen = 0
    for i, (name, step) in enumerate(zip(names, steps)):
        caps[name] = _script_capability(i, step, request, conversation_id, probe_seen)
        if step.get("action") == "probe":
            probe_seen += 1
    return spec, caps, conversation_id


def _script_capability(
    index: int, step: Mapping, request: TransportRequest, conversation_id: str, probe_ordinal: int = 0
):
    action = step["action"]

    def cap(ctx: AgentContext, plan: PlanInstance):
        wm = plan.working_memory
        store = ctx.store
        rec = _conversation_record(store, conversation_id)

        if action == "request":
            brokers = ctx.search(SERVICE_BROKER)
            if not brokers:
                return "failed"
            wm["broker"] = brokers[0].agent
            wm["request"] = request
            rec["request_id"] = request.request_id
            ctx.send(Performative.REQUEST, [wm["broker"]], RequestContent(request), conversation_id)
            return "done"

        if action == "reweight":
            updated = replace(wm["request"], criteria=CriteriaProfile.from_dict(step["criteria"]))
            wm["request"] = updated
            ctx.send(Performative.REQUEST, [wm["broker"]], RequestContent(updated), conversation_id)
            return "done"

        if action == "amend":
            target_ref = step.get("itinerary", "best")
            itinerary_id = _resolve_offer(rec["offers"], target_ref)
            if itinerary_id is None:
                return "failed"
            criterion = step["criterion"]
            target = to_money(step["target"]) if criterion == "cost" else int(step["target"])
            amendment = Amendment(
                request_id=request.request_id,
                itinerary_id=itinerary_id,
                criterion=criterion,
                target=target,
            )
            ctx.send(Performative.REQUEST, [wm["broker"]], AmendmentContent(amendment), conversation_id)
            return "done"

        if action == "select":
            itinerary_id = _resolve_offer(rec["offers"], step.get("itinerary", "best"))
            if itinerary_id is None:
                return "failed"
            wm["selected"] = itinerary_id
            ctx.send(
                Performative.INFORM,
                [wm["broker"]],
                SelectionContent(request_id=request.request_id, itinerary_id=itinerary_id),
                conversation_id,
            )
            return "done"

        if action == "give_up_if_empty":
            if rec["offers"]:
                return "done"
            ctx.send(
                Performative.REFUSE,
                [wm["broker"]],
                ErrorInfoContent("no-offer-acceptable", "no admissible itinerary was presented"),
                conversation_id,
            )
            return "gave-up"

        if action == "pause":
            key = f"pause_until_{index}"
            if key not in wm:
                wm[key] = ctx.tick + int(step.get("ticks", 1))
            if ctx.tick < wm[key]:
                return Block(wake_at=wm[key])
            return "done"

        if action == "probe":
            # deliberate off-model message used to exercise conformance checking
            ctx.send(
                Performative.INFORM,
                [step["target"]],
                ErrorInfoContent("probe", "direct line check"),
                f"probe/{ctx.agent.name}/{probe_ordinal}",
            )
            return "done"

        # the awaiting steps share a drain loop over this conversation
        while True:
            msg = ctx.receive(MessagePattern(conversation_id=conversation_id))
            if msg is None:
                return Block()
            recorded = _record_message(store, msg, ctx.tick)
            body = msg.content.body
            if action == "await_proposals":
                if isinstance(body, ProposalSetContent):
                    return "done"
                if msg.performative is Performative.REFUSE and isinstance(body, ErrorInfoContent):
                    return "refused"
            elif action == "await_amendment":
                if isinstance(body, AmendmentContent) and msg.performative is Performative.INFORM:
                    return "done"
            elif action == "await_result":
                if isinstance(body, ReservationResultContent) and msg.performative is Performative.INFORM:
                    return "done" if body.status == "confirmed" else "failed"
            if not recorded:
                ctx.note_failure(conversation_id, f"unexpected {msg.performative.value} while {action}")

    return cap
