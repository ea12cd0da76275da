"""Market protocol rules and the conversation trace validator.

The protocol has two phases. Negotiation: the customer opens with a
transport request, the broker fans out calls for proposals, providers
answer, and the broker presents a ranked proposal set; the customer may
reweight criteria or request amendments, each round ending in a fresh
presentation. Reservation: after the customer's selection the broker books
legs with every involved provider, rolling back confirmed holds when any
refuses, and closes the conversation with the overall result.

The validator replays a recorded trace one conversation at a time and
grades each as Ok, Failed, Incomplete, or Invalid.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Optional, Sequence

from . import content
from .messaging import Performative, TraceEvent

CUSTOMER = "Customer"
BROKER = "Broker"
PROVIDER = "Provider"

TRANSPORT_REQUEST = content.RequestContent.TAG
PROPOSAL_SET = content.ProposalSetContent.TAG
SELECTION = content.SelectionContent.TAG
AMENDMENT = content.AmendmentContent.TAG
RESERVATION_REQUEST = content.ReservationRequestContent.TAG
RESERVATION_RESULT = content.ReservationResultContent.TAG
PLAN_UPDATE = content.PlanUpdateContent.TAG
ERROR_INFO = content.ErrorInfoContent.TAG

# Every (performative, body tag) pair the protocol permits on the wire.
ALLOWED_BODIES: frozenset[tuple[Performative, str]] = frozenset(
    {
        (Performative.REQUEST, TRANSPORT_REQUEST),
        (Performative.INFORM, TRANSPORT_REQUEST),
        (Performative.CFP, TRANSPORT_REQUEST),
        (Performative.PROPOSE, PLAN_UPDATE),
        (Performative.REFUSE, ERROR_INFO),
        (Performative.REFUSE, RESERVATION_RESULT),
        (Performative.INFORM, PROPOSAL_SET),
        (Performative.INFORM, AMENDMENT),
        (Performative.INFORM, SELECTION),
        (Performative.INFORM, PLAN_UPDATE),
        (Performative.INFORM, RESERVATION_RESULT),
        (Performative.REQUEST, AMENDMENT),
        (Performative.REQUEST, RESERVATION_REQUEST),
        (Performative.ACCEPT_PROPOSAL, AMENDMENT),
        (Performative.REJECT_PROPOSAL, AMENDMENT),
        (Performative.REJECT_PROPOSAL, RESERVATION_REQUEST),
        (Performative.CONFIRM, RESERVATION_RESULT),
        (Performative.FAILURE, ERROR_INFO),
        (Performative.NOT_UNDERSTOOD, ERROR_INFO),
    }
)


def performative_allows(performative: Performative, tag: str) -> bool:
    return (performative, tag) in ALLOWED_BODIES


class ConversationOutcome(Enum):
    OK = "ok"
    FAILED = "failed"
    INCOMPLETE = "incomplete"
    INVALID = "invalid"


@dataclass(frozen=True)
class ConversationReport:
    conversation_id: str
    outcome: ConversationOutcome
    detail: str
    events_seen: int

    def to_dict(self) -> dict:
        return {
            "conversation_id": self.conversation_id,
            "outcome": self.outcome.value,
            "detail": self.detail,
            "events_seen": self.events_seen,
        }


class _Phase(Enum):
    OPEN = "open"
    NEGOTIATION = "negotiation"
    RESERVATION = "reservation"
    CLOSED = "closed"


def _result_status(event: TraceEvent) -> str:
    """The reservation status is the last token of the body summary."""
    parts = event.content_summary.split()
    return parts[-1] if parts else ""


class _ConversationState:
    def __init__(self, conversation_id: str):
        self.conversation_id = conversation_id
        self.phase = _Phase.OPEN
        self.presented = False
        self.events_seen = 0
        self.outcome: Optional[ConversationOutcome] = None
        self.detail = ""

    def _invalid(self, event: TraceEvent, why: str) -> None:
        self.outcome = ConversationOutcome.INVALID
        self.detail = f"seq {event.seq}: {why}"

    def _close(self, outcome: ConversationOutcome, detail: str) -> None:
        self.phase = _Phase.CLOSED
        self.outcome = outcome
        self.detail = detail

    def feed(self, event: TraceEvent, src: str, dst: str) -> None:
        if self.outcome is ConversationOutcome.INVALID:
            return
        self.events_seen += 1
        perf, tag = event.performative, event.content_tag
        if not performative_allows(perf, tag):
            self._invalid(event, f"{perf.value} may not carry {tag}")
            return
        if self.phase is _Phase.OPEN:
            if src == CUSTOMER and dst == BROKER and tag == TRANSPORT_REQUEST and perf in (
                Performative.REQUEST,
                Performative.INFORM,
            ):
                self.phase = _Phase.NEGOTIATION
                return
            self._invalid(event, "conversation must open with a customer transport request")
            return
        if self.phase is _Phase.NEGOTIATION:
            self._feed_negotiation(event, src, dst, perf, tag)
            return
        if self.phase is _Phase.RESERVATION:
            self._feed_reservation(event, src, dst, perf, tag)
            return
        self._invalid(event, "traffic after the conversation closed")

    def _feed_negotiation(self, event, src, dst, perf, tag) -> None:
        if src == BROKER and dst == PROVIDER and perf is Performative.CFP:
            return
        if src == PROVIDER and dst == BROKER and perf is Performative.PROPOSE:
            return
        if src == PROVIDER and dst == BROKER and perf is Performative.REFUSE and tag == ERROR_INFO:
            return
        if src == BROKER and dst == CUSTOMER and perf is Performative.INFORM and tag == PROPOSAL_SET:
            self.presented = True
            return
        if src == BROKER and dst == CUSTOMER and perf is Performative.REFUSE and tag == ERROR_INFO:
            self._close(ConversationOutcome.FAILED, "broker refused the request")
            return
        if src == CUSTOMER and dst == BROKER and tag == TRANSPORT_REQUEST and perf in (
            Performative.REQUEST,
            Performative.INFORM,
        ):
            if not self.presented:
                self._invalid(event, "criteria update before any presentation")
            return
        if src == CUSTOMER and dst == BROKER and perf is Performative.REQUEST and tag == AMENDMENT:
            if not self.presented:
                self._invalid(event, "amendment before any presentation")
            return
        if src == BROKER and dst == PROVIDER and perf is Performative.REQUEST and tag == AMENDMENT:
            return
        if src == PROVIDER and dst == BROKER and tag == AMENDMENT and perf in (
            Performative.ACCEPT_PROPOSAL,
            Performative.REJECT_PROPOSAL,
        ):
            return
        if src == BROKER and dst == CUSTOMER and perf is Performative.INFORM and tag == AMENDMENT:
            return
        if src == CUSTOMER and dst == BROKER and perf is Performative.REFUSE and tag == ERROR_INFO:
            if self.presented:
                self._close(ConversationOutcome.FAILED, "customer declined every offer")
            else:
                self._invalid(event, "customer refusal before any presentation")
            return
        if src == CUSTOMER and dst == BROKER and perf is Performative.INFORM and tag == SELECTION:
            if self.presented:
                self.phase = _Phase.RESERVATION
            else:
                self._invalid(event, "selection before any presentation")
            return
        self._invalid(event, f"unexpected {perf.value}({tag}) from {src} to {dst} during negotiation")

    def _feed_reservation(self, event, src, dst, perf, tag) -> None:
        if src == BROKER and dst == PROVIDER and perf is Performative.REQUEST and tag == RESERVATION_REQUEST:
            return
        if src == BROKER and dst == PROVIDER and perf is Performative.REJECT_PROPOSAL and tag == RESERVATION_REQUEST:
            return
        if src == PROVIDER and dst == BROKER and tag == RESERVATION_RESULT and perf in (
            Performative.CONFIRM,
            Performative.REFUSE,
        ):
            return
        if src == PROVIDER and dst == BROKER and perf is Performative.INFORM and tag == PLAN_UPDATE:
            return
        if src == BROKER and dst == CUSTOMER and perf is Performative.INFORM and tag == RESERVATION_RESULT:
            status = _result_status(event)
            if status == "confirmed":
                self._close(ConversationOutcome.OK, "reservation confirmed")
            else:
                self._close(ConversationOutcome.FAILED, f"reservation {status or 'failed'}")
            return
        self._invalid(event, f"unexpected {perf.value}({tag}) from {src} to {dst} during reservation")

    def report(self) -> ConversationReport:
        if self.outcome is not None:
            return ConversationReport(self.conversation_id, self.outcome, self.detail, self.events_seen)
        return ConversationReport(
            self.conversation_id,
            ConversationOutcome.INCOMPLETE,
            f"ended during {self.phase.value}",
            self.events_seen,
        )


def validate_trace(
    events: Sequence[TraceEvent],
    actor_of: Mapping[str, str],
) -> dict[str, ConversationReport]:
    """Grade every conversation appearing in `events`.

    Platform failure events and not-understood rejections are outside the
    protocol shape and are not fed to the grader; so is directory traffic,
    which carries no conversation id. Reports come back keyed by
    conversation id in order of first appearance.
    """
    states: dict[str, _ConversationState] = {}
    for event in events:
        if not event.conversation_id:
            continue
        if event.performative in (Performative.FAILURE, Performative.NOT_UNDERSTOOD):
            continue
        if event.sender.name == event.receiver.name:
            continue
        state = states.get(event.conversation_id)
        if state is None:
            state = _ConversationState(event.conversation_id)
            states[event.conversation_id] = state
        src = actor_of.get(event.sender.name, event.sender.name)
        dst = actor_of.get(event.receiver.name, event.receiver.name)
        state.feed(event, src, dst)
    return {cid: state.report() for cid, state in states.items()}
