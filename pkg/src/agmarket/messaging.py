"""ACL-style messages, per-agent FIFO mailboxes, directory facilitator,
and the sniffer trace.

Delivery semantics: a message sent at tick t lands in each receiver's
mailbox at tick t+1 (the runtime's delivery phase), waking the receiver's
blocked behaviours. Every (message, receiver) pair produces exactly one
trace event, recorded at send time, so the trace is gapless and replayable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional, TYPE_CHECKING

from .kernel import AgentId, UnknownAgent

if TYPE_CHECKING:  # pragma: no cover
    from .kernel import Runtime


class MessagingError(Exception):
    pass


class UnknownReceiver(MessagingError):
    pass


class MalformedTrace(MessagingError):
    pass


class Performative(Enum):
    REQUEST = "request"
    INFORM = "inform"
    CFP = "cfp"
    PROPOSE = "propose"
    REFUSE = "refuse"
    ACCEPT_PROPOSAL = "accept-proposal"
    REJECT_PROPOSAL = "reject-proposal"
    CONFIRM = "confirm"
    FAILURE = "failure"
    NOT_UNDERSTOOD = "not-understood"


class Ontology(Enum):
    TRANSPORT = "transport-ontology"
    RUNTIME = "runtime-ontology"


@dataclass(frozen=True)
class ContentPayload:
    """Typed message body tagged with its ontology.

    `body` is one of the content classes in `agmarket.content`; its class
    carries a TAG and a summary() used for trace rendering.
    """

    ontology: Ontology
    body: object

    @property
    def tag(self) -> str:
        return getattr(self.body, "TAG", type(self.body).__name__)

    def summary(self) -> str:
        fn = getattr(self.body, "summary", None)
        return fn() if callable(fn) else str(self.body)


@dataclass(frozen=True)
class AclMessage:
    performative: Performative
    sender: AgentId
    receivers: tuple[AgentId, ...]
    conversation_id: str
    content: ContentPayload
    sent_tick: int
    reply_with: Optional[str] = None
    in_reply_to: Optional[str] = None

    def __post_init__(self) -> None:
        if not self.receivers:
            raise ValueError("message must have at least one receiver")
        if any(r.name == self.sender.name for r in self.receivers):
            raise ValueError("sender must not be among the receivers")
        if self.content.ontology is Ontology.TRANSPORT and not self.conversation_id:
            raise ValueError("market-protocol messages require a conversation id")


@dataclass(frozen=True)
class MessagePattern:
    """Mailbox filter over any subset of performative, conversation, sender."""

    performative: Optional[Performative] = None
    conversation_id: Optional[str] = None
    sender: Optional[str] = None

    def matches(self, message: AclMessage) -> bool:
        if self.performative is not None and message.performative is not self.performative:
            return False
        if self.conversation_id is not None and message.conversation_id != self.conversation_id:
            return False
        if self.sender is not None and message.sender.name != self.sender:
            return False
        return True


@dataclass(frozen=True)
class DirectoryEntry:
    agent: AgentId
    service_type: str
    attributes: tuple[tuple[str, str], ...] = ()

    def attribute_map(self) -> dict[str, str]:
        return dict(self.attributes)


@dataclass(frozen=True)
class TraceEvent:
    seq: int
    tick: int
    conversation_id: str
    performative: Performative
    sender: AgentId
    receiver: AgentId
    content_tag: str
    content_summary: str

    def to_dict(self) -> dict:
        return {
            "seq": self.seq,
            "tick": self.tick,
            "conversation_id": self.conversation_id,
            "performative": self.performative.value,
            "sender": {"name": self.sender.name, "ordinal": self.sender.ordinal},
            "receiver": {"name": self.receiver.name, "ordinal": self.receiver.ordinal},
            "content_tag": self.content_tag,
            "content_summary": self.content_summary,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    @classmethod
    def from_json(cls, line: str) -> "TraceEvent":
        raw = json.loads(line)
        return cls(
            seq=raw["seq"],
            tick=raw["tick"],
            conversation_id=raw["conversation_id"],
            performative=Performative(raw["performative"]),
            sender=AgentId(raw["sender"]["name"], raw["sender"]["ordinal"]),
            receiver=AgentId(raw["receiver"]["name"], raw["receiver"]["ordinal"]),
            content_tag=raw["content_tag"],
            content_summary=raw["content_summary"],
        )


@dataclass(frozen=True)
class DeliveryReceipt:
    sent_tick: int
    receivers: tuple[str, ...]
    trace_seqs: tuple[int, ...]


class MessageBus:
    """Mailboxes, pending deliveries, directory, and the sniffer trace.

    Owned by a Runtime; all mutation happens inside kernel steps (or between
    them), never concurrently. Trace exports are copies safe to hand out.
    """

    def __init__(self, runtime: "Runtime"):
        self._runtime = runtime
        self._mailboxes: dict[str, list[AclMessage]] = {}
        self._pending: list[tuple[int, AclMessage]] = []
        self._trace: list[TraceEvent] = []
        self._directory: dict[tuple[str, str], DirectoryEntry] = {}

    # -- mailboxes ----------------------------------------------------------

    def ensure_mailbox(self, name: str) -> None:
        self._mailboxes.setdefault(name, [])

    def drop_agent(self, name: str) -> None:
        self._mailboxes.pop(name, None)
        self._directory = {k: v for k, v in self._directory.items() if k[0] != name}

    def mailbox_size(self, name: str) -> int:
        return len(self._mailboxes.get(name, []))

    def has_pending(self) -> bool:
        return bool(self._pending)

    def deliver_due(self, tick: int) -> None:
        """Move messages whose delivery tick has arrived into mailboxes and
        wake the receivers' blocked behaviours."""
        due = [m for at, m in self._pending if at <= tick]
        self._pending = [(at, m) for at, m in self._pending if at > tick]
        for message in due:
            for receiver in message.receivers:
                box = self._mailboxes.get(receiver.name)
                if box is None:
                    continue  # receiver died between send and delivery
                box.append(message)
                self._runtime.wake(receiver.name)

    # -- send / receive ------------------------------------------------------

    def send(self, message: AclMessage) -> DeliveryReceipt:
        """Queue `message` for next-tick delivery and trace one event per
        receiver. Any dead receiver fails the whole send: a Failure event is
        traced per missing receiver and nothing is delivered."""
        dead = [r.name for r in message.receivers if self._runtime.live_agent(r.name) is None]
        if dead:
            for name in dead:
                self.trace_failure(
                    message.sender,
                    message.conversation_id,
                    f"undeliverable {message.performative.value} to dead agent {name}",
                    receiver=AgentId(name, -1),
                )
            raise UnknownReceiver(f"receivers not live: {', '.join(dead)}")
        seqs = []
        for receiver in message.receivers:
            seqs.append(self._record(message, receiver))
        self._pending.append((message.sent_tick + 1, message))
        return DeliveryReceipt(
            sent_tick=message.sent_tick,
            receivers=tuple(r.name for r in message.receivers),
            trace_seqs=tuple(seqs),
        )

    def send_parts(
        self,
        sender: AgentId,
        performative: Performative,
        receivers,
        body,
        conversation_id: str,
        ontology: Optional[Ontology] = None,
        reply_with: Optional[str] = None,
        in_reply_to: Optional[str] = None,
    ) -> DeliveryReceipt:
        resolved = []
        for receiver in receivers if isinstance(receivers, (list, tuple)) else [receivers]:
            if isinstance(receiver, AgentId):
                resolved.append(receiver)
            else:
                live = self._runtime.live_agent(receiver)
                resolved.append(live if live is not None else AgentId(str(receiver), -1))
        message = AclMessage(
            performative=performative,
            sender=sender,
            receivers=tuple(resolved),
            conversation_id=conversation_id,
            content=ContentPayload(ontology or Ontology.TRANSPORT, body),
            sent_tick=self._runtime.tick,
            reply_with=reply_with,
            in_reply_to=in_reply_to,
        )
        return self.send(message)

    def reply(
        self,
        sender: AgentId,
        to_message: AclMessage,
        performative: Performative,
        body,
        ontology: Optional[Ontology] = None,
    ) -> DeliveryReceipt:
        return self.send_parts(
            sender=sender,
            performative=performative,
            receivers=[to_message.sender],
            body=body,
            conversation_id=to_message.conversation_id,
            ontology=ontology or to_message.content.ontology,
            in_reply_to=to_message.reply_with,
        )

    def take(
        self,
        agent_name: str,
        pattern: Optional[MessagePattern] = None,
        exclude_conversations: Optional[Iterable[str]] = None,
    ) -> Optional[AclMessage]:
        """Remove and return the oldest mailbox message matching `pattern`
        (and not in `exclude_conversations`); None when nothing matches."""
        if self._runtime.live_agent(agent_name) is None:
            raise UnknownAgent(f"no live agent named {agent_name!r}")
        excluded = set(exclude_conversations or ())
        box = self._mailboxes.get(agent_name, [])
        for i, message in enumerate(box):
            if message.conversation_id in excluded:
                continue
            if pattern is None or pattern.matches(message):
                del box[i]
                return message
        return None

    # -- directory -----------------------------------------------------------

    def register_service(self, entry: DirectoryEntry) -> None:
        if self._runtime.live_agent(entry.agent.name) is None:
            raise UnknownAgent(f"no live agent named {entry.agent.name!r}")
        self._directory[(entry.agent.name, entry.service_type)] = entry

    def register_service_parts(self, agent: AgentId, service_type: str, attributes: dict) -> None:
        self.register_service(
            DirectoryEntry(agent=agent, service_type=service_type, attributes=tuple(sorted(attributes.items())))
        )

    def search_directory(self, service_type: str) -> list[DirectoryEntry]:
        hits = [e for (name, stype), e in self._directory.items() if stype == service_type]
        return sorted(hits, key=lambda e: e.agent.ordinal)

    # -- trace ----------------------------------------------------------------

    def _record(self, message: AclMessage, receiver: AgentId) -> int:
        seq = len(self._trace)
        self._trace.append(
            TraceEvent(
                seq=seq,
                tick=message.sent_tick,
                conversation_id=message.conversation_id,
                performative=message.performative,
                sender=message.sender,
                receiver=receiver,
                content_tag=message.content.tag,
                content_summary=message.content.summary(),
            )
        )
        return seq

    def trace_failure(
        self,
        agent: AgentId,
        conversation_id: str,
        summary: str,
        receiver: Optional[AgentId] = None,
    ) -> int:
        """Record a platform-level failure event (agent crash, undeliverable
        message). Internal failures use sender == receiver."""
        seq = len(self._trace)
        self._trace.append(
            TraceEvent(
                seq=seq,
                tick=self._runtime.tick,
                conversation_id=conversation_id,
                performative=Performative.FAILURE,
                sender=agent,
                receiver=receiver if receiver is not None else agent,
                content_tag="error-info",
                content_summary=summary,
            )
        )
        return seq

    def export_trace(self, conversation_id: Optional[str] = None) -> list[TraceEvent]:
        if conversation_id is None:
            return list(self._trace)
        return [e for e in self._trace if e.conversation_id == conversation_id]


def write_trace_jsonl(events: Iterable[TraceEvent], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for event in events:
            fh.write(event.to_json())
            fh.write("\n")


def read_trace_jsonl(path) -> list[TraceEvent]:
    events = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                events.append(TraceEvent.from_json(line))
    return events


def render_sequence_diagram(events: list[TraceEvent]) -> str:
    """Sniffer-style plain-text sequence chart.

    First line lists the agent columns in first-appearance order; each event
    becomes one `sender -> receiver : performative(conversation_id)` row.
    Raises MalformedTrace when the seq numbering has gaps.
    """
    for i, event in enumerate(events):
        if event.seq != events[0].seq + i:
            raise MalformedTrace(f"trace seq gap at position {i}: expected {events[0].seq + i}, got {event.seq}")
    agents: list[str] = []
    for event in events:
        for name in (event.sender.name, event.receiver.name):
            if name not in agents:
                agents.append(name)
    lines = ["participants: " + " | ".join(agents) if agents else "participants: (none)"]
    for event in events:
        lines.append(
            f"{event.sender.name} -> {event.receiver.name} : "
            f"{event.performative.value}({event.conversation_id})"
        )
    return "\n".join(lines) + "\n"
