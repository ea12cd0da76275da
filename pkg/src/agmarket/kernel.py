"""Deterministic tick-based agent runtime.

Agents own an ordered list of behaviours (cyclic, one-shot, or FSM plans).
The scheduler executes one action slice per Ready behaviour per tick, in
(agent ordinal, behaviour add order), so a run is fully replayable: same
scenario, same tick-by-tick execution order. Messages sent at tick t are
delivered at tick t+1, at which point blocked behaviours of the receiver
wake. Blocked behaviours may also arm a tick-based wake timer (deadlines).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Mapping, Optional, TYPE_CHECKING

if TYPE_CHECKING:  # pragma: no cover
    from .messaging import AclMessage, ContentPayload, DeliveryReceipt, DirectoryEntry, MessagePattern


class KernelError(Exception):
    """Base class for runtime scheduling errors."""


class DuplicateName(KernelError):
    pass


class UnknownAgent(KernelError):
    pass


class InvalidFsm(KernelError):
    pass


class PlanAlreadyTerminal(KernelError):
    pass


class BehaviourKind(Enum):
    CYCLIC = "cyclic"
    ONE_SHOT = "one-shot"
    FSM = "fsm"


class BehaviourState(Enum):
    READY = "ready"
    BLOCKED = "blocked"
    DONE = "done"


class TerminalKind(Enum):
    OK = "ok"
    FAIL = "fail"


@dataclass(frozen=True)
class AgentId:
    """Unique agent identity: a globally unique name plus its spawn ordinal."""

    name: str
    ordinal: int


@dataclass(frozen=True)
class Block:
    """Returned by a behaviour slice to block until a message arrives.

    `wake_at` additionally arms a tick timer: the behaviour becomes Ready
    again at the first tick >= wake_at even without a message.
    """

    wake_at: Optional[int] = None


@dataclass(frozen=True)
class FsmSpec:
    """A plan skeleton: named capability states joined by event-labelled arcs.

    Terminal states carry an Ok/Fail tag and have no capability. Every
    non-terminal state must have at least one outgoing transition.
    """

    states: frozenset[str]
    initial: str
    terminals: Mapping[str, TerminalKind]
    transitions: Mapping[tuple[str, str], str]

    def __post_init__(self) -> None:
        if self.initial not in self.states:
            raise InvalidFsm(f"initial state {self.initial!r} not declared")
        for term in self.terminals:
            if term not in self.states:
                raise InvalidFsm(f"terminal state {term!r} not declared")
        sources = set()
        for (src, event), dst in self.transitions.items():
            if src not in self.states:
                raise InvalidFsm(f"transition source {src!r} not declared")
            if dst not in self.states:
                raise InvalidFsm(f"transition target {dst!r} not declared")
            sources.add(src)
        for state in self.states:
            if state not in self.terminals and state not in sources:
                raise InvalidFsm(f"non-terminal state {state!r} has no outgoing transition")

    def is_terminal(self, state: str) -> bool:
        return state in self.terminals

    def fail_state(self) -> str:
        """The (first, name-sorted) Fail-tagged terminal of this spec."""
        fails = sorted(s for s, kind in self.terminals.items() if kind is TerminalKind.FAIL)
        if not fails:
            raise InvalidFsm("spec has no Fail terminal to route undefined transitions to")
        return fails[0]


@dataclass
class PlanInstance:
    """One running plan: an FsmSpec plus current state and working memory."""

    spec: FsmSpec
    current: str
    conversation_id: str
    working_memory: dict = field(default_factory=dict)
    visited: list[str] = field(default_factory=list)
    outcome: Optional[TerminalKind] = None
    failed_event: Optional[str] = None

    @classmethod
    def start(cls, spec: FsmSpec, conversation_id: str, memory: Optional[dict] = None) -> "PlanInstance":
        return cls(
            spec=spec,
            current=spec.initial,
            conversation_id=conversation_id,
            working_memory=dict(memory or {}),
            visited=[spec.initial],
        )


def advance_fsm(plan: PlanInstance, event: str) -> PlanInstance:
    """Move `plan` along the transition for `event` from its current state.

    An undefined (state, event) pair routes the plan to its Fail terminal
    instead of aborting; `plan.failed_event` records the offending event so
    the owner can emit a failure trace entry.
    """
    if plan.spec.is_terminal(plan.current):
        raise PlanAlreadyTerminal(f"plan already terminal in state {plan.current!r}")
    target = plan.spec.transitions.get((plan.current, event))
    if target is None:
        plan.failed_event = event
        plan.current = plan.spec.fail_state()
    else:
        plan.current = target
    plan.visited.append(plan.current)
    if plan.spec.is_terminal(plan.current):
        plan.outcome = plan.spec.terminals[plan.current]
    return plan


# A slice callback returns None (stay ready), a Block, or - for FSM
# capabilities - an event label string fed to advance_fsm.
SliceFn = Callable[["AgentContext"], "Optional[Block]"]
Capability = Callable[["AgentContext", PlanInstance], "str | Block | None"]


class Behaviour:
    """Schedulable unit of agent activity.

    Use the `cyclic`, `one_shot`, or `plan` constructors. A cyclic behaviour
    is never Done; a one-shot is Done after exactly one slice; an FSM
    behaviour runs the capability of its plan's current state each slice and
    is Done when the plan reaches a terminal state.
    """

    def __init__(
        self,
        kind: BehaviourKind,
        label: str,
        fn: Optional[SliceFn] = None,
        plan: Optional[PlanInstance] = None,
        capabilities: Optional[Mapping[str, Capability]] = None,
    ):
        self.kind = kind
        self.label = label
        self.fn = fn
        self.plan = plan
        self.capabilities = capabilities or {}
        self.state = BehaviourState.READY
        self.owner: Optional[AgentId] = None
        self.wake_at: Optional[int] = None

    @classmethod
    def cyclic(cls, label: str, fn: SliceFn) -> "Behaviour":
        return cls(BehaviourKind.CYCLIC, label, fn=fn)

    @classmethod
    def one_shot(cls, label: str, fn: SliceFn) -> "Behaviour":
        return cls(BehaviourKind.ONE_SHOT, label, fn=fn)

    @classmethod
    def fsm(cls, label: str, plan: PlanInstance, capabilities: Mapping[str, Capability]) -> "Behaviour":
        return cls(BehaviourKind.FSM, label, plan=plan, capabilities=capabilities)

    def __repr__(self) -> str:  # pragma: no cover
        return f"<Behaviour {self.label} {self.kind.value} {self.state.value}>"


@dataclass
class AgentRecord:
    agent_id: AgentId
    behaviours: list[Behaviour] = field(default_factory=list)
    alive: bool = True
    store: dict = field(default_factory=dict)


class AgentContext:
    """Per-slice facade giving a behaviour access to runtime services."""

    def __init__(self, runtime: "Runtime", record: AgentRecord):
        self._runtime = runtime
        self._record = record

    @property
    def agent(self) -> AgentId:
        return self._record.agent_id

    @property
    def tick(self) -> int:
        return self._runtime.tick

    @property
    def store(self) -> dict:
        """Agent-private blackboard, shared by all its behaviours."""
        return self._record.store

    def send(
        self,
        performative,
        receivers,
        body,
        conversation_id: str,
        ontology=None,
        reply_with: Optional[str] = None,
        in_reply_to: Optional[str] = None,
    ) -> "DeliveryReceipt":
        return self._runtime.bus.send_parts(
            sender=self.agent,
            performative=performative,
            receivers=receivers,
            body=body,
            conversation_id=conversation_id,
            ontology=ontology,
            reply_with=reply_with,
            in_reply_to=in_reply_to,
        )

    def reply(self, to_message: "AclMessage", performative, body, ontology=None) -> "DeliveryReceipt":
        return self._runtime.bus.reply(self.agent, to_message, performative, body, ontology)

    def receive(self, pattern: "Optional[MessagePattern]" = None, exclude_conversations=None) -> "Optional[AclMessage]":
        return self._runtime.bus.take(self.agent.name, pattern, exclude_conversations)

    def add_behaviour(self, behaviour: Behaviour) -> int:
        return self._runtime.add_behaviour(self.agent.name, behaviour)

    def register_service(self, service_type: str, attributes: Optional[dict] = None) -> None:
        self._runtime.bus.register_service_parts(self.agent, service_type, attributes or {})

    def search(self, service_type: str) -> "list[DirectoryEntry]":
        return self._runtime.bus.search_directory(service_type)

    def reply_token(self) -> str:
        n = self._record.store.setdefault("_reply_counter", 0)
        self._record.store["_reply_counter"] = n + 1
        return f"{self.agent.name}#{n}"

    def note_failure(self, conversation_id: str, summary: str) -> None:
        """Record a self-addressed failure event in the trace (used for
        deadline expiries and swallowed protocol slips)."""
        self._runtime.bus.trace_failure(self.agent, conversation_id, summary)


@dataclass
class RunResult:
    quiescent: bool
    ticks: int


class Runtime:
    """Single-threaded scheduler owning agents, mailboxes, and the trace.

    External callers must not mutate runtime state while `step` executes;
    the gateway funnels commands through a queue applied between ticks.
    """

    def __init__(self, seed: int = 0):
        from .messaging import MessageBus

        self.tick = 0
        self.seed = seed
        self._next_ordinal = 0
        self._agents: dict[str, AgentRecord] = {}
        self._spawn_order: list[str] = []
        self.bus = MessageBus(self)
        self.execution_log: list[tuple[int, str, str, str]] = []

    # -- lifecycle ---------------------------------------------------------

    def spawn_agent(self, name: str, behaviours: Optional[list[Behaviour]] = None) -> AgentId:
        if not name:
            raise ValueError("agent name must be non-empty")
        existing = self._agents.get(name)
        if existing is not None and existing.alive:
            raise DuplicateName(f"agent name {name!r} already live")
        agent_id = AgentId(name=name, ordinal=self._next_ordinal)
        self._next_ordinal += 1
        record = AgentRecord(agent_id=agent_id)
        self._agents[name] = record
        self._spawn_order = [n for n in self._spawn_order if n != name] + [name]
        self.bus.ensure_mailbox(name)
        for behaviour in behaviours or []:
            self._bind(record, behaviour)
        return agent_id

    def add_behaviour(self, agent: "str | AgentId", behaviour: Behaviour) -> int:
        record = self._live_record(agent)
        return self._bind(record, behaviour)

    def _bind(self, record: AgentRecord, behaviour: Behaviour) -> int:
        behaviour.owner = record.agent_id
        behaviour.state = BehaviourState.READY
        record.behaviours.append(behaviour)
        return len(record.behaviours) - 1

    def kill_agent(self, agent: "str | AgentId") -> None:
        record = self._live_record(agent)
        record.alive = False
        for behaviour in record.behaviours:
            behaviour.state = BehaviourState.DONE
        self.bus.drop_agent(record.agent_id.name)

    def _live_record(self, agent: "str | AgentId") -> AgentRecord:
        name = agent.name if isinstance(agent, AgentId) else agent
        record = self._agents.get(name)
        if record is None or not record.alive:
            raise UnknownAgent(f"no live agent named {name!r}")
        return record

    def live_agent(self, name: str) -> Optional[AgentId]:
        record = self._agents.get(name)
        if record is None or not record.alive:
            return None
        return record.agent_id

    def live_agents(self) -> list[AgentId]:
        return [self._agents[n].agent_id for n in self._spawn_order if self._agents[n].alive]

    def agent_store(self, name: str) -> dict:
        return self._live_record(name).store

    # -- scheduling --------------------------------------------------------

    def wake(self, name: str) -> None:
        """Make all Blocked behaviours of `name` Ready (message arrival)."""
        record = self._agents.get(name)
        if record is None or not record.alive:
            return
        for behaviour in record.behaviours:
            if behaviour.state is BehaviourState.BLOCKED:
                behaviour.state = BehaviourState.READY
                behaviour.wake_at = None

    def step(self) -> None:
        """Run one tick: deliver due messages, wake timers, run each Ready
        behaviour for one slice in deterministic order, advance the clock."""
        self.bus.deliver_due(self.tick)
        for name in self._spawn_order:
            record = self._agents[name]
            if not record.alive:
                continue
            for behaviour in record.behaviours:
                if (
                    behaviour.state is BehaviourState.BLOCKED
                    and behaviour.wake_at is not None
                    and self.tick >= behaviour.wake_at
                ):
                    behaviour.state = BehaviourState.READY
                    behaviour.wake_at = None
        for name in list(self._spawn_order):
            record = self._agents[name]
            if not record.alive:
                continue
            ctx = AgentContext(self, record)
            index = 0
            # behaviours appended mid-tick are visited in this same tick
            while index < len(record.behaviours):
                behaviour = record.behaviours[index]
                index += 1
                if behaviour.state is not BehaviourState.READY or not record.alive:
                    continue
                self._run_slice(ctx, record, behaviour)
        self.tick += 1

    def _run_slice(self, ctx: AgentContext, record: AgentRecord, behaviour: Behaviour) -> None:
        label = behaviour.label
        if behaviour.kind is BehaviourKind.FSM and behaviour.plan is not None:
            label = f"{behaviour.label}/{behaviour.plan.current}"
        self.execution_log.append((self.tick, record.agent_id.name, behaviour.label, label))
        try:
            if behaviour.kind is BehaviourKind.FSM:
                self._run_plan_slice(ctx, behaviour)
            else:
                result = behaviour.fn(ctx) if behaviour.fn else None
                if behaviour.kind is BehaviourKind.ONE_SHOT:
                    behaviour.state = BehaviourState.DONE
                elif isinstance(result, Block):
                    behaviour.state = BehaviourState.BLOCKED
                    behaviour.wake_at = result.wake_at
        except Exception as exc:  # noqa: BLE001 - one bad behaviour must not kill the market
            self.bus.trace_failure(record.agent_id, self._plan_conversation(behaviour), f"behaviour error: {exc}")
            if behaviour.plan is not None and not behaviour.plan.spec.is_terminal(behaviour.plan.current):
                behaviour.plan.current = behaviour.plan.spec.fail_state()
                behaviour.plan.visited.append(behaviour.plan.current)
                behaviour.plan.outcome = TerminalKind.FAIL
            behaviour.state = BehaviourState.DONE

    @staticmethod
    def _plan_conversation(behaviour: Behaviour) -> str:
        return behaviour.plan.conversation_id if behaviour.plan is not None else ""

    def _run_plan_slice(self, ctx: AgentContext, behaviour: Behaviour) -> None:
        plan = behaviour.plan
        if plan.spec.is_terminal(plan.current):
            behaviour.state = BehaviourState.DONE
            return
        capability = behaviour.capabilities.get(plan.current)
        if capability is None:
            raise KeyError(f"no capability bound to state {plan.current!r}")
        result = capability(ctx, plan)
        if isinstance(result, Block):
            behaviour.state = BehaviourState.BLOCKED
            behaviour.wake_at = result.wake_at
            return
        if result is None:
            return
        advance_fsm(plan, result)
        if plan.failed_event is not None and plan.outcome is TerminalKind.FAIL:
            self.bus.trace_failure(
                behaviour.owner,
                plan.conversation_id,
                f"no transition for event {plan.failed_event!r} from state {plan.visited[-2]!r}",
            )
        if plan.spec.is_terminal(plan.current):
            behaviour.state = BehaviourState.DONE

    # -- run loop ----------------------------------------------------------

    def is_quiescent(self) -> bool:
        """True when nothing can make progress: no undelivered messages, no
        Ready behaviour, and no Blocked behaviour that still owes work (a
        non-cyclic behaviour, or one holding an armed wake timer). A blocked
        cyclic perception waits for mail forever and does not count."""
        if self.bus.has_pending():
            return False
        for name in self._spawn_order:
            record = self._agents[name]
            if not record.alive:
                continue
            for behaviour in record.behaviours:
                if behaviour.state is BehaviourState.READY:
                    return False
                if behaviour.state is BehaviourState.BLOCKED:
                    if behaviour.kind is not BehaviourKind.CYCLIC or behaviour.wake_at is not None:
                        return False
        return True

    def run_until_quiescent(self, max_ticks: int) -> RunResult:
        if max_ticks <= 0:
            raise ValueError("max_ticks must be positive")
        steps = 0
        while not self.is_quiescent():
            if steps >= max_ticks:
                return RunResult(quiescent=False, ticks=self.tick)
            self.step()
            steps += 1
        return RunResult(quiescent=True, ticks=self.tick)
