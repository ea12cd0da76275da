"""Deterministic multi-agent transport e-market.

The package layers a cooperative agent runtime (kernel, messaging), a
transport market domain (market, content), an organizational model with
conformance checking (model, protocol), concrete agent roles (agents),
scenario loading (scenario), and an HTTP gateway (gateway).
"""

from .kernel import AgentContext, AgentId, Behaviour, Block, FsmSpec, PlanInstance, RunResult, Runtime
from .market import (
    Amendment,
    AmendmentOutcome,
    CriteriaProfile,
    HardConstraints,
    Itinerary,
    LegBook,
    Proposal,
    ProposalStatus,
    RouteLeg,
    ScoredItinerary,
    TransportRequest,
    compose_itineraries,
    decide_amendment,
    itinerary_id_for,
    reprice_itinerary,
    score_pool,
)
from .messaging import (
    AclMessage,
    ContentPayload,
    MessageBus,
    MessagePattern,
    Ontology,
    Performative,
    TraceEvent,
    read_trace_jsonl,
    render_sequence_diagram,
    write_trace_jsonl,
)
from .model import baseline_model, check_conformance, derive_acquaintances, load_model, validate_model
from .protocol import ConversationOutcome, ConversationReport, validate_trace
from .scenario import RunOutcome, Scenario, build_runtime, load_scenario, resolve_scenario, run_scenario

__version__ = "0.1.0"

__all__ = [
    "AclMessage",
    "AgentContext",
    "AgentId",
    "Amendment",
    "AmendmentOutcome",
    "Behaviour",
    "Block",
    "ContentPayload",
    "ConversationOutcome",
    "ConversationReport",
    "CriteriaProfile",
    "FsmSpec",
    "HardConstraints",
    "Itinerary",
    "LegBook",
    "MessageBus",
    "MessagePattern",
    "Ontology",
    "Performative",
    "PlanInstance",
    "Proposal",
    "ProposalStatus",
    "RouteLeg",
    "RunOutcome",
    "RunResult",
    "Runtime",
    "Scenario",
    "ScoredItinerary",
    "TraceEvent",
    "TransportRequest",
    "baseline_model",
    "build_runtime",
    "check_conformance",
    "compose_itineraries",
    "decide_amendment",
    "derive_acquaintances",
    "itinerary_id_for",
    "load_model",
    "load_scenario",
    "read_trace_jsonl",
    "render_sequence_diagram",
    "reprice_itinerary",
    "resolve_scenario",
    "run_scenario",
    "score_pool",
    "validate_model",
    "validate_trace",
    "write_trace_jsonl",
    "__version__",
]
