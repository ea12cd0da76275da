"""Organizational model of the market: actor types, dependencies between
them, the capacities that serve those dependencies, and the acquaintance
graph derived from the dependency structure.

Actors are agent types, not individuals; any number of running customers
or providers map onto the same actor. The acquaintance graph bounds who
may message whom, and a recorded trace can be checked against it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Optional, Sequence

from .kernel import AgentId
from .messaging import Performative, TraceEvent


class ModelError(Exception):
    pass


class ParseError(ModelError):
    pass


class UnknownActorReference(ModelError):
    pass


class UnmappedAgent(ModelError):
    """An agent in the trace has no actor assignment."""


class DependencyKind(Enum):
    RESOURCE = "resource"
    TASK = "task"
    HARDGOAL = "hardgoal"
    SOFTGOAL = "softgoal"


@dataclass(frozen=True)
class Actor:
    name: str
    description: str = ""

    def to_dict(self) -> dict:
        return {"name": self.name, "description": self.description}


@dataclass(frozen=True)
class Dependency:
    """`depender` relies on `dependee` for this resource, task, or goal."""

    name: str
    kind: DependencyKind
    depender: str
    dependee: str

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "kind": self.kind.value,
            "depender": self.depender,
            "dependee": self.dependee,
        }


@dataclass(frozen=True)
class Capacity:
    """A named capability of one actor, serving one or more dependencies."""

    name: str
    owner: str
    covers: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {"name": self.name, "owner": self.owner, "covers": list(self.covers)}


@dataclass(frozen=True)
class AcquaintanceGraph:
    """Directed may-message-whom relation over actors."""

    actors: tuple[str, ...]
    edges: frozenset[tuple[str, str]]

    def allows(self, source: str, target: str) -> bool:
        return (source, target) in self.edges

    def to_dict(self) -> dict:
        return {
            "actors": list(self.actors),
            "edges": sorted([list(e) for e in self.edges]),
        }


@dataclass(frozen=True)
class OrganizationalModel:
    actors: tuple[Actor, ...]
    dependencies: tuple[Dependency, ...]
    capacities: tuple[Capacity, ...]

    def actor_names(self) -> tuple[str, ...]:
        return tuple(a.name for a in self.actors)

    def to_dict(self) -> dict:
        return {
            "actors": [a.to_dict() for a in self.actors],
            "dependencies": [d.to_dict() for d in self.dependencies],
            "capacities": [c.to_dict() for c in self.capacities],
        }


def load_model(raw: Mapping) -> OrganizationalModel:
    """Build a model from parsed JSON, rejecting structural errors.

    Unknown actor names in dependency endpoints or capacity owners raise
    UnknownActorReference; everything else malformed raises ParseError.
    Semantic problems (uncovered dependencies and the like) are left to
    validate_model.
    """
    try:
        actor_rows = raw["actors"]
        dep_rows = raw.get("dependencies", [])
        cap_rows = raw.get("capacities", [])
    except (TypeError, KeyError) as exc:
        raise ParseError(f"model document missing section: {exc}") from exc

    actors = []
    names = set()
    for row in actor_rows:
        try:
            actor = Actor(name=row["name"], description=row.get("description", ""))
        except (TypeError, KeyError) as exc:
            raise ParseError(f"malformed actor row: {row!r}") from exc
        if actor.name in names:
            raise ParseError(f"duplicate actor name {actor.name!r}")
        names.add(actor.name)
        actors.append(actor)

    dependencies = []
    dep_names = set()
    for row in dep_rows:
        try:
            dep = Dependency(
                name=row["name"],
                kind=DependencyKind(row["kind"]),
                depender=row["depender"],
                dependee=row["dependee"],
            )
        except (TypeError, KeyError, ValueError) as exc:
            raise ParseError(f"malformed dependency row: {row!r}") from exc
        for endpoint in (dep.depender, dep.dependee):
            if endpoint not in names:
                raise UnknownActorReference(f"dependency {dep.name!r} references unknown actor {endpoint!r}")
        if dep.name in dep_names:
            raise ParseError(f"duplicate dependency name {dep.name!r}")
        dep_names.add(dep.name)
        dependencies.append(dep)

    capacities = []
    cap_names = set()
    for row in cap_rows:
        try:
            cap = Capacity(name=row["name"], owner=row["owner"], covers=tuple(row.get("covers", ())))
        except (TypeError, KeyError) as exc:
            raise ParseError(f"malformed capacity row: {row!r}") from exc
        if cap.owner not in names:
            raise UnknownActorReference(f"capacity {cap.name!r} owned by unknown actor {cap.owner!r}")
        if cap.name in cap_names:
            raise ParseError(f"duplicate capacity name {cap.name!r}")
        cap_names.add(cap.name)
        capacities.append(cap)

    return OrganizationalModel(
        actors=tuple(actors),
        dependencies=tuple(dependencies),
        capacities=tuple(capacities),
    )


def load_model_file(path) -> OrganizationalModel:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"model file is not valid JSON: {exc}") from exc
    return load_model(raw)


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    problems: tuple[str, ...]

    def to_dict(self) -> dict:
        return {"ok": self.ok, "problems": list(self.problems)}


def validate_model(model: OrganizationalModel) -> ValidationReport:
    """Semantic consistency checks over a structurally valid model.

    Flags self-dependencies, isolated actors, dependencies no capacity
    serves, capacities pointing at unknown dependencies, and capacities
    claiming to serve a dependency neither of whose endpoints owns them.
    """
    problems: list[str] = []
    dep_by_name = {d.name: d for d in model.dependencies}

    for dep in model.dependencies:
        if dep.depender == dep.dependee:
            problems.append(f"dependency {dep.name!r} has identical depender and dependee")

    covered: set[str] = set()
    for cap in model.capacities:
        for dep_name in cap.covers:
            dep = dep_by_name.get(dep_name)
            if dep is None:
                problems.append(f"capacity {cap.name!r} covers unknown dependency {dep_name!r}")
                continue
            if cap.owner not in (dep.depender, dep.dependee):
                problems.append(
                    f"capacity {cap.name!r} owned by {cap.owner!r} covers dependency "
                    f"{dep.name!r} it does not touch"
                )
                continue
            covered.add(dep_name)

    for dep in model.dependencies:
        if dep.name not in covered:
            problems.append(f"dependency {dep.name!r} has no covering capacity")

    graph = derive_acquaintances(model)
    touched = {a for edge in graph.edges for a in edge}
    for actor in model.actors:
        if actor.name not in touched:
            problems.append(f"actor {actor.name!r} participates in no dependency")

    return ValidationReport(ok=not problems, problems=tuple(problems))


def derive_acquaintances(model: OrganizationalModel) -> AcquaintanceGraph:
    """Derive who may message whom from the dependency structure.

    A task dependency induces a single arc depender to dependee (the
    delegation message). Resource, hardgoal, and softgoal dependencies
    need traffic both ways (ask and deliver), so they induce both arcs.
    """
    edges: set[tuple[str, str]] = set()
    for dep in model.dependencies:
        if dep.depender == dep.dependee:
            continue
        edges.add((dep.depender, dep.dependee))
        if dep.kind is not DependencyKind.TASK:
            edges.add((dep.dependee, dep.depender))
    return AcquaintanceGraph(actors=model.actor_names(), edges=frozenset(edges))


@dataclass(frozen=True)
class Violation:
    """A traced message whose actor pair has no acquaintance arc."""

    seq: int
    sender: str
    receiver: str
    source_actor: str
    target_actor: str
    reason: str

    def to_dict(self) -> dict:
        return {
            "seq": self.seq,
            "sender": self.sender,
            "receiver": self.receiver,
            "source_actor": self.source_actor,
            "target_actor": self.target_actor,
            "reason": self.reason,
        }


_EXEMPT_PERFORMATIVES = {Performative.FAILURE, Performative.NOT_UNDERSTOOD}


def check_conformance(
    model: OrganizationalModel,
    events: Sequence[TraceEvent],
    actor_of: Mapping[str, str],
) -> list[Violation]:
    """Check every traced message against the derived acquaintance graph.

    Platform failure events and not-understood rejections are exempt; they
    are the prescribed reaction to traffic that is already off-protocol,
    and counting them would double-report the original offence. Self-sends
    (internal failure markers) are skipped for the same reason. Every other
    event must map cleanly onto actors, or UnmappedAgent is raised.
    """
    graph = derive_acquaintances(model)
    violations: list[Violation] = []
    for event in events:
        if event.performative in _EXEMPT_PERFORMATIVES:
            continue
        if event.sender.name == event.receiver.name:
            continue
        source = actor_of.get(event.sender.name)
        if source is None:
            raise UnmappedAgent(f"agent {event.sender.name!r} has no actor mapping")
        target = actor_of.get(event.receiver.name)
        if target is None:
            raise UnmappedAgent(f"agent {event.receiver.name!r} has no actor mapping")
        if not graph.allows(source, target):
            violations.append(
                Violation(
                    seq=event.seq,
                    sender=event.sender.name,
                    receiver=event.receiver.name,
                    source_actor=source,
                    target_actor=target,
                    reason=f"no acquaintance arc {source} to {target}",
                )
            )
    return violations


def baseline_model() -> OrganizationalModel:
    """The shipped three-actor market model.

    Five functional dependencies plus the three quality softgoals the
    ranking trades off. The derived acquaintance graph is customer with
    broker and broker with provider, both ways; customers and providers
    never talk directly.
    """
    actors = (
        Actor("Customer", "Shipper asking the market to move cargo"),
        Actor("Broker", "Mediator composing and ranking transport plans"),
        Actor("Provider", "Carrier operating bookable route legs"),
    )
    dependencies = (
        Dependency("Transport Proposals", DependencyKind.HARDGOAL, "Customer", "Broker"),
        Dependency("Customer Requirements", DependencyKind.RESOURCE, "Provider", "Broker"),
        Dependency("Transport Offers", DependencyKind.RESOURCE, "Broker", "Provider"),
        Dependency("Reservation Handling", DependencyKind.TASK, "Broker", "Provider"),
        Dependency("Selection Decision", DependencyKind.TASK, "Broker", "Customer"),
        Dependency("Low Cost", DependencyKind.SOFTGOAL, "Customer", "Broker"),
        Dependency("Short Delivery Time", DependencyKind.SOFTGOAL, "Customer", "Broker"),
        Dependency("Insurance Coverage", DependencyKind.SOFTGOAL, "Customer", "Broker"),
    )
    capacities = (
        Capacity("Get Customer Requirements", "Broker", ("Customer Requirements",)),
        Capacity(
            "Evaluate Customer Requirements",
            "Broker",
            ("Transport Proposals", "Low Cost", "Short Delivery Time", "Insurance Coverage"),
        ),
        Capacity("Publish Transport Offers", "Provider", ("Transport Offers",)),
        Capacity("Handle Reservations", "Provider", ("Reservation Handling",)),
        Capacity("Submit Selection", "Customer", ("Selection Decision",)),
    )
    return OrganizationalModel(actors=actors, dependencies=dependencies, capacities=capacities)
