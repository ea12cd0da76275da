"""Scenario files: declarative market setups that build a runtime.

A scenario is one JSON document with sections model, providers, customers,
limits, and seed. It names one broker, a set of providers with their leg
inventories, and a set of scripted customers; the model section (optional,
defaulting to the built-in one) is the organizational model traces are
checked against. Loading validates the document eagerly so a bad file
fails before any agent runs; building spawns broker, providers, then
customers, which fixes the deterministic scheduling order.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from decimal import Decimal, InvalidOperation
from importlib import resources
from typing import Mapping, Optional

from .agents import (
    BrokerConfig,
    CustomerConfig,
    ProviderConfig,
    ScriptError,
    broker_behaviours,
    build_script_plan,
    customer_behaviours,
    provider_behaviours,
)
from .kernel import RunResult, Runtime
from .market import MarketError, RouteLeg
from .messaging import TraceEvent
from .model import ModelError, OrganizationalModel, Violation, baseline_model, check_conformance, load_model
from .protocol import BROKER, CUSTOMER, PROVIDER, ConversationReport, validate_trace


class ScenarioError(Exception):
    pass


@dataclass(frozen=True)
class ProviderSpec:
    name: str
    legs: tuple[RouteLeg, ...]
    max_discount: Decimal
    probe_target: Optional[str] = None
    actor: Optional[str] = None


@dataclass(frozen=True)
class CustomerSpec:
    name: str
    script: tuple[Mapping, ...]
    actor: Optional[str] = None


@dataclass(frozen=True)
class Scenario:
    name: str
    description: str
    seed: int
    max_ticks: int
    market: BrokerConfig
    broker_name: str
    providers: tuple[ProviderSpec, ...]
    customers: tuple[CustomerSpec, ...]
    model: OrganizationalModel
    broker_actor: Optional[str] = None

    def agent_names(self) -> list[str]:
        return [self.broker_name] + [p.name for p in self.providers] + [c.name for c in self.customers]

    def role_map(self) -> dict[str, str]:
        """Structural roles by section membership; drives protocol grading."""
        mapping = {self.broker_name: BROKER}
        for provider in self.providers:
            mapping[provider.name] = PROVIDER
        for customer in self.customers:
            mapping[customer.name] = CUSTOMER
        return mapping

    def actor_map(self) -> dict[str, str]:
        """Model actors per agent; drives conformance checking.

        Defaults to the agent's role name, so the built-in model needs no
        explicit mapping; a scenario with its own model overrides per agent
        via an "actor" key.
        """
        mapping = self.role_map()
        if self.broker_actor:
            mapping[self.broker_name] = self.broker_actor
        for provider in self.providers:
            if provider.actor:
                mapping[provider.name] = provider.actor
        for customer in self.customers:
            if customer.actor:
                mapping[customer.name] = customer.actor
        return mapping


def load_scenario(source) -> Scenario:
    """Load and validate a scenario from a dict, a JSON string, or a path."""
    if isinstance(source, (str, os.PathLike)) and not (
        isinstance(source, str) and source.lstrip().startswith("{")
    ):
        try:
            with open(source, "r", encoding="utf-8") as fh:
                raw = json.load(fh)
        except OSError as exc:
            raise ScenarioError(f"cannot read scenario: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"scenario is not valid JSON: {exc}") from exc
    elif isinstance(source, str):
        try:
            raw = json.loads(source)
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"scenario is not valid JSON: {exc}") from exc
    else:
        raw = source
    if not isinstance(raw, Mapping):
        raise ScenarioError("scenario document must be a JSON object")

    name = raw.get("name")
    if not name or not isinstance(name, str):
        raise ScenarioError("scenario needs a non-empty name")
    description = raw.get("description", "")
    seed = int(raw.get("seed", 0))

    limits_raw = raw.get("limits", {})
    try:
        max_ticks = int(limits_raw.get("max_ticks", 200))
        market = BrokerConfig(
            max_legs=int(limits_raw.get("max_legs", 3)),
            transfer_slack=int(limits_raw.get("transfer_slack", 0)),
            collect_deadline=int(limits_raw.get("collect_deadline", 20)),
            reservation_deadline=int(limits_raw.get("reservation_deadline", 20)),
        )
    except (TypeError, ValueError, AttributeError) as exc:
        raise ScenarioError(f"malformed limits section: {exc}") from exc
    if max_ticks <= 0:
        raise ScenarioError("max_ticks must be positive")
    if market.max_legs <= 0 or market.collect_deadline <= 0 or market.reservation_deadline <= 0:
        raise ScenarioError("market limits must be positive")

    if "model" in raw:
        try:
            model = load_model(raw["model"])
        except ModelError as exc:
            raise ScenarioError(f"bad model section: {exc}") from exc
    else:
        model = baseline_model()

    broker_raw = raw.get("broker", {})
    broker_name = broker_raw.get("name", "broker")
    broker_actor = broker_raw.get("actor")

    providers = []
    for row in raw.get("providers", []):
        pname = row.get("name")
        if not pname:
            raise ScenarioError("provider needs a name")
        try:
            legs = tuple(RouteLeg.from_dict(l) for l in row.get("legs", []))
        except (MarketError, KeyError, TypeError, ValueError) as exc:
            raise ScenarioError(f"provider {pname!r} has a malformed leg: {exc}") from exc
        for leg in legs:
            if leg.provider != pname:
                raise ScenarioError(f"leg {leg.leg_id!r} names provider {leg.provider!r}, not {pname!r}")
        try:
            discount = Decimal(str(row.get("max_discount", "0.10")))
        except InvalidOperation as exc:
            raise ScenarioError(f"provider {pname!r} has a malformed max_discount") from exc
        if not (Decimal(0) <= discount < Decimal(1)):
            raise ScenarioError(f"provider {pname!r} max_discount must be in [0, 1)")
        providers.append(
            ProviderSpec(
                name=pname,
                legs=legs,
                max_discount=discount,
                probe_target=row.get("probe_target"),
                actor=row.get("actor"),
            )
        )

    customers = []
    for row in raw.get("customers", []):
        cname = row.get("name")
        if not cname:
            raise ScenarioError("customer needs a name")
        script = tuple(row.get("script", ()))
        if script:
            try:
                build_script_plan(cname, script)
            except (ScriptError, MarketError, KeyError, TypeError, ValueError) as exc:
                raise ScenarioError(f"customer {cname!r} has a bad script: {exc}") from exc
        customers.append(CustomerSpec(name=cname, script=script, actor=row.get("actor")))

    scenario = Scenario(
        name=name,
        description=description,
        seed=seed,
        max_ticks=max_ticks,
        market=market,
        broker_name=broker_name,
        providers=tuple(providers),
        customers=tuple(customers),
        model=model,
        broker_actor=broker_actor,
    )
    names = scenario.agent_names()
    if len(names) != len(set(names)):
        raise ScenarioError("agent names must be unique across the scenario")
    for provider in scenario.providers:
        if provider.probe_target is not None and provider.probe_target not in names:
            raise ScenarioError(f"probe target {provider.probe_target!r} is not a scenario agent")
    for customer in scenario.customers:
        for step in customer.script:
            if step.get("action") == "probe" and step.get("target") not in names:
                raise ScenarioError(f"probe target {step.get('target')!r} is not a scenario agent")
    actor_names = set(model.actor_names())
    for agent, actor in scenario.actor_map().items():
        if actor not in actor_names:
            raise ScenarioError(f"agent {agent!r} maps to {actor!r}, which is not a model actor")
    return scenario


def build_runtime(scenario: Scenario, seed: Optional[int] = None) -> Runtime:
    """Spawn the scenario's agents in deterministic order."""
    runtime = Runtime(seed=scenario.seed if seed is None else seed)
    runtime.spawn_agent(scenario.broker_name, broker_behaviours(scenario.market))
    for provider in scenario.providers:
        runtime.spawn_agent(
            provider.name,
            provider_behaviours(
                ProviderConfig(
                    legs=provider.legs,
                    max_discount=provider.max_discount,
                    probe_target=provider.probe_target,
                )
            ),
        )
    for customer in scenario.customers:
        runtime.spawn_agent(customer.name, customer_behaviours(CustomerConfig(script=customer.script)))
    return runtime


@dataclass
class RunOutcome:
    scenario: Scenario
    seed: int
    runtime: Runtime
    result: RunResult
    trace: list[TraceEvent]
    reports: dict[str, ConversationReport]
    violations: list[Violation]

    def snapshot(self) -> dict:
        """A JSON-ready digest of the run used for replay comparison."""
        customers = {}
        for spec in self.scenario.customers:
            store = self.runtime.agent_store(spec.name)
            conversations = {}
            for conv, rec in sorted(store.get("conversations", {}).items()):
                conversations[conv] = {
                    "request_id": rec["request_id"],
                    "offers": [o.to_dict() for o in rec["offers"]],
                    "amendments": [a.to_dict() for a in rec["amendments"]],
                    "result": rec["result"].to_dict() if rec["result"] else None,
                    "refusal": rec["refusal"].to_dict() if rec["refusal"] else None,
                    "presented_count": rec["presented_count"],
                    "updated_tick": rec["updated_tick"],
                }
            customers[spec.name] = conversations
        legbooks = {}
        for spec in self.scenario.providers:
            book = self.runtime.agent_store(spec.name)["book"]
            legbooks[spec.name] = {
                "remaining": {leg.leg_id: book.remaining(leg.leg_id) for leg in book.legs()},
                "reservations": [
                    {"reservation_id": r.reservation_id, "leg_id": r.leg_id, "units": r.units}
                    for r in book.reservations()
                ],
                "conservation_ok": book.check_conservation(),
            }
        return {
            "scenario": self.scenario.name,
            "seed": self.seed,
            "quiescent": self.result.quiescent,
            "ticks": self.result.ticks,
            "conversations": {cid: report.to_dict() for cid, report in sorted(self.reports.items())},
            "violations": [v.to_dict() for v in self.violations],
            "customers": customers,
            "legbooks": legbooks,
        }


def run_scenario(scenario: Scenario, max_ticks: Optional[int] = None, seed: Optional[int] = None) -> RunOutcome:
    runtime = build_runtime(scenario, seed=seed)
    result = runtime.run_until_quiescent(max_ticks or scenario.max_ticks)
    trace = runtime.bus.export_trace()
    reports = validate_trace(trace, scenario.role_map())
    violations = check_conformance(scenario.model, trace, scenario.actor_map())
    return RunOutcome(
        scenario=scenario,
        seed=scenario.seed if seed is None else seed,
        runtime=runtime,
        result=result,
        trace=trace,
        reports=reports,
        violations=violations,
    )


def shipped_scenario_names() -> list[str]:
    root = resources.files("agmarket").joinpath("scenarios")
    return sorted(p.name[: -len(".json")] for p in root.iterdir() if p.name.endswith(".json"))


def load_shipped(name: str) -> Scenario:
    path = resources.files("agmarket").joinpath("scenarios").joinpath(f"{name}.json")
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError as exc:
        raise ScenarioError(f"no shipped scenario named {name!r}") from exc
    return load_scenario(json.loads(text))


def resolve_scenario(ref: str) -> Scenario:
    """Accept either a path to a scenario file or a shipped scenario name."""
    if os.path.exists(ref):
        return load_scenario(ref)
    if ref in shipped_scenario_names():
        return load_shipped(ref)
    raise ScenarioError(f"{ref!r} is neither a scenario file nor a shipped scenario name")
