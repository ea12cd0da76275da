"""Command line entry points.

Exit codes: 0 success, 2 unreadable or invalid input (scenario, model, or
trace file), 3 tick budget exhausted before quiescence, 4 conformance
violations (or, for validate, model consistency problems), 5 a
conversation left in a non-terminal state. For run, lower-numbered
failures win when several apply.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from typing import Optional

from .messaging import MalformedTrace, read_trace_jsonl, render_sequence_diagram, write_trace_jsonl
from .protocol import ConversationOutcome
from .scenario import ScenarioError, resolve_scenario, run_scenario
from .model import validate_model

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_BUDGET = 3
EXIT_CONFORMANCE = 4
EXIT_RESIDUAL = 5

TERMINAL = (ConversationOutcome.OK, ConversationOutcome.FAILED)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="agmarket", description="Deterministic transport e-market")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario to quiescence and grade the trace")
    run.add_argument("--scenario", required=True, help="scenario file path or shipped scenario name")
    run.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    run.add_argument("--trace", default=None, help="write the message trace as JSONL")
    run.add_argument("--max-ticks", type=int, default=None, help="override the scenario tick budget")
    run.add_argument("--snapshot", default=None, help="write the run snapshot as JSON")
    run.add_argument("--json", action="store_true", help="print the snapshot as JSON instead of the summary")

    validate = sub.add_parser("validate", help="check a scenario's organizational model for consistency")
    validate.add_argument("--scenario", required=True, help="scenario file path or shipped scenario name")

    serve = sub.add_parser("serve", help="serve a scenario over HTTP")
    serve.add_argument("--scenario", required=True, help="scenario file path or shipped scenario name")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    serve.add_argument("--cadence", type=float, default=0.05, help="seconds between ticks")
    serve.add_argument("--console", default=None, help="also serve a static console build from this directory")

    diagram = sub.add_parser("diagram", help="render a JSONL trace as a sequence diagram")
    diagram.add_argument("--trace", required=True, help="trace file written by run --trace")
    diagram.add_argument("--conversation", default=None, help="limit to one conversation id")
    return parser


def _cmd_run(args) -> int:
    try:
        scenario = resolve_scenario(args.scenario)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    outcome = run_scenario(scenario, max_ticks=args.max_ticks, seed=args.seed)
    if args.trace:
        try:
            write_trace_jsonl(outcome.trace, args.trace)
        except OSError as exc:
            print(f"error: cannot write trace: {exc}", file=sys.stderr)
            return EXIT_PARSE
    if args.snapshot:
        try:
            with open(args.snapshot, "w", encoding="utf-8") as fh:
                json.dump(outcome.snapshot(), fh, indent=2, sort_keys=True)
                fh.write("\n")
        except OSError as exc:
            print(f"error: cannot write snapshot: {exc}", file=sys.stderr)
            return EXIT_PARSE
    if args.json:
        print(json.dumps(outcome.snapshot(), indent=2, sort_keys=True))
    else:
        print(f"scenario {scenario.name}: {'quiescent' if outcome.result.quiescent else 'budget exhausted'} "
              f"after {outcome.result.ticks} tick(s)")
        for cid, report in sorted(outcome.reports.items()):
            print(f"  {cid}: {report.outcome.value} ({report.detail})")
        if outcome.violations:
            print(f"  conformance violations: {len(outcome.violations)}")
            for violation in outcome.violations:
                print(f"    seq {violation.seq}: {violation.sender} -> {violation.receiver} ({violation.reason})")
        else:
            print("  conformance violations: 0")
        print(render_sequence_diagram(outcome.trace), end="")
    if not outcome.result.quiescent:
        return EXIT_BUDGET
    if outcome.violations:
        return EXIT_CONFORMANCE
    if any(report.outcome not in TERMINAL for report in outcome.reports.values()):
        return EXIT_RESIDUAL
    return EXIT_OK


def _cmd_validate(args) -> int:
    try:
        scenario = resolve_scenario(args.scenario)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    model = scenario.model
    report = validate_model(model)
    print(
        f"model: {len(model.actors)} actor(s), {len(model.dependencies)} dependency(ies), "
        f"{len(model.capacities)} capacity(ies)"
    )
    if report.ok:
        print("valid")
        return EXIT_OK
    for problem in report.problems:
        print(f"  problem: {problem}")
    return EXIT_CONFORMANCE


def _cmd_serve(args) -> int:
    import uvicorn

    from .gateway import ServiceRuntime, create_app

    try:
        scenario = resolve_scenario(args.scenario)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    if args.console is not None and not os.path.isdir(args.console):
        print(f"error: console directory {args.console!r} does not exist", file=sys.stderr)
        return EXIT_PARSE
    service = ServiceRuntime(scenario, cadence=args.cadence)
    service.start()
    app = create_app(service, console_dir=args.console)
    print(f"serving scenario {scenario.name} on http://{args.host}:{args.port}")
    try:
        uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    finally:
        service.stop()
    return EXIT_OK


def _cmd_diagram(args) -> int:
    try:
        events = read_trace_jsonl(args.trace)
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: cannot read trace: {exc}", file=sys.stderr)
        return EXIT_PARSE
    if args.conversation is not None:
        kept = [e for e in events if e.conversation_id == args.conversation]
        # re-sequence the filtered view so the renderer's gap check holds
        events = [replace(e, seq=i) for i, e in enumerate(kept)]
    try:
        print(render_sequence_diagram(events), end="")
    except MalformedTrace as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    return EXIT_OK


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return _cmd_run(args)
    if args.command == "validate":
        return _cmd_validate(args)
    if args.command == "serve":
        return _cmd_serve(args)
    return _cmd_diagram(args)
