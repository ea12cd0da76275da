"""HTTP gateway: a live market stepped in a worker thread and exposed
over a small JSON API.

The kernel is single-threaded by design, so the service funnels every
external mutation through a command queue applied between ticks, and HTTP
handlers wait on futures that watcher predicates resolve once the market
has answered. Browser customers are ordinary customer agents spawned
without a script; their perception records what the broker sends and the
API reads those records.
"""

from __future__ import annotations

import queue
import threading
import time
from concurrent.futures import Future, TimeoutError as FutureTimeout
from dataclasses import replace
from typing import Callable, Optional

from fastapi import Body, FastAPI, HTTPException
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse

from .agents import SERVICE_BROKER, customer_behaviours
from .content import RequestContent, SelectionContent, AmendmentContent
from .kernel import Runtime
from .market import (
    Amendment,
    CriteriaProfile,
    InvalidRequest,
    MarketError,
    TransportRequest,
    to_money,
)
from .messaging import Performative
from .model import derive_acquaintances
from .scenario import Scenario, build_runtime

DEFAULT_CUSTOMER = "web"


class GatewayError(Exception):
    pass


def _record_to_json(conversation_id: str, rec: Optional[dict]) -> dict:
    if rec is None:
        rec = {
            "request_id": None,
            "offers": [],
            "amendments": [],
            "result": None,
            "refusal": None,
            "presented_count": 0,
            "updated_tick": -1,
        }
    if rec["result"] is not None:
        status = "closed"
    elif rec["refusal"] is not None:
        status = "refused"
    elif rec["presented_count"] > 0:
        status = "presented"
    else:
        status = "pending"
    return {
        "conversation_id": conversation_id,
        "request_id": rec["request_id"],
        "status": status,
        "presented_count": rec["presented_count"],
        "offers": [o.to_dict() for o in rec["offers"]],
        "amendments": [a.to_dict() for a in rec["amendments"]],
        "result": rec["result"].to_dict() if rec["result"] else None,
        "refusal": rec["refusal"].to_dict() if rec["refusal"] else None,
        "updated_tick": rec["updated_tick"],
    }


class ServiceRuntime:
    """Steps a scenario runtime on a fixed cadence in a daemon thread.

    `execute` runs a function against the runtime between ticks and returns
    its result; `watch` blocks until a predicate reports a value. Both are
    safe to call from HTTP handler threads.
    """

    def __init__(self, scenario: Scenario, cadence: float = 0.05):
        self.scenario = scenario
        self.runtime: Runtime = build_runtime(scenario)
        self.cadence = cadence
        self.actor_of = dict(scenario.actor_map())
        self.requests: dict[str, dict] = {}
        self._counters: dict[str, int] = {}
        self._commands: "queue.Queue[tuple[Future, Callable]]" = queue.Queue()
        self._watchers: list[tuple[Future, Callable]] = []
        self._watch_lock = threading.Lock()
        self._stop = threading.Event()
        self._thread: Optional[threading.Thread] = None

    # -- lifecycle -----------------------------------------------------------

    def start(self) -> None:
        if self._thread is not None:
            return
        # one synchronous step so setup behaviours (directory entries) ran
        # before the first request can arrive
        self.runtime.step()
        self._thread = threading.Thread(target=self._loop, name="agmarket-service", daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=5)
            self._thread = None

    def _loop(self) -> None:
        while not self._stop.is_set():
            while True:
                try:
                    fut, fn = self._commands.get_nowait()
                except queue.Empty:
                    break
                if fut.done():
                    continue
                try:
                    result = fn(self.runtime)
                except Exception as exc:  # noqa: BLE001 - surfaced via the future
                    fut.set_exception(exc)
                else:
                    fut.set_result(result)
            self.runtime.step()
            with self._watch_lock:
                pending = []
                for fut, predicate in self._watchers:
                    if fut.done():
                        continue
                    try:
                        value = predicate(self.runtime)
                    except Exception as exc:  # noqa: BLE001 - surfaced via the future
                        fut.set_exception(exc)
                        continue
                    if value is None:
                        pending.append((fut, predicate))
                    else:
                        fut.set_result(value)
                self._watchers = pending
            time.sleep(self.cadence)

    # -- synchronized access ---------------------------------------------------

    def execute(self, fn: Callable, timeout: float = 5.0):
        fut: Future = Future()
        self._commands.put((fut, fn))
        return fut.result(timeout)

    def watch(self, predicate: Callable, timeout: float = 10.0):
        fut: Future = Future()
        with self._watch_lock:
            self._watchers.append((fut, predicate))
        try:
            return fut.result(timeout)
        except FutureTimeout:
            fut.cancel()
            raise

    # -- customer plumbing ------------------------------------------------------

    def ensure_customer(self, name: str) -> None:
        def spawn(runtime: Runtime):
            if runtime.live_agent(name) is None:
                if self.actor_of.get(name) not in (None, "Customer"):
                    raise GatewayError(f"agent name {name!r} is taken by a non-customer")
                runtime.spawn_agent(name, customer_behaviours())
                self.actor_of[name] = "Customer"
            elif self.actor_of.get(name) != "Customer":
                raise GatewayError(f"agent name {name!r} is taken by a non-customer")
            return True

        self.execute(spawn)

    def open_conversation(self, customer: str, request: TransportRequest) -> str:
        if request.request_id in self.requests:
            raise GatewayError(f"request id {request.request_id!r} is already in use")
        counter = self._counters.get(customer, 0)
        self._counters[customer] = counter + 1
        conversation_id = f"{request.request_id}/{counter}"

        def send(runtime: Runtime):
            sender = runtime.live_agent(customer)
            brokers = runtime.bus.search_directory(SERVICE_BROKER)
            if sender is None or not brokers:
                raise GatewayError("market is not ready")
            runtime.bus.send_parts(
                sender=sender,
                performative=Performative.REQUEST,
                receivers=[brokers[0].agent],
                body=RequestContent(request),
                conversation_id=conversation_id,
            )
            return True

        self.execute(send)
        self.requests[request.request_id] = {
            "customer": customer,
            "conversation_id": conversation_id,
            "request": request,
        }
        return conversation_id

    def send_from(self, customer: str, performative: Performative, body, conversation_id: str) -> None:
        def send(runtime: Runtime):
            sender = runtime.live_agent(customer)
            brokers = runtime.bus.search_directory(SERVICE_BROKER)
            if sender is None or not brokers:
                raise GatewayError("market is not ready")
            runtime.bus.send_parts(
                sender=sender,
                performative=performative,
                receivers=[brokers[0].agent],
                body=body,
                conversation_id=conversation_id,
            )
            return True

        self.execute(send)

    def conversation_record(self, customer: str, conversation_id: str) -> Optional[dict]:
        def read(runtime: Runtime):
            if runtime.live_agent(customer) is None:
                return {}
            store = runtime.agent_store(customer)
            rec = store.get("conversations", {}).get(conversation_id)
            return {"rec": rec}

        return self.execute(read).get("rec")

    def record_watcher(self, customer: str, conversation_id: str, ready: Callable[[dict], bool]):
        def predicate(runtime: Runtime):
            if runtime.live_agent(customer) is None:
                return None
            store = runtime.agent_store(customer)
            rec = store.get("conversations", {}).get(conversation_id)
            if rec is not None and ready(rec):
                return _record_to_json(conversation_id, rec)
            return None

        return predicate


_ERROR_CODES = {
    404: ("not-found", "no such resource"),
    409: ("conflict", "the request cannot be applied in the current state"),
    422: ("invalid-input", "the payload failed validation"),
    504: ("timeout", "the market did not answer before the deadline"),
}


def _error_body(status: int, detail: str) -> dict:
    code, message = _ERROR_CODES.get(status, ("error", "request failed"))
    return {"code": code, "message": message, "detail": detail}


def create_app(service: ServiceRuntime, console_dir: Optional[str] = None) -> FastAPI:
    app = FastAPI(title="agmarket gateway", docs_url=None, redoc_url=None)

    @app.exception_handler(HTTPException)
    def http_error(request, exc: HTTPException) -> JSONResponse:
        return JSONResponse(status_code=exc.status_code, content=_error_body(exc.status_code, str(exc.detail)))

    @app.exception_handler(RequestValidationError)
    def body_error(request, exc: RequestValidationError) -> JSONResponse:
        return JSONResponse(status_code=422, content=_error_body(422, str(exc.errors())))

    def _entry(request_id: str) -> dict:
        entry = service.requests.get(request_id)
        if entry is None:
            raise HTTPException(status_code=404, detail=f"unknown request id {request_id!r}")
        return entry

    @app.get("/api/scenario")
    def scenario_info() -> dict:
        return {
            "name": service.scenario.name,
            "description": service.scenario.description,
            "broker": service.scenario.broker_name,
            "providers": [p.name for p in service.scenario.providers],
            "customers": [c.name for c in service.scenario.customers],
            "tick": service.runtime.tick,
        }

    @app.get("/api/network")
    def network() -> dict:
        model = service.scenario.model
        agents = service.execute(
            lambda rt: [
                {"name": a.name, "ordinal": a.ordinal, "actor": service.actor_of.get(a.name, "")}
                for a in rt.live_agents()
            ]
        )
        return {
            "model": model.to_dict(),
            "acquaintances": derive_acquaintances(model).to_dict(),
            "agents": agents,
        }

    @app.get("/api/trace")
    def trace(conversation: Optional[str] = None) -> dict:
        events = service.execute(lambda rt: rt.bus.export_trace(conversation))
        return {"events": [e.to_dict() for e in events]}

    @app.post("/api/requests", status_code=201)
    def submit_request(payload: dict = Body(...)) -> dict:
        customer = payload.get("customer", DEFAULT_CUSTOMER)
        try:
            request = TransportRequest.from_dict(payload["request"])
        except (KeyError, TypeError, ValueError, MarketError) as exc:
            raise HTTPException(status_code=422, detail=f"malformed request: {exc}") from exc
        try:
            service.ensure_customer(customer)
            conversation_id = service.open_conversation(customer, request)
        except GatewayError as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc
        try:
            record = service.watch(
                service.record_watcher(
                    customer,
                    conversation_id,
                    lambda rec: rec["presented_count"] > 0 or rec["refusal"] is not None,
                )
            )
        except FutureTimeout as exc:
            raise HTTPException(status_code=504, detail="no presentation before the deadline") from exc
        return record

    @app.get("/api/requests/{request_id}/proposals")
    def proposals(request_id: str) -> dict:
        entry = _entry(request_id)
        rec = service.conversation_record(entry["customer"], entry["conversation_id"])
        return _record_to_json(entry["conversation_id"], rec)

    @app.put("/api/requests/{request_id}/weights")
    def reweight(request_id: str, payload: dict = Body(...)) -> dict:
        entry = _entry(request_id)
        try:
            criteria = CriteriaProfile.from_dict(payload)
        except (KeyError, TypeError, ValueError, MarketError) as exc:
            raise HTTPException(status_code=422, detail=f"malformed criteria: {exc}") from exc
        rec = service.conversation_record(entry["customer"], entry["conversation_id"])
        before = rec["presented_count"] if rec else 0
        updated = replace(entry["request"], criteria=criteria)
        entry["request"] = updated
        service.send_from(
            entry["customer"], Performative.REQUEST, RequestContent(updated), entry["conversation_id"]
        )
        try:
            return service.watch(
                service.record_watcher(
                    entry["customer"],
                    entry["conversation_id"],
                    lambda r: r["presented_count"] > before,
                )
            )
        except FutureTimeout as exc:
            raise HTTPException(status_code=504, detail="no fresh presentation before the deadline") from exc

    @app.post("/api/requests/{request_id}/amendments")
    def amend(request_id: str, payload: dict = Body(...)) -> dict:
        entry = _entry(request_id)
        try:
            amendment = Amendment(
                request_id=request_id,
                itinerary_id=payload["itinerary_id"],
                criterion=payload["criterion"],
                target=to_money(payload["target"]) if payload["criterion"] == "cost" else int(payload["target"]),
            )
        except (KeyError, TypeError, ValueError, MarketError) as exc:
            raise HTTPException(status_code=422, detail=f"malformed amendment: {exc}") from exc
        rec = service.conversation_record(entry["customer"], entry["conversation_id"])
        before = len(rec["amendments"]) if rec else 0
        service.send_from(
            entry["customer"], Performative.REQUEST, AmendmentContent(amendment), entry["conversation_id"]
        )
        try:
            return service.watch(
                service.record_watcher(
                    entry["customer"],
                    entry["conversation_id"],
                    lambda r: len(r["amendments"]) > before,
                )
            )
        except FutureTimeout as exc:
            raise HTTPException(status_code=504, detail="no amendment answer before the deadline") from exc

    @app.post("/api/requests/{request_id}/selection")
    def select(request_id: str, payload: dict = Body(...)) -> dict:
        entry = _entry(request_id)
        itinerary_id = payload.get("itinerary_id")
        if not itinerary_id:
            raise HTTPException(status_code=422, detail="selection needs an itinerary_id")
        service.send_from(
            entry["customer"],
            Performative.INFORM,
            SelectionContent(request_id=request_id, itinerary_id=itinerary_id),
            entry["conversation_id"],
        )
        try:
            return service.watch(
                service.record_watcher(
                    entry["customer"],
                    entry["conversation_id"],
                    lambda r: r["result"] is not None,
                ),
                timeout=15.0,
            )
        except FutureTimeout as exc:
            raise HTTPException(status_code=504, detail="no reservation outcome before the deadline") from exc

    if console_dir is not None:
        from fastapi.staticfiles import StaticFiles

        # mounted last so the /api routes always win
        app.mount("/", StaticFiles(directory=console_dir, html=True), name="console")

    return app
