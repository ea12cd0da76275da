"""Message body types for the market protocol.

Every class carries a TAG used by the protocol conformance table and a
one-line summary() rendered into the sniffer trace. Bodies round-trip
through to_dict/from_dict for the HTTP gateway.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional

from .market import (
    Amendment,
    AmendmentOutcome,
    Itinerary,
    ProposalStatus,
    RouteLeg,
    ScoredItinerary,
    TransportRequest,
    money_str,
    to_money,
)


class ContentError(Exception):
    pass


@dataclass(frozen=True)
class RequestContent:
    TAG = "transport-request"

    request: TransportRequest

    def summary(self) -> str:
        r = self.request
        return f"{r.request_id} {r.origin}>{r.destination} cargo={r.constraints.cargo_size}"

    def to_dict(self) -> dict:
        return {"tag": self.TAG, "request": self.request.to_dict()}

    @classmethod
    def from_dict(cls, raw: Mapping) -> "RequestContent":
        return cls(request=TransportRequest.from_dict(raw["request"]))


@dataclass(frozen=True)
class RankedOffer:
    """One ranked itinerary as presented to the customer."""

    scored: ScoredItinerary
    status: ProposalStatus

    def to_dict(self) -> dict:
        data = self.scored.to_dict()
        data["status"] = self.status.value
        return data

    @classmethod
    def from_dict(cls, raw: Mapping) -> "RankedOffer":
        itinerary = Itinerary.from_dict(raw)
        utilities = (
            float(raw["utilities"]["cost"]),
            float(raw["utilities"]["time"]),
            float(raw["utilities"]["insurance"]),
        )
        scored = ScoredItinerary(
            itinerary=itinerary,
            utilities=utilities,
            score=float(raw["score"]),
            rank=int(raw["rank"]),
        )
        return cls(scored=scored, status=ProposalStatus(raw["status"]))


@dataclass(frozen=True)
class ProposalSetContent:
    TAG = "proposal-set"

    request_id: str
    offers: tuple[RankedOffer, ...]

    def summary(self) -> str:
        return f"{self.request_id} {len(self.offers)} offer(s)"

    def to_dict(self) -> dict:
        return {
            "tag": self.TAG,
            "request_id": self.request_id,
            "offers": [o.to_dict() for o in self.offers],
        }

    @classmethod
    def from_dict(cls, raw: Mapping) -> "ProposalSetContent":
        return cls(
            request_id=raw["request_id"],
            offers=tuple(RankedOffer.from_dict(o) for o in raw["offers"]),
        )


@dataclass(frozen=True)
class SelectionContent:
    TAG = "selection"

    request_id: str
    itinerary_id: str

    def summary(self) -> str:
        return f"{self.request_id} picks {self.itinerary_id}"

    def to_dict(self) -> dict:
        return {"tag": self.TAG, "request_id": self.request_id, "itinerary_id": self.itinerary_id}

    @classmethod
    def from_dict(cls, raw: Mapping) -> "SelectionContent":
        return cls(request_id=raw["request_id"], itinerary_id=raw["itinerary_id"])


@dataclass(frozen=True)
class AmendmentContent:
    """An amendment in flight.

    The customer sends the bare ask; the broker forwards it to providers
    with its proposed outcome and each provider's repriced legs attached,
    so every provider can check the new terms against its own book; the
    broker's final notification to the customer carries the outcome alone.
    """

    TAG = "amendment"

    amendment: Amendment
    outcome: Optional[AmendmentOutcome] = None
    legs: tuple[RouteLeg, ...] = ()

    def summary(self) -> str:
        a = self.amendment
        target = money_str(a.target) if a.criterion == "cost" else str(a.target)
        bound = ">=" if a.criterion == "insurance" else "<="
        head = f"{a.itinerary_id} {a.criterion}{bound}{target}"
        if self.outcome is None:
            return head
        verdict = "granted" if self.outcome.accepted else "rejected"
        return f"{head} {verdict}"

    def to_dict(self) -> dict:
        data = {"tag": self.TAG, "amendment": self.amendment.to_dict()}
        if self.outcome is not None:
            granted = self.outcome.granted
            if granted is not None and self.amendment.criterion == "cost":
                granted = money_str(to_money(granted))
            data["outcome"] = {
                "accepted": self.outcome.accepted,
                "granted": granted,
                "reason": self.outcome.reason,
            }
        if self.legs:
            data["legs"] = [leg.to_dict() for leg in self.legs]
        return data

    @classmethod
    def from_dict(cls, raw: Mapping) -> "AmendmentContent":
        amendment = Amendment.from_dict(raw["amendment"])
        outcome = None
        if raw.get("outcome") is not None:
            out = raw["outcome"]
            granted = out.get("granted")
            if granted is not None:
                granted = to_money(granted) if amendment.criterion == "cost" else int(granted)
            outcome = AmendmentOutcome(accepted=out["accepted"], granted=granted, reason=out["reason"])
        legs = tuple(RouteLeg.from_dict(l) for l in raw.get("legs", ()))
        return cls(amendment=amendment, outcome=outcome, legs=legs)


@dataclass(frozen=True)
class ReservationRequestContent:
    TAG = "reservation-request"

    reservation_id: str
    request_id: str
    leg_ids: tuple[str, ...]
    units: int

    def summary(self) -> str:
        return f"{self.reservation_id} legs={','.join(self.leg_ids)} units={self.units}"

    def to_dict(self) -> dict:
        return {
            "tag": self.TAG,
            "reservation_id": self.reservation_id,
            "request_id": self.request_id,
            "leg_ids": list(self.leg_ids),
            "units": self.units,
        }

    @classmethod
    def from_dict(cls, raw: Mapping) -> "ReservationRequestContent":
        return cls(
            reservation_id=raw["reservation_id"],
            request_id=raw["request_id"],
            leg_ids=tuple(raw["leg_ids"]),
            units=int(raw["units"]),
        )


@dataclass(frozen=True)
class ReservationResultContent:
    TAG = "reservation-result"

    reservation_id: str
    status: str
    leg_ids: tuple[str, ...] = ()
    reason: str = ""

    STATUSES = ("confirmed", "refused", "released")

    def __post_init__(self) -> None:
        if self.status not in self.STATUSES:
            raise ContentError(f"unknown reservation status {self.status!r}")

    def summary(self) -> str:
        return f"{self.reservation_id} {self.status}"

    def to_dict(self) -> dict:
        return {
            "tag": self.TAG,
            "reservation_id": self.reservation_id,
            "status": self.status,
            "leg_ids": list(self.leg_ids),
            "reason": self.reason,
        }

    @classmethod
    def from_dict(cls, raw: Mapping) -> "ReservationResultContent":
        return cls(
            reservation_id=raw["reservation_id"],
            status=raw["status"],
            leg_ids=tuple(raw.get("leg_ids", ())),
            reason=raw.get("reason", ""),
        )


@dataclass(frozen=True)
class PlanUpdateContent:
    """A provider's current view of a set of legs.

    Serves both as the body of an offer (the legs a provider can run for a
    request, capacities reflecting live availability) and as the schedule
    update pushed after a reservation is confirmed.
    """

    TAG = "plan-update"

    provider: str
    legs: tuple[RouteLeg, ...]
    note: str = ""

    def summary(self) -> str:
        return f"{self.provider} {len(self.legs)} leg(s)" + (f" {self.note}" if self.note else "")

    def to_dict(self) -> dict:
        return {
            "tag": self.TAG,
            "provider": self.provider,
            "legs": [leg.to_dict() for leg in self.legs],
            "note": self.note,
        }

    @classmethod
    def from_dict(cls, raw: Mapping) -> "PlanUpdateContent":
        return cls(
            provider=raw["provider"],
            legs=tuple(RouteLeg.from_dict(l) for l in raw["legs"]),
            note=raw.get("note", ""),
        )


@dataclass(frozen=True)
class ErrorInfoContent:
    TAG = "error-info"

    code: str
    detail: str = ""

    def summary(self) -> str:
        return f"{self.code}" + (f": {self.detail}" if self.detail else "")

    def to_dict(self) -> dict:
        return {"tag": self.TAG, "code": self.code, "detail": self.detail}

    @classmethod
    def from_dict(cls, raw: Mapping) -> "ErrorInfoContent":
        return cls(code=raw["code"], detail=raw.get("detail", ""))


CONTENT_CLASSES = {
    cls.TAG: cls
    for cls in (
        RequestContent,
        ProposalSetContent,
        SelectionContent,
        AmendmentContent,
        ReservationRequestContent,
        ReservationResultContent,
        PlanUpdateContent,
        ErrorInfoContent,
    )
}


def content_from_dict(raw: Mapping):
    tag = raw.get("tag")
    cls = CONTENT_CLASSES.get(tag)
    if cls is None:
        raise ContentError(f"unknown content tag {tag!r}")
    return cls.from_dict(raw)
