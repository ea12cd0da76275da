"""Transport-market domain model: route legs, requests, itinerary
composition, multi-criteria ranking, amendments, and capacity accounting.

Money is Decimal quantized to cents and serialized as 2-decimal strings;
times are integer minutes from scenario epoch. All ordering rules break
ties on itinerary id so results are stable across runs.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from decimal import Decimal, ROUND_HALF_UP
from enum import Enum
from typing import Iterable, Mapping, Optional, Sequence

CENT = Decimal("0.01")
DEFAULT_MAX_DISCOUNT = Decimal("0.10")
DEFAULT_MAX_LEGS = 3

CRITERIA = ("cost", "time", "insurance")


class MarketError(Exception):
    pass


class InvalidLeg(MarketError):
    pass


class InvalidRequest(MarketError):
    pass


class InvalidItinerary(MarketError):
    pass


class UnknownLeg(MarketError):
    pass


class UnknownReservation(MarketError):
    pass


class InsufficientCapacity(MarketError):
    pass


class AlreadyDecided(MarketError):
    """Raised when amending a proposal the customer has already settled."""


def to_money(value) -> Decimal:
    """Coerce a JSON number or string to a cent-quantized Decimal."""
    if isinstance(value, float):
        value = str(value)
    return Decimal(value).quantize(CENT, rounding=ROUND_HALF_UP)


def money_str(value: Decimal) -> str:
    return str(value.quantize(CENT, rounding=ROUND_HALF_UP))


@dataclass(frozen=True)
class RouteLeg:
    """One bookable transport segment operated by a single provider."""

    leg_id: str
    provider: str
    origin: str
    destination: str
    depart: int
    arrive: int
    cost: Decimal
    insurance: int
    capacity: int

    def __post_init__(self) -> None:
        if not self.leg_id:
            raise InvalidLeg("leg id must be non-empty")
        if self.origin == self.destination:
            raise InvalidLeg(f"leg {self.leg_id}: origin equals destination")
        if self.arrive <= self.depart:
            raise InvalidLeg(f"leg {self.leg_id}: arrive must be after depart")
        if self.cost < 0:
            raise InvalidLeg(f"leg {self.leg_id}: negative cost")
        if self.insurance < 0:
            raise InvalidLeg(f"leg {self.leg_id}: negative insurance level")
        if self.capacity < 0:
            raise InvalidLeg(f"leg {self.leg_id}: negative capacity")

    def to_dict(self) -> dict:
        return {
            "leg_id": self.leg_id,
            "provider": self.provider,
            "origin": self.origin,
            "destination": self.destination,
            "depart": self.depart,
            "arrive": self.arrive,
            "cost": money_str(self.cost),
            "insurance": self.insurance,
            "capacity": self.capacity,
        }

    @classmethod
    def from_dict(cls, raw: Mapping) -> "RouteLeg":
        return cls(
            leg_id=raw["leg_id"],
            provider=raw["provider"],
            origin=raw["origin"],
            destination=raw["destination"],
            depart=int(raw["depart"]),
            arrive=int(raw["arrive"]),
            cost=to_money(raw["cost"]),
            insurance=int(raw["insurance"]),
            capacity=int(raw["capacity"]),
        )


@dataclass(frozen=True)
class HardConstraints:
    """Filters a leg chain must satisfy before soft criteria apply."""

    earliest_departure: int
    latest_arrival: int
    cargo_size: int
    min_insurance: int = 0

    def __post_init__(self) -> None:
        if self.latest_arrival <= self.earliest_departure:
            raise InvalidRequest("time window is empty")
        if self.cargo_size <= 0:
            raise InvalidRequest("cargo size must be positive")
        if self.min_insurance < 0:
            raise InvalidRequest("minimum insurance must be non-negative")

    def to_dict(self) -> dict:
        return {
            "earliest_departure": self.earliest_departure,
            "latest_arrival": self.latest_arrival,
            "cargo_size": self.cargo_size,
            "min_insurance": self.min_insurance,
        }

    @classmethod
    def from_dict(cls, raw: Mapping) -> "HardConstraints":
        return cls(
            earliest_departure=int(raw["earliest_departure"]),
            latest_arrival=int(raw["latest_arrival"]),
            cargo_size=int(raw["cargo_size"]),
            min_insurance=int(raw.get("min_insurance", 0)),
        )


@dataclass(frozen=True)
class CriteriaProfile:
    """Relative importance of cost, delivery time, and insurance coverage."""

    cost: float
    time: float
    insurance: float

    def __post_init__(self) -> None:
        weights = (self.cost, self.time, self.insurance)
        if any(w < 0 for w in weights):
            raise InvalidRequest("criteria weights must be non-negative")
        if sum(weights) <= 0:
            raise InvalidRequest("at least one criteria weight must be positive")

    def normalized(self) -> tuple[float, float, float]:
        total = self.cost + self.time + self.insurance
        return (self.cost / total, self.time / total, self.insurance / total)

    def to_dict(self) -> dict:
        return {"cost": self.cost, "time": self.time, "insurance": self.insurance}

    @classmethod
    def from_dict(cls, raw: Mapping) -> "CriteriaProfile":
        return cls(cost=float(raw["cost"]), time=float(raw["time"]), insurance=float(raw["insurance"]))


@dataclass(frozen=True)
class TransportRequest:
    request_id: str
    customer: str
    origin: str
    destination: str
    constraints: HardConstraints
    criteria: CriteriaProfile

    def __post_init__(self) -> None:
        if not self.request_id:
            raise InvalidRequest("request id must be non-empty")
        if self.origin == self.destination:
            raise InvalidRequest("origin equals destination")

    def to_dict(self) -> dict:
        return {
            "request_id": self.request_id,
            "customer": self.customer,
            "origin": self.origin,
            "destination": self.destination,
            "constraints": self.constraints.to_dict(),
            "criteria": self.criteria.to_dict(),
        }

    @classmethod
    def from_dict(cls, raw: Mapping) -> "TransportRequest":
        return cls(
            request_id=raw["request_id"],
            customer=raw["customer"],
            origin=raw["origin"],
            destination=raw["destination"],
            constraints=HardConstraints.from_dict(raw["constraints"]),
            criteria=CriteriaProfile.from_dict(raw["criteria"]),
        )


def itinerary_id_for(leg_ids: Sequence[str]) -> str:
    digest = hashlib.sha256(",".join(leg_ids).encode("utf-8")).hexdigest()
    return digest[:12]


@dataclass(frozen=True)
class Itinerary:
    """An ordered, time-respecting chain of legs from origin to destination.

    The id is a digest of the ordered leg ids, so the same leg chain gets
    the same id in every run and every process.
    """

    itinerary_id: str
    legs: tuple[RouteLeg, ...]

    @classmethod
    def from_legs(cls, legs: Sequence[RouteLeg], transfer_slack: int = 0) -> "Itinerary":
        if not legs:
            raise InvalidItinerary("itinerary needs at least one leg")
        seen = {legs[0].origin}
        for prev, nxt in zip(legs, legs[1:]):
            if nxt.origin != prev.destination:
                raise InvalidItinerary(f"legs {prev.leg_id} and {nxt.leg_id} do not chain")
            if nxt.depart < prev.arrive + transfer_slack:
                raise InvalidItinerary(f"leg {nxt.leg_id} departs before transfer from {prev.leg_id}")
        for leg in legs:
            if leg.destination in seen:
                raise InvalidItinerary(f"leg {leg.leg_id} revisits {leg.destination}")
            seen.add(leg.destination)
        return cls(itinerary_id=itinerary_id_for([l.leg_id for l in legs]), legs=tuple(legs))

    @property
    def origin(self) -> str:
        return self.legs[0].origin

    @property
    def destination(self) -> str:
        return self.legs[-1].destination

    @property
    def depart(self) -> int:
        return self.legs[0].depart

    @property
    def arrive(self) -> int:
        return self.legs[-1].arrive

    @property
    def total_cost(self) -> Decimal:
        return sum((leg.cost for leg in self.legs), Decimal("0.00"))

    @property
    def total_time(self) -> int:
        """Door-to-door duration, transfers included."""
        return self.arrive - self.depart

    @property
    def insurance(self) -> int:
        """Coverage of the whole chain is its weakest leg."""
        return min(leg.insurance for leg in self.legs)

    def providers(self) -> tuple[str, ...]:
        ordered: list[str] = []
        for leg in self.legs:
            if leg.provider not in ordered:
                ordered.append(leg.provider)
        return tuple(ordered)

    def to_dict(self) -> dict:
        return {
            "itinerary_id": self.itinerary_id,
            "legs": [leg.to_dict() for leg in self.legs],
            "total_cost": money_str(self.total_cost),
            "total_time": self.total_time,
            "insurance": self.insurance,
        }

    @classmethod
    def from_dict(cls, raw: Mapping) -> "Itinerary":
        legs = tuple(RouteLeg.from_dict(l) for l in raw["legs"])
        return cls(itinerary_id=raw["itinerary_id"], legs=legs)


def admissible_leg(leg: RouteLeg, constraints: HardConstraints) -> bool:
    """Leg-level hard filter: window fit, coverage floor, cargo room."""
    return (
        leg.depart >= constraints.earliest_departure
        and leg.arrive <= constraints.latest_arrival
        and leg.insurance >= constraints.min_insurance
        and leg.capacity >= constraints.cargo_size
    )


def compose_itineraries(
    legs: Iterable[RouteLeg],
    request: TransportRequest,
    max_legs: int = DEFAULT_MAX_LEGS,
    transfer_slack: int = 0,
) -> list[Itinerary]:
    """Enumerate every admissible simple leg chain for `request`.

    Depth-first over a per-origin index, extending only with legs that
    depart at or after the previous arrival plus `transfer_slack` and never
    revisiting a location. Bounded by `max_legs`. Output is sorted by
    itinerary id so the candidate pool is deterministic.
    """
    if max_legs <= 0:
        raise ValueError("max_legs must be positive")
    constraints = request.constraints
    by_origin: dict[str, list[RouteLeg]] = {}
    for leg in legs:
        if admissible_leg(leg, constraints):
            by_origin.setdefault(leg.origin, []).append(leg)
    for bucket in by_origin.values():
        bucket.sort(key=lambda l: l.leg_id)

    found: list[Itinerary] = []
    chain: list[RouteLeg] = []

    def extend(location: str, earliest: int, visited: frozenset[str]) -> None:
        if location == request.destination:
            found.append(Itinerary.from_legs(list(chain), transfer_slack=transfer_slack))
            return
        if len(chain) >= max_legs:
            return
        for leg in by_origin.get(location, ()):
            if leg.depart < earliest or leg.destination in visited:
                continue
            chain.append(leg)
            extend(leg.destination, leg.arrive + transfer_slack, visited | {leg.destination})
            chain.pop()

    extend(request.origin, constraints.earliest_departure, frozenset({request.origin}))
    return sorted(found, key=lambda it: it.itinerary_id)


@dataclass(frozen=True)
class ScoredItinerary:
    itinerary: Itinerary
    utilities: tuple[float, float, float]
    score: float
    rank: int

    def to_dict(self) -> dict:
        util = dict(zip(CRITERIA, self.utilities))
        data = self.itinerary.to_dict()
        data.update({"utilities": util, "score": self.score, "rank": self.rank})
        return data


def _minmax(values: Sequence[float]) -> tuple[float, float]:
    return min(values), max(values)


def score_pool(itineraries: Sequence[Itinerary], criteria: CriteriaProfile) -> list[ScoredItinerary]:
    """Rank a candidate pool by weighted min-max utility.

    Cost and time utilities reward the low end, insurance utility rewards
    the high end; a criterion with zero spread contributes utility 1 for
    every candidate. Scores land in [0, 1]. Ties break on lower total cost,
    then itinerary id.
    """
    if not itineraries:
        return []
    costs = [float(it.total_cost) for it in itineraries]
    times = [float(it.total_time) for it in itineraries]
    covers = [float(it.insurance) for it in itineraries]
    c_lo, c_hi = _minmax(costs)
    t_lo, t_hi = _minmax(times)
    i_lo, i_hi = _minmax(covers)
    w_cost, w_time, w_ins = criteria.normalized()

    scored = []
    for it, c, t, i in zip(itineraries, costs, times, covers):
        u_cost = 1.0 if c_hi == c_lo else (c_hi - c) / (c_hi - c_lo)
        u_time = 1.0 if t_hi == t_lo else (t_hi - t) / (t_hi - t_lo)
        u_ins = 1.0 if i_hi == i_lo else (i - i_lo) / (i_hi - i_lo)
        score = w_cost * u_cost + w_time * u_time + w_ins * u_ins
        scored.append((it, (u_cost, u_time, u_ins), score))
    scored.sort(key=lambda row: (-row[2], row[0].total_cost, row[0].itinerary_id))
    return [
        ScoredItinerary(itinerary=it, utilities=utils, score=score, rank=pos + 1)
        for pos, (it, utils, score) in enumerate(scored)
    ]


class ProposalStatus(Enum):
    OFFERED = "offered"
    AMENDED = "amended"
    SELECTED = "selected"
    CONFIRMED = "confirmed"
    DECLINED = "declined"


_SETTLED = {ProposalStatus.SELECTED, ProposalStatus.CONFIRMED, ProposalStatus.DECLINED}


@dataclass(frozen=True)
class Proposal:
    """A ranked itinerary offered against one request."""

    request_id: str
    itinerary: Itinerary
    status: ProposalStatus = ProposalStatus.OFFERED
    original_cost: Optional[Decimal] = None

    @property
    def proposal_id(self) -> str:
        return self.itinerary.itinerary_id

    def baseline_cost(self) -> Decimal:
        """Cost the concession floor is measured from: the first offer."""
        return self.original_cost if self.original_cost is not None else self.itinerary.total_cost


@dataclass(frozen=True)
class Amendment:
    """A customer's ask to improve one criterion of one proposal."""

    request_id: str
    itinerary_id: str
    criterion: str
    target: Decimal | int

    def __post_init__(self) -> None:
        if self.criterion not in CRITERIA:
            raise InvalidRequest(f"unknown amendment criterion {self.criterion!r}")

    def to_dict(self) -> dict:
        target = money_str(self.target) if self.criterion == "cost" else int(self.target)
        return {
            "request_id": self.request_id,
            "itinerary_id": self.itinerary_id,
            "criterion": self.criterion,
            "target": target,
        }

    @classmethod
    def from_dict(cls, raw: Mapping) -> "Amendment":
        criterion = raw["criterion"]
        target = to_money(raw["target"]) if criterion == "cost" else int(raw["target"])
        return cls(
            request_id=raw["request_id"],
            itinerary_id=raw["itinerary_id"],
            criterion=criterion,
            target=target,
        )


@dataclass(frozen=True)
class AmendmentOutcome:
    accepted: bool
    granted: Optional[Decimal | int]
    reason: str


def concession_floor(proposal: Proposal, max_discounts: Mapping[str, Decimal]) -> Decimal:
    """Lowest total cost the owning providers will go to.

    A chain spanning several providers concedes only as far as its least
    flexible provider, and the floor is anchored to the originally offered
    cost so repeated amendments cannot stack discounts.
    """
    discount = min(
        (max_discounts.get(p, DEFAULT_MAX_DISCOUNT) for p in proposal.itinerary.providers()),
        default=DEFAULT_MAX_DISCOUNT,
    )
    return (proposal.baseline_cost() * (Decimal(1) - discount)).quantize(CENT, rounding=ROUND_HALF_UP)


def decide_amendment(
    proposal: Proposal,
    amendment: Amendment,
    max_discounts: Optional[Mapping[str, Decimal]] = None,
) -> AmendmentOutcome:
    """Accept, partially meet, or reject an amendment.

    Cost asks are met down to the concession floor: the granted figure is
    max(target, floor), rejected only when no movement below the current
    cost is possible. Time and insurance asks carry no concession room and
    are accepted only when the itinerary already satisfies them.
    """
    if proposal.status in _SETTLED:
        raise AlreadyDecided(f"proposal {proposal.proposal_id} is {proposal.status.value}")
    it = proposal.itinerary
    if amendment.criterion == "cost":
        target = to_money(amendment.target)
        current = it.total_cost
        if current <= target:
            return AmendmentOutcome(True, current, "already at or below target")
        floor = concession_floor(proposal, max_discounts or {})
        granted = max(target, floor)
        if granted >= current:
            return AmendmentOutcome(False, None, "target below concession floor")
        reason = "target met" if granted == target else "partial concession to floor"
        return AmendmentOutcome(True, granted, reason)
    if amendment.criterion == "time":
        target = int(amendment.target)
        if it.total_time <= target:
            return AmendmentOutcome(True, it.total_time, "already within target")
        return AmendmentOutcome(False, None, "schedules are fixed")
    target = int(amendment.target)
    if it.insurance >= target:
        return AmendmentOutcome(True, it.insurance, "already covered")
    return AmendmentOutcome(False, None, "coverage is fixed")


def reprice_itinerary(itinerary: Itinerary, granted: Decimal) -> Itinerary:
    """Scale per-leg costs so they sum to `granted`.

    Each leg is scaled proportionally and cent-rounded; any rounding
    remainder lands on the last leg so the totals reconcile exactly.
    """
    current = itinerary.total_cost
    if current == granted:
        return itinerary
    if current == 0:
        raise InvalidItinerary("cannot reprice a zero-cost itinerary")
    factor = granted / current
    new_legs = []
    running = Decimal("0.00")
    for leg in itinerary.legs[:-1]:
        scaled = (leg.cost * factor).quantize(CENT, rounding=ROUND_HALF_UP)
        running += scaled
        new_legs.append(replace(leg, cost=scaled))
    last_cost = granted - running
    if last_cost < 0:
        raise InvalidItinerary("repricing drove the final leg negative")
    new_legs.append(replace(itinerary.legs[-1], cost=last_cost))
    return Itinerary(itinerary_id=itinerary.itinerary_id, legs=tuple(new_legs))


def apply_amendment(proposal: Proposal, amendment: Amendment, outcome: AmendmentOutcome) -> Proposal:
    """Fold an accepted outcome back into the proposal."""
    if proposal.status in _SETTLED:
        raise AlreadyDecided(f"proposal {proposal.proposal_id} is {proposal.status.value}")
    if not outcome.accepted:
        return proposal
    baseline = proposal.baseline_cost()
    itinerary = proposal.itinerary
    if amendment.criterion == "cost" and outcome.granted != itinerary.total_cost:
        itinerary = reprice_itinerary(itinerary, to_money(outcome.granted))
    return Proposal(
        request_id=proposal.request_id,
        itinerary=itinerary,
        status=ProposalStatus.AMENDED,
        original_cost=baseline,
    )


@dataclass(frozen=True)
class ReservationRecord:
    reservation_id: str
    leg_id: str
    units: int


class LegBook:
    """A provider's leg inventory with reservation-level capacity accounting.

    Reservations are idempotent on reservation id, so a retried confirm
    cannot double-book. Conservation invariant: for every leg,
    initial capacity == remaining + sum of active reservation units.
    """

    def __init__(self, legs: Iterable[RouteLeg] = ()):
        self._legs: dict[str, RouteLeg] = {}
        self._remaining: dict[str, int] = {}
        self._reservations: dict[str, ReservationRecord] = {}
        for leg in legs:
            self.add_leg(leg)

    def add_leg(self, leg: RouteLeg) -> None:
        if leg.leg_id in self._legs:
            raise InvalidLeg(f"duplicate leg id {leg.leg_id}")
        self._legs[leg.leg_id] = leg
        self._remaining[leg.leg_id] = leg.capacity

    def remove_leg(self, leg_id: str) -> RouteLeg:
        leg = self._legs.get(leg_id)
        if leg is None:
            raise UnknownLeg(f"no leg {leg_id!r}")
        holders = [r for r in self._reservations.values() if r.leg_id == leg_id]
        if holders:
            raise InsufficientCapacity(f"leg {leg_id} still holds {len(holders)} reservation(s)")
        del self._legs[leg_id]
        del self._remaining[leg_id]
        return leg

    def leg(self, leg_id: str) -> RouteLeg:
        leg = self._legs.get(leg_id)
        if leg is None:
            raise UnknownLeg(f"no leg {leg_id!r}")
        return leg

    def legs(self) -> list[RouteLeg]:
        return [self._legs[k] for k in sorted(self._legs)]

    def remaining(self, leg_id: str) -> int:
        if leg_id not in self._remaining:
            raise UnknownLeg(f"no leg {leg_id!r}")
        return self._remaining[leg_id]

    def reserved_units(self, leg_id: str) -> int:
        if leg_id not in self._legs:
            raise UnknownLeg(f"no leg {leg_id!r}")
        return sum(r.units for r in self._reservations.values() if r.leg_id == leg_id)

    def reservation(self, reservation_id: str) -> Optional[ReservationRecord]:
        return self._reservations.get(reservation_id)

    def reservations(self) -> list[ReservationRecord]:
        return [self._reservations[k] for k in sorted(self._reservations)]

    def reserve(self, leg_id: str, reservation_id: str, units: int) -> ReservationRecord:
        if units <= 0:
            raise ValueError("reservation units must be positive")
        if leg_id not in self._legs:
            raise UnknownLeg(f"no leg {leg_id!r}")
        existing = self._reservations.get(reservation_id)
        if existing is not None:
            if existing.leg_id != leg_id or existing.units != units:
                raise InsufficientCapacity(
                    f"reservation {reservation_id} already held for different terms"
                )
            return existing
        if self._remaining[leg_id] < units:
            raise InsufficientCapacity(
                f"leg {leg_id} has {self._remaining[leg_id]} units, {units} requested"
            )
        record = ReservationRecord(reservation_id=reservation_id, leg_id=leg_id, units=units)
        self._remaining[leg_id] -= units
        self._reservations[reservation_id] = record
        return record

    def release(self, reservation_id: str) -> ReservationRecord:
        record = self._reservations.pop(reservation_id, None)
        if record is None:
            raise UnknownReservation(f"no reservation {reservation_id!r}")
        self._remaining[record.leg_id] += record.units
        return record

    def check_conservation(self) -> bool:
        for leg_id, leg in self._legs.items():
            if leg.capacity != self._remaining[leg_id] + self.reserved_units(leg_id):
                return False
        return True
