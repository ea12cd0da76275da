from decimal import Decimal

import pytest

from agmarket.market import CriteriaProfile, HardConstraints, RouteLeg, TransportRequest


def make_leg(
    leg_id="l1",
    provider="p1",
    origin="A",
    destination="B",
    depart=10,
    arrive=40,
    cost="40.00",
    insurance=2,
    capacity=20,
) -> RouteLeg:
    return RouteLeg(
        leg_id=leg_id,
        provider=provider,
        origin=origin,
        destination=destination,
        depart=depart,
        arrive=arrive,
        cost=Decimal(cost),
        insurance=insurance,
        capacity=capacity,
    )


def make_request(
    request_id="REQ-1",
    customer="c1",
    origin="A",
    destination="C",
    earliest=0,
    latest=140,
    cargo=5,
    min_insurance=0,
    weights=(0.5, 0.3, 0.2),
) -> TransportRequest:
    return TransportRequest(
        request_id=request_id,
        customer=customer,
        origin=origin,
        destination=destination,
        constraints=HardConstraints(
            earliest_departure=earliest,
            latest_arrival=latest,
            cargo_size=cargo,
            min_insurance=min_insurance,
        ),
        criteria=CriteriaProfile(cost=weights[0], time=weights[1], insurance=weights[2]),
    )


@pytest.fixture
def baseline_legs():
    """The two-provider network used by the shipped baseline scenario."""
    return [
        make_leg("l1", "p1", "A", "B", 10, 40, "40.00", 2, 20),
        make_leg("l2", "p1", "A", "C", 15, 120, "95.00", 3, 10),
        make_leg("l3", "p2", "B", "C", 50, 90, "45.00", 3, 15),
        make_leg("l4", "p2", "A", "B", 20, 60, "35.00", 1, 12),
        make_leg("l5", "p2", "B", "C", 70, 130, "38.00", 2, 15),
    ]
