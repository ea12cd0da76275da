"""One brokered request from submission to a confirmed reservation.

A customer asks the broker for transport from A to C. The broker invites
both providers to publish their route legs, composes every admissible leg
chain, ranks the chains by weighted cost/time/insurance utility, and
presents the result. The scripted customer picks the top offer, the broker
books capacity with each provider on the chain, and the run ends quiescent
with the reservation confirmed.

Run with: python3 demos/baseline_walkthrough.py
"""

from agmarket.messaging import render_sequence_diagram
from agmarket.scenario import load_shipped, run_scenario


def main() -> None:
    scenario = load_shipped("paper-baseline")
    print(f"scenario: {scenario.name}")
    print(f"  {scenario.description}\n")

    outcome = run_scenario(scenario)
    print(f"quiescent after {outcome.result.ticks} ticks, seed {outcome.seed}\n")

    store = outcome.runtime.agent_store("c1")
    record = store["conversations"]["REQ-1/0"]
    print("offers as presented to c1 (rank, chain, cost, time, insurance, score):")
    for offer in record["offers"]:
        scored = offer.scored
        chain = "+".join(leg.leg_id for leg in scored.itinerary.legs)
        print(
            f"  {scored.rank}. {chain:<8} {scored.itinerary.total_cost:>7} "
            f"{scored.itinerary.total_time:>4} {scored.itinerary.insurance:>2} "
            f"{scored.score:.4f}"
        )

    result = record["result"]
    note = f" ({result.reason})" if result.reason else ""
    print(f"\nreservation: {result.status}{note}")
    print(f"  id {result.reservation_id}, legs {', '.join(result.leg_ids)}")

    print("\nremaining capacity after booking:")
    for name, book in sorted(outcome.snapshot()["legbooks"].items()):
        held = ", ".join(f"{leg}={units}" for leg, units in sorted(book["remaining"].items()))
        print(f"  {name}: {held}")

    print("\nmessage flow:")
    print(render_sequence_diagram(outcome.trace), end="")


if __name__ == "__main__":
    main()
