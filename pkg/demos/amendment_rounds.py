"""Two rounds of price negotiation on an already-presented offer.

The customer likes the top-ranked chain but not its price. It asks the
broker to amend the offer's cost twice: first to a target both providers
can absorb outright, then below their concession floors. Each cost grant
needs unanimous provider consent because the broker reprices the chain's
legs; the second round therefore settles at the floor instead of the ask.
The customer selects the amended offer and the reservation confirms at
the negotiated price.

Run with: python3 demos/amendment_rounds.py
"""

from agmarket.scenario import load_shipped, run_scenario


def main() -> None:
    scenario = load_shipped("amendment")
    print(f"scenario: {scenario.name}")
    print(f"  {scenario.description}\n")

    outcome = run_scenario(scenario)
    record = outcome.runtime.agent_store("c1")["conversations"]["REQ-1/0"]

    print("negotiation rounds:")
    for i, content in enumerate(record["amendments"], start=1):
        ask = content.amendment
        outcome_row = content.outcome
        print(
            f"  round {i}: asked {ask.criterion} -> {ask.target}, "
            f"granted {outcome_row.granted} ({outcome_row.reason})"
        )

    amended = record["offers"][0]
    legs = ", ".join(f"{leg.leg_id}@{leg.cost}" for leg in amended.scored.itinerary.legs)
    print(f"\nrepriced chain: {legs}")
    print(f"offer status: {amended.status.value}, total {amended.scored.itinerary.total_cost}")

    result = record["result"]
    print(f"reservation: {result.status} for {result.reservation_id}")


if __name__ == "__main__":
    main()
