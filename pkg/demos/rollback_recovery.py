"""Atomic reservations: a half-booked chain rolls back cleanly.

Two customers race for the same A-to-B-to-C chain, and leg lx only has
room for one of them. The first selection books both legs. The second
gets its ly hold confirmed but lx refused, so the broker releases the
ly hold instead of leaving the chain half-reserved, and the customer is
told the reservation was released. Both providers' books balance exactly
afterwards: every unit is either free or held by the surviving booking.

Run with: python3 demos/rollback_recovery.py
"""

from agmarket.scenario import load_shipped, run_scenario


def main() -> None:
    scenario = load_shipped("rollback")
    print(f"scenario: {scenario.name}")
    print(f"  {scenario.description}\n")

    outcome = run_scenario(scenario)

    print("request fates:")
    for customer in ("c1", "c2"):
        conversations = outcome.runtime.agent_store(customer)["conversations"]
        for conv, record in sorted(conversations.items()):
            result = record["result"]
            note = f" ({result.reason})" if result.reason else ""
            print(f"  {customer} {conv}: {result.status}{note}")

    print("\nprovider books after the dust settles:")
    for name, book in sorted(outcome.snapshot()["legbooks"].items()):
        free = ", ".join(f"{leg} free={units}" for leg, units in sorted(book["remaining"].items()))
        holds = ", ".join(
            f"{r['reservation_id']} holds {r['units']} on {r['leg_id']}"
            for r in book["reservations"]
        )
        balanced = "balanced" if book["conservation_ok"] else "OUT OF BALANCE"
        print(f"  {name}: {free}; {holds or 'no holds'} [{balanced}]")


if __name__ == "__main__":
    main()
