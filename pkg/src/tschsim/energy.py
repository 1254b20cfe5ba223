"""Per-node charge accounting by slot outcome and network lifetime."""

from __future__ import annotations

import math

from tschsim.config import ChargeTable

TX_DATA_RX_ACK = 0
RX_DATA_TX_ACK = 1
TX_DATA_ONLY = 2
RX_DATA_ONLY = 3
RX_IDLE = 4
SLEEP = 5

OUTCOMES = (
    "tx_data_rx_ack",
    "rx_data_tx_ack",
    "tx_data_only",
    "rx_data_only",
    "rx_idle",
    "sleep",
)

SECONDS_PER_YEAR = 365.25 * 24 * 3600


def charge_of(table: ChargeTable, outcome: int) -> float:
    return getattr(table, OUTCOMES[outcome])


class EnergyMeter:
    """Slot-outcome histogram per node.

    Only non-sleep outcomes are counted as they happen; sleep slots are whatever
    remains of the run and cost ``table.sleep`` each.
    """

    def __init__(self, n_nodes: int, table: ChargeTable) -> None:
        self.table = table
        self.counts = [[0] * len(OUTCOMES) for _ in range(n_nodes)]

    def charge_slot(self, node: int, outcome: int) -> None:
        self.counts[node][outcome] += 1

    def add(self, node: int, outcome: int, times: int) -> None:
        self.counts[node][outcome] += times

    def close(self, total_slots: int) -> None:
        """Fill in sleep counts so every node accounts for ``total_slots`` slots."""
        for row in self.counts:
            awake = sum(row) - row[SLEEP]
            row[SLEEP] = max(total_slots - awake, 0)

    def charge_uc(self, node: int) -> float:
        row = self.counts[node]
        t = self.table
        return (
            row[TX_DATA_RX_ACK] * t.tx_data_rx_ack
            + row[RX_DATA_TX_ACK] * t.rx_data_tx_ack
            + row[TX_DATA_ONLY] * t.tx_data_only
            + row[RX_DATA_ONLY] * t.rx_data_only
            + row[RX_IDLE] * t.rx_idle
            + row[SLEEP] * t.sleep
        )


def node_lifetime_years(charge_c: float, duration_s: float, battery_c: float) -> float:
    """Battery capacity over the average drain rate; ``inf`` when nothing was drawn."""
    if charge_c <= 0:
        return math.inf
    return battery_c / (charge_c / duration_s) / SECONDS_PER_YEAR


def network_lifetime_years(
    charges_c: dict[int, float], duration_s: float, battery_c: float, root: int = 0
) -> float:
    """Lifetime of the first battery node to deplete. The root is mains powered."""
    lifetimes = [
        node_lifetime_years(q, duration_s, battery_c) for n, q in charges_c.items() if n != root
    ]
    return min(lifetimes) if lifetimes else math.inf
