import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tschsim import energy as E
from tschsim.config import ChargeTable, ConfigError, RunConfig
from tschsim.engine import Simulation
from tschsim.topology import build_paper_topology


def test_outcome_lookup():
    t = ChargeTable()
    assert E.charge_of(t, E.SLEEP) == 0.0
    assert E.charge_of(t, E.RX_IDLE) == t.rx_idle
    assert E.charge_of(t, E.TX_DATA_RX_ACK) == t.tx_data_rx_ack


def test_close_fills_sleep():
    m = E.EnergyMeter(2, ChargeTable())
    m.add(1, E.RX_IDLE, 3)
    m.charge_slot(1, E.TX_DATA_RX_ACK)
    m.close(100)
    assert m.counts[1][E.SLEEP] == 96 and m.counts[0][E.SLEEP] == 100


def test_one_year_definition():
    assert E.node_lifetime_years(2821.5, E.SECONDS_PER_YEAR, 2821.5) == pytest.approx(1.0)
    assert E.node_lifetime_years(0.0, 10.0, 2821.5) == math.inf


def test_network_lifetime_is_the_weakest_battery_node():
    r = 1.0
    lt = E.network_lifetime_years({0: 50 * r, 1: r, 2: 2 * r}, E.SECONDS_PER_YEAR, 2821.5)
    assert lt == pytest.approx(2821.5 / 2)


def test_table_validation():
    with pytest.raises(ConfigError):
        ChargeTable(rx_idle=30.0).validate()
    with pytest.raises(ConfigError):
        ChargeTable(battery_c=0).validate()


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(0, 1000), min_size=5, max_size=5), st.floats(0.01, 100))
def test_charge_is_the_histogram_dot_table_and_scales(counts, k):
    t = ChargeTable()
    m = E.EnergyMeter(1, t)
    for outcome, c in enumerate(counts):
        m.add(0, outcome, c)
    m.close(sum(counts) + 7)
    expected = sum(c * E.charge_of(t, o) for o, c in enumerate(m.counts[0]))
    assert m.charge_uc(0) == pytest.approx(expected)
    scaled = E.EnergyMeter(1, t.scaled(k))
    scaled.counts = m.counts
    assert scaled.charge_uc(0) == pytest.approx(k * expected)


@settings(max_examples=100, deadline=None)
@given(st.dictionaries(st.integers(1, 20), st.floats(0.1, 1e4), min_size=2), st.floats(0.01, 100))
def test_lifetime_order_survives_table_scaling(charges, k):
    order = sorted(charges, key=lambda n: (E.node_lifetime_years(charges[n], 1.0, 2821.5), n))
    scaled = {n: q * k for n, q in charges.items()}
    assert order == sorted(scaled, key=lambda n: (E.node_lifetime_years(scaled[n], 1.0, 2821.5), n))


def test_extra_cell_never_lowers_charge():
    cfg = RunConfig(duration_slotframes=60, traffic=False, seed=2)
    base = Simulation(cfg, build_paper_topology()).run()
    more = Simulation(cfg.replace(reserved_slots=(50,), listen_cells=((7, 50),)), build_paper_topology()).run()
    assert more.nodes[7].total_c >= base.nodes[7].total_c
