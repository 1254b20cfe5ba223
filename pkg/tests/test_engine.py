import pytest

from tschsim.cli import PAPER_ARMS
from tschsim.config import ConfigError, RunConfig
from tschsim.engine import Simulation, run
from tschsim.metrics import runs_csv
from tschsim.topology import build_paper_topology
from tschsim.tsch import RX, TX

SHORT = 500


def arm_config(name, **extra):
    overrides = dict(PAPER_ARMS)[name]
    return RunConfig(duration_slotframes=SHORT, **overrides).replace(**extra)


@pytest.fixture(scope="module")
def bdpc_sim():
    sim = Simulation(arm_config("leafCopy+BDPC", seed=3), build_paper_topology(), "leafCopy+BDPC")
    sim.run()
    return sim


def test_single_frame_generates_nothing():
    rep = run(RunConfig(duration_slotframes=1), build_paper_topology())
    assert rep.n_tx == 0 and rep.n_rx == 0 and rep.pdr_e2e is None


def test_equal_seed_equal_bytes():
    topo = build_paper_topology()
    cfg = arm_config("flood", seed=11)
    a = runs_csv([run(cfg, topo, "flood")])
    b = runs_csv([run(cfg, topo, "flood")])
    assert a == b
    assert run(cfg, topo, "flood").to_json() == run(cfg, topo, "flood").to_json()


def test_seed_changes_outcome():
    topo = build_paper_topology()
    a = run(arm_config("MSF-baseline", seed=1), topo)
    b = run(arm_config("MSF-baseline", seed=2), topo)
    assert a.delay_samples != b.delay_samples


def test_runs_once():
    sim = Simulation(RunConfig(duration_slotframes=2), build_paper_topology())
    sim.run()
    with pytest.raises(RuntimeError):
        sim.run()


def test_invalid_inputs_rejected():
    with pytest.raises(ConfigError):
        Simulation(RunConfig(sf_min=0.2), build_paper_topology())
    with pytest.raises(ConfigError):
        Simulation(RunConfig(listen_cells=((99, 5),)), build_paper_topology())


@pytest.mark.parametrize("name", [name for name, _ in PAPER_ARMS])
def test_ledger_balances(name):
    sim = Simulation(arm_config(name, seed=5), build_paper_topology(), name)
    r = sim.run()
    assert r.n_tx > 0
    assert r.n_tx == r.n_rx + r.lost_queue + r.lost_retry + r.lost_no_parent + r.lost_discard + r.in_flight
    assert r.n_rx == len(sim.sink.delivered) and r.duplicates == sim.sink.duplicates
    assert len(r.delay_samples) == r.n_rx


@pytest.mark.parametrize("name", ["MSF-baseline", "flood"])
def test_per_node_queue_conservation(name):
    sim = Simulation(arm_config(name, seed=6), build_paper_topology(), name)
    sim.run()
    st = sim.mac.stats
    for n in sim.topo.nodes:
        left = len(sim.mac.queues[n])
        assert st["enqueued"][n] == st["delivered"][n] + st["retry_drops"][n] + st["withdrawn"][n] + left


def test_bdpc_cells_point_child_to_parent(bdpc_sim):
    bdpc_cells = [
        (sched.owner, c) for sched in bdpc_sim.mac.schedules for c in sched.negotiated(sf="bdpc")
    ]
    assert bdpc_cells
    for owner, c in bdpc_cells:
        if c.direction == TX:
            parent = c.peer
            assert parent in bdpc_sim.active_parents(owner) or bdpc_sim.nodes[owner].rpl.pp is None
        else:
            assert c.direction == RX
            assert bdpc_sim.mac.schedules[c.peer].cells[c.slot_offset].direction == TX


def test_bdpc_cells_carry_traffic_upward(bdpc_sim):
    nodes = bdpc_sim.nodes
    for sched in bdpc_sim.mac.schedules:
        for c in sched.negotiated(direction=TX, sf="bdpc"):
            child, parent = sched.owner, c.peer
            if nodes[child].rpl.joined and nodes[parent].rpl.joined:
                assert nodes[child].rpl.rank > nodes[parent].rpl.rank


def test_bdpc_windows_only_hold_neighbors(bdpc_sim):
    for n, node in bdpc_sim.nodes.items():
        for child in node.bdpc.windows if node.bdpc else ():
            assert n in bdpc_sim.topo.neighbors(child)


def test_schedules_stay_paired(bdpc_sim):
    mac = bdpc_sim.mac
    for sched in mac.schedules:
        for c in sched.negotiated():
            other = mac.schedules[c.peer].cells.get(c.slot_offset)
            if other is None:
                continue  # one-sided leftovers are purged by the audit
            assert other.peer == sched.owner and other.channel_offset == c.channel_offset
            assert {other.direction, c.direction} == {TX, RX}


def test_exports(bdpc_sim):
    rows = bdpc_sim.dodag_rows()
    assert rows[0] == (0, 256, None, None) and len(rows) == 21
    assert any(r[5] == "minimal" for r in bdpc_sim.schedule_rows())
