import random

from tschsim.config import ChargeTable
from tschsim.energy import EnergyMeter
from tschsim.sixp import ADD, CLEAR, COMPLETED, DELETE, FAILED, INITIATOR_RX, SixP
from tschsim.topology import LinkQuality, build_paper_topology, line_topology
from tschsim.tsch import RX, TX, Mac

L = 101


def setup(topo, timeout=2 * L):
    meter = EnergyMeter(max(topo.nodes) + 1, ChargeTable())
    mac = Mac(topo, L, 10, 5, random.Random("0/link"), random.Random("0/c"), meter)
    return mac, SixP(mac, random.Random("0/sixp"), 16, timeout)


def pump(mac, sixp, frames, start=0):
    for f in range(start, start + frames):
        asn = f * L
        sixp.housekeeping(asn)
        for kind, _, rx, msg in mac.minimal_cell(asn, {}):
            if kind == "ctrl":
                sixp.on_receive(rx, msg, asn)
        # frames for a peer already reached through a negotiated cell ride that cell
        for s in mac.active_slots():
            for _, rx, msg, is_control in mac.process_slot(asn + s):
                if is_control:
                    sixp.on_receive(rx, msg, asn + s)


def lossless(topo):
    return topo.with_quality(LinkQuality(1.0))


def test_add_installs_paired_cells():
    mac, sixp = setup(lossless(line_topology(2)))
    t = sixp.request(1, 0, ADD, 2)
    assert len(t.proposed_cells) == 6
    pump(mac, sixp, 2)
    assert t.state == COMPLETED and t.installed == 2
    for c in mac.schedules[1].negotiated(0, TX):
        peer = mac.schedules[0].cells[c.slot_offset]
        assert (peer.direction, peer.peer, peer.channel_offset) == (RX, 1, c.channel_offset)
    assert not sixp.active


def test_pair_admits_one_transaction():
    mac, sixp = setup(lossless(line_topology(2)))
    assert sixp.request(1, 0, ADD, 1) is not None
    assert sixp.busy(1, 0)
    assert sixp.request(1, 0, DELETE, 1) is None
    assert sixp.request(0, 1, ADD, 1) is not None  # reverse pair is independent


def test_timeout_fails_without_side_effects():
    mac, sixp = setup(line_topology(2).with_quality(LinkQuality(0.0)))
    t = sixp.request(1, 0, ADD, 1)
    pump(mac, sixp, 3)
    assert t.state == FAILED and t.installed == 0
    assert not mac.schedules[1].negotiated() and not mac.queues[1].control
    assert sixp.log[-1][-1] == FAILED


def test_delete_removes_newest_cell():
    mac, sixp = setup(lossless(line_topology(2)))
    mac.install_pair(1, 0, 10, 1)
    mac.install_pair(1, 0, 20, 2)
    t = sixp.request(1, 0, DELETE, 1)
    assert t.proposed_cells == [(20, 2)]
    pump(mac, sixp, 2)
    assert [c.slot_offset for c in mac.schedules[1].negotiated(0)] == [10]
    assert 20 not in mac.schedules[0].cells


def test_parent_initiated_add_points_child_to_parent():
    mac, sixp = setup(lossless(line_topology(2)))
    t = sixp.request(0, 1, ADD, 1, INITIATOR_RX, sf="bdpc")
    pump(mac, sixp, 2)
    assert t.installed == 1
    (c,) = mac.schedules[1].negotiated(0, TX, "bdpc")
    assert mac.schedules[0].cells[c.slot_offset].direction == RX


def test_clear_wipes_both_directions():
    mac, sixp = setup(lossless(line_topology(2)))
    mac.install_pair(1, 0, 10, 1)
    mac.install_pair(0, 1, 11, 1)
    t = sixp.request(1, 0, CLEAR, 0)
    pump(mac, sixp, 2)
    assert t.installed == 2
    assert not mac.schedules[0].negotiated() and not mac.schedules[1].negotiated()


def test_responder_refusal_completes_empty():
    mac, sixp = setup(lossless(line_topology(2)))
    sixp.accept_hook = lambda peer, txn: False
    t = sixp.request(1, 0, ADD, 1)
    pump(mac, sixp, 2)
    assert t.state == COMPLETED and t.installed == 0


def test_relocation_moves_cells():
    topo = lossless(build_paper_topology(2, 2))
    mac, sixp = setup(topo)
    mac.install_pair(3, 1, 10, 0)
    mac.install_pair(3, 1, 11, 0)
    done = []
    sixp.relocate_on_parent_change(3, 1, 2, 0, done.append)
    pump(mac, sixp, 6)
    assert done == [True]
    assert mac.schedules[3].count(2) == 2 and mac.schedules[3].count(1) == 0
    assert not mac.schedules[1].negotiated()


def test_relocation_purges_locally_when_clear_is_lost():
    topo = lossless(build_paper_topology(2, 2))
    mac, sixp = setup(topo)
    mac.install_pair(3, 1, 10, 0)
    mac.pdr[3][1] = 0.0
    sixp.relocate_on_parent_change(3, 1, 2, 0)
    pump(mac, sixp, 8)
    assert mac.schedules[3].count(1) == 0 and mac.schedules[3].count(2) == 1
    assert [c for _, c in mac.orphans()]  # parent still holds the stale rx cell
