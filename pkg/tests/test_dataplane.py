import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tschsim.dataplane import (
    AP, DUPLICATE, FIRST, FLOOD, LEAF_COPY, MID_FLOOD, MID_FLOOD_DROP, NONE, PP, STRATEGIES,
    FlowRegistry, Packet, RootSink, forward, generate, select_mac,
)

PP_MAC, AP_MAC = 11, 12


def expected_mac(label, pp_alive, ap_alive):
    pp = PP_MAC if pp_alive else None
    ap = AP_MAC if ap_alive else None
    if label == PP:
        return pp if pp is not None else ap
    if label == AP:
        return ap if ap is not None else pp
    return None


CASES = list(itertools.product([PP, AP, None], [True, False], [True, False]))


def test_truth_table_has_twelve_rows():
    assert len(CASES) == 12


@pytest.mark.parametrize("label,pp_alive,ap_alive", CASES)
def test_truth_table(label, pp_alive, ap_alive):
    got = select_mac(label, PP_MAC if pp_alive else None, AP_MAC if ap_alive else None)
    assert got == expected_mac(label, pp_alive, ap_alive)


def test_truth_table_named_rows():
    assert select_mac(AP, PP_MAC, None) == PP_MAC
    assert select_mac(PP, PP_MAC, AP_MAC) == PP_MAC
    assert select_mac(AP, None, None) is None
    assert select_mac(None, PP_MAC, AP_MAC, NONE) == PP_MAC


def test_generate_copies():
    copies = generate(5, 0, 0, LEAF_COPY, PP_MAC, AP_MAC)
    assert [(p.label, mac) for p, mac in copies] == [(PP, PP_MAC), (AP, AP_MAC)]
    assert {p.flow for p, _ in copies} == {(5, 0)}
    assert [(p.label, m) for p, m in generate(5, 1, 0, NONE, PP_MAC, AP_MAC)] == [(None, PP_MAC)]
    assert [(p.label, m) for p, m in generate(5, 2, 0, FLOOD, PP_MAC, None)] == [(PP, PP_MAC)]


def pkt(label=PP, seq=0):
    return Packet(9, seq, label, 0, stamped_label=label)


def labels(outputs):
    return sorted((p.label, mac) for p, mac in outputs)


def test_leaf_copy_honors_label():
    assert labels(forward(pkt(AP), LEAF_COPY, PP_MAC, AP_MAC, FlowRegistry())) == [(AP, AP_MAC)]


def test_mid_flood_unseen_then_seen():
    reg = FlowRegistry()
    assert labels(forward(pkt(AP), MID_FLOOD, PP_MAC, AP_MAC, reg)) == [(AP, AP_MAC), (PP, PP_MAC)]
    assert labels(forward(pkt(PP), MID_FLOOD, PP_MAC, AP_MAC, reg)) == [(PP, PP_MAC)]


def test_mid_flood_drop_discards_seen():
    reg = FlowRegistry()
    assert len(forward(pkt(PP), MID_FLOOD_DROP, PP_MAC, AP_MAC, reg)) == 2
    assert forward(pkt(AP), MID_FLOOD_DROP, PP_MAC, AP_MAC, reg) == []


def test_flood_always_replicates():
    reg = FlowRegistry()
    for label in (PP, AP, PP):
        assert len(forward(pkt(label), FLOOD, PP_MAC, AP_MAC, reg)) == 2


def test_single_parent_never_replicates():
    for s in (MID_FLOOD, MID_FLOOD_DROP, FLOOD):
        assert labels(forward(pkt(AP), s, PP_MAC, None, FlowRegistry())) == [(AP, PP_MAC)]


def test_copy_is_restamped():
    out = forward(pkt(PP), FLOOD, PP_MAC, AP_MAC, FlowRegistry(), router=4)
    copy = [p for p, _ in out if p.label == AP][0]
    assert copy.stamped_label == AP and copy.stamped_by == 4


@settings(max_examples=300, deadline=None)
@given(
    st.sampled_from(STRATEGIES),
    st.sampled_from([PP, AP]),
    st.booleans(),
    st.booleans(),
    st.lists(st.integers(0, 5), max_size=10),
)
def test_replication_bound(strategy, label, pp_alive, ap_alive, history):
    reg = FlowRegistry()
    for seq in history:
        reg.record((9, seq))
    out = forward(pkt(label, 3), strategy, PP_MAC if pp_alive else None, AP_MAC if ap_alive else None, reg)
    assert len(out) <= 2
    if strategy in (NONE, LEAF_COPY):
        assert len(out) == 1
    assert all(p.flow == (9, 3) for p, _ in out)


def test_registry_window_is_per_source():
    reg = FlowRegistry(window=3)
    for seq in range(4):
        assert reg.record((1, seq)) is False
    assert (1, 0) not in reg and (1, 3) in reg
    assert reg.record((2, 0)) is False and (1, 1) in reg


def test_root_sink():
    sink = RootSink()
    assert sink.receive(pkt(PP), 100) == FIRST
    assert sink.receive(pkt(AP), 120) == DUPLICATE
    assert sink.delivered[(9, 0)] == 100 and sink.duplicates == 1
    assert sink.receive(pkt(PP, 1), 130) == FIRST and sink.duplicates == 1


def test_root_sink_rejects_rewritten_label():
    with pytest.raises(AssertionError):
        RootSink().receive(Packet(9, 0, AP, 0, stamped_label=PP), 1)


def _walk(dodag, node, strategy, packet, regs=None):
    regs = {} if regs is None else regs
    if node == 0:
        return 1
    pp, ap = dodag[node]
    outs = forward(packet, strategy, pp, ap, regs.setdefault(node, FlowRegistry()), node)
    return sum(_walk(dodag, nxt, strategy, p, regs) for p, nxt in outs if nxt is not None)


# three two-parent hops above the single-parent first group:
# 7 -> {5, 6} -> {3, 4} -> {1, 2} -> root
LATTICE = {1: (0, None), 2: (0, None), 3: (1, 2), 4: (1, 2), 5: (3, 4), 6: (3, 4), 7: (5, 6)}


def originate(strategy):
    pp, ap = LATTICE[7]
    regs = {}
    return sum(_walk(LATTICE, nxt, strategy, p, regs) for p, nxt in generate(7, 0, 0, strategy, pp, ap))


def test_three_hop_lattice_flood_copies():
    assert originate(FLOOD) == 8


@pytest.mark.parametrize("strategy,copies", [(NONE, 1), (LEAF_COPY, 2), (MID_FLOOD, 6)])
def test_three_hop_lattice_other_strategies(strategy, copies):
    # depth-first walk: each registry sees a flow's second copy after the first has moved on
    assert originate(strategy) == copies
