"""Slot-driven run loop: owns simulated time, random streams and orchestration."""

from __future__ import annotations

import heapq
import logging
import math
import random
from typing import Optional

from tschsim import energy as E
from tschsim.bdpc import Bdpc, budget_s, classify_arrival
from tschsim.config import ConfigError, RunConfig
from tschsim.dataplane import FIRST, NONE, FlowRegistry, RootSink, forward, generate, select_mac
from tschsim.metrics import NodeEnergy, RunReport
from tschsim.msf import ADD as MSF_ADD
from tschsim.msf import DELETE as MSF_DELETE
from tschsim.msf import Msf
from tschsim.rng import Streams
from tschsim.rpl import RplNode
from tschsim.sixp import ADD, CLEAR, COMPLETED, DELETE, INITIATOR_RX, INITIATOR_TX, SixP
from tschsim.topology import ROOT, Topology
from tschsim.tsch import RX, TX, Mac

log = logging.getLogger(__name__)

LOST_QUEUE = "queue"
LOST_RETRY = "retry"
LOST_NO_PARENT = "no_parent"
LOST_DISCARD = "discard"

EXPIRY_EVERY = 10  # slotframes between neighbor-table staleness sweeps


class Node:
    __slots__ = ("id", "rpl", "msf", "bdpc", "registry", "seq", "bootstrapped", "reloc", "generating")

    def __init__(self, node_id: int, rpl: RplNode, msf: Optional[Msf], bdpc: Optional[Bdpc], registry: FlowRegistry):
        self.id = node_id
        self.rpl = rpl
        self.msf = msf
        self.bdpc = bdpc
        self.registry = registry
        self.seq = 0
        self.bootstrapped = False
        self.reloc: Optional[tuple[int, int]] = None
        self.generating = False


class Simulation:
    """One seeded run of a configured network.

    Nodes start synchronized with only the minimal cell; the DODAG forms in
    simulated time and application traffic starts after the warm-up.
    """

    def __init__(self, cfg: RunConfig, topo: Topology, arm: str = "") -> None:
        cfg.validate()
        if ROOT not in topo.nodes:
            raise ConfigError("topology must contain the root node 0")
        for node, _ in cfg.listen_cells:
            if node not in topo.nodes:
                raise ConfigError(f"listen cell references unknown node {node}")
        self.cfg = cfg
        self.topo = topo
        self.L = cfg.slotframe_length
        self.streams = Streams(cfg.seed)
        n = max(topo.nodes) + 1
        self.meter = E.EnergyMeter(n, cfg.charges)
        reserved = tuple(sorted(set(cfg.reserved_slots) | {s for _, s in cfg.listen_cells}))
        self.mac = Mac(
            topo, self.L, cfg.queue_size, cfg.max_retries,
            self.streams.get("link"), self.streams.get("contention"), self.meter, reserved,
        )
        for node, slot in cfg.listen_cells:
            self.mac.add_listen_cell(node, slot)
        timeout = cfg.sixp_timeout_slotframes * self.L
        self.sixp = SixP(self.mac, self.streams.get("sixp"), cfg.channels, timeout)
        self.sixp.accept_hook = self._accept_sixp
        self.mac.on_elapsed = self._on_elapsed
        self.mac.on_drop = self._on_drop
        self.mac.on_acked = self._on_acked
        self.bdpc_on = cfg.sf_kind == "BDPC"
        self.strategy = cfg.flooding
        self.nodes: dict[int, Node] = {}
        for i in topo.nodes:
            rpl = RplNode(
                i, is_root=(i == ROOT), mode=cfg.ap_mode, rank_min=cfg.rank_min,
                rank_step=cfg.rank_step, pdr_estimate=cfg.rank_pdr,
                parent_set_cap=cfg.parent_set_cap, want_ap=True,
            )
            bdpc = None
            if self.bdpc_on:
                bdpc = Bdpc(
                    cfg.sf_max, cfg.sf_min, cfg.bdpc_window, cfg.bdpc_min_verdicts,
                    cfg.bdpc_cooldown_slotframes * self.L, cfg.bdpc_cooldown_verdicts,
                )
            self.nodes[i] = Node(i, rpl, None if i == ROOT else Msf(), bdpc, FlowRegistry(cfg.registry_window))
        self.sink = RootSink()
        self.report = RunReport(arm=arm, seed=cfg.seed, pk_period=cfg.pk_period_s)
        self.ledger: dict[tuple[int, int], list] = {}
        self.dio_pending: dict = {}
        self.gen_heap: list[tuple[int, int]] = []
        self.asn = 0
        self.max_delay_ms = cfg.max_delay_s * 1000.0
        self.period_slots = cfg.pk_period_s * 1000.0 / cfg.timeslot_ms
        self.warmup_slots = cfg.warmup_slotframes * self.L
        stop = cfg.traffic_stop_slotframes
        self.stop_slots = None if stop is None else stop * self.L
        self._dio_rng = self.streams.get("dio")
        self._traffic_rng = self.streams.get("traffic")
        self._boot_rng = self.streams.get("bootstrap")
        self._backoff_rng = self.streams.get("backoff")
        self.backoff: dict[tuple[int, int], tuple[int, int]] = {}
        self.retry: dict[tuple[int, int], tuple[str, int, str, str]] = {}
        self.late_series: list[tuple[int, int, int, float]] = []
        self.parent_changes = 0
        self._ran = False

    # ------------------------------------------------------------- helpers

    def next_random(self, tag: str) -> float:
        """Uniform draw from the named substream of this run."""
        return self.streams.next_random(tag)

    def ap_of(self, n: int) -> Optional[int]:
        return self.nodes[n].rpl.ap if self.strategy != NONE else None

    def active_parents(self, n: int) -> tuple[int, ...]:
        rpl = self.nodes[n].rpl
        if rpl.pp is None:
            return ()
        ap = self.ap_of(n)
        return (rpl.pp,) if ap is None else (rpl.pp, ap)

    def _copy_event(self, flow, delta: int, reason: Optional[str] = None) -> None:
        rec = self.ledger.get(flow)
        if rec is None:
            return
        rec[0] += delta
        if reason is not None:
            rec[2] = reason

    # ------------------------------------------------------------------ 6P

    def _blocked(self, a: int, b: int) -> bool:
        return self.sixp.busy(a, b) or self.asn < self.backoff.get((a, b), (0, 0))[0]

    def _request(self, a: int, b: int, command: str, count: int, direction: str, sf: str, retry: bool = False) -> None:
        """Open a transaction; a failure backs the pair off for a random, doubling number of slotframes.

        With ``retry`` the same command is reissued once the backoff expires.
        """

        def done(t) -> None:
            if t.state == COMPLETED:
                self.backoff.pop((a, b), None)
                self.retry.pop((a, b), None)
                return
            k = min(self.backoff.get((a, b), (0, 0))[1] + 1, self.cfg.sixp_backoff_exp)
            wait = self._backoff_rng.randint(1, 2 ** k) * self.L
            self.backoff[(a, b)] = (self.sixp.now + wait, k)
            if retry:
                self.retry[(a, b)] = (command, count, direction, sf)

        self.sixp.request(a, b, command, count, direction, self.asn, sf, done)

    # ----------------------------------------------------------- MAC hooks

    def _on_elapsed(self, tx: int, rx: int, used: bool) -> None:
        node = self.nodes[tx]
        if node.msf is None or rx not in self.active_parents(tx):
            return
        cells = self.mac.tx_count[tx].get(rx, 0)
        action = node.msf.on_cell_elapsed(rx, used, cells)
        if action is None or self._blocked(tx, rx):
            return
        if action == MSF_ADD:
            self._request(tx, rx, ADD, 1, INITIATOR_TX, "msf", retry=True)
        elif action == MSF_DELETE and self.mac.schedules[tx].count(rx, TX, "msf") >= 1:
            self._request(tx, rx, DELETE, 1, INITIATOR_TX, "msf", retry=True)

    def _on_acked(self, tx: int, entry) -> None:
        self._copy_event(entry[0].flow, -1)

    def _on_drop(self, tx: int, entry, is_control: bool) -> None:
        if not is_control:
            self._copy_event(entry[0].flow, -1, LOST_RETRY)

    def _accept_sixp(self, peer: int, txn) -> bool:
        if txn.sf == "bdpc" and txn.command == ADD:
            return txn.initiator in self.active_parents(peer)
        return True

    # ---------------------------------------------------------- data plane

    def _enqueue_outputs(self, n: int, outputs) -> None:
        rep = self.report
        for pkt, dest in outputs:
            if dest is None:
                rep.no_parent_drops += 1
                self._copy_event(pkt.flow, -1, LOST_NO_PARENT)
            elif not self.mac.enqueue(n, pkt, dest):
                rep.queue_drops += 1
                self._copy_event(pkt.flow, -1, LOST_QUEUE)

    def _on_data(self, sender: int, receiver: int, pkt, asn: int) -> None:
        cfg = self.cfg
        node = self.nodes[receiver]
        self._copy_event(pkt.flow, +1)
        if node.bdpc is not None:
            budget = budget_s(cfg.max_delay_s, cfg.budget_rule, node.rpl.rank, pkt.origin_rank, cfg.rank_step)
            node.bdpc.record(sender, classify_arrival(pkt.created_at, asn, cfg.timeslot_ms, budget))
        if receiver == ROOT:
            self._copy_event(pkt.flow, -1)
            if self.sink.receive(pkt, asn) == FIRST:
                self.report.record_delivery((asn - pkt.created_at) * cfg.timeslot_ms, self.max_delay_ms)
                self.ledger[pkt.flow][1] = True
            else:
                self.report.duplicates += 1
            return
        outputs = forward(pkt, self.strategy, node.rpl.pp, self.ap_of(receiver), node.registry, receiver)
        if not outputs:
            self.report.discarded += 1
            self._copy_event(pkt.flow, -1, LOST_DISCARD)
            return
        self._copy_event(pkt.flow, len(outputs) - 1)
        self._enqueue_outputs(receiver, outputs)

    def _generate(self, n: int, asn: int) -> None:
        cfg = self.cfg
        if self.stop_slots is not None and asn >= self.stop_slots:
            return
        node = self.nodes[n]
        r = self._traffic_rng.uniform(-cfg.pk_variance, cfg.pk_variance)
        heapq.heappush(self.gen_heap, (asn + max(1, round(self.period_slots * (1 + r))), n))
        seq = node.seq
        node.seq += 1
        flow = (n, seq)
        self.report.n_tx += 1
        rpl = node.rpl
        outputs = generate(n, seq, asn, self.strategy, rpl.pp, self.ap_of(n), cfg.pk_size_bytes, rpl.rank or 0)
        self.ledger[flow] = [len(outputs), False, None]
        if rpl.pp is None:
            self.ledger[flow] = [0, False, LOST_NO_PARENT]
            self.report.no_parent_drops += 1
            return
        self._enqueue_outputs(n, outputs)

    def _start_traffic(self, n: int, asn: int) -> None:
        node = self.nodes[n]
        if node.generating or not self.cfg.traffic:
            return
        node.generating = True
        start = max(asn, self.warmup_slots)
        offset = int(self._traffic_rng.random() * self.period_slots)
        heapq.heappush(self.gen_heap, (start + 1 + offset, n))

    # ------------------------------------------------------------- routing

    def _on_dio(self, receiver: int, dio, asn: int) -> None:
        node = self.nodes[receiver]
        was_joined = node.rpl.joined
        change = node.rpl.on_dio(dio, asn)
        if change is not None:
            self._parents_changed(receiver, *change)
        if not was_joined and node.rpl.joined:
            node.rpl.next_dio_frame = asn // self.L + 1
            self._start_traffic(receiver, asn)

    def _parents_changed(self, n: int, old_pp: Optional[int], old_ap: Optional[int]) -> None:
        node = self.nodes[n]
        rpl = node.rpl
        self.parent_changes += 1
        if rpl.pp is None and old_pp is not None:
            self.dio_pending[n] = rpl.poison()
        new_active = self.active_parents(n)
        old_active = {p for p in (old_pp, old_ap if self.strategy != NONE else None) if p is not None}
        relocating = None
        if rpl.pp is not None and not node.bootstrapped:
            node.bootstrapped = True
            self._bootstrap_cell(n, rpl.pp)
        elif old_pp is not None and rpl.pp != old_pp:
            if node.msf.on_parent_change(old_pp, rpl.pp, keep=new_active):
                relocating = old_pp
                node.reloc = (old_pp, rpl.pp)
                self._try_relocate(n)
        for p in old_active - set(new_active):
            node.msf.forget(p)
            if p != relocating:
                self._release(n, p)
        self._reroute(n)

    def _bootstrap_cell(self, n: int, parent: int) -> None:
        """Implicit one-cell ADD toward the first preferred parent."""
        sa, sb = self.mac.schedules[n], self.mac.schedules[parent]
        common = [s for s in sa.free_slots() if sb.is_free(s)]
        if not common:
            return
        slot = common[self._boot_rng.randrange(len(common))]
        self.mac.install_pair(n, parent, slot, self._boot_rng.randrange(self.cfg.channels), "msf")

    def _try_relocate(self, n: int) -> None:
        node = self.nodes[n]
        old, new = node.reloc
        if node.rpl.pp != new or self.sixp.busy(n, new) or self.sixp.busy(n, old):
            if node.rpl.pp != new:
                node.reloc = None
            return
        node.reloc = None
        self.sixp.relocate_on_parent_change(n, old, new, self.asn)

    def _release(self, n: int, peer: int) -> None:
        if not self.mac.schedules[n].negotiated(peer):
            return
        if self.sixp.busy(n, peer):
            self.mac.drop_local(n, peer)
            return

        def done(t) -> None:
            if t.state != COMPLETED:
                self.mac.drop_local(n, peer)

        self.sixp.request(n, peer, CLEAR, 0, INITIATOR_TX, self.asn, "msf", done)

    def _reroute(self, n: int) -> None:
        q = self.mac.queues[n]
        if not q.data:
            return
        active = self.active_parents(n)
        pp, ap = self.nodes[n].rpl.pp, self.ap_of(n)
        for entry in list(q.data):
            if entry[1] in active:
                continue
            dest = select_mac(entry[0].label, pp, ap, self.strategy)
            if dest is None:
                self.mac.withdraw(n, entry)
                self.report.no_parent_drops += 1
                self._copy_event(entry[0].flow, -1, LOST_NO_PARENT)
            elif dest != entry[1]:
                entry[1] = dest
                entry[3] = False

    # -------------------------------------------------------- housekeeping

    def _frame_start(self, f: int, asn: int) -> None:
        cfg = self.cfg
        self.asn = asn
        self.sixp.housekeeping(asn)
        if self.mac.audit_needed:
            self._audit()
        if f % EXPIRY_EVERY == 0 and f:
            horizon = cfg.neighbor_timeout_slotframes * self.L
            for n, node in self.nodes.items():
                change = node.rpl.expire(asn, horizon)
                if change is not None:
                    self._parents_changed(n, *change)
        if self.bdpc_on:
            self._bdpc_round(asn)
        if self.retry:
            self._retry_round()
        for n, node in self.nodes.items():
            if n == ROOT:
                continue
            if node.reloc is not None:
                self._try_relocate(n)
            for p in self.active_parents(n):
                if not self.mac.has_tx_cell(n, p) and not self._blocked(n, p):
                    self._request(n, p, ADD, 1, INITIATOR_TX, "msf")
        for n, node in self.nodes.items():
            rpl = node.rpl
            if rpl.next_dio_frame is not None and rpl.next_dio_frame <= f and rpl.joined:
                self.dio_pending[n] = rpl.emit_dio()
                rpl.dios_sent += 1
                j = cfg.dio_jitter_slotframes
                rpl.next_dio_frame = f + cfg.dio_period_slotframes + (self._dio_rng.randint(-j, j) if j else 0)
        prefer_dio = f % cfg.dio_slot_every == 0
        for kind, sender, receiver, payload in self.mac.minimal_cell(asn, self.dio_pending, prefer_dio):
            if kind == "dio":
                self._on_dio(receiver, payload, asn)
            else:
                self.sixp.on_receive(receiver, payload, asn)

    def _bdpc_round(self, asn: int) -> None:
        cfg = self.cfg
        for n, node in self.nodes.items():
            b = node.bdpc
            for child in list(b.windows):
                if self._blocked(n, child):
                    continue
                w = b.windows[child]
                action = b.evaluate_child(child, asn)
                if action is None:
                    continue
                self.late_series.append((asn, n, child, w.late_rate))
                if action == "ADD":
                    self._request(n, child, ADD, cfg.prehop_add_cells, INITIATOR_RX, "bdpc")
                else:
                    sched = self.mac.schedules[n]
                    mine = sched.count(child, RX, "bdpc")
                    if mine >= 1 and sched.count(child, RX) > 1:
                        self._request(n, child, DELETE, 1, INITIATOR_RX, "bdpc")

    def _retry_round(self) -> None:
        for (a, b), (command, count, direction, sf) in list(self.retry.items()):
            if b not in self.active_parents(a):
                del self.retry[(a, b)]
            elif not self._blocked(a, b):
                del self.retry[(a, b)]
                if command == ADD or self.mac.schedules[a].count(b, TX, "msf") >= 1:
                    self._request(a, b, command, count, direction, sf, retry=True)

    def _audit(self) -> None:
        """Purge cells left without a counterpart; each cost one idle listen if rx."""
        for owner, cell in self.mac.orphans():
            if cell.direction == RX:
                self.meter.charge_slot(owner, E.RX_IDLE)
            self.mac.purge_cell(owner, cell)
        self.mac.audit_needed = False

    # ---------------------------------------------------------------- run

    def run(self) -> RunReport:
        if self._ran:
            raise RuntimeError("a Simulation instance runs once")
        self._ran = True
        L = self.L
        mac = self.mac
        slot_tx, slot_listen = mac.slot_tx, mac.slot_listen
        heap = self.gen_heap
        for f in range(self.cfg.duration_slotframes):
            base = f * L
            self._frame_start(f, base)
            while heap and heap[0][0] <= base:
                a, n = heapq.heappop(heap)
                self._generate(n, base)
            for s in range(1, L):
                asn = base + s
                if slot_tx[s] or slot_listen[s]:
                    self.asn = asn
                    for sender, receiver, payload, is_control in mac.process_slot(asn):
                        if is_control:
                            self.sixp.on_receive(receiver, payload, asn)
                        else:
                            self._on_data(sender, receiver, payload, asn)
                while heap and heap[0][0] <= asn:
                    a, n = heapq.heappop(heap)
                    self._generate(n, asn)
        return self._finish()

    def _finish(self) -> RunReport:
        cfg = self.cfg
        rep = self.report
        total_slots = cfg.duration_slots
        duration_s = total_slots * cfg.timeslot_ms / 1000.0
        rep.duration_s = duration_s
        self.meter.close(total_slots)
        charges = {}
        for n in self.topo.nodes:
            row = self.meter.counts[n]
            q = self.meter.charge_uc(n) / 1e6
            charges[n] = q
            rep.nodes.append(NodeEnergy(
                n,
                row[E.TX_DATA_RX_ACK] + row[E.TX_DATA_ONLY],
                row[E.RX_DATA_TX_ACK] + row[E.RX_DATA_ONLY],
                row[E.RX_IDLE],
                row[E.SLEEP],
                q,
                E.node_lifetime_years(q, duration_s, cfg.charges.battery_c),
            ))
        rep.lifetime_years = E.network_lifetime_years(charges, duration_s, cfg.charges.battery_c, ROOT)
        rep.retry_drops = self.mac.retry_drops
        for live, delivered, reason in self.ledger.values():
            if delivered:
                continue
            if live > 0:
                rep.in_flight += 1
            elif reason == LOST_QUEUE:
                rep.lost_queue += 1
            elif reason == LOST_RETRY:
                rep.lost_retry += 1
            elif reason == LOST_DISCARD:
                rep.lost_discard += 1
            else:
                rep.lost_no_parent += 1
        rep.sixp_completed = sum(1 for row in self.sixp.log if row[5] == COMPLETED)
        rep.sixp_failed = len(self.sixp.log) - rep.sixp_completed
        return rep

    # ------------------------------------------------------------ exports

    def dodag_rows(self) -> list[tuple[int, Optional[int], Optional[int], Optional[int]]]:
        return [(n, nd.rpl.rank, nd.rpl.pp, nd.rpl.ap) for n, nd in sorted(self.nodes.items())]

    def schedule_rows(self) -> list[tuple]:
        rows = []
        for sched in self.mac.schedules:
            if sched.owner not in self.nodes:
                continue
            for slot in sorted(sched.cells):
                c = sched.cells[slot]
                rows.append((sched.owner, slot, c.channel_offset, c.direction, c.peer, c.kind))
        return rows


def run(cfg: RunConfig, topo: Topology, arm: str = "") -> RunReport:
    """Execute one run and return its report."""
    return Simulation(cfg, topo, arm).run()
