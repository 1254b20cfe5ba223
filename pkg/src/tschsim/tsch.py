"""TSCH MAC: schedules, transmit queues, per-link loss, ACKs and retries."""

from __future__ import annotations

from collections import deque
from typing import Callable, Optional

from tschsim import energy as E
from tschsim.topology import Topology

MINIMAL = "minimal"
NEGOTIATED = "negotiated"
LISTEN = "listen"
TX = "tx"
RX = "rx"

DROP_QUEUE = "queue"
DROP_RETRY = "retry"


class Cell:
    __slots__ = ("slot_offset", "channel_offset", "kind", "direction", "peer", "sf")

    def __init__(self, slot_offset, channel_offset, kind, direction, peer, sf="msf"):
        self.slot_offset = slot_offset
        self.channel_offset = channel_offset
        self.kind = kind
        self.direction = direction
        self.peer = peer
        self.sf = sf

    def key(self) -> tuple:
        return (self.slot_offset, self.channel_offset, self.kind, self.direction, self.peer)

    def __repr__(self) -> str:
        return (
            f"Cell({self.slot_offset},{self.channel_offset},{self.kind},"
            f"{self.direction},peer={self.peer},sf={self.sf})"
        )


class Schedule:
    """At most one cell per slot offset. Slot 0 holds the shared minimal cell."""

    def __init__(self, owner: int, slotframe_length: int, reserved: tuple[int, ...] = ()) -> None:
        self.owner = owner
        self.length = slotframe_length
        self.reserved = frozenset(reserved)
        self.cells: dict[int, Cell] = {0: Cell(0, 0, MINIMAL, TX, None, "minimal")}

    def is_free(self, slot: int) -> bool:
        return 0 < slot < self.length and slot not in self.cells and slot not in self.reserved

    def free_slots(self) -> list[int]:
        return [s for s in range(1, self.length) if s not in self.cells and s not in self.reserved]

    def negotiated(self, peer: Optional[int] = None, direction: Optional[str] = None, sf: Optional[str] = None) -> list[Cell]:
        out = []
        for c in self.cells.values():
            if c.kind != NEGOTIATED:
                continue
            if peer is not None and c.peer != peer:
                continue
            if direction is not None and c.direction != direction:
                continue
            if sf is not None and c.sf != sf:
                continue
            out.append(c)
        return sorted(out, key=lambda c: c.slot_offset)

    def count(self, peer: int, direction: str = TX, sf: Optional[str] = None) -> int:
        return len(self.negotiated(peer, direction, sf))


class TxQueue:
    """FIFO of ``[payload, dest, retries_left]`` entries.

    Control (6P) entries sit ahead of data and are not bounded by ``capacity``.
    """

    __slots__ = ("data", "control", "capacity")

    def __init__(self, capacity: int) -> None:
        self.data: deque = deque()
        self.control: deque = deque()
        self.capacity = capacity

    def __len__(self) -> int:
        return len(self.data)

    def push_data(self, payload, dest: int, retries: int) -> bool:
        if len(self.data) >= self.capacity:
            return False
        self.data.append([payload, dest, retries, False])
        return True

    def push_control(self, payload, dest: int, retries: int) -> None:
        self.control.append([payload, dest, retries, False])

    def head_for(self, dest: int):
        for e in self.control:
            if e[1] == dest:
                return e
        for e in self.data:
            if e[1] == dest:
                return e
        return None

    def remove(self, entry) -> None:
        try:
            self.data.remove(entry)
        except ValueError:
            self.control.remove(entry)

    def is_control(self, entry) -> bool:
        return any(e is entry for e in self.control)


class Mac:
    """All nodes' MAC state and the slot-level delivery model.

    Callbacks set by the owner:
      ``on_elapsed(tx, rx, used)`` for every negotiated tx cell that elapses,
      ``on_drop(node, entry, is_control)`` when a frame exhausts its retries.
    """

    def __init__(
        self,
        topo: Topology,
        slotframe_length: int,
        queue_size: int,
        max_retries: int,
        link_rng,
        contention_rng,
        meter: E.EnergyMeter,
        reserved: tuple[int, ...] = (),
    ) -> None:
        self.topo = topo
        self.length = slotframe_length
        self.max_retries = max_retries
        self.link_rng = link_rng
        self.contention_rng = contention_rng
        self.meter = meter
        n = max(topo.nodes) + 1
        self.schedules = [Schedule(i, slotframe_length, reserved) for i in range(n)]
        self.queues = [TxQueue(queue_size) for _ in range(n)]
        self.pdr = [dict() for _ in range(n)]
        for (a, b), q in topo.links.items():
            self.pdr[a][b] = q.pdr
        self.neigh = [frozenset(topo.neighbors(i)) if i in topo.nodes else frozenset() for i in range(n)]
        self.tx_count: list[dict[int, int]] = [dict() for _ in range(n)]
        self.slot_tx: list[list[tuple[int, int, int]]] = [[] for _ in range(slotframe_length)]
        self.slot_listen: list[list[int]] = [[] for _ in range(slotframe_length)]
        self.on_elapsed: Optional[Callable[[int, int, bool], None]] = None
        self.on_drop: Optional[Callable[[int, list, bool], None]] = None
        self.on_acked: Optional[Callable[[int, list], None]] = None
        self.audit_needed = False
        self.queue_drops = 0
        self.retry_drops = 0
        self.delivered = 0
        self.enqueued = 0
        # per-node data-frame accounting: enqueued = delivered + retry_drops + withdrawn + queued
        self.stats = {k: [0] * n for k in ("enqueued", "delivered", "retry_drops", "queue_drops", "withdrawn")}

    # ---------------------------------------------------------------- schedule

    def install_pair(self, tx: int, rx: int, slot: int, channel: int, sf: str = "msf") -> bool:
        st, sr = self.schedules[tx], self.schedules[rx]
        if not (st.is_free(slot) and sr.is_free(slot)):
            return False
        st.cells[slot] = Cell(slot, channel, NEGOTIATED, TX, rx, sf)
        sr.cells[slot] = Cell(slot, channel, NEGOTIATED, RX, tx, sf)
        self.tx_count[tx][rx] = self.tx_count[tx].get(rx, 0) + 1
        self.slot_tx[slot].append((tx, rx, channel))
        return True

    def remove_pair(self, tx: int, slot: int) -> bool:
        """Remove the tx cell at ``slot`` of ``tx`` and its matching rx cell."""
        st = self.schedules[tx]
        c = st.cells.get(slot)
        if c is None or c.kind != NEGOTIATED or c.direction != TX:
            return False
        rx = c.peer
        del st.cells[slot]
        self.tx_count[tx][rx] -= 1
        if not self.tx_count[tx][rx]:
            del self.tx_count[tx][rx]
        self.slot_tx[slot].remove((tx, rx, c.channel_offset))
        sr = self.schedules[rx]
        m = sr.cells.get(slot)
        if m is not None and m.kind == NEGOTIATED and m.direction == RX and m.peer == tx:
            del sr.cells[slot]
        return True

    def drop_local(self, node: int, peer: int) -> int:
        """Purge ``node``'s own cells toward/from ``peer`` without touching the peer."""
        sched = self.schedules[node]
        gone = 0
        self.audit_needed = True
        for c in sched.negotiated(peer):
            if c.direction == TX:
                self.tx_count[node][peer] -= 1
                if not self.tx_count[node][peer]:
                    del self.tx_count[node][peer]
                self.slot_tx[c.slot_offset].remove((node, peer, c.channel_offset))
            del sched.cells[c.slot_offset]
            gone += 1
        return gone

    def add_listen_cell(self, node: int, slot: int) -> None:
        sched = self.schedules[node]
        if slot in sched.cells:
            raise ValueError(f"slot {slot} already used at node {node}")
        sched.cells[slot] = Cell(slot, 0, LISTEN, RX, None, "static")
        self.slot_listen[slot].append(node)

    def orphans(self) -> list[tuple[int, Cell]]:
        """Negotiated cells whose peer lacks the matching opposite cell."""
        out = []
        for sched in self.schedules:
            for c in list(sched.cells.values()):
                if c.kind != NEGOTIATED:
                    continue
                m = self.schedules[c.peer].cells.get(c.slot_offset)
                want = RX if c.direction == TX else TX
                if (
                    m is None
                    or m.kind != NEGOTIATED
                    or m.direction != want
                    or m.peer != sched.owner
                    or m.channel_offset != c.channel_offset
                ):
                    out.append((sched.owner, c))
        return out

    def purge_cell(self, node: int, cell: Cell) -> None:
        sched = self.schedules[node]
        if sched.cells.get(cell.slot_offset) is not cell:
            return
        del sched.cells[cell.slot_offset]
        if cell.direction == TX:
            self.tx_count[node][cell.peer] -= 1
            if not self.tx_count[node][cell.peer]:
                del self.tx_count[node][cell.peer]
            self.slot_tx[cell.slot_offset].remove((node, cell.peer, cell.channel_offset))

    def has_tx_cell(self, node: int, peer: int) -> bool:
        return peer in self.tx_count[node]

    def active_slots(self) -> list[int]:
        return [s for s in range(1, self.length) if self.slot_tx[s] or self.slot_listen[s]]

    # ------------------------------------------------------------------ queues

    def enqueue(self, node: int, pkt, dest_mac: Optional[int]) -> bool:
        """Append a data frame. Returns False on a full queue or missing next hop."""
        if dest_mac is None:
            return False
        if not self.queues[node].push_data(pkt, dest_mac, self.max_retries):
            self.queue_drops += 1
            self.stats["queue_drops"][node] += 1
            return False
        self.enqueued += 1
        self.stats["enqueued"][node] += 1
        return True

    def withdraw(self, node: int, entry) -> None:
        """Take a queued data frame back (its next hop vanished)."""
        self.queues[node].data.remove(entry)
        self.stats["withdrawn"][node] += 1

    def enqueue_control(self, node: int, msg, dest: int) -> None:
        self.queues[node].push_control(msg, dest, self.max_retries)

    # -------------------------------------------------------------- slot model

    def process_slot(self, asn: int) -> list[tuple[int, int, object, bool]]:
        """Run one non-minimal timeslot.

        Returns ``(sender, receiver, payload, is_control)`` for every frame
        that reached its receiver. A retransmission of a frame the receiver
        already holds (its ACK was lost) is acknowledged again but not passed
        up, as link-layer sequence numbers would do.
        """
        s = asn % self.length
        counts = self.meter.counts
        queues = self.queues
        on_elapsed = self.on_elapsed
        sending = []
        for tx, rx, ch in self.slot_tx[s]:
            q = queues[tx]
            entry = q.head_for(rx) if (q.data or q.control) else None
            if on_elapsed is not None:
                on_elapsed(tx, rx, entry is not None)
            if entry is None:
                counts[rx][E.RX_IDLE] += 1
            else:
                sending.append((tx, rx, ch, entry))
        for node in self.slot_listen[s]:
            counts[node][E.RX_IDLE] += 1
        if not sending:
            return []
        collided = self._collisions(sending) if len(sending) > 1 else ()
        rand = self.link_rng.random
        out = []
        for i, (tx, rx, ch, entry) in enumerate(sending):
            counts[tx][E.TX_DATA_RX_ACK] += 1
            ok = rand() < self.pdr[tx][rx] and i not in collided
            acked = ok and rand() < self.pdr[rx][tx]
            q = queues[tx]
            is_control = q.is_control(entry)
            if ok:
                counts[rx][E.RX_DATA_TX_ACK] += 1
                if not entry[3]:
                    out.append((tx, rx, entry[0], is_control))
                    entry[3] = True
            else:
                counts[rx][E.RX_IDLE] += 1
            if acked:
                q.remove(entry)
                if not is_control:
                    self.delivered += 1
                    self.stats["delivered"][tx] += 1
                    if self.on_acked is not None:
                        self.on_acked(tx, entry)
            elif entry[2] <= 0:
                q.remove(entry)
                if not is_control:
                    self.retry_drops += 1
                    self.stats["retry_drops"][tx] += 1
                if self.on_drop is not None:
                    self.on_drop(tx, entry, is_control)
            else:
                entry[2] -= 1
        return out

    def _collisions(self, sending) -> set[int]:
        """Indices of transmissions lost to a same-channel transmitter heard by the receiver."""
        hit = set()
        for i, (tx_i, rx_i, ch_i, _) in enumerate(sending):
            for j, (tx_j, _rx, ch_j, _e) in enumerate(sending):
                if i != j and ch_i == ch_j and tx_j in self.neigh[rx_i]:
                    hit.add(i)
                    break
        return hit

    def minimal_cell(self, asn: int, dio_pending: dict, prefer_dio: bool = False) -> list[tuple[str, int, int, object]]:
        """Shared cell [0, 0]: one uniformly drawn transmitter per slotframe.

        Nodes holding a 6P frame for a neighbor they have no negotiated cell to
        contend first; broadcast DIOs only contend when no such frame waits,
        unless ``prefer_dio`` reverses that order for this slotframe.
        Returns ``("dio"|"ctrl", sender, receiver, payload)`` tuples and removes
        the winning DIO from ``dio_pending``.
        """
        counts = self.meter.counts
        ctrl = []
        for node, q in enumerate(self.queues):
            if not q.control:
                continue
            for e in q.control:
                if e[1] not in self.tx_count[node]:
                    ctrl.append((node, e))
                    break
        out: list = []
        listeners = self.topo.nodes
        if ctrl and not (prefer_dio and dio_pending):
            node, entry = ctrl[self.contention_rng.randrange(len(ctrl))] if len(ctrl) > 1 else ctrl[0]
            dest = entry[1]
            counts[node][E.TX_DATA_RX_ACK] += 1
            ok = self.link_rng.random() < self.pdr[node].get(dest, 0.0)
            acked = ok and self.link_rng.random() < self.pdr[dest][node]
            for n in listeners:
                if n == node:
                    continue
                counts[n][E.RX_DATA_TX_ACK if (ok and n == dest) else E.RX_IDLE] += 1
            if ok and not entry[3]:
                out.append(("ctrl", node, dest, entry[0]))
                entry[3] = True
            q = self.queues[node]
            if acked:
                q.control.remove(entry)
            elif entry[2] <= 0:
                q.control.remove(entry)
                if self.on_drop is not None:
                    self.on_drop(node, entry, True)
            else:
                entry[2] -= 1
            return out
        if dio_pending:
            senders = sorted(dio_pending)
            node = senders[self.contention_rng.randrange(len(senders))] if len(senders) > 1 else senders[0]
            dio = dio_pending.pop(node)
            counts[node][E.TX_DATA_ONLY] += 1
            rand = self.link_rng.random
            neigh = self.neigh[node]
            for n in listeners:
                if n == node:
                    continue
                if n in neigh and rand() < self.pdr[node][n]:
                    counts[n][E.RX_DATA_ONLY] += 1
                    out.append(("dio", node, n, dio))
                else:
                    counts[n][E.RX_IDLE] += 1
            return out
        for n in listeners:
            counts[n][E.RX_IDLE] += 1
        return out
