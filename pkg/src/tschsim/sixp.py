"""6P pairwise transactions (ADD / DELETE / CLEAR) over the simulated MAC."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Optional

from tschsim.tsch import NEGOTIATED, RX, TX, Mac

ADD = "ADD"
DELETE = "DELETE"
CLEAR = "CLEAR"

PENDING = "pending"
COMPLETED = "completed"
FAILED = "failed"

INITIATOR_TX = "initiator-tx"
INITIATOR_RX = "initiator-rx"


@dataclass
class SixpTransaction:
    id: int
    initiator: int
    peer: int
    command: str
    cell_count: int
    direction: str
    sf: str
    started: int
    deadline: int
    proposed_cells: list[tuple[int, int]] = field(default_factory=list)
    accepted: list[tuple[int, int]] = field(default_factory=list)
    state: str = PENDING
    installed: int = 0
    on_done: Optional[Callable[["SixpTransaction"], None]] = None

    @property
    def tx_node(self) -> int:
        return self.initiator if self.direction == INITIATOR_TX else self.peer

    @property
    def rx_node(self) -> int:
        return self.peer if self.direction == INITIATOR_TX else self.initiator


@dataclass(frozen=True)
class SixpMessage:
    txn: int
    kind: str  # "request" | "response"
    sender: int


class SixP:
    """Transaction state machines for every node pair.

    ``accept_hook(peer, txn) -> bool`` lets the owner refuse a request on the
    responder side (the transaction then completes with zero cells).
    """

    def __init__(self, mac: Mac, rng, channels: int, timeout_slots: int) -> None:
        self.mac = mac
        self.rng = rng
        self.channels = channels
        self.timeout_slots = timeout_slots
        self.active: dict[tuple[int, int], SixpTransaction] = {}
        self.by_id: dict[int, SixpTransaction] = {}
        self.responded: set[int] = set()
        self.log: list[tuple[int, int, int, str, int, str]] = []
        self.accept_hook: Optional[Callable[[int, SixpTransaction], bool]] = None
        self._ids = itertools.count(1)
        self.now = 0

    def busy(self, initiator: int, peer: int) -> bool:
        return (initiator, peer) in self.active

    def request(
        self,
        initiator: int,
        peer: int,
        command: str,
        cell_count: int,
        direction: str = INITIATOR_TX,
        asn: int = 0,
        sf: str = "msf",
        on_done: Optional[Callable[[SixpTransaction], None]] = None,
    ) -> Optional[SixpTransaction]:
        """Open a transaction; ``None`` when the pair already has one in flight."""
        if self.busy(initiator, peer):
            return None
        txn = SixpTransaction(
            next(self._ids), initiator, peer, command, cell_count, direction, sf,
            asn, asn + self.timeout_slots, on_done=on_done,
        )
        sched = self.mac.schedules[initiator]
        if command == ADD:
            free = sched.free_slots()
            k = min(3 * cell_count, len(free))
            slots = self.rng.sample(free, k) if k else []
            txn.proposed_cells = [(s, self.rng.randrange(self.channels)) for s in slots]
        elif command == DELETE:
            want = TX if direction == INITIATOR_TX else RX
            cands = sched.negotiated(peer, want, sf)
            txn.proposed_cells = [(c.slot_offset, c.channel_offset) for c in cands[-cell_count:]]
        self.active[(initiator, peer)] = txn
        self.by_id[txn.id] = txn
        self.mac.enqueue_control(initiator, SixpMessage(txn.id, "request", initiator), peer)
        return txn

    def on_receive(self, receiver: int, msg: SixpMessage, asn: int) -> None:
        txn = self.by_id.get(msg.txn)
        if txn is None:
            return
        if msg.kind == "request":
            if receiver != txn.peer or txn.id in self.responded:
                return
            self.responded.add(txn.id)
            txn.accepted = self._respond(txn)
            self.mac.enqueue_control(receiver, SixpMessage(txn.id, "response", receiver), txn.initiator)
        elif msg.kind == "response" and receiver == txn.initiator and txn.state == PENDING:
            self._complete(txn, asn)

    def _respond(self, txn: SixpTransaction) -> list[tuple[int, int]]:
        if self.accept_hook is not None and not self.accept_hook(txn.peer, txn):
            return []
        peer_sched = self.mac.schedules[txn.peer]
        if txn.command == ADD:
            ok = [c for c in txn.proposed_cells if peer_sched.is_free(c[0])]
            return ok[: txn.cell_count]
        if txn.command == DELETE:
            return list(txn.proposed_cells)
        return []

    def _complete(self, txn: SixpTransaction, asn: int) -> None:
        mac = self.mac
        if txn.command == ADD:
            for slot, ch in txn.accepted:
                if mac.install_pair(txn.tx_node, txn.rx_node, slot, ch, txn.sf):
                    txn.installed += 1
        elif txn.command == DELETE:
            for slot, _ in txn.accepted:
                if mac.remove_pair(txn.tx_node, slot):
                    txn.installed += 1
        elif txn.command == CLEAR:
            txn.installed = self.clear_pair(txn.initiator, txn.peer)
        txn.state = COMPLETED
        self._close(txn, asn)

    def clear_pair(self, a: int, b: int) -> int:
        mac = self.mac
        gone = 0
        for tx, rx in ((a, b), (b, a)):
            for c in mac.schedules[tx].negotiated(rx, TX):
                gone += mac.remove_pair(tx, c.slot_offset)
        return gone

    def _close(self, txn: SixpTransaction, asn: int) -> None:
        self.now = asn
        for node in (txn.initiator, txn.peer):
            ctrl = self.mac.queues[node].control
            stale = [e for e in ctrl if e[0].txn == txn.id]
            for e in stale:
                ctrl.remove(e)
        self.active.pop((txn.initiator, txn.peer), None)
        self.by_id.pop(txn.id, None)
        self.responded.discard(txn.id)
        self.log.append((asn, txn.initiator, txn.peer, txn.command, txn.installed, txn.state))
        if txn.on_done is not None:
            txn.on_done(txn)

    def housekeeping(self, asn: int) -> None:
        """Fail every transaction whose response did not arrive in time."""
        expired = [t for t in self.active.values() if asn >= t.deadline]
        for txn in expired:
            txn.state = FAILED
            self._close(txn, asn)

    def relocate_on_parent_change(
        self, child: int, pp_old: int, pp_new: int, asn: int,
        on_done: Optional[Callable[[bool], None]] = None,
    ) -> Optional[SixpTransaction]:
        """Move the cells held toward ``pp_old`` to ``pp_new``: ADD first, CLEAR after.

        A CLEAR that never completes still purges the child's own cells.
        """
        count = max(self.mac.schedules[child].count(pp_old, TX), 1)

        def after_clear(t: SixpTransaction) -> None:
            if t.state != COMPLETED:
                self.mac.drop_local(child, pp_old)
            if on_done is not None:
                on_done(True)

        def after_add(t: SixpTransaction) -> None:
            c = self.request(child, pp_old, CLEAR, 0, INITIATOR_TX, self.now, "msf", after_clear)
            if c is None:
                self.mac.drop_local(child, pp_old)
                if on_done is not None:
                    on_done(True)

        add = self.request(child, pp_new, ADD, count, INITIATOR_TX, asn, "msf", after_add)
        if add is None and on_done is not None:
            on_done(False)
        return add

    def log_csv(self) -> str:
        lines = ["asn,initiator,peer,cmd,count,outcome"]
        lines += [",".join(map(str, row)) for row in self.log]
        return "\n".join(lines) + "\n"
