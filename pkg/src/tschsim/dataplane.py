"""Label-switched forwarding with packet replication and root-side elimination."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, replace
from typing import Optional

PP = "PP"
AP = "AP"

NONE = "none"
LEAF_COPY = "leafCopy"
MID_FLOOD = "midFlood"
MID_FLOOD_DROP = "midFloodDrop"
FLOOD = "flood"
STRATEGIES = (NONE, LEAF_COPY, MID_FLOOD, MID_FLOOD_DROP, FLOOD)

FIRST = "first-delivery"
DUPLICATE = "duplicate"


def complement(label: Optional[str]) -> Optional[str]:
    if label == PP:
        return AP
    if label == AP:
        return PP
    return None


@dataclass(frozen=True, slots=True)
class Packet:
    src: int
    seq: int
    label: Optional[str]
    created_at: int
    size: int = 90
    origin_rank: int = 0
    stamped_label: Optional[str] = None
    stamped_by: int = -1

    @property
    def flow(self) -> tuple[int, int]:
        return (self.src, self.seq)


class FlowRegistry:
    """Recently seen sequence numbers per source, bounded to ``window`` entries each."""

    def __init__(self, window: int = 64) -> None:
        self.window = window
        self._order: dict[int, deque] = {}
        self._seen: dict[int, set] = {}

    def __contains__(self, flow: tuple[int, int]) -> bool:
        src, seq = flow
        s = self._seen.get(src)
        return s is not None and seq in s

    def record(self, flow: tuple[int, int]) -> bool:
        """Remember ``flow``; return whether it was already present."""
        src, seq = flow
        seen = self._seen.setdefault(src, set())
        if seq in seen:
            return True
        order = self._order.setdefault(src, deque())
        order.append(seq)
        seen.add(seq)
        if len(order) > self.window:
            seen.discard(order.popleft())
        return False


def select_mac(label: Optional[str], pp: Optional[int], ap: Optional[int], strategy: str = LEAF_COPY) -> Optional[int]:
    """Next-hop MAC for a labeled packet, falling back to the other parent."""
    if label == PP:
        if pp is not None:
            return pp
        return ap
    if label == AP:
        if ap is not None:
            return ap
        return pp
    if strategy == NONE:
        return pp
    return None


def generate(
    src: int,
    seq: int,
    asn: int,
    strategy: str,
    pp: Optional[int],
    ap: Optional[int],
    size: int = 90,
    rank: int = 0,
) -> list[tuple[Packet, Optional[int]]]:
    """Copies created at the source with their next-hop MAC."""
    if strategy == NONE:
        pkt = Packet(src, seq, None, asn, size, rank, None, src)
        return [(pkt, pp)]
    if ap is None:
        pkt = Packet(src, seq, PP, asn, size, rank, PP, src)
        return [(pkt, select_mac(PP, pp, ap))]
    return [
        (Packet(src, seq, lbl, asn, size, rank, lbl, src), select_mac(lbl, pp, ap))
        for lbl in (PP, AP)
    ]


def forward(
    pkt: Packet,
    strategy: str,
    pp: Optional[int],
    ap: Optional[int],
    registry: FlowRegistry,
    router: int = -1,
) -> list[tuple[Packet, Optional[int]]]:
    """Outputs produced by an intermediate node for one received copy."""
    seen = registry.record(pkt.flow)
    if strategy == NONE:
        return [(pkt, select_mac(pkt.label, pp, ap, NONE))]
    original = (pkt, select_mac(pkt.label, pp, ap))
    if strategy == LEAF_COPY:
        return [original]
    if strategy in (MID_FLOOD, MID_FLOOD_DROP) and seen:
        return [original] if strategy == MID_FLOOD else []
    if pp is None or ap is None:
        return [original]
    other = complement(pkt.label)
    if other is None:
        return [original]
    copy = replace(pkt, label=other, stamped_label=other, stamped_by=router)
    return [original, (copy, select_mac(other, pp, ap))]


class RootSink:
    """Keeps the first copy of each flow tuple and counts the rest."""

    def __init__(self) -> None:
        self.delivered: dict[tuple[int, int], int] = {}
        self.duplicates = 0
        self.dup_count: dict[tuple[int, int], int] = {}
        self._last_asn = -1

    def receive(self, pkt: Packet, asn: int) -> str:
        if pkt.label != pkt.stamped_label:
            raise AssertionError(f"label rewritten in transit for {pkt.flow}")
        if asn == self._last_asn:
            raise AssertionError(f"root received two frames in slot {asn}")
        self._last_asn = asn
        if pkt.flow in self.delivered:
            self.duplicates += 1
            self.dup_count[pkt.flow] += 1
            return DUPLICATE
        self.delivered[pkt.flow] = asn
        self.dup_count[pkt.flow] = 0
        return FIRST
