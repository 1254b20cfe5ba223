"""DODAG maintenance: ranks, DIOs, preferred and alternate parent selection."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional

STRICT = "strict"
MEDIUM = "medium"
SOFT = "soft"


@dataclass(frozen=True)
class Dio:
    sender: int
    rank: Optional[int]
    sender_pp: Optional[int] = None
    sender_parent_set: frozenset[int] = frozenset()


@dataclass
class NeighborEntry:
    rank: int
    pp: Optional[int]
    parent_set: frozenset[int]
    heard_asn: int


@dataclass
class NeighborTable:
    entries: dict[int, NeighborEntry] = field(default_factory=dict)

    def update(self, dio: Dio, asn: int) -> None:
        if dio.rank is None:
            self.entries.pop(dio.sender, None)
            return
        self.entries[dio.sender] = NeighborEntry(
            dio.rank, dio.sender_pp, dio.sender_parent_set, asn
        )

    def expire(self, now: int, horizon: int) -> list[int]:
        stale = [n for n, e in self.entries.items() if now - e.heard_asn > horizon]
        for n in stale:
            del self.entries[n]
        return stale

    def rank(self, n: int) -> Optional[int]:
        e = self.entries.get(n)
        return None if e is None else e.rank

    def parent_set(self, own_rank: Optional[int]) -> list[int]:
        """Neighbors ranked strictly below ``own_rank``, lowest rank first."""
        if own_rank is None:
            return []
        ps = [n for n, e in self.entries.items() if e.rank < own_rank]
        return sorted(ps, key=lambda n: (self.entries[n].rank, n))


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def compute_rank(parent_rank: int, pdr_estimate: float, step: int = 256) -> int:
    """Parent rank plus ``step`` scaled by the expected transmission count."""
    return parent_rank + round_half_up(step / pdr_estimate)


def select_pp(nt: NeighborTable, own_rank: Optional[int] = None, me: Optional[int] = None) -> Optional[int]:
    """Lowest-rank neighbor (ties by id) that ranks below ``own_rank``.

    Neighbors that advertise ``me`` as their own preferred parent are skipped.
    """
    best = None
    for n, e in nt.entries.items():
        if me is not None and e.pp == me:
            continue
        if own_rank is not None and e.rank >= own_rank:
            continue
        key = (e.rank, n)
        if best is None or key < best:
            best = key
    return None if best is None else best[1]


def ca_predicate(mode: str, cand: NeighborEntry, pp: NeighborEntry) -> bool:
    """Common-ancestor rule between a candidate and the current preferred parent."""
    if mode == STRICT:
        return cand.pp is not None and pp.pp is not None and cand.pp == pp.pp
    if mode == MEDIUM:
        return cand.pp is not None and cand.pp in pp.parent_set
    if mode == SOFT:
        return bool(cand.parent_set) and bool(cand.parent_set & pp.parent_set)
    raise ValueError(f"unknown common-ancestor mode {mode!r}")


def ap_candidates(
    nt: NeighborTable,
    pp: int,
    mode: str,
    own_rank: Optional[int] = None,
    me: Optional[int] = None,
) -> list[int]:
    """All neighbors qualifying as alternate parent, lowest rank first."""
    pp_entry = nt.entries.get(pp)
    if pp_entry is None:
        return []
    out = []
    for n, e in nt.entries.items():
        if n == pp or (me is not None and e.pp == me):
            continue
        if own_rank is not None and e.rank >= own_rank:
            continue
        if ca_predicate(mode, e, pp_entry):
            out.append(n)
    return sorted(out, key=lambda n: (nt.entries[n].rank, n))


def select_ap(
    nt: NeighborTable,
    pp: Optional[int],
    mode: str,
    own_rank: Optional[int] = None,
    me: Optional[int] = None,
) -> Optional[int]:
    if pp is None:
        return None
    cands = ap_candidates(nt, pp, mode, own_rank, me)
    return cands[0] if cands else None


class RplNode:
    """Per-node RPL state machine.

    ``on_dio`` and ``expire`` return ``(old_pp, old_ap)`` when either parent
    changed, else ``None``.
    """

    def __init__(
        self,
        node_id: int,
        *,
        is_root: bool = False,
        mode: str = STRICT,
        rank_min: int = 256,
        rank_step: int = 256,
        pdr_estimate: float = 0.75,
        parent_set_cap: int = 8,
        want_ap: bool = True,
    ) -> None:
        self.id = node_id
        self.is_root = is_root
        self.mode = mode
        self.rank_min = rank_min
        self.rank_step = rank_step
        self.pdr_estimate = pdr_estimate
        self.parent_set_cap = parent_set_cap
        self.want_ap = want_ap
        self.neighbors = NeighborTable()
        self.pp: Optional[int] = None
        self.ap: Optional[int] = None
        self.rank: Optional[int] = rank_min if is_root else None
        self.next_dio_frame: Optional[int] = 0 if is_root else None
        self.dios_sent = 0

    @property
    def joined(self) -> bool:
        return self.rank is not None

    @property
    def hysteresis(self) -> int:
        return self.rank_step // 2

    def parent_set(self) -> list[int]:
        return self.neighbors.parent_set(self.rank)

    def emit_dio(self) -> Optional[Dio]:
        if not self.joined:
            return None
        ps = self.parent_set()[: self.parent_set_cap]
        if self.pp is not None and self.pp not in ps:
            ps = [self.pp] + ps[: self.parent_set_cap - 1]
        return Dio(self.id, self.rank, self.pp, frozenset(ps))

    def poison(self) -> Dio:
        """DIO withdrawing this node as a parent after it lost its own."""
        return Dio(self.id, None)

    def on_dio(self, dio: Dio, asn: int) -> Optional[tuple[Optional[int], Optional[int]]]:
        self.neighbors.update(dio, asn)
        return self._reselect()

    def expire(self, asn: int, horizon: int) -> Optional[tuple[Optional[int], Optional[int]]]:
        if not self.neighbors.expire(asn, horizon):
            return None
        return self._reselect()

    def _reselect(self) -> Optional[tuple[Optional[int], Optional[int]]]:
        if self.is_root:
            return None
        old = (self.pp, self.ap)
        nt = self.neighbors
        best = select_pp(nt, None, self.id)
        cur = self.pp if self.pp in nt.entries else None
        if cur is not None and nt.entries[cur].pp == self.id:
            cur = None
        if cur is None:
            self.pp = best
        elif best is not None and best != cur:
            if nt.entries[best].rank + self.hysteresis <= nt.entries[cur].rank:
                self.pp = best
            else:
                self.pp = cur
        else:
            self.pp = cur
        if self.pp is None:
            self.rank = None
            self.ap = None
        else:
            self.rank = compute_rank(nt.entries[self.pp].rank, self.pdr_estimate, self.rank_step)
            self.ap = select_ap(nt, self.pp, self.mode, self.rank, self.id) if self.want_ap else None
        if (self.pp, self.ap) != old:
            return old
        return None

    def active_parents(self) -> tuple[int, ...]:
        if self.pp is None:
            return ()
        if self.ap is None:
            return (self.pp,)
        return (self.pp, self.ap)


def candidate_sets(nt: NeighborTable, pp: int, modes: Iterable[str] = (STRICT, MEDIUM, SOFT)) -> dict[str, set[int]]:
    """Unconstrained candidate sets per mode (no rank filter), for nesting checks."""
    return {m: set(ap_candidates(nt, pp, m)) for m in modes}
