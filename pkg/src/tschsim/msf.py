"""Minimal Scheduling Function: demand-driven cells toward each parent."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

MAX_NUM_CELLS = 100
LIM_HIGH = 75
LIM_LOW = 25

ADD = "ADD"
DELETE = "DELETE"


@dataclass
class MsfCounters:
    nce: int = 0
    ncu: int = 0


@dataclass
class Msf:
    """Independent elapsed/used counters for every parent the node sends to."""

    max_num_cells: int = MAX_NUM_CELLS
    lim_high: int = LIM_HIGH
    lim_low: int = LIM_LOW
    counters: dict[int, MsfCounters] = field(default_factory=dict)

    def on_cell_elapsed(self, parent: int, used: bool, cells_toward_parent: int = 1) -> Optional[str]:
        """Count one elapsed tx cell; return ``ADD``/``DELETE`` when an evaluation fires."""
        c = self.counters.get(parent)
        if c is None:
            c = self.counters[parent] = MsfCounters()
        c.nce += 1
        if used:
            c.ncu += 1
        if c.nce <= self.max_num_cells:
            return None
        action = None
        if c.ncu > self.lim_high:
            action = ADD
        elif c.ncu < self.lim_low and cells_toward_parent > 1:
            action = DELETE
        c.nce = c.ncu = 0
        return action

    def on_parent_change(self, pp_old: Optional[int], pp_new: Optional[int], keep: tuple[int, ...] = ()) -> bool:
        """Reset counters for the new parent; return whether cells must be relocated."""
        if pp_old == pp_new:
            return False
        if pp_old is not None and pp_old not in keep:
            self.counters.pop(pp_old, None)
        if pp_new is not None:
            self.counters[pp_new] = MsfCounters()
        return pp_old is not None and pp_new is not None and pp_old not in keep

    def forget(self, parent: int) -> None:
        self.counters.pop(parent, None)
