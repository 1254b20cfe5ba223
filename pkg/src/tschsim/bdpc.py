"""Bounded Delay Packet Control: per-child late-packet windows driving
parent-initiated cell allocation toward each child."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Optional

ADD = "ADD"
DELETE = "DELETE"

ENDTOEND = "endtoend"
PROPORTIONAL = "proportional"


def budget_s(
    max_delay_s: float,
    rule: str = ENDTOEND,
    own_rank: Optional[int] = None,
    leaf_rank: Optional[int] = None,
    step: int = 256,
) -> float:
    """Delay budget a packet may have consumed on arrival at this node."""
    if rule == ENDTOEND or own_rank is None or not leaf_rank:
        return max_delay_s
    share = (leaf_rank - own_rank + step) / leaf_rank
    return max_delay_s * min(max(share, 0.0), 1.0)


def classify_arrival(created_at: int, now: int, timeslot_ms: float, budget: float) -> bool:
    """True when the elapsed time strictly exceeds the budget (late)."""
    elapsed_s = (now - created_at) * timeslot_ms / 1000.0
    return elapsed_s > budget + 1e-12


@dataclass
class LateWindow:
    size: int = 100
    verdicts: deque = field(default_factory=deque)
    late: int = 0
    cooldown_until: int = 0
    fresh: int = 0

    def push(self, is_late: bool) -> None:
        self.verdicts.append(is_late)
        self.late += is_late
        if len(self.verdicts) > self.size:
            self.late -= self.verdicts.popleft()
        self.fresh += 1

    @property
    def occupancy(self) -> int:
        return len(self.verdicts)

    @property
    def late_rate(self) -> float:
        return self.late / len(self.verdicts) if self.verdicts else 0.0


@dataclass
class Bdpc:
    sf_max: float = 0.1
    sf_min: float = 0.05
    window: int = 100
    min_verdicts: int = 10
    cooldown_slots: int = 101
    cooldown_verdicts: int = 0
    windows: dict[int, LateWindow] = field(default_factory=dict)

    def record(self, child: int, is_late: bool) -> None:
        w = self.windows.get(child)
        if w is None:
            w = self.windows[child] = LateWindow(self.window)
        w.push(is_late)

    def evaluate_child(self, child: int, now: int) -> Optional[str]:
        """Apply the threshold rule for one child; start its cooldown when it fires."""
        w = self.windows.get(child)
        if w is None or w.occupancy < self.min_verdicts or now < w.cooldown_until:
            return None
        if w.fresh == 0 or w.fresh < self.cooldown_verdicts:
            return None
        rate = w.late_rate
        if rate >= self.sf_max:
            action = ADD
        elif 0 <= rate <= self.sf_min:
            action = DELETE
        else:
            return None
        w.cooldown_until = now + self.cooldown_slots
        w.fresh = 0
        return action
