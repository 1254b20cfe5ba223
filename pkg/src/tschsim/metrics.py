"""Run-level KPIs, delay distributions and cross-seed aggregation."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field, fields
from statistics import fmean
from typing import Iterable, Optional, Sequence

RUN_COLUMNS = (
    "arm", "seed", "pk_period", "n_tx", "n_rx", "n_delayed", "pdr_e2e", "on_time",
    "lifetime_years", "duplicates", "queue_drops", "retry_drops", "no_parent_drops",
)
NODE_COLUMNS = (
    "node", "slots_tx", "slots_rx", "slots_idle", "slots_sleep", "total_C", "lifetime_years",
)


@dataclass
class NodeEnergy:
    node: int
    slots_tx: int
    slots_rx: int
    slots_idle: int
    slots_sleep: int
    total_c: float
    lifetime_years: float


@dataclass
class RunReport:
    arm: str = ""
    seed: int = 0
    pk_period: float = 0.0
    n_tx: int = 0
    n_rx: int = 0
    n_delayed: int = 0
    delay_samples: list[float] = field(default_factory=list)
    duplicates: int = 0
    queue_drops: int = 0
    retry_drops: int = 0
    no_parent_drops: int = 0
    discarded: int = 0
    lost_queue: int = 0
    lost_retry: int = 0
    lost_no_parent: int = 0
    lost_discard: int = 0
    in_flight: int = 0
    lifetime_years: float = math.inf
    duration_s: float = 0.0
    sixp_completed: int = 0
    sixp_failed: int = 0
    nodes: list[NodeEnergy] = field(default_factory=list)

    @property
    def pdr_e2e(self) -> Optional[float]:
        return self.n_rx / self.n_tx if self.n_tx else None

    @property
    def late_rate_e2e(self) -> Optional[float]:
        return self.n_delayed / self.n_rx if self.n_rx else None

    @property
    def on_time(self) -> Optional[float]:
        return 1.0 - self.n_delayed / self.n_rx if self.n_rx else None

    def record_delivery(self, delay_ms: float, max_delay_ms: float) -> None:
        self.n_rx += 1
        if delay_ms > max_delay_ms:
            self.n_delayed += 1
        self.delay_samples.append(delay_ms)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunReport":
        d = dict(d)
        d["nodes"] = [NodeEnergy(**n) for n in d.get("nodes", [])]
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RunReport":
        return cls.from_dict(json.loads(text))

    def csv_row(self) -> list[str]:
        return [
            self.arm, str(self.seed), fmt(self.pk_period), str(self.n_tx), str(self.n_rx),
            str(self.n_delayed), fmt(self.pdr_e2e), fmt(self.on_time), fmt(self.lifetime_years),
            str(self.duplicates), str(self.queue_drops), str(self.retry_drops),
            str(self.no_parent_drops),
        ]

    def node_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(NODE_COLUMNS)
        for n in self.nodes:
            w.writerow([
                n.node, n.slots_tx, n.slots_rx, n.slots_idle, n.slots_sleep,
                fmt(n.total_c), fmt(n.lifetime_years),
            ])
        return buf.getvalue()


def fmt(x) -> str:
    if x is None:
        return "NA"
    if isinstance(x, float):
        if math.isinf(x):
            return "inf"
        return f"{x:.6f}"
    return str(x)


def ecdf(samples: Iterable[float]) -> list[tuple[float, float]]:
    """Empirical CDF as ``(value, fraction <= value)`` steps. Empty input gives ``[]``."""
    xs = sorted(samples)
    n = len(xs)
    out: list[tuple[float, float]] = []
    for i, x in enumerate(xs, 1):
        if out and out[-1][0] == x:
            out[-1] = (x, i / n)
        else:
            out.append((x, i / n))
    return out


def ecdf_at(samples: Sequence[float], x: float) -> float:
    if not samples:
        return math.nan
    return sum(1 for s in samples if s <= x) / len(samples)


def _mean(values: list[Optional[float]]) -> Optional[float]:
    vals = [v for v in values if v is not None and not math.isnan(v)]
    if not vals:
        return None
    if any(math.isinf(v) for v in vals):
        return math.inf
    return fmean(vals)


@dataclass
class ArmSummary:
    arm: str
    runs: int
    lifetime_years: Optional[float]
    pdr_e2e: Optional[float]
    on_time: Optional[float]


def aggregate(reports: Iterable[RunReport], by_period: bool = False) -> list[ArmSummary]:
    """Mean lifetime, PDR and on-time rate per arm (optionally per arm and period)."""
    groups: dict[str, list[RunReport]] = {}
    for r in reports:
        key = f"{r.arm}@{fmt(r.pk_period)}" if by_period else r.arm
        groups.setdefault(key, []).append(r)
    return [
        ArmSummary(
            key,
            len(rs),
            _mean([r.lifetime_years for r in rs]),
            _mean([r.pdr_e2e for r in rs]),
            _mean([r.on_time for r in rs]),
        )
        for key, rs in sorted(groups.items())
    ]


def ratio_table(summary: Iterable[ArmSummary], reference: str, others: Sequence[str]) -> list[tuple[str, Optional[float], Optional[float]]]:
    """``(label, lifetime ratio, on-time ratio)`` of ``reference`` against each other arm."""
    by = {s.arm: s for s in summary}
    ref = by[reference]
    rows = []
    for o in others:
        if o not in by:
            continue
        s = by[o]
        t = ref.lifetime_years / s.lifetime_years if ref.lifetime_years and s.lifetime_years else None
        p = ref.on_time / s.on_time if ref.on_time is not None and s.on_time else None
        rows.append((f"{reference} vs {o}", t, p))
    return rows


def runs_csv(reports: Iterable[RunReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RUN_COLUMNS)
    for r in sort_reports(reports):
        w.writerow(r.csv_row())
    return buf.getvalue()


def summary_csv(summary: Iterable[ArmSummary]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("arm", "runs", "lifetime_years", "pdr_e2e", "on_time"))
    for s in summary:
        w.writerow((s.arm, s.runs, fmt(s.lifetime_years), fmt(s.pdr_e2e), fmt(s.on_time)))
    return buf.getvalue()


def ratios_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("comparison", "lifetime_ratio", "on_time_ratio"))
    for label, t, p in rows:
        w.writerow((label, fmt(t), fmt(p)))
    return buf.getvalue()


def delays_text(report: RunReport) -> str:
    return "".join(f"{d:g}\n" for d in report.delay_samples)


def sort_reports(reports: Iterable[RunReport]) -> list[RunReport]:
    return sorted(reports, key=lambda r: (r.arm, r.pk_period, r.seed))
