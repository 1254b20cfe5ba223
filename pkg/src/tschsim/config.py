"""Run configuration and its validation."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields

SF_KINDS = ("MSF", "BDPC")
FLOODING = ("none", "leafCopy", "midFlood", "midFloodDrop", "flood")
AP_MODES = ("strict", "medium", "soft")
BUDGET_RULES = ("endtoend", "proportional")


class ConfigError(ValueError):
    """Raised when a configuration violates one of its invariants."""


@dataclass(frozen=True)
class ChargeTable:
    """Charge per slot outcome in microcoulombs; battery in coulombs.

    Defaults are representative of a 2.4 GHz 802.15.4 radio class; they are
    assumptions, not measured values.
    """

    tx_data_rx_ack: float = 54.5
    rx_data_tx_ack: float = 32.6
    tx_data_only: float = 49.5
    rx_data_only: float = 22.6
    rx_idle: float = 6.4
    sleep: float = 0.0
    battery_c: float = 2821.5

    def scaled(self, k: float) -> "ChargeTable":
        return dataclasses.replace(
            self,
            tx_data_rx_ack=self.tx_data_rx_ack * k,
            rx_data_tx_ack=self.rx_data_tx_ack * k,
            tx_data_only=self.tx_data_only * k,
            rx_data_only=self.rx_data_only * k,
            rx_idle=self.rx_idle * k,
            sleep=self.sleep * k,
        )

    def validate(self) -> None:
        if not self.rx_idle < self.rx_data_only < self.tx_data_rx_ack:
            raise ConfigError("charge table must satisfy rx_idle < rx_data_only < tx_data_rx_ack")
        others = (
            self.tx_data_rx_ack,
            self.rx_data_tx_ack,
            self.tx_data_only,
            self.rx_data_only,
            self.rx_idle,
        )
        if self.sleep < 0 or any(self.sleep > v for v in others):
            raise ConfigError("charge table must satisfy 0 <= sleep <= every other outcome")
        if self.battery_c <= 0:
            raise ConfigError("battery_c must be positive")


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    slotframe_length: int = 101
    timeslot_ms: float = 10.0
    channels: int = 16
    duration_slotframes: int = 10000
    warmup_slotframes: int = 30
    pk_period_s: float = 5.0
    pk_variance: float = 0.05
    pk_size_bytes: int = 90
    max_delay_s: float = 1.5
    queue_size: int = 10
    max_retries: int = 5
    sf_kind: str = "MSF"
    flooding: str = "none"
    ap_mode: str = "strict"
    sf_max: float = 0.1
    sf_min: float = 0.05
    prehop_add_cells: int = 1
    pdr_link: float = 0.75
    rssi_dbm: float = -91.0
    budget_rule: str = "endtoend"
    # RPL
    rank_min: int = 256
    rank_step: int = 256
    pdr_estimate: float | None = None
    dio_period_slotframes: int = 4
    dio_jitter_slotframes: int = 1
    neighbor_timeout_slotframes: int = 300
    parent_set_cap: int = 8
    dio_slot_every: int = 4  # every n-th minimal cell favors a pending DIO over 6P
    # 6P / SF
    sixp_timeout_slotframes: int = 2
    sixp_backoff_exp: int = 5  # failed pairs wait uniform(1, 2**k) slotframes, k capped here
    bdpc_window: int = 100
    bdpc_min_verdicts: int = 10
    bdpc_cooldown_slotframes: int = 1
    bdpc_cooldown_verdicts: int = 100  # fresh verdicts required between actions on one child
    registry_window: int = 64
    # energy
    charges: ChargeTable = field(default_factory=ChargeTable)
    # test hooks: slots never handed out by 6P, and listen-only cells (node, slot)
    reserved_slots: tuple[int, ...] = ()
    listen_cells: tuple[tuple[int, int], ...] = ()
    traffic: bool = True
    traffic_stop_slotframes: int | None = None  # no new packets from this slotframe on (drain tail)

    @property
    def replication(self) -> bool:
        return self.flooding != "none"

    @property
    def slotframe_s(self) -> float:
        return self.slotframe_length * self.timeslot_ms / 1000.0

    @property
    def duration_slots(self) -> int:
        return self.duration_slotframes * self.slotframe_length

    @property
    def rank_pdr(self) -> float:
        return self.pdr_link if self.pdr_estimate is None else self.pdr_estimate

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def validate(self) -> "RunConfig":
        """Return ``self`` or raise :class:`ConfigError` naming the broken invariant."""
        if not self.sf_min < self.sf_max:
            raise ConfigError(f"sf_min < sf_max violated (sf_min={self.sf_min}, sf_max={self.sf_max})")
        if not 0 <= self.sf_min and self.sf_max <= 1:
            raise ConfigError("sf_min and sf_max must lie in [0, 1]")
        if not 0 < self.pdr_link <= 1:
            raise ConfigError(f"0 < pdr_link <= 1 violated (pdr_link={self.pdr_link})")
        if self.queue_size < 1:
            raise ConfigError(f"queue_size >= 1 violated (queue_size={self.queue_size})")
        if self.duration_slotframes < 1:
            raise ConfigError("duration_slotframes >= 1 violated")
        if self.slotframe_length < 2:
            raise ConfigError("slotframe_length >= 2 violated")
        if self.channels < 1:
            raise ConfigError("channels >= 1 violated")
        if self.timeslot_ms <= 0:
            raise ConfigError("timeslot_ms > 0 violated")
        if self.pk_period_s <= 0:
            raise ConfigError("pk_period_s > 0 violated")
        if not 0 <= self.pk_variance < 1:
            raise ConfigError("0 <= pk_variance < 1 violated")
        if self.max_retries < 0:
            raise ConfigError("max_retries >= 0 violated")
        if self.max_delay_s <= 0:
            raise ConfigError("max_delay_s > 0 violated")
        if self.warmup_slotframes < 0:
            raise ConfigError("warmup_slotframes >= 0 violated")
        if self.sf_kind not in SF_KINDS:
            raise ConfigError(f"sf_kind must be one of {SF_KINDS}, got {self.sf_kind!r}")
        if self.flooding not in FLOODING:
            raise ConfigError(f"flooding must be one of {FLOODING}, got {self.flooding!r}")
        if self.ap_mode not in AP_MODES:
            raise ConfigError(f"ap_mode must be one of {AP_MODES}, got {self.ap_mode!r}")
        if self.budget_rule not in BUDGET_RULES:
            raise ConfigError(f"budget_rule must be one of {BUDGET_RULES}, got {self.budget_rule!r}")
        if self.prehop_add_cells < 1:
            raise ConfigError("prehop_add_cells >= 1 violated")
        if self.dio_period_slotframes < 1 or not 0 <= self.dio_jitter_slotframes < self.dio_period_slotframes:
            raise ConfigError("dio period must be >= 1 and jitter in [0, period)")
        if self.dio_slot_every < 1:
            raise ConfigError("dio_slot_every >= 1 violated")
        if self.bdpc_window < 1 or not 1 <= self.bdpc_min_verdicts <= self.bdpc_window:
            raise ConfigError("1 <= bdpc_min_verdicts <= bdpc_window violated")
        if self.bdpc_cooldown_slotframes < 0 or self.bdpc_cooldown_verdicts < 0:
            raise ConfigError("bdpc cooldowns must be >= 0")
        if self.pdr_estimate is not None and not 0 < self.pdr_estimate <= 1:
            raise ConfigError("0 < pdr_estimate <= 1 violated")
        for s in self.reserved_slots + tuple(s for _, s in self.listen_cells):
            if not 0 < s < self.slotframe_length:
                raise ConfigError(f"reserved/listen slot {s} outside 1..slotframe_length-1")
        if self.traffic_stop_slotframes is not None and self.traffic_stop_slotframes < 0:
            raise ConfigError("traffic_stop_slotframes >= 0 violated")
        self.charges.validate()
        return self


# keys accepted from flat key/value sources (config files, environment)
SCALAR_KEYS = {
    f.name: f.type
    for f in fields(RunConfig)
    if f.name not in ("charges", "reserved_slots", "listen_cells")
}
CHARGE_KEYS = {f.name for f in fields(ChargeTable)}


def coerce(key: str, raw: str):
    """Parse a string value for ``key`` according to the RunConfig field type."""
    kind = SCALAR_KEYS.get(key)
    if kind is None and key not in CHARGE_KEYS and key != "traffic":
        raise ConfigError(f"unknown config key {key!r}")
    text = raw.strip()
    if key in CHARGE_KEYS:
        return float(text)
    if kind in ("bool",) or key == "traffic":
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    try:
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
        if kind == "int | None":
            return None if text.lower() in ("", "none") else int(text)
        if kind == "float | None":
            return None if text.lower() in ("", "none") else float(text)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {kind}") from None
    return text


def apply_overrides(cfg: RunConfig, values: dict[str, object]) -> RunConfig:
    charges = {k: v for k, v in values.items() if k in CHARGE_KEYS}
    plain = {k: v for k, v in values.items() if k not in CHARGE_KEYS}
    if charges:
        plain["charges"] = dataclasses.replace(cfg.charges, **charges)
    return cfg.replace(**plain)
