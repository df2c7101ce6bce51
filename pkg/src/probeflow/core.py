"""Domain types shared by every pipeline stage.

Timestamps are integer seconds since the Unix epoch (UTC).  Calendar
bucketing uses a fixed per-event UTC offset carried in EventConfig, so a
"day" is always the event-local date on which a detection started.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from datetime import date
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import ConfigError

DAY_S = 86400
_EPOCH_ORDINAL = date(1970, 1, 1).toordinal()

# Second-least-significant bit of the first octet: set means the address is
# locally administered (randomized), clear means a vendor-assigned global MAC.
LOCAL_ADMIN_BIT = 0x02

# Plausible received-power range in dBm; values outside are kept but counted.
RSSI_PLAUSIBLE = (-100.0, 0.0)


class MacKind(Enum):
    GLOBAL = "global"
    LOCAL = "local"


@dataclass(frozen=True, slots=True)
class MacAddress:
    """48-bit hardware address stored as an int for cheap comparisons."""

    value: int

    def __post_init__(self):
        if not 0 <= self.value < 1 << 48:
            raise ValueError(f"MAC value out of 48-bit range: {self.value}")

    @classmethod
    def parse(cls, text: str) -> "MacAddress":
        parts = text.strip().replace("-", ":").split(":")
        if len(parts) != 6 or not all(len(p) == 2 for p in parts):
            raise ValueError(f"not a MAC address: {text!r}")
        try:
            octets = bytes(int(p, 16) for p in parts)
        except ValueError:
            raise ValueError(f"not a MAC address: {text!r}") from None
        return cls.from_octets(octets)

    @classmethod
    def from_octets(cls, octets) -> "MacAddress":
        b = bytes(octets)
        if len(b) != 6:
            raise ValueError(f"need 6 octets, got {len(b)}")
        return cls(int.from_bytes(b, "big"))

    @property
    def octets(self) -> bytes:
        return self.value.to_bytes(6, "big")

    @property
    def text(self) -> str:
        return ":".join(f"{b:02x}" for b in self.octets)

    def is_local(self) -> bool:
        return bool((self.value >> 40) & LOCAL_ADMIN_BIT)

    def oui_prefix(self) -> str:
        """First three octets in canonical text form, e.g. '00:16:3e'."""
        return ":".join(f"{b:02x}" for b in self.octets[:3])

    def __str__(self) -> str:
        return self.text


def classify_mac(mac: MacAddress) -> MacKind:
    """Split on the locally-administered bit of the first octet."""
    return MacKind.LOCAL if mac.is_local() else MacKind.GLOBAL


@dataclass(frozen=True, slots=True)
class ProbeRecord:
    """One merged detection of a device by a single source.

    `source` is a sniffer id on ingest and a node id after per-node
    aggregation.
    """

    mac: MacAddress
    t_first: int
    t_last: int
    rssi: float
    source: str

    def __post_init__(self):
        if self.t_first > self.t_last:
            raise ValueError(f"t_first {self.t_first} > t_last {self.t_last}")
        if not math.isfinite(self.rssi):
            raise ValueError(f"rssi not finite: {self.rssi}")

    @property
    def span_s(self) -> int:
        return self.t_last - self.t_first

    def rssi_plausible(self) -> bool:
        lo, hi = RSSI_PLAUSIBLE
        return lo <= self.rssi <= hi


@dataclass(frozen=True, slots=True)
class NodeVisit:
    """One stay at a node: staying_s covers observed presence plus short
    detection gaps, missing_s covers long gaps inside the same stay."""

    node: str
    t_start: int
    t_end: int
    staying_s: int
    missing_s: int
    rssi: float

    def __post_init__(self):
        if self.t_start > self.t_end:
            raise ValueError(f"t_start {self.t_start} > t_end {self.t_end}")
        if self.staying_s < 0 or self.missing_s < 0:
            raise ValueError("negative staying or missing time")
        if self.staying_s + self.missing_s != self.t_end - self.t_start:
            raise ValueError("staying + missing must equal the visit span")

    @property
    def span_s(self) -> int:
        return self.t_end - self.t_start


@dataclass(frozen=True)
class Trajectory:
    """Ordered node visits of one MAC on one event-local day."""

    mac: MacAddress
    day: date
    visits: tuple[NodeVisit, ...]

    @property
    def length(self) -> int:
        return len(self.visits)

    @property
    def nodes(self) -> tuple[str, ...]:
        return tuple(v.node for v in self.visits)

    def is_round_trip(self) -> bool:
        return self.length >= 3 and self.visits[0].node == self.visits[-1].node

    @property
    def total_staying_s(self) -> int:
        return sum(v.staying_s for v in self.visits)

    @property
    def total_missing_s(self) -> int:
        return sum(v.missing_s for v in self.visits)

    @property
    def duration_s(self) -> int:
        if not self.visits:
            return 0
        return self.visits[-1].t_end - self.visits[0].t_start

    def validate(self) -> None:
        """Invariants that must hold once conflicts are resolved."""
        for a, b in zip(self.visits, self.visits[1:]):
            if b.t_start < a.t_start:
                raise ValueError("visits not sorted by t_start")
            if b.t_start < a.t_end:
                raise ValueError(f"visits overlap: {a} / {b}")
            if a.node == b.node:
                raise ValueError(f"consecutive visits share node {a.node}")


@dataclass
class ClusterAssignment:
    """Flat clustering over an indexed point set."""

    labels: np.ndarray
    k: int
    centroids: np.ndarray | None = None
    quality: float | None = None

    def validate(self) -> None:
        used = np.unique(self.labels)
        if used.size != self.k or used.min() < 0 or used.max() >= self.k:
            raise ValueError(f"labels must use exactly k={self.k} ids, saw {used}")


# --- clock and calendar helpers -------------------------------------------


def parse_clock(text: str) -> int:
    """'HH:MM' to seconds of day; '24:00' names the end of the day."""
    try:
        hh, mm = text.split(":")
        sod = int(hh) * 3600 + int(mm) * 60
    except ValueError:
        raise ValueError(f"not a clock time: {text!r}") from None
    if not 0 <= sod <= DAY_S or int(mm) >= 60:
        raise ValueError(f"clock time out of range: {text!r}")
    return sod


def format_clock(sod: int) -> str:
    return f"{sod // 3600:02d}:{sod % 3600 // 60:02d}"


def local_day_index(t: int, tz_offset_s: int) -> int:
    """Event-local days since the epoch for a UTC timestamp."""
    return (t + tz_offset_s) // DAY_S


def day_to_date(day_index: int) -> date:
    return date.fromordinal(_EPOCH_ORDINAL + day_index)


def date_to_day(d: date) -> int:
    return d.toordinal() - _EPOCH_ORDINAL


def haversine_m(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    """Great-circle distance in meters on a 6371 km sphere."""
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dp = p2 - p1
    dl = math.radians(lon2 - lon1)
    a = math.sin(dp / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2) ** 2
    return 2 * 6371000.0 * math.asin(math.sqrt(a))


# --- event configuration ---------------------------------------------------


@dataclass(frozen=True, slots=True)
class NodeSite:
    node_id: str
    lat: float
    lon: float
    sniffers: tuple[str, ...]


@dataclass(frozen=True, slots=True)
class Poi:
    name: str
    lat: float
    lon: float


# Default reporting periods for the standard evening window.
DEFAULT_WINDOW = (parse_clock("19:00"), parse_clock("24:00"))
DEFAULT_PERIODS = (
    (parse_clock("19:00"), parse_clock("20:00")),
    (parse_clock("20:00"), parse_clock("21:00")),
    (parse_clock("21:00"), parse_clock("22:00")),
    (parse_clock("22:00"), parse_clock("24:00")),
)


@dataclass
class EventConfig:
    """Static description of one sensing deployment."""

    nodes: list[NodeSite]
    pois: list[Poi] = field(default_factory=list)
    daily_window: tuple[int, int] = DEFAULT_WINDOW
    interval_minutes: int = 15
    tz_offset_s: int = 0
    zones: dict[str, str] | None = None
    ring_order: list[str] | None = None
    periods: list[tuple[int, int]] | None = None
    oui_table: dict[str, str] | None = None

    def __post_init__(self):
        self._validate()

    def _validate(self) -> None:
        if not self.nodes:
            raise ConfigError("at least one node is required")
        ids = [n.node_id for n in self.nodes]
        if len(set(ids)) != len(ids):
            raise ConfigError("node ids must be unique")
        sniffers = [s for n in self.nodes for s in n.sniffers]
        if len(set(sniffers)) != len(sniffers):
            raise ConfigError("sniffer ids must be unique across nodes")
        if set(sniffers) & set(ids):
            raise ConfigError("sniffer ids must not collide with node ids")
        start, end = self.daily_window
        if not (0 <= start < end <= DAY_S):
            raise ConfigError(f"bad daily window: {self.daily_window}")
        if self.interval_minutes <= 0:
            raise ConfigError("interval_minutes must be positive")
        if (end - start) % (self.interval_minutes * 60) != 0:
            raise ConfigError("interval length must divide the daily window")
        if self.zones is not None:
            if set(self.zones) != set(ids):
                raise ConfigError("zones must cover exactly the configured nodes")
            if not set(self.zones.values()) <= {"I", "II"}:
                raise ConfigError("zone labels must be 'I' or 'II'")
        if self.ring_order is not None and sorted(self.ring_order) != sorted(ids):
            raise ConfigError("ring_order must be a permutation of node ids")
        if self.periods is not None:
            self._validate_periods(self.periods)
        if self.oui_table is not None:
            for prefix in self.oui_table:
                if len(prefix.split(":")) != 3:
                    raise ConfigError(f"bad OUI prefix: {prefix!r}")

    def _validate_periods(self, periods: list[tuple[int, int]]) -> None:
        start, end = self.daily_window
        if not periods:
            raise ConfigError("periods must be non-empty")
        prev = start
        for a, b in periods:
            if a != prev or b <= a:
                raise ConfigError("periods must tile the daily window in order")
            prev = b
        if prev != end:
            raise ConfigError("periods must end exactly at the window end")

    @property
    def node_ids(self) -> list[str]:
        return [n.node_id for n in self.nodes]

    @property
    def sniffer_to_node(self) -> dict[str, str]:
        """Source lookup; node ids map to themselves so aggregated records
        stay valid input."""
        out = {n.node_id: n.node_id for n in self.nodes}
        for n in self.nodes:
            for s in n.sniffers:
                out[s] = n.node_id
        return out

    @property
    def n_intervals(self) -> int:
        start, end = self.daily_window
        return (end - start) // (self.interval_minutes * 60)

    def effective_ring_order(self) -> list[str]:
        return list(self.ring_order) if self.ring_order else self.node_ids

    def effective_periods(self) -> list[tuple[int, int]]:
        if self.periods is not None:
            return list(self.periods)
        if tuple(self.daily_window) == DEFAULT_WINDOW:
            return [tuple(p) for p in DEFAULT_PERIODS]
        return [tuple(self.daily_window)]

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        out: dict = {
            "timezone_offset_s": self.tz_offset_s,
            "daily_window": [format_clock(self.daily_window[0]),
                             format_clock(self.daily_window[1])],
            "interval_minutes": self.interval_minutes,
            "nodes": [
                {"id": n.node_id, "lat": n.lat, "lon": n.lon,
                 "sniffers": list(n.sniffers)}
                for n in self.nodes
            ],
            "pois": [{"name": p.name, "lat": p.lat, "lon": p.lon}
                     for p in self.pois],
        }
        if self.zones is not None:
            out["zones"] = dict(sorted(self.zones.items()))
        if self.ring_order is not None:
            out["ring_order"] = list(self.ring_order)
        if self.periods is not None:
            out["periods"] = [[format_clock(a), format_clock(b)]
                              for a, b in self.periods]
        if self.oui_table is not None:
            out["oui_table"] = dict(sorted(self.oui_table.items()))
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "EventConfig":
        try:
            nodes = [NodeSite(n["id"], float(n["lat"]), float(n["lon"]),
                              tuple(n["sniffers"])) for n in d["nodes"]]
            pois = [Poi(p["name"], float(p["lat"]), float(p["lon"]))
                    for p in d.get("pois", [])]
            window = d.get("daily_window")
            window = (tuple(parse_clock(w) for w in window)
                      if window else DEFAULT_WINDOW)
            periods = d.get("periods")
            if periods is not None:
                periods = [(parse_clock(a), parse_clock(b)) for a, b in periods]
        except KeyError as exc:
            raise ConfigError(f"bad event config: missing field {exc}") from exc
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad event config: {exc}") from exc
        return cls(
            nodes=nodes,
            pois=pois,
            daily_window=window,
            interval_minutes=int(d.get("interval_minutes", 15)),
            tz_offset_s=int(d.get("timezone_offset_s", 0)),
            zones=d.get("zones"),
            ring_order=d.get("ring_order"),
            periods=periods,
            oui_table=d.get("oui_table"),
        )

    @classmethod
    def load(cls, path: str | Path) -> "EventConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
