"""Synthetic probe-record generator with planted ground truth.

Generates per-sniffer detection records for a configurable event site:
pedestrians walking a path of nodes, always-on static devices, and
pass-through vehicles.  Every stochastic choice is driven by per-day
substreams of one root seed, so identical specs produce byte-identical
record tables.  The planted truth (device classes, walk itineraries, zone
layout, vendor shares, direction biases) comes back alongside the records
for validation.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from datetime import date

import numpy as np
import pandas as pd

from .core import (
    DEFAULT_PERIODS,
    DEFAULT_WINDOW,
    EventConfig,
    MacAddress,
    NodeSite,
    Poi,
    date_to_day,
    day_to_date,
)
from .errors import InvalidSpec

RECORD_SORT = ["day", "t_first", "mac", "t_last", "sniffer_id"]

# odd multiplier, so suffixes are a bijection of the counter modulo 2^24
_SUFFIX_MULT = 0x9E3779B1
_LOCAL_FIRST_OCTET = 0xD2  # locally administered, unicast
_OTHER_PREFIX = "00:f1:d0"  # stands in for vendors outside the planted mix


def _suffix24(counter: int) -> int:
    return (counter * _SUFFIX_MULT) & 0xFFFFFF


# --- spec ---------------------------------------------------------------------


@dataclass(frozen=True)
class NodeSpec:
    node_id: str
    lat: float
    lon: float
    zone: str                       # "I" or "II"
    sniffers: tuple[str, str]


@dataclass(frozen=True)
class PoiSpec:
    poi_id: str
    lat: float
    lon: float
    weight: float = 1.0


@dataclass(frozen=True)
class VendorSpec:
    vendor: str
    prefix: str                     # "aa:bb:cc", universally administered
    share: float


@dataclass(frozen=True)
class DayTemplate:
    name: str
    magnitude: float                # scales the pedestrian head count
    arrival_weights: tuple[float, ...]  # relative density over window slices


@dataclass(frozen=True)
class BehaviorMix:
    single: float = 0.30
    short: float = 0.35             # 2-3 nodes
    long: float = 0.25              # 4-6 nodes
    round_trip: float = 0.10        # out and back, first node == last

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.single, self.short, self.long, self.round_trip)


@dataclass(frozen=True)
class Dynamics:
    dwell_median_s: float = 600.0
    dwell_sigma_log: float = 0.5
    dwell_min_s: float = 120.0
    dwell_max_s: float = 3600.0
    travel_s: float = 90.0
    travel_jitter_s: float = 30.0
    dropout: float = 0.05           # per sniffer-record loss
    bleed: float = 0.05             # chance a neighbor node also hears a blip
    bleed_penalty_db: float = 15.0
    gap_prob: float = 0.10          # chance a dwell hides a silent gap
    gap_min_s: float = 330.0
    gap_max_s: float = 900.0
    rssi_low: float = -75.0
    rssi_high: float = -45.0
    rssi_noise: float = 3.0


@dataclass(frozen=True)
class Nuisance:
    static_devices: int = 5
    vehicles_per_day: int = 10


@dataclass
class SynthSpec:
    seed: int
    days: int
    start_date: date
    nodes: list[NodeSpec]
    pois: list[PoiSpec] = field(default_factory=list)
    vendor_mix: list[VendorSpec] = field(default_factory=list)
    day_templates: list[DayTemplate] = field(default_factory=list)
    day_assignment: list[str] = field(default_factory=list)
    per_day_base: int = 150
    global_share: float = 0.35
    behavior_mix: BehaviorMix = field(default_factory=BehaviorMix)
    dynamics: Dynamics = field(default_factory=Dynamics)
    nuisance: Nuisance = field(default_factory=Nuisance)
    window: tuple[int, int] = DEFAULT_WINDOW
    periods: list[tuple[int, int]] = field(default_factory=lambda: list(DEFAULT_PERIODS))
    interval_minutes: int = 15
    tz_offset_s: int = 0
    flow_bias: list[float] = field(default_factory=list)  # p(step forward) per period
    cross_zone_prob: float = 0.25
    node_weights: list[float] | None = None   # start-node draw, uniform when None

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.seed < 0:
            raise InvalidSpec("seed", "must be non-negative")
        if self.days < 1:
            raise InvalidSpec("days", "need at least one day")
        if len(self.nodes) < 2:
            raise InvalidSpec("nodes", "need at least two nodes on the path")
        ids = [n.node_id for n in self.nodes]
        if len(set(ids)) != len(ids):
            raise InvalidSpec("nodes", "duplicate node ids")
        sniffers = [s for n in self.nodes for s in n.sniffers]
        if len(set(sniffers)) != len(sniffers):
            raise InvalidSpec("nodes", "duplicate sniffer ids")
        for n in self.nodes:
            if n.zone not in ("I", "II"):
                raise InvalidSpec("nodes", f"{n.node_id}: zone must be 'I' or 'II'")
        if not 0.0 <= self.global_share <= 1.0:
            raise InvalidSpec("global_share", "must be in [0, 1]")
        if not 0.0 <= self.cross_zone_prob <= 1.0:
            raise InvalidSpec("cross_zone_prob", "must be in [0, 1]")
        total = sum(self.behavior_mix.as_tuple())
        if not math.isclose(total, 1.0, abs_tol=1e-9):
            raise InvalidSpec("behavior_mix", f"shares sum to {total}, expected 1")
        if any(s < 0 for s in self.behavior_mix.as_tuple()):
            raise InvalidSpec("behavior_mix", "shares must be non-negative")
        vendor_total = sum(v.share for v in self.vendor_mix)
        if vendor_total > 1.0 + 1e-9:
            raise InvalidSpec("vendor_mix", f"shares sum to {vendor_total} > 1")
        if any(v.share < 0 for v in self.vendor_mix):
            raise InvalidSpec("vendor_mix", "shares must be non-negative")
        seen_prefix = set()
        for v in self.vendor_mix:
            mac = MacAddress.parse(v.prefix + ":00:00:00")
            first_octet = mac.value >> 40
            if first_octet & 0x02:
                raise InvalidSpec("vendor_mix",
                                  f"{v.prefix}: locally administered bit is set")
            if first_octet & 0x01:
                raise InvalidSpec("vendor_mix", f"{v.prefix}: multicast bit is set")
            if v.prefix in seen_prefix or v.prefix == _OTHER_PREFIX:
                raise InvalidSpec("vendor_mix", f"{v.prefix}: duplicate prefix")
            seen_prefix.add(v.prefix)
        if not self.day_templates:
            raise InvalidSpec("day_templates", "need at least one template")
        names = [t.name for t in self.day_templates]
        if len(set(names)) != len(names):
            raise InvalidSpec("day_templates", "duplicate template names")
        for t in self.day_templates:
            if t.magnitude <= 0:
                raise InvalidSpec("day_templates", f"{t.name}: magnitude must be > 0")
            if not t.arrival_weights or any(w < 0 for w in t.arrival_weights) \
                    or sum(t.arrival_weights) == 0:
                raise InvalidSpec("day_templates",
                                  f"{t.name}: arrival weights must be non-negative "
                                  "and not all zero")
        if len(self.day_assignment) != self.days:
            raise InvalidSpec("day_assignment",
                              f"{len(self.day_assignment)} entries for {self.days} days")
        known = set(names)
        for name in self.day_assignment:
            if name not in known:
                raise InvalidSpec("day_assignment", f"unknown template {name!r}")
        win0, win1 = self.window
        if not 0 <= win0 < win1 <= 86400:
            raise InvalidSpec("window", "must satisfy 0 <= start < end <= 24:00")
        if (win1 - win0) % (self.interval_minutes * 60):
            raise InvalidSpec("interval_minutes", "window length must be a multiple")
        if self.periods[0][0] != win0 or self.periods[-1][1] != win1 \
                or any(a1 != b0 for (_a0, a1), (b0, _b1)
                       in zip(self.periods, self.periods[1:])):
            raise InvalidSpec("periods", "must tile the daily window")
        if self.flow_bias and len(self.flow_bias) != len(self.periods):
            raise InvalidSpec("flow_bias",
                              f"{len(self.flow_bias)} entries for "
                              f"{len(self.periods)} periods")
        if any(not 0.0 <= p <= 1.0 for p in self.flow_bias):
            raise InvalidSpec("flow_bias", "probabilities must be in [0, 1]")
        if self.node_weights is not None:
            if len(self.node_weights) != len(self.nodes):
                raise InvalidSpec("node_weights", "one weight per node required")
            if any(w < 0 for w in self.node_weights) or sum(self.node_weights) == 0:
                raise InvalidSpec("node_weights",
                                  "weights must be non-negative and not all zero")
        if self.per_day_base < 0 or self.nuisance.static_devices < 0 \
                or self.nuisance.vehicles_per_day < 0:
            raise InvalidSpec("counts", "head counts must be non-negative")
        d = self.dynamics
        if not (0 <= d.dropout <= 1 and 0 <= d.bleed <= 1 and 0 <= d.gap_prob <= 1):
            raise InvalidSpec("dynamics", "probabilities must be in [0, 1]")
        if d.gap_min_s < 300:
            raise InvalidSpec("dynamics",
                              "planted gaps under 300 s would merge back into stays")
        if not d.dwell_min_s <= d.dwell_median_s <= d.dwell_max_s:
            raise InvalidSpec("dynamics", "dwell bounds must bracket the median")

    def event_config(self) -> EventConfig:
        return EventConfig(
            nodes=[NodeSite(n.node_id, n.lat, n.lon, tuple(n.sniffers))
                   for n in self.nodes],
            pois=[Poi(p.poi_id, p.lat, p.lon) for p in self.pois],
            daily_window=self.window,
            interval_minutes=self.interval_minutes,
            tz_offset_s=self.tz_offset_s,
            zones={n.node_id: n.zone for n in self.nodes},
            ring_order=[n.node_id for n in self.nodes],
            periods=list(self.periods),
            oui_table={v.prefix: v.vendor for v in self.vendor_mix},
        )

    # -- JSON round trip ------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "days": self.days,
            "start_date": self.start_date.isoformat(),
            "nodes": [{"node_id": n.node_id, "lat": n.lat, "lon": n.lon,
                       "zone": n.zone, "sniffers": list(n.sniffers)}
                      for n in self.nodes],
            "pois": [{"poi_id": p.poi_id, "lat": p.lat, "lon": p.lon,
                      "weight": p.weight} for p in self.pois],
            "vendor_mix": [{"vendor": v.vendor, "prefix": v.prefix,
                            "share": v.share} for v in self.vendor_mix],
            "day_templates": [{"name": t.name, "magnitude": t.magnitude,
                               "arrival_weights": list(t.arrival_weights)}
                              for t in self.day_templates],
            "day_assignment": list(self.day_assignment),
            "per_day_base": self.per_day_base,
            "global_share": self.global_share,
            "behavior_mix": {"single": self.behavior_mix.single,
                             "short": self.behavior_mix.short,
                             "long": self.behavior_mix.long,
                             "round_trip": self.behavior_mix.round_trip},
            "dynamics": {k: getattr(self.dynamics, k)
                         for k in Dynamics.__dataclass_fields__},
            "nuisance": {"static_devices": self.nuisance.static_devices,
                         "vehicles_per_day": self.nuisance.vehicles_per_day},
            "window": list(self.window),
            "periods": [list(p) for p in self.periods],
            "interval_minutes": self.interval_minutes,
            "tz_offset_s": self.tz_offset_s,
            "flow_bias": list(self.flow_bias),
            "cross_zone_prob": self.cross_zone_prob,
            "node_weights": (list(self.node_weights)
                             if self.node_weights is not None else None),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SynthSpec":
        return cls(
            seed=data["seed"],
            days=data["days"],
            start_date=date.fromisoformat(data["start_date"]),
            nodes=[NodeSpec(d["node_id"], d["lat"], d["lon"], d["zone"],
                            tuple(d["sniffers"])) for d in data["nodes"]],
            pois=[PoiSpec(d["poi_id"], d["lat"], d["lon"], d.get("weight", 1.0))
                  for d in data.get("pois", [])],
            vendor_mix=[VendorSpec(d["vendor"], d["prefix"], d["share"])
                        for d in data.get("vendor_mix", [])],
            day_templates=[DayTemplate(d["name"], d["magnitude"],
                                       tuple(d["arrival_weights"]))
                           for d in data["day_templates"]],
            day_assignment=list(data["day_assignment"]),
            per_day_base=data.get("per_day_base", 150),
            global_share=data.get("global_share", 0.35),
            behavior_mix=BehaviorMix(**data.get("behavior_mix", {})),
            dynamics=Dynamics(**data.get("dynamics", {})),
            nuisance=Nuisance(**data.get("nuisance", {})),
            window=tuple(data.get("window", DEFAULT_WINDOW)),
            periods=[tuple(p) for p in data.get("periods", DEFAULT_PERIODS)],
            interval_minutes=data.get("interval_minutes", 15),
            tz_offset_s=data.get("tz_offset_s", 0),
            flow_bias=list(data.get("flow_bias", [])),
            cross_zone_prob=data.get("cross_zone_prob", 0.25),
            node_weights=data.get("node_weights"),
        )

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "SynthSpec":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


# --- ground truth ---------------------------------------------------------------


@dataclass
class PlantedVisit:
    node: str
    t_arrive: int
    t_depart: int
    gap_s: int = 0      # silent stretch hidden inside the stay, 0 if none


@dataclass
class PlantedTrajectory:
    mac: int
    day: int            # event-local day index
    kind: str           # single / short / long / round
    is_global: bool
    visits: list[PlantedVisit]

    @property
    def nodes(self) -> list[str]:
        return [v.node for v in self.visits]


@dataclass
class GroundTruth:
    seed: int
    start_day: int                      # epoch day of day index 0
    days: int
    day_kinds: list[str]                # template name per day index
    zones: dict[str, str]
    path_order: list[str]
    periods: list[tuple[int, int]]
    flow_bias: list[float]
    cross_zone_prob: float
    vendor_shares: dict[str, float]     # planted, "other" holds the remainder
    static_macs: dict[int, str]         # mac -> home node
    vehicle_macs: list[tuple[int, int]]  # (mac, day index)
    pedestrians: list[PlantedTrajectory]

    def pedestrians_on(self, day: int, global_only: bool = False
                       ) -> list[PlantedTrajectory]:
        return [p for p in self.pedestrians
                if p.day == day and (p.is_global or not global_only)]

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "start_day": self.start_day,
            "days": self.days,
            "day_kinds": list(self.day_kinds),
            "zones": dict(self.zones),
            "path_order": list(self.path_order),
            "periods": [list(p) for p in self.periods],
            "flow_bias": list(self.flow_bias),
            "cross_zone_prob": self.cross_zone_prob,
            "vendor_shares": dict(self.vendor_shares),
            "static_macs": {MacAddress(m).text: node
                            for m, node in self.static_macs.items()},
            "vehicle_macs": [[MacAddress(m).text, day]
                             for m, day in self.vehicle_macs],
            "pedestrians": [
                {
                    "mac": MacAddress(p.mac).text,
                    "day": p.day,
                    "kind": p.kind,
                    "is_global": p.is_global,
                    "visits": [{"node": v.node, "t_arrive": v.t_arrive,
                                "t_depart": v.t_depart, "gap_s": v.gap_s}
                               for v in p.visits],
                }
                for p in self.pedestrians
            ],
        }

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_dict(cls, data: dict) -> "GroundTruth":
        return cls(
            seed=data["seed"],
            start_day=data["start_day"],
            days=data["days"],
            day_kinds=list(data["day_kinds"]),
            zones=dict(data["zones"]),
            path_order=list(data["path_order"]),
            periods=[tuple(p) for p in data["periods"]],
            flow_bias=list(data["flow_bias"]),
            cross_zone_prob=data["cross_zone_prob"],
            vendor_shares=dict(data["vendor_shares"]),
            static_macs={MacAddress.parse(m).value: node
                         for m, node in data["static_macs"].items()},
            vehicle_macs=[(MacAddress.parse(m).value, day)
                          for m, day in data["vehicle_macs"]],
            pedestrians=[
                PlantedTrajectory(
                    mac=MacAddress.parse(d["mac"]).value,
                    day=d["day"],
                    kind=d["kind"],
                    is_global=d["is_global"],
                    visits=[PlantedVisit(v["node"], v["t_arrive"],
                                         v["t_depart"], v["gap_s"])
                            for v in d["visits"]],
                )
                for d in data["pedestrians"]
            ],
        )

    @classmethod
    def load(cls, path) -> "GroundTruth":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


# --- generation -------------------------------------------------------------------


class _MacMint:
    """Deterministic MAC allocator: one counter per universally administered
    prefix, one per day for locally administered addresses."""

    def __init__(self, vendor_mix: list[VendorSpec]):
        self.prefixes = [MacAddress.parse(v.prefix + ":00:00:00").value >> 24
                         for v in vendor_mix]
        self.shares = np.array([v.share for v in vendor_mix], dtype=np.float64)
        self.other_prefix = MacAddress.parse(_OTHER_PREFIX + ":00:00:00").value >> 24
        self.counters: dict[int, int] = {}

    def global_mac(self, rng: np.random.Generator) -> int:
        u = rng.random()
        acc = 0.0
        prefix = self.other_prefix
        for p, share in zip(self.prefixes, self.shares):
            acc += share
            if u < acc:
                prefix = p
                break
        c = self.counters.get(prefix, 0)
        self.counters[prefix] = c + 1
        return (prefix << 24) | _suffix24(c)

    def local_mac(self, day: int) -> int:
        key = -(day + 1)  # negative keys so day streams never hit a prefix
        c = self.counters.get(key, 0)
        self.counters[key] = c + 1
        return (_LOCAL_FIRST_OCTET << 40) | ((day & 0xFFFF) << 24) | _suffix24(c)


def _sample_dwell(rng: np.random.Generator, dyn: Dynamics) -> int:
    raw = rng.lognormal(math.log(dyn.dwell_median_s), dyn.dwell_sigma_log)
    return int(min(max(raw, dyn.dwell_min_s), dyn.dwell_max_s))


def _period_index(sod: int, periods: list[tuple[int, int]]) -> int:
    for i, (p0, p1) in enumerate(periods):
        if p0 <= sod < p1:
            return i
    return 0 if sod < periods[0][0] else len(periods) - 1


def _visit_lengths(rng: np.random.Generator, kind: str) -> int:
    if kind == "single":
        return 1
    if kind == "short":
        return int(rng.integers(2, 4))
    if kind == "long":
        return int(rng.integers(4, 7))
    out = int(rng.integers(2, 4))  # round: out k steps, back the same way
    return out


_BEHAVIOR_KINDS = ("single", "short", "long", "round")


def generate(spec: SynthSpec) -> tuple[pd.DataFrame, GroundTruth]:
    """Build the per-sniffer record table and its planted truth."""
    dyn = spec.dynamics
    win0, win1 = spec.window
    start_day = date_to_day(spec.start_date)
    tz = spec.tz_offset_s
    node_order = [n.node_id for n in spec.nodes]
    sniffer_pairs = {n.node_id: tuple(n.sniffers) for n in spec.nodes}
    templates = {t.name: t for t in spec.day_templates}
    mint = _MacMint(spec.vendor_mix)
    behavior_p = np.array(spec.behavior_mix.as_tuple(), dtype=np.float64)

    if spec.node_weights is not None:
        start_p = np.array(spec.node_weights, dtype=np.float64)
    else:
        start_p = np.ones(len(spec.nodes), dtype=np.float64)
    start_p = start_p / start_p.sum()

    planted_other = 1.0 - sum(v.share for v in spec.vendor_mix)
    vendor_shares = {v.vendor: v.share for v in spec.vendor_mix}
    vendor_shares["other"] = planted_other

    rng_static = np.random.default_rng([spec.seed, 0xA110C])
    static_macs: dict[int, str] = {}
    for _ in range(spec.nuisance.static_devices):
        mac = mint.global_mac(rng_static)
        home = node_order[int(rng_static.integers(0, len(node_order)))]
        static_macs[mac] = home

    rows_mac: list[int] = []
    rows_t0: list[int] = []
    rows_t1: list[int] = []
    rows_rssi: list[float] = []
    rows_sniffer: list[str] = []

    def emit(mac: int, t0: int, t1: int, rssi: float, sniffer: str) -> None:
        rows_mac.append(mac)
        rows_t0.append(t0)
        rows_t1.append(t1)
        rows_rssi.append(round(rssi, 1))
        rows_sniffer.append(sniffer)

    def emit_visit(rng, mac: int, node: str, t_arr: int, t_dep: int,
                   base_rssi: float, neighbor: str | None) -> int:
        """Records for one stay; returns the silent gap planted inside it."""
        gap = 0
        bursts = [(t_arr, t_dep)]
        span = t_dep - t_arr
        if rng.random() < dyn.gap_prob:
            g = int(rng.uniform(dyn.gap_min_s, dyn.gap_max_s))
            if span >= g + 240:  # leave both bursts at least 2 minutes
                lead_max = span - g - 120
                lead = int(rng.uniform(120, lead_max)) if lead_max > 120 else 120
                bursts = [(t_arr, t_arr + lead), (t_arr + lead + g, t_dep)]
                gap = g
        for b0, b1 in bursts:
            for sniffer in sniffer_pairs[node]:
                if rng.random() < dyn.dropout:
                    continue
                j0 = int(rng.uniform(0, min(20, (b1 - b0) / 4)))
                j1 = int(rng.uniform(0, min(20, (b1 - b0) / 4)))
                noise = rng.normal(0.0, dyn.rssi_noise)
                emit(mac, b0 + j0, b1 - j1, base_rssi + noise, sniffer)
        if neighbor is not None and rng.random() < dyn.bleed:
            b0, b1 = bursts[0]
            if b1 - b0 > 2:
                t = int(rng.integers(b0 + 1, b1))
                noise = rng.normal(0.0, dyn.rssi_noise)
                emit(mac, t, t, base_rssi - dyn.bleed_penalty_db + noise,
                     sniffer_pairs[neighbor][0])
        return gap

    pedestrians: list[PlantedTrajectory] = []
    vehicle_macs: list[tuple[int, int]] = []
    node_idx = {nid: i for i, nid in enumerate(node_order)}

    for day in range(spec.days):
        rng = np.random.default_rng([spec.seed, 1000 + day])
        day_utc0 = (start_day + day) * 86400 - tz
        template = templates[spec.day_assignment[day]]

        # static devices: long overlapping chunks from both sniffers, all day
        for mac, home in static_macs.items():
            chunk = (win1 - win0) // 4
            for c in range(4):
                c0 = day_utc0 + win0 + c * chunk
                c1 = c0 + chunk - int(rng.uniform(20, 60))
                for sniffer in sniffer_pairs[home]:
                    if rng.random() < dyn.dropout:
                        continue
                    noise = rng.normal(0.0, dyn.rssi_noise)
                    emit(mac, c0, c1, -55.0 + noise, sniffer)

        # vehicles: instant blips along a straight run, zero dwell
        for _ in range(spec.nuisance.vehicles_per_day):
            mac = mint.global_mac(rng)
            vehicle_macs.append((mac, day))
            n_hits = int(rng.integers(3, 6))
            direction = 1 if rng.random() < 0.5 else -1
            cur = int(rng.integers(0, len(node_order)))
            t = day_utc0 + int(rng.uniform(win0, win1 - 600))
            base = rng.uniform(-85.0, -70.0)
            for _hit in range(n_hits):
                for sniffer in sniffer_pairs[node_order[cur]]:
                    if rng.random() < 0.2:
                        continue
                    emit(mac, t, t, base + rng.normal(0.0, dyn.rssi_noise), sniffer)
                nxt = cur + direction
                if nxt < 0 or nxt >= len(node_order):
                    direction = -direction
                    nxt = cur + direction
                cur = nxt
                t += int(rng.uniform(30, 90))

        # pedestrians: direction is decided at each departure so the planted
        # per-period bias lines up with how departures are binned downstream
        n_ped = int(round(spec.per_day_base * template.magnitude))
        weights = np.asarray(template.arrival_weights, dtype=np.float64)
        weights = weights / weights.sum()
        slice_len = (win1 - win0) / len(weights)
        bias = spec.flow_bias or [0.5] * len(spec.periods)
        last = len(node_order) - 1
        zone_of = [n.zone for n in spec.nodes]
        for _ in range(n_ped):
            kind = _BEHAVIOR_KINDS[int(rng.choice(4, p=behavior_p))]
            is_global = rng.random() < spec.global_share
            mac = mint.global_mac(rng) if is_global else mint.local_mac(day)
            base_rssi = rng.uniform(dyn.rssi_low, dyn.rssi_high)

            seg = int(rng.choice(len(weights), p=weights))
            sod = win0 + int((seg + rng.random()) * slice_len)
            cur = int(rng.choice(len(node_order), p=start_p))
            target = _visit_lengths(rng, kind)  # outbound nodes for round trips

            t = day_utc0 + sod
            visits: list[PlantedVisit] = []
            plan_return: list[int] = []
            outbound_left = target
            retraced = False
            while t - day_utc0 < win1:
                dwell = _sample_dwell(rng, dyn)
                node = node_order[cur]
                nb_idx = cur + 1 if (rng.random() < 0.5 and cur < last) or cur == 0 \
                    else cur - 1
                gap = emit_visit(rng, mac, node, t, t + dwell, base_rssi,
                                 node_order[nb_idx])
                visits.append(PlantedVisit(node, t, t + dwell, gap))
                t_dep = t + dwell

                if plan_return:
                    nxt = plan_return.pop(0)
                else:
                    outbound_left -= 1
                    if outbound_left <= 0:
                        if kind == "round" and len(visits) >= 2 and not retraced:
                            retraced = True
                            plan_return = [node_idx[v.node]
                                           for v in visits[-2::-1]]
                            nxt = plan_return.pop(0)
                        else:
                            break
                    else:
                        p_fwd = bias[_period_index(t_dep - day_utc0, spec.periods)]
                        step = 1 if rng.random() < p_fwd else -1
                        nxt = cur + step
                        if nxt < 0 or nxt > last:
                            nxt = cur - step
                        if zone_of[nxt] != zone_of[cur] \
                                and rng.random() >= spec.cross_zone_prob:
                            nxt = cur - step
                            if nxt < 0 or nxt > last \
                                    or zone_of[nxt] != zone_of[cur]:
                                break  # cornered against the boundary
                t = t_dep + int(dyn.travel_s + rng.uniform(-dyn.travel_jitter_s,
                                                           dyn.travel_jitter_s))
                cur = nxt
            if visits:
                pedestrians.append(PlantedTrajectory(mac, day, kind,
                                                     is_global, visits))

    frame = pd.DataFrame(
        {
            "mac": np.array(rows_mac, dtype=np.uint64),
            "t_first": np.array(rows_t0, dtype=np.int64),
            "t_last": np.array(rows_t1, dtype=np.int64),
            "rssi": np.array(rows_rssi, dtype=np.float64),
            "sniffer_id": rows_sniffer,
        }
    )
    frame["day"] = (frame["t_first"].to_numpy(np.int64) + tz) // 86400 - start_day
    frame = frame.sort_values(RECORD_SORT, kind="mergesort",
                              ignore_index=True).drop(columns=["day"])

    truth = GroundTruth(
        seed=spec.seed,
        start_day=start_day,
        days=spec.days,
        day_kinds=list(spec.day_assignment),
        zones={n.node_id: n.zone for n in spec.nodes},
        path_order=node_order,
        periods=list(spec.periods),
        flow_bias=list(spec.flow_bias or [0.5] * len(spec.periods)),
        cross_zone_prob=spec.cross_zone_prob,
        vendor_shares=vendor_shares,
        static_macs=static_macs,
        vehicle_macs=vehicle_macs,
        pedestrians=pedestrians,
    )
    return frame, truth


# --- demo spec ---------------------------------------------------------------------


def demo_spec(seed: int = 7, days: int = 28, per_day_base: int = 160) -> SynthSpec:
    """A small two-zone riverside walk: eight nodes in a line, three draws,
    four weeks with quieter weekdays and busier weekends."""
    lat0, lon0 = 43.0731, -89.4012
    nodes = []
    for i in range(8):
        nid = f"n{i + 1}"
        nodes.append(NodeSpec(
            node_id=nid,
            lat=lat0 + 0.00045 * i,
            lon=lon0 + 0.00020 * i,
            zone="I" if i < 4 else "II",
            sniffers=(f"{nid}a", f"{nid}b"),
        ))
    pois = [
        PoiSpec("stage", lat0 + 0.00045 * 1, lon0 + 0.00020 * 1, 1.5),
        PoiSpec("food-row", lat0 + 0.00045 * 4, lon0 + 0.00020 * 4, 1.0),
        PoiSpec("pier", lat0 + 0.00045 * 7, lon0 + 0.00020 * 7, 0.8),
    ]
    vendors = [
        VendorSpec("asterfone", "a4:5e:60", 0.45),
        VendorSpec("bellmark", "34:ab:37", 0.30),
        VendorSpec("cordia", "f8:95:c7", 0.15),
    ]
    templates = [
        DayTemplate("weekday", 0.8, (1.0, 1.2, 1.0, 0.6)),
        DayTemplate("weekend", 1.3, (0.7, 1.0, 1.3, 1.1)),
    ]
    # start on a Friday-like rhythm: 5 quiet days then 2 busy ones
    assignment = (["weekday"] * 5 + ["weekend"] * 2) * (days // 7) \
        + ["weekday"] * (days % 7)
    return SynthSpec(
        seed=seed,
        days=days,
        start_date=date(2024, 6, 7),
        nodes=nodes,
        pois=pois,
        vendor_mix=vendors,
        day_templates=templates,
        day_assignment=assignment,
        per_day_base=per_day_base,
        global_share=0.35,
        flow_bias=[0.5, 0.62, 0.45, 0.5],
        cross_zone_prob=0.25,
        node_weights=[1.6, 1.9, 1.3, 1.0, 1.2, 0.9, 0.8, 1.1],
    )
