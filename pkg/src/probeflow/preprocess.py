"""Ingest preprocessing: merged sniffer records to per-day node trajectories.

The chain is: per-node aggregation of the two sniffer feeds, removal of
devices seen too often to be event visitors, global/local split on the MAC
administration bit, visit extraction with a short-gap fold rule, temporal
conflict resolution, and removal of devices that never stayed anywhere.

Record batches move through as DataFrames (columns documented next to the
constants below); every public step also accepts and returns plain
ProbeRecord / Trajectory values for small-scale use.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .core import (
    DAY_S,
    LOCAL_ADMIN_BIT,
    EventConfig,
    MacAddress,
    NodeVisit,
    ProbeRecord,
    Trajectory,
    date_to_day,
    day_to_date,
)
from .errors import UnknownSniffer

log = logging.getLogger(__name__)

# Same-node detections closer than this merge into one visit; longer holes
# stay inside the visit but count as missing time.
COMBINE_GAP_S = 300

# Devices averaging more than this many visiting days per week are treated
# as resident equipment, not visitors.
FREQUENT_VISITS_PER_WEEK = 4.0

RECORD_COLUMNS = ["mac", "t_first", "t_last", "rssi", "source"]
AGG_COLUMNS = ["mac", "node", "t_first", "t_last", "rssi"]
VISIT_COLUMNS = [
    "mac", "day", "node", "t_start", "t_end", "staying_s", "missing_s", "rssi",
]


# --- frame <-> value conversions -------------------------------------------


def records_to_frame(records) -> pd.DataFrame:
    """Pack ProbeRecord values into the standard record frame."""
    rows = list(records)
    return pd.DataFrame(
        {
            "mac": np.array([r.mac.value for r in rows], dtype=np.uint64),
            "t_first": np.array([r.t_first for r in rows], dtype=np.int64),
            "t_last": np.array([r.t_last for r in rows], dtype=np.int64),
            "rssi": np.array([r.rssi for r in rows], dtype=np.float64),
            "source": np.array([r.source for r in rows], dtype=object),
        }
    )


def frame_to_records(frame: pd.DataFrame, source_col: str = "source") -> list[ProbeRecord]:
    return [
        ProbeRecord(
            mac=MacAddress(int(mac)),
            t_first=int(t0),
            t_last=int(t1),
            rssi=float(rssi),
            source=str(src),
        )
        for mac, t0, t1, rssi, src in zip(
            frame["mac"], frame["t_first"], frame["t_last"],
            frame["rssi"], frame[source_col],
        )
    ]


def _empty_agg_frame() -> pd.DataFrame:
    return pd.DataFrame(
        {
            "mac": np.array([], dtype=np.uint64),
            "node": np.array([], dtype=object),
            "t_first": np.array([], dtype=np.int64),
            "t_last": np.array([], dtype=np.int64),
            "rssi": np.array([], dtype=np.float64),
        }
    )


def _empty_visits_frame() -> pd.DataFrame:
    return pd.DataFrame(
        {
            "mac": np.array([], dtype=np.uint64),
            "day": np.array([], dtype=np.int64),
            "node": np.array([], dtype=object),
            "t_start": np.array([], dtype=np.int64),
            "t_end": np.array([], dtype=np.int64),
            "staying_s": np.array([], dtype=np.int64),
            "missing_s": np.array([], dtype=np.int64),
            "rssi": np.array([], dtype=np.float64),
        }
    )


def _run_starts(change: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Start index and length of each run marked by a change flag array."""
    starts = np.flatnonzero(change)
    counts = np.diff(np.append(starts, change.size))
    return starts, counts


def _grouped_running_max(values: np.ndarray, group_ids: np.ndarray) -> np.ndarray:
    return (
        pd.Series(values).groupby(pd.Series(group_ids)).cummax().to_numpy(np.int64)
    )


def _weighted_group_rssi(seg: np.ndarray, weights: np.ndarray,
                         rssi: np.ndarray, counts: np.ndarray) -> np.ndarray:
    """Duration-weighted mean per segment, plain mean when all weights are 0."""
    den = np.bincount(seg, weights=weights)
    num = np.bincount(seg, weights=weights * rssi)
    plain = np.bincount(seg, weights=rssi) / counts
    return np.where(den > 0, num / np.where(den > 0, den, 1.0), plain)


# --- per-node aggregation ---------------------------------------------------


def aggregate_by_node(records, config: EventConfig):
    """Merge per-sniffer detections into per-node records.

    Records of the same MAC at the same node whose spans overlap or touch
    collapse into one record covering their union; the merged RSSI is the
    duration-weighted mean.  Node ids are accepted as sources, which makes
    the operation idempotent.
    """
    if isinstance(records, pd.DataFrame):
        return _aggregate_frame(records, config)
    out = _aggregate_frame(records_to_frame(records), config)
    return frame_to_records(out, source_col="node")


def _aggregate_frame(frame: pd.DataFrame, config: EventConfig) -> pd.DataFrame:
    if len(frame) == 0:
        return _empty_agg_frame()
    lookup = config.sniffer_to_node
    sources = pd.unique(frame["source"])
    unknown = [s for s in sources if s not in lookup]
    if unknown:
        raise UnknownSniffer(f"unconfigured sources: {sorted(map(str, unknown))}")

    work = pd.DataFrame(
        {
            "mac": frame["mac"].to_numpy(np.uint64),
            "node": frame["source"].map(lookup).to_numpy(object),
            "t_first": frame["t_first"].to_numpy(np.int64),
            "t_last": frame["t_last"].to_numpy(np.int64),
            "rssi": frame["rssi"].to_numpy(np.float64),
        }
    ).sort_values(["mac", "node", "t_first", "t_last"],
                  kind="mergesort", ignore_index=True)

    mac = work["mac"].to_numpy(np.uint64)
    node_codes, node_values = pd.factorize(work["node"])
    t0 = work["t_first"].to_numpy(np.int64)
    t1 = work["t_last"].to_numpy(np.int64)
    rssi = work["rssi"].to_numpy(np.float64)
    n = len(work)

    key_change = np.ones(n, dtype=bool)
    key_change[1:] = (mac[1:] != mac[:-1]) | (node_codes[1:] != node_codes[:-1])
    run_max = _grouped_running_max(t1, np.cumsum(key_change))
    prev_end = np.empty(n, dtype=np.int64)
    prev_end[0] = 0
    prev_end[1:] = run_max[:-1]
    # Strictly-later start opens a new record; touching spans keep merging.
    new_seg = key_change | (t0 > prev_end)
    seg = np.cumsum(new_seg) - 1
    starts, counts = _run_starts(new_seg)
    ends = starts + counts - 1

    span = (t1 - t0).astype(np.float64)
    out = pd.DataFrame(
        {
            "mac": mac[starts],
            "node": np.asarray(node_values, dtype=object)[node_codes[starts]],
            "t_first": t0[starts],
            "t_last": run_max[ends],
            "rssi": _weighted_group_rssi(seg, span, rssi, counts),
        }
    )
    return out.sort_values(["mac", "t_first", "t_last", "node"],
                           kind="mergesort", ignore_index=True)


# --- frequent-device removal ------------------------------------------------


@dataclass
class DatasetA:
    """Per-node records of all retained MACs after the frequency filter."""

    records: pd.DataFrame
    tz_offset_s: int = 0
    removed_frequent_macs: frozenset = frozenset()
    span_days: int = 0
    span_weeks: int = 0

    @property
    def n_records(self) -> int:
        return len(self.records)

    @property
    def mac_values(self) -> np.ndarray:
        return np.unique(self.records["mac"].to_numpy(np.uint64))

    def macs(self) -> set[MacAddress]:
        return {MacAddress(int(v)) for v in self.mac_values}

    def iter_records(self) -> list[ProbeRecord]:
        return frame_to_records(self.records, source_col="node")


def filter_frequent_devices(records, threshold_per_week: float = FREQUENT_VISITS_PER_WEEK,
                            *, tz_offset_s: int = 0) -> DatasetA:
    """Drop every record of MACs averaging more than `threshold_per_week`
    distinct visiting days per week of the collection span."""
    frame = records if isinstance(records, pd.DataFrame) else records_to_frame(records)
    if "node" not in frame.columns:
        raise ValueError("filter_frequent_devices expects per-node records")
    if len(frame) == 0:
        return DatasetA(_empty_agg_frame(), tz_offset_s=tz_offset_s)

    day = ((frame["t_first"].to_numpy(np.int64) + tz_offset_s) // DAY_S)
    span_days = int(day.max() - day.min()) + 1
    span_weeks = math.ceil(span_days / 7)
    visit_days = (
        pd.DataFrame({"mac": frame["mac"].to_numpy(np.uint64), "day": day})
        .drop_duplicates()
        .groupby("mac", sort=False)
        .size()
    )
    frequent = visit_days[visit_days > threshold_per_week * span_weeks].index
    keep = ~frame["mac"].isin(frequent)
    kept = frame.loc[keep].reset_index(drop=True)
    return DatasetA(
        records=kept,
        tz_offset_s=tz_offset_s,
        removed_frequent_macs=frozenset(int(m) for m in frequent),
        span_days=span_days,
        span_weeks=span_weeks,
    )


def split_global_local(ds: DatasetA) -> tuple[DatasetA, DatasetA]:
    """Partition by the locally-administered bit of the first octet."""
    mac = ds.records["mac"].to_numpy(np.uint64)
    local_mask = (mac >> np.uint64(40)) & np.uint64(LOCAL_ADMIN_BIT) != 0
    def _part(mask):
        return DatasetA(
            records=ds.records.loc[mask].reset_index(drop=True),
            tz_offset_s=ds.tz_offset_s,
            removed_frequent_macs=ds.removed_frequent_macs,
            span_days=ds.span_days,
            span_weeks=ds.span_weeks,
        )
    return _part(~local_mask), _part(local_mask)


def vendor_share(macs, oui_table: dict[str, str]) -> dict[str, float]:
    """Fraction of MACs per vendor by 3-octet prefix; unmatched count as
    'other'.  Empty input yields an empty map (with a log warning)."""
    table = {int(p.replace(":", ""), 16): v for p, v in oui_table.items()}
    if isinstance(macs, np.ndarray):
        prefixes = (macs.astype(np.uint64) >> np.uint64(24)).tolist()
    else:
        prefixes = [m.value >> 24 for m in macs]
    if not prefixes:
        log.warning("vendor_share: no MACs to classify")
        return {}
    counts: dict[str, int] = {}
    for p in prefixes:
        vendor = table.get(p, "other")
        counts[vendor] = counts.get(vendor, 0) + 1
    total = len(prefixes)
    return {v: counts[v] / total for v in sorted(counts)}


# --- visit extraction -------------------------------------------------------


def extract_trajectories(records, combine_gap_s: int = COMBINE_GAP_S,
                         *, tz_offset_s: int = 0) -> list[Trajectory]:
    """Group per-node records into per-(MAC, day) visit sequences.

    Consecutive same-node records always extend the current visit: a gap
    shorter than `combine_gap_s` counts as staying time, a longer one as
    missing time.  A record at a different node closes the visit.
    """
    if isinstance(records, DatasetA):
        tz_offset_s = records.tz_offset_s
        frame = records.records
    elif isinstance(records, pd.DataFrame):
        frame = records
    else:
        frame = records_to_frame(records).rename(columns={"source": "node"})
    visits = extract_visits_frame(frame, combine_gap_s, tz_offset_s=tz_offset_s)
    return visits_frame_to_trajectories(visits)


def extract_visits_frame(frame: pd.DataFrame, combine_gap_s: int = COMBINE_GAP_S,
                         *, tz_offset_s: int = 0) -> pd.DataFrame:
    if len(frame) == 0:
        return _empty_visits_frame()
    day = (frame["t_first"].to_numpy(np.int64) + tz_offset_s) // DAY_S
    work = pd.DataFrame(
        {
            "mac": frame["mac"].to_numpy(np.uint64),
            "day": day,
            "node": frame["node"].to_numpy(object),
            "t_first": frame["t_first"].to_numpy(np.int64),
            "t_last": frame["t_last"].to_numpy(np.int64),
            "rssi": frame["rssi"].to_numpy(np.float64),
        }
    ).sort_values(["mac", "day", "t_first", "t_last", "node"],
                  kind="mergesort", ignore_index=True)

    mac = work["mac"].to_numpy(np.uint64)
    dayv = work["day"].to_numpy(np.int64)
    node_codes, node_values = pd.factorize(work["node"])
    t0 = work["t_first"].to_numpy(np.int64)
    t1 = work["t_last"].to_numpy(np.int64)
    rssi = work["rssi"].to_numpy(np.float64)
    n = len(work)

    traj_change = np.ones(n, dtype=bool)
    traj_change[1:] = (mac[1:] != mac[:-1]) | (dayv[1:] != dayv[:-1])
    visit_change = traj_change.copy()
    visit_change[1:] |= node_codes[1:] != node_codes[:-1]
    vid = np.cumsum(visit_change) - 1

    run_max = _grouped_running_max(t1, vid)
    prev_end = np.empty(n, dtype=np.int64)
    prev_end[0] = 0
    prev_end[1:] = run_max[:-1]
    inside = ~visit_change

    # Presence inside a visit is the union of record spans; holes between
    # them are staying time when short, missing time when long.
    covered_from = np.where(inside, np.maximum(t0, prev_end), t0)
    contrib = np.maximum(t1 - covered_from, 0)
    gap = np.where(inside, t0 - prev_end, 0)
    stay_gap = np.where((gap > 0) & (gap < combine_gap_s), gap, 0)
    miss_gap = np.where(gap >= combine_gap_s, gap, 0)

    starts, counts = _run_starts(visit_change)
    ends = starts + counts - 1
    staying = np.bincount(vid, weights=contrib + stay_gap).astype(np.int64)
    missing = np.bincount(vid, weights=miss_gap).astype(np.int64)
    span = (t1 - t0).astype(np.float64)

    return pd.DataFrame(
        {
            "mac": mac[starts],
            "day": dayv[starts],
            "node": np.asarray(node_values, dtype=object)[node_codes[starts]],
            "t_start": t0[starts],
            "t_end": run_max[ends],
            "staying_s": staying,
            "missing_s": missing,
            "rssi": _weighted_group_rssi(vid, span, rssi, counts),
        }
    )


def visits_frame_to_trajectories(visits: pd.DataFrame) -> list[Trajectory]:
    out = []
    if len(visits) == 0:
        return out
    ordered = visits.sort_values(["mac", "day", "t_start", "t_end", "node"],
                                 kind="mergesort", ignore_index=True)
    for (mac_v, day_v), g in ordered.groupby(["mac", "day"], sort=True):
        vs = tuple(
            NodeVisit(
                node=str(r.node),
                t_start=int(r.t_start),
                t_end=int(r.t_end),
                staying_s=int(r.staying_s),
                missing_s=int(r.missing_s),
                rssi=float(r.rssi),
            )
            for r in g.itertuples()
        )
        out.append(Trajectory(MacAddress(int(mac_v)), day_to_date(int(day_v)), vs))
    return out


def trajectories_to_visits_frame(trajectories) -> pd.DataFrame:
    rows = [
        (t.mac.value, date_to_day(t.day), v.node,
         v.t_start, v.t_end, v.staying_s, v.missing_s, v.rssi)
        for t in trajectories
        for v in t.visits
    ]
    if not rows:
        return _empty_visits_frame()
    cols = list(zip(*rows))
    return pd.DataFrame(
        {
            "mac": np.array(cols[0], dtype=np.uint64),
            "day": np.array(cols[1], dtype=np.int64),
            "node": np.array(cols[2], dtype=object),
            "t_start": np.array(cols[3], dtype=np.int64),
            "t_end": np.array(cols[4], dtype=np.int64),
            "staying_s": np.array(cols[5], dtype=np.int64),
            "missing_s": np.array(cols[6], dtype=np.int64),
            "rssi": np.array(cols[7], dtype=np.float64),
        }
    )


# --- temporal conflict resolution -------------------------------------------


def _conflicting(a: NodeVisit, b: NodeVisit) -> bool:
    """A device cannot be at two places at once.

    Positive-length span intersections conflict, as do coincident
    instantaneous visits and an instantaneous visit strictly inside another
    span.  Endpoint touching is the normal hand-over between nodes.
    """
    lo = max(a.t_start, b.t_start)
    hi = min(a.t_end, b.t_end)
    if lo > hi:
        return False
    if lo < hi:
        return True
    a_pt = a.t_start == a.t_end
    b_pt = b.t_start == b.t_end
    if a_pt and b_pt:
        return True  # both collapse to the same instant
    if a_pt:
        return b.t_start < a.t_start < b.t_end
    if b_pt:
        return a.t_start < b.t_start < a.t_end
    return False


def _keep_preference(v: NodeVisit) -> tuple:
    """Sort key for 'which of two equivalent visits survives' ties."""
    return (-v.rssi, v.t_start, v.t_end, v.node)


def _truncate(loser: NodeVisit, winner: NodeVisit) -> NodeVisit:
    """Cut the overlap out of the losing visit of a partial conflict.

    Staying time is preserved up to the shortened span; the remainder is
    booked as missing time.
    """
    if loser.t_start < winner.t_start:
        new_start, new_end = loser.t_start, winner.t_start
    else:
        new_start, new_end = winner.t_end, loser.t_end
    span = new_end - new_start
    staying = min(loser.staying_s, span)
    return NodeVisit(loser.node, new_start, new_end, staying, span - staying,
                     loser.rssi)


def _resolve_pair(a: NodeVisit, b: NodeVisit) -> list[NodeVisit]:
    a_zero = a.staying_s == 0
    b_zero = b.staying_s == 0
    if a_zero and b_zero:
        return [min(a, b, key=_keep_preference)]
    if a_zero:
        return [b]
    if b_zero:
        return [a]
    a_covers = a.t_start <= b.t_start and b.t_end <= a.t_end
    b_covers = b.t_start <= a.t_start and a.t_end <= b.t_end
    if a_covers and b_covers:
        return [min(a, b, key=_keep_preference)]
    if a_covers:
        return [a]
    if b_covers:
        return [b]
    # Partial overlap: the overlapping stretch goes to the stronger signal;
    # on an RSSI tie the later-starting visit is the one cut back.
    if (a.rssi, -a.t_start) < (b.rssi, -b.t_start):
        loser, winner = a, b
    else:
        loser, winner = b, a
    return [winner, _truncate(loser, winner)]


def _visit_order(v: NodeVisit) -> tuple:
    return (v.t_start, v.t_end, v.node)


def _coalesce(visits: list[NodeVisit], combine_gap_s: int) -> list[NodeVisit]:
    """Re-merge same-node visits left adjacent after conflict drops."""
    out: list[NodeVisit] = []
    for v in visits:
        if out and out[-1].node == v.node:
            p = out[-1]
            gap = v.t_start - p.t_end
            staying = p.staying_s + v.staying_s
            missing = p.missing_s + v.missing_s
            if gap < combine_gap_s:
                staying += gap
            else:
                missing += gap
            w = p.staying_s + v.staying_s
            rssi = ((p.rssi * p.staying_s + v.rssi * v.staying_s) / w
                    if w > 0 else (p.rssi + v.rssi) / 2)
            out[-1] = NodeVisit(p.node, p.t_start, v.t_end, staying, missing, rssi)
        else:
            out.append(v)
    return out


def _resolve_visits(visits: list[NodeVisit], combine_gap_s: int) -> list[NodeVisit]:
    work = sorted(visits, key=_visit_order)
    while True:
        hit = None
        for i in range(len(work)):
            for j in range(i + 1, len(work)):
                if work[j].t_start > work[i].t_end:
                    break
                if _conflicting(work[i], work[j]):
                    hit = (i, j)
                    break
            if hit:
                break
        if hit is None:
            break
        i, j = hit
        survivors = _resolve_pair(work[i], work[j])
        work = [v for idx, v in enumerate(work) if idx not in (i, j)]
        work.extend(survivors)
        work.sort(key=_visit_order)
    return _coalesce(work, combine_gap_s)


def resolve_conflicts(trajectory: Trajectory,
                      combine_gap_s: int = COMBINE_GAP_S) -> Trajectory:
    """Apply the pairwise conflict rules until the trajectory is overlap-free.

    Zero-stay visits lose to positive-stay ones; between two zero-stay
    visits the stronger RSSI survives; a fully covered visit is dropped;
    partial overlaps are cut back on the weaker-RSSI side.
    """
    resolved = _resolve_visits(list(trajectory.visits), combine_gap_s)
    out = Trajectory(trajectory.mac, trajectory.day, tuple(resolved))
    out.validate()
    return out


def resolve_conflicts_frame(visits: pd.DataFrame,
                            combine_gap_s: int = COMBINE_GAP_S) -> pd.DataFrame:
    """Frame-level conflict resolution; untouched trajectories pass through."""
    if len(visits) == 0:
        return visits
    ordered = visits.sort_values(["mac", "day", "t_start", "t_end", "node"],
                                 kind="mergesort", ignore_index=True)
    mac = ordered["mac"].to_numpy(np.uint64)
    dayv = ordered["day"].to_numpy(np.int64)
    t_start = ordered["t_start"].to_numpy(np.int64)
    t_end = ordered["t_end"].to_numpy(np.int64)
    n = len(ordered)

    traj_change = np.ones(n, dtype=bool)
    traj_change[1:] = (mac[1:] != mac[:-1]) | (dayv[1:] != dayv[:-1])
    tid = np.cumsum(traj_change) - 1
    run_max = _grouped_running_max(t_end, tid)
    prev_end = np.empty(n, dtype=np.int64)
    prev_end[0] = 0
    prev_end[1:] = run_max[:-1]
    # Superset screen: any touch or overlap marks the trajectory for the
    # exact per-visit pass.
    suspect_rows = (~traj_change) & (t_start <= prev_end)
    if not suspect_rows.any():
        return ordered
    suspect_tids = np.unique(tid[suspect_rows])
    suspect_mask = np.isin(tid, suspect_tids)

    clean = ordered.loc[~suspect_mask]
    resolved_rows = []
    sub = ordered.loc[suspect_mask]
    for (mac_v, day_v), g in sub.groupby(["mac", "day"], sort=False):
        vs = [
            NodeVisit(str(r.node), int(r.t_start), int(r.t_end),
                      int(r.staying_s), int(r.missing_s), float(r.rssi))
            for r in g.itertuples()
        ]
        for v in _resolve_visits(vs, combine_gap_s):
            resolved_rows.append((mac_v, day_v, v.node, v.t_start, v.t_end,
                                  v.staying_s, v.missing_s, v.rssi))
    if resolved_rows:
        cols = list(zip(*resolved_rows))
        fixed = pd.DataFrame(
            {
                "mac": np.array(cols[0], dtype=np.uint64),
                "day": np.array(cols[1], dtype=np.int64),
                "node": np.array(cols[2], dtype=object),
                "t_start": np.array(cols[3], dtype=np.int64),
                "t_end": np.array(cols[4], dtype=np.int64),
                "staying_s": np.array(cols[5], dtype=np.int64),
                "missing_s": np.array(cols[6], dtype=np.int64),
                "rssi": np.array(cols[7], dtype=np.float64),
            }
        )
        out = pd.concat([clean, fixed], ignore_index=True)
    else:
        out = clean.reset_index(drop=True)
    return out.sort_values(["mac", "day", "t_start", "t_end", "node"],
                           kind="mergesort", ignore_index=True)


# --- pedestrian filter and Dataset B ----------------------------------------


@dataclass
class DatasetB:
    """Pedestrian trajectories of global MACs, one per (MAC, day)."""

    visits: pd.DataFrame
    tz_offset_s: int = 0

    @property
    def n_visits(self) -> int:
        return len(self.visits)

    @property
    def n_trajectories(self) -> int:
        if len(self.visits) == 0:
            return 0
        return len(self.visits[["mac", "day"]].drop_duplicates())

    def trajectories(self) -> list[Trajectory]:
        return visits_frame_to_trajectories(self.visits)

    @classmethod
    def from_trajectories(cls, trajectories, tz_offset_s: int = 0) -> "DatasetB":
        return cls(trajectories_to_visits_frame(trajectories), tz_offset_s)


def filter_non_pedestrians(trajectories, *, tz_offset_s: int = 0) -> DatasetB:
    """Keep only trajectories with positive total staying time."""
    if isinstance(trajectories, pd.DataFrame):
        frame = trajectories
    else:
        frame = trajectories_to_visits_frame(trajectories)
    if len(frame) == 0:
        return DatasetB(frame, tz_offset_s)
    stay = frame.groupby(["mac", "day"], sort=False)["staying_s"].transform("sum")
    kept = frame.loc[stay > 0].reset_index(drop=True)
    return DatasetB(kept, tz_offset_s)


def validate_visits_frame(visits: pd.DataFrame) -> None:
    """Trajectory invariants, checked (not assumed) on pipeline output."""
    if len(visits) == 0:
        return
    span = visits["t_end"].to_numpy(np.int64) - visits["t_start"].to_numpy(np.int64)
    book = visits["staying_s"].to_numpy(np.int64) + visits["missing_s"].to_numpy(np.int64)
    if not np.array_equal(span, book):
        raise RuntimeError("visit bookkeeping broken: staying + missing != span")
    ordered = visits.sort_values(["mac", "day", "t_start", "t_end", "node"],
                                 kind="mergesort", ignore_index=True)
    mac = ordered["mac"].to_numpy(np.uint64)
    dayv = ordered["day"].to_numpy(np.int64)
    node = pd.factorize(ordered["node"])[0]
    t_start = ordered["t_start"].to_numpy(np.int64)
    t_end = ordered["t_end"].to_numpy(np.int64)
    same_traj = (mac[1:] == mac[:-1]) & (dayv[1:] == dayv[:-1])
    n = len(ordered)
    tid = np.zeros(n, dtype=np.int64)
    tid[1:] = np.cumsum(~same_traj)
    run_max = _grouped_running_max(t_end, tid)
    if (same_traj & (t_start[1:] < run_max[:-1])).any():
        raise RuntimeError("overlapping visits survived conflict resolution")
    if (same_traj & (node[1:] == node[:-1])).any():
        raise RuntimeError("consecutive visits share a node")


# --- full chain --------------------------------------------------------------


@dataclass
class PreprocessResult:
    dataset_a: DatasetA
    dataset_a_global: DatasetA
    dataset_a_local: DatasetA
    dataset_b: DatasetB
    summary: dict = field(default_factory=dict)


def preprocess_frame(raw: pd.DataFrame, config: EventConfig,
                     combine_gap_s: int = COMBINE_GAP_S,
                     threshold_per_week: float = FREQUENT_VISITS_PER_WEEK,
                     ) -> PreprocessResult:
    """Raw sniffer records to Dataset A (all MACs) and Dataset B
    (pedestrian trajectories of global MACs)."""
    tz = config.tz_offset_s
    if "sniffer_id" in raw.columns and "source" not in raw.columns:
        raw = raw.rename(columns={"sniffer_id": "source"})
    agg = _aggregate_frame(raw, config)
    ds_a = filter_frequent_devices(agg, threshold_per_week, tz_offset_s=tz)
    ds_global, ds_local = split_global_local(ds_a)

    visits = extract_visits_frame(ds_global.records, combine_gap_s, tz_offset_s=tz)
    n_traj_raw = (len(visits[["mac", "day"]].drop_duplicates())
                  if len(visits) else 0)
    resolved = resolve_conflicts_frame(visits, combine_gap_s)
    ds_b = filter_non_pedestrians(resolved, tz_offset_s=tz)
    validate_visits_frame(ds_b.visits)

    summary = {
        "n_input_records": int(len(raw)),
        "n_aggregated_records": int(len(agg)),
        "n_macs_aggregated": int(agg["mac"].nunique()) if len(agg) else 0,
        "n_frequent_macs_removed": len(ds_a.removed_frequent_macs),
        "span_days": ds_a.span_days,
        "span_weeks": ds_a.span_weeks,
        "n_dataset_a_records": ds_a.n_records,
        "n_global_macs": int(ds_global.mac_values.size),
        "n_local_macs": int(ds_local.mac_values.size),
        "n_trajectories_extracted": n_traj_raw,
        "n_pedestrian_trajectories": ds_b.n_trajectories,
        "n_zero_stay_trajectories_removed": n_traj_raw - ds_b.n_trajectories,
    }
    return PreprocessResult(ds_a, ds_global, ds_local, ds_b, summary)
