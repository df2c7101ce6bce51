"""Joint space-time views: stay duration as a function of trajectory
length, and time-resolved movement direction between neighboring nodes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .core import EventConfig, format_clock
from .errors import EmptyDataset, UnknownNode
from .spatial import _as_visits, _check_nodes

DOMINANCE_THRESHOLD = 0.10


# --- duration vs trajectory length ------------------------------------------------


@dataclass
class DurationStats:
    length: int
    count: int
    duration_median_s: float
    duration_sigma_s: float | None   # sample sigma; None when count == 1
    missing_median_s: float
    missing_sigma_s: float | None


def _median_sigma(values: np.ndarray) -> tuple[float, float | None]:
    med = float(np.median(values))
    sigma = float(values.std(ddof=1)) if values.size > 1 else None
    return med, sigma


def duration_vs_length(ds) -> list[DurationStats]:
    """Median and spread of total visit span and of time out of coverage,
    grouped by the number of visits in the trajectory."""
    visits = _as_visits(ds)
    if len(visits) == 0:
        raise EmptyDataset("no trajectories")
    g = visits.groupby(["mac", "day"], sort=False)
    table = pd.DataFrame(
        {
            "length": g.size(),
            "duration": g["t_end"].max() - g["t_start"].min(),
            "missing": g["missing_s"].sum(),
        }
    ).reset_index(drop=True)
    out = []
    for length in sorted(table["length"].unique().tolist()):
        rows = table[table["length"] == length]
        dur_med, dur_sigma = _median_sigma(rows["duration"].to_numpy(np.float64))
        mis_med, mis_sigma = _median_sigma(rows["missing"].to_numpy(np.float64))
        out.append(DurationStats(int(length), int(len(rows)),
                                 dur_med, dur_sigma, mis_med, mis_sigma))
    return out


# --- time-resolved transition counts ----------------------------------------------


def _validate_periods(periods: list[tuple[int, int]], window: tuple[int, int]) -> None:
    if not periods:
        raise ValueError("need at least one period")
    if periods[0][0] != window[0] or periods[-1][1] != window[1]:
        raise ValueError("periods must span the daily window exactly")
    for (a0, a1), (b0, b1) in zip(periods, periods[1:]):
        if a1 != b0:
            raise ValueError("periods must tile the window without gaps")
    if any(p1 <= p0 for p0, p1 in periods):
        raise ValueError("periods must have positive length")


def period_label(period: tuple[int, int]) -> str:
    return f"{format_clock(period[0])}-{format_clock(period[1])}"


def period_transition_counts(ds, config: EventConfig,
                             periods: list[tuple[int, int]] | None = None
                             ) -> dict[tuple[int, int], np.ndarray]:
    """Split directed node-to-node transition counts by period of day.

    A transition belongs to the period containing the departure time, the
    t_end of the visit being left.  Departures at or past the window edge
    (midnight spillover included) land in the last period.
    """
    periods = list(periods) if periods is not None else config.effective_periods()
    _validate_periods(periods, config.daily_window)
    visits = _as_visits(ds)
    node_ids = config.node_ids
    _check_nodes(visits, node_ids)
    n = len(node_ids)
    out = {p: np.zeros((n, n), dtype=np.int64) for p in periods}
    if len(visits) == 0:
        return out

    idx = {nid: i for i, nid in enumerate(node_ids)}
    node = visits["node"].map(idx).to_numpy(np.int64)
    mac = visits["mac"].to_numpy(np.uint64)
    day = visits["day"].to_numpy(np.int64)
    t_end = visits["t_end"].to_numpy(np.int64)

    same = (mac[1:] == mac[:-1]) & (day[1:] == day[:-1])
    src = node[:-1][same]
    dst = node[1:][same]
    depart_sod = (t_end[:-1][same] + config.tz_offset_s) - day[:-1][same] * 86400

    starts = np.array([p[0] for p in periods], dtype=np.int64)
    which = np.searchsorted(starts, depart_sod, side="right") - 1
    which = np.clip(which, 0, len(periods) - 1)  # clamp spillover into the edges
    for pi, p in enumerate(periods):
        sel = which == pi
        np.add.at(out[p], (src[sel], dst[sel]), 1)
    return out


# --- direction ratios and orientation ----------------------------------------------


@dataclass
class LinkFlow:
    node_a: str
    node_b: str
    count_ab: int | float   # fractional when the caller feeds weighted counts
    count_ba: int | float
    ratio_ab: float        # count_ab / (count_ab + count_ba)
    dominant: str | None   # heavier endpoint-to-endpoint direction, None if mutual
    orientation: str | None = None   # "clockwise" / "anticlockwise" on a ring


@dataclass
class FlowSnapshot:
    period: tuple[int, int]
    links: list[LinkFlow] = field(default_factory=list)

    @property
    def period_text(self) -> str:
        return period_label(self.period)


def direction_ratios(counts: np.ndarray, node_ids: list[str],
                     period: tuple[int, int],
                     threshold: float = DOMINANCE_THRESHOLD) -> FlowSnapshot:
    """Per-link share of each direction.  A link is mutual when the two
    opposing shares differ by less than `threshold`; at the boundary the
    heavier direction is already dominant."""
    counts = np.asarray(counts)
    n = len(node_ids)
    if counts.shape != (n, n):
        raise ValueError(f"counts shape {counts.shape} does not match {n} nodes")
    snap = FlowSnapshot(period=period)
    for i in range(n):
        for j in range(i + 1, n):
            # .item() keeps fractional weights intact; truncating them would
            # shift the proportion and break scale invariance at the threshold
            ab = counts[i, j].item()
            ba = counts[j, i].item()
            if ab + ba == 0:
                continue
            ratio = ab / (ab + ba)
            gap = abs(ratio - (1.0 - ratio))
            if gap < threshold:
                dominant = None
            else:
                dominant = node_ids[j] if ab >= ba else node_ids[i]
            snap.links.append(LinkFlow(node_ids[i], node_ids[j], ab, ba,
                                       ratio, dominant))
    return snap


def flow_orientation(snapshot: FlowSnapshot, ring_order: list[str]) -> FlowSnapshot:
    """Label each dominant link clockwise or anticlockwise along the
    ring; the clockwise sense is walking the ring order forward."""
    pos = {nid: i for i, nid in enumerate(ring_order)}
    for link in snapshot.links:
        if link.node_a not in pos or link.node_b not in pos:
            raise UnknownNode(f"ring order missing {link.node_a} or {link.node_b}")
        if link.dominant is None:
            link.orientation = None
            continue
        src = link.node_a if link.dominant == link.node_b else link.node_b
        link.orientation = ("clockwise" if pos[link.dominant] > pos[src]
                            else "anticlockwise")
    return snapshot


def flow_snapshots(ds, config: EventConfig,
                   periods: list[tuple[int, int]] | None = None,
                   threshold: float = DOMINANCE_THRESHOLD) -> list[FlowSnapshot]:
    """Direction ratios for every period, oriented along the ring when one
    is configured."""
    by_period = period_transition_counts(ds, config, periods)
    ring = config.effective_ring_order()
    out = []
    for period, counts in by_period.items():
        snap = direction_ratios(counts, config.node_ids, period, threshold)
        if ring:
            snap = flow_orientation(snap, ring)
        out.append(snap)
    return out
