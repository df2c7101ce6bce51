from datetime import date

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from probeflow.core import DAY_S, MacAddress, NodeVisit, Trajectory
from probeflow.errors import UnknownSniffer
from probeflow.preprocess import (
    DatasetA,
    aggregate_by_node,
    extract_trajectories,
    extract_visits_frame,
    filter_frequent_devices,
    filter_non_pedestrians,
    preprocess_frame,
    resolve_conflicts,
    split_global_local,
    trajectories_to_visits_frame,
    validate_visits_frame,
    vendor_share,
)

import oracles
from conftest import line_config, node_records_frame, records_frame

GLOBAL_MAC = 0x00163E000001
LOCAL_MAC = 0x020000000001


# --- aggregation ---------------------------------------------------------------


def test_aggregate_merges_overlapping_sniffer_spans(cfg2):
    raw = records_frame([
        (GLOBAL_MAC, 0, 60, -60.0, "n1a"),
        (GLOBAL_MAC, 30, 90, -60.0, "n1b"),
    ])
    agg = aggregate_by_node(raw, cfg2)
    assert len(agg) == 1
    row = agg.iloc[0]
    assert (row.t_first, row.t_last, row.node) == (0, 90, "n1")


def test_aggregate_keeps_separate_nodes(cfg2):
    raw = records_frame([
        (GLOBAL_MAC, 0, 60, -60.0, "n1a"),
        (GLOBAL_MAC, 30, 90, -60.0, "n2a"),
    ])
    agg = aggregate_by_node(raw, cfg2)
    assert len(agg) == 2
    assert sorted(agg["node"]) == ["n1", "n2"]


def test_aggregate_touching_spans_merge(cfg2):
    raw = records_frame([
        (GLOBAL_MAC, 0, 60, -50.0, "n1a"),
        (GLOBAL_MAC, 60, 120, -70.0, "n1b"),
    ])
    agg = aggregate_by_node(raw, cfg2)
    assert len(agg) == 1
    assert agg.iloc[0].t_last == 120
    # equal durations, so the weighted mean sits exactly between
    assert agg.iloc[0].rssi == pytest.approx(-60.0)


def test_aggregate_zero_span_rssi_falls_back_to_plain_mean(cfg2):
    raw = records_frame([
        (GLOBAL_MAC, 100, 100, -50.0, "n1a"),
        (GLOBAL_MAC, 100, 100, -70.0, "n1b"),
    ])
    agg = aggregate_by_node(raw, cfg2)
    assert len(agg) == 1
    assert agg.iloc[0].rssi == pytest.approx(-60.0)


def test_aggregate_unknown_sniffer_rejected(cfg2):
    raw = records_frame([(GLOBAL_MAC, 0, 60, -60.0, "mystery")])
    with pytest.raises(UnknownSniffer, match="mystery"):
        aggregate_by_node(raw, cfg2)


def test_aggregate_matches_quadratic_merge_oracle(cfg4):
    rng = np.random.default_rng(42)
    sniffers = [s for n in cfg4.nodes for s in n.sniffers]
    lookup = cfg4.sniffer_to_node
    rows = []
    for _ in range(400):
        t0 = int(rng.integers(0, 2000))
        rows.append((
            int(rng.integers(1, 4)),
            t0,
            t0 + int(rng.integers(0, 300)),
            float(rng.integers(-90, -40)),
            sniffers[int(rng.integers(0, len(sniffers)))],
        ))
    agg = aggregate_by_node(records_frame(rows), cfg4)

    want = oracles.merge_spans(
        [(m, lookup[s], t0, t1, r) for m, t0, t1, r, s in rows])
    got = sorted(
        (int(r.mac), r.node, int(r.t_first), int(r.t_last), float(r.rssi))
        for r in agg.itertuples()
    )
    assert len(got) == len(want)
    for g, w in zip(got, want):
        assert g[:4] == w[:4]
        assert g[4] == pytest.approx(w[4], abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(
    st.lists(
        st.tuples(
            st.integers(1, 3),
            st.integers(0, 1000),
            st.integers(0, 400),
            st.sampled_from(["n1a", "n1b", "n2a", "n2b"]),
        ),
        min_size=1,
        max_size=30,
    )
)
def test_aggregate_idempotent(rows):
    cfg = line_config(2)
    raw = records_frame([(m, t0, t0 + d, -60.0, s) for m, t0, d, s in rows])
    once = aggregate_by_node(raw, cfg)
    again = aggregate_by_node(
        once.rename(columns={"node": "source"}), cfg)
    pd.testing.assert_frame_equal(once, again)


# --- frequent-device filter -------------------------------------------------------


def _daily_rows(mac, days, node="n1"):
    return [(mac, d * DAY_S + 100, d * DAY_S + 200, -60.0, node) for d in days]


def test_frequent_filter_removes_everyday_device():
    rows = _daily_rows(1, range(27)) + _daily_rows(2, [0])
    ds = filter_frequent_devices(node_records_frame(rows))
    assert ds.span_days == 27
    assert ds.span_weeks == 4
    assert ds.removed_frequent_macs == {1}
    assert set(ds.records["mac"].astype(int)) == {2}


def test_frequent_filter_threshold_is_strict():
    # one-week span: exactly 4 visit days stays, 5 goes
    rows = _daily_rows(1, [0, 1, 2, 3]) + _daily_rows(2, [0, 1, 2, 3, 4]) \
        + _daily_rows(3, [6])
    ds = filter_frequent_devices(node_records_frame(rows))
    assert ds.span_days == 7
    assert ds.span_weeks == 1
    assert ds.removed_frequent_macs == {2}


def test_frequent_filter_uses_event_local_days():
    # records at 23:00 and 25:00 UTC straddle midnight UTC, but a +2h
    # offset puts both at 01:00-03:00 of the same local day
    t = 23 * 3600
    rows = [(1, t, t + 60, -60.0, "n1"),
            (1, t + 7200, t + 7260, -60.0, "n1")]
    ds0 = filter_frequent_devices(node_records_frame(rows))
    ds2 = filter_frequent_devices(node_records_frame(rows), tz_offset_s=7200)
    assert ds0.span_days == 2
    assert ds2.span_days == 1


def test_frequent_filter_counts_match_oracle():
    rng = np.random.default_rng(7)
    rows = []
    for _ in range(300):
        mac = int(rng.integers(1, 12))
        day = int(rng.integers(0, 21))
        t0 = day * DAY_S + int(rng.integers(0, DAY_S - 100))
        rows.append((mac, t0, t0 + 50, -60.0, "n1"))
    ds = filter_frequent_devices(node_records_frame(rows))
    counts = oracles.visit_day_counts([(m, t0) for m, t0, *_ in rows])
    threshold = 4.0 * ds.span_weeks
    want_removed = {m for m, c in counts.items() if c > threshold}
    assert ds.removed_frequent_macs == want_removed


# --- global/local split --------------------------------------------------------------


def test_split_all_local_input():
    rows = [(LOCAL_MAC, 0, 60, -60.0, "n1"), (LOCAL_MAC + 1, 0, 60, -60.0, "n1")]
    ds = DatasetA(node_records_frame(rows))
    g, l = split_global_local(ds)
    assert g.n_records == 0
    assert l.n_records == 2


def test_split_matches_bit_predicate():
    rng = np.random.default_rng(3)
    macs = rng.integers(0, 1 << 48, size=10).tolist()
    rows = [(m, i * 100, i * 100 + 50, -60.0, "n1") for i, m in enumerate(macs)]
    g, l = split_global_local(DatasetA(node_records_frame(rows)))
    got_global = set(g.records["mac"].astype(int))
    got_local = set(l.records["mac"].astype(int))
    for m in macs:
        if MacAddress(m).is_local():
            assert m in got_local
        else:
            assert m in got_global


def test_vendor_share_single_vendor():
    macs = [MacAddress.parse("00:16:3e:00:00:01"),
            MacAddress.parse("00:16:3e:aa:bb:cc")]
    assert vendor_share(macs, {"00:16:3e": "X"}) == {"X": 1.0}


def test_vendor_share_empty_input():
    assert vendor_share([], {"00:16:3e": "X"}) == {}


@settings(max_examples=50)
@given(st.lists(st.integers(0, (1 << 48) - 1), min_size=1, max_size=40))
def test_vendor_share_fractions_sum_to_one(values):
    macs = [MacAddress(v) for v in values]
    shares = vendor_share(macs, {"00:16:3e": "X", "a4:5e:60": "Y"})
    assert sum(shares.values()) == pytest.approx(1.0, abs=1e-9)


# --- visit extraction ------------------------------------------------------------------


def test_extract_short_gap_counts_as_staying():
    visits = extract_visits_frame(node_records_frame([
        (1, 0, 60, -60.0, "n1"),
        (1, 180, 240, -60.0, "n1"),
    ]))
    assert len(visits) == 1
    row = visits.iloc[0]
    assert (row.t_start, row.t_end) == (0, 240)
    assert (row.staying_s, row.missing_s) == (240, 0)


def test_extract_long_gap_counts_as_missing():
    visits = extract_visits_frame(node_records_frame([
        (1, 0, 60, -60.0, "n1"),
        (1, 600, 660, -60.0, "n1"),
    ]))
    assert len(visits) == 1
    row = visits.iloc[0]
    assert (row.t_start, row.t_end) == (0, 660)
    assert (row.staying_s, row.missing_s) == (120, 540)


def test_extract_gap_boundary_is_missing_at_300():
    visits = extract_visits_frame(node_records_frame([
        (1, 0, 60, -60.0, "n1"),
        (1, 360, 420, -60.0, "n1"),
    ]))
    assert (visits.iloc[0].staying_s, visits.iloc[0].missing_s) == (120, 300)
    visits = extract_visits_frame(node_records_frame([
        (1, 0, 60, -60.0, "n1"),
        (1, 359, 419, -60.0, "n1"),
    ]))
    assert (visits.iloc[0].staying_s, visits.iloc[0].missing_s) == (419, 0)


def test_extract_node_change_closes_visit():
    visits = extract_visits_frame(node_records_frame([
        (1, 0, 60, -60.0, "n1"),
        (1, 100, 160, -60.0, "n2"),
        (1, 200, 260, -60.0, "n1"),
    ]))
    assert list(visits["node"]) == ["n1", "n2", "n1"]
    assert len(visits) == 3


def test_extract_day_boundary_splits_trajectories():
    t_night = DAY_S - 50
    visits = extract_visits_frame(node_records_frame([
        (1, t_night, t_night + 20, -60.0, "n1"),
        (1, DAY_S + 10, DAY_S + 40, -60.0, "n1"),
    ]))
    assert list(visits["day"]) == [0, 1]


def test_extract_matches_interpreter_oracle():
    rng = np.random.default_rng(11)
    rows = []
    for _ in range(500):
        mac = int(rng.integers(1, 4))
        t0 = int(rng.integers(0, 4000))
        rows.append((
            mac, t0, t0 + int(rng.integers(0, 400)),
            float(rng.integers(-90, -40)),
            ["x", "y"][int(rng.integers(0, 2))],
        ))
    got = extract_visits_frame(
        node_records_frame([(m, t0, t1, r, n) for m, t0, t1, r, n in
                            ((m, t0, t1, r, n) for m, t0, t1, r, n in rows)]),
        combine_gap_s=300,
    )
    want = oracles.extract_visits(
        [(m, n, t0, t1, r) for m, t0, t1, r, n in rows], combine_gap_s=300)
    assert len(got) == len(want)
    got_rows = sorted(
        (int(r.mac), int(r.day), r.node, int(r.t_start), int(r.t_end),
         int(r.staying_s), int(r.missing_s), round(float(r.rssi), 9))
        for r in got.itertuples())
    want_rows = sorted((m, d, n, s, e, st_, mi, round(r, 9))
                       for m, d, n, s, e, st_, mi, r in want)
    assert got_rows == want_rows


def test_extract_trajectories_returns_domain_objects():
    trajs = extract_trajectories(node_records_frame([
        (1, 100, 200, -60.0, "n1"),
        (1, 400, 500, -70.0, "n2"),
    ]))
    assert len(trajs) == 1
    t = trajs[0]
    assert t.mac == MacAddress(1)
    assert t.day == date(1970, 1, 1)
    assert t.nodes == ("n1", "n2")
    t.validate()


# --- conflict resolution ---------------------------------------------------------------


def _traj(*visits):
    return Trajectory(MacAddress(9), date(2024, 6, 7), tuple(visits))


def test_conflict_rule1_zero_stay_loses():
    a = NodeVisit("a", 0, 100, 100, 0, -60.0)
    b = NodeVisit("b", 50, 50, 0, 0, -40.0)
    out = resolve_conflicts(_traj(a, b))
    assert out.visits == (a,)


def test_conflict_rule2_stronger_rssi_survives():
    a = NodeVisit("a", 30, 30, 0, 0, -60.0)
    b = NodeVisit("b", 30, 30, 0, 0, -80.0)
    assert resolve_conflicts(_traj(a, b)).visits == (a,)


def test_conflict_rule2_rssi_tie_keeps_earlier_start():
    a = NodeVisit("a", 0, 400, 0, 400, -60.0)
    b = NodeVisit("b", 100, 500, 0, 400, -60.0)
    assert resolve_conflicts(_traj(a, b)).visits == (a,)


def test_conflict_rule3_covered_visit_dropped():
    a = NodeVisit("a", 0, 1000, 900, 100, -70.0)
    b = NodeVisit("b", 200, 300, 100, 0, -50.0)
    # the cover wins even with the weaker signal
    assert resolve_conflicts(_traj(a, b)).visits == (a,)


def test_conflict_rule4_truncates_weaker_late_visit():
    a = NodeVisit("a", 0, 100, 80, 20, -50.0)
    b = NodeVisit("b", 60, 200, 140, 0, -70.0)
    out = resolve_conflicts(_traj(a, b))
    assert out.visits == (a, NodeVisit("b", 100, 200, 100, 0, -70.0))


def test_conflict_rule4_truncates_weaker_early_visit():
    a = NodeVisit("a", 0, 100, 80, 20, -70.0)
    b = NodeVisit("b", 60, 200, 140, 0, -50.0)
    out = resolve_conflicts(_traj(a, b))
    assert out.visits == (NodeVisit("a", 0, 60, 60, 0, -70.0), b)


def test_conflict_rule4_rssi_tie_cuts_later_start():
    a = NodeVisit("a", 0, 100, 100, 0, -60.0)
    b = NodeVisit("b", 50, 150, 100, 0, -60.0)
    out = resolve_conflicts(_traj(a, b))
    assert out.visits == (a, NodeVisit("b", 100, 150, 50, 0, -60.0))


def test_touching_visits_do_not_conflict():
    a = NodeVisit("a", 0, 100, 100, 0, -60.0)
    b = NodeVisit("b", 100, 200, 100, 0, -60.0)
    assert resolve_conflicts(_traj(a, b)).visits == (a, b)


def test_instant_on_endpoint_does_not_conflict():
    a = NodeVisit("a", 0, 100, 100, 0, -60.0)
    b = NodeVisit("b", 100, 100, 0, 0, -60.0)
    assert resolve_conflicts(_traj(a, b)).visits == (a, b)


def test_adjacent_same_node_visits_coalesce_after_drop():
    # dropping the middle visit leaves two same-node neighbours that re-merge
    a1 = NodeVisit("a", 0, 100, 100, 0, -60.0)
    mid = NodeVisit("b", 40, 60, 0, 20, -80.0)
    a2 = NodeVisit("a", 200, 300, 100, 0, -60.0)
    out = resolve_conflicts(_traj(a1, mid, a2))
    assert out.visits == (NodeVisit("a", 0, 300, 300, 0, -60.0),)


@settings(max_examples=300, deadline=None)
@given(
    st.lists(
        st.tuples(
            st.sampled_from(["a", "b", "c"]),
            st.integers(0, 500),
            st.integers(0, 300),
            st.integers(0, 100),
            st.sampled_from([-80.0, -70.0, -60.0]),
        ),
        min_size=1,
        max_size=6,
    )
)
def test_resolve_output_always_overlap_free(specs):
    visits = []
    for node, t0, span, stay_pct, rssi in specs:
        stay = span * stay_pct // 100
        visits.append(NodeVisit(node, t0, t0 + span, stay, span - stay, rssi))
    out = resolve_conflicts(_traj(*visits))
    out.validate()
    for va, vb in zip(out.visits, out.visits[1:]):
        assert not oracles.visits_conflict(va, vb)
    # a second pass changes nothing
    assert resolve_conflicts(out).visits == out.visits


# --- pedestrian filter -----------------------------------------------------------------


def test_zero_stay_trajectory_removed():
    t = _traj(NodeVisit("a", 0, 0, 0, 0, -60.0))
    ds = filter_non_pedestrians([t])
    assert ds.n_trajectories == 0


def test_one_second_stay_trajectory_kept():
    t = _traj(NodeVisit("a", 0, 1, 1, 0, -60.0))
    ds = filter_non_pedestrians([t])
    assert ds.n_trajectories == 1


def test_validate_visits_frame_catches_overlap():
    bad = trajectories_to_visits_frame([
        Trajectory(MacAddress(1), date(2024, 1, 1), (
            NodeVisit("a", 0, 100, 100, 0, -60.0),
            NodeVisit("b", 50, 150, 100, 0, -60.0),
        ))
    ])
    with pytest.raises(RuntimeError, match="overlap"):
        validate_visits_frame(bad)


# --- full chain --------------------------------------------------------------------------


def test_preprocess_frame_end_to_end(cfg2):
    day = 19 * 3600
    rows = [
        # a pedestrian wandering n1 -> n2
        (GLOBAL_MAC, day, day + 300, -55.0, "n1a"),
        (GLOBAL_MAC, day + 30, day + 280, -57.0, "n1b"),
        (GLOBAL_MAC, day + 500, day + 700, -60.0, "n2a"),
        # a local-MAC device seen once
        (LOCAL_MAC, day + 100, day + 200, -70.0, "n1a"),
    ]
    res = preprocess_frame(records_frame(rows), cfg2)
    assert res.summary["n_input_records"] == 4
    assert res.summary["n_global_macs"] == 1
    assert res.summary["n_local_macs"] == 1
    assert res.dataset_b.n_trajectories == 1
    trajs = res.dataset_b.trajectories()
    assert trajs[0].nodes == ("n1", "n2")


def test_preprocess_frame_is_deterministic(cfg2):
    rng = np.random.default_rng(5)
    rows = [
        (int(rng.integers(1, 50)) << 24 | int(rng.integers(0, 1 << 24)),
         int(rng.integers(0, 3 * DAY_S)),
         0, float(rng.integers(-90, -40)),
         ["n1a", "n1b", "n2a", "n2b"][int(rng.integers(0, 4))])
        for _ in range(300)
    ]
    rows = [(m, t0, t0 + 120, r, s) for m, t0, _z, r, s in rows]
    a = preprocess_frame(records_frame(rows), cfg2)
    b = preprocess_frame(records_frame(rows), cfg2)
    pd.testing.assert_frame_equal(a.dataset_a.records, b.dataset_a.records)
    pd.testing.assert_frame_equal(a.dataset_b.visits, b.dataset_b.visits)
    assert a.summary == b.summary
