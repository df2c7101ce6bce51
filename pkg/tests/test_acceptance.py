"""End-to-end acceptance qualities, one test per guarantee.

Each test here states a user-visible property of the pipeline and checks
it against an independent oracle, a planted ground truth, or an exhaustive
enumeration.  Tolerances are pinned in the assertions; randomized checks
use fixed seeds so failures reproduce.
"""

from __future__ import annotations

import json
import time
from datetime import date
from pathlib import Path

import numpy as np
import pytest

import oracles
from probeflow import spatial, temporal
from probeflow.cli import main
from probeflow.core import EventConfig, MacAddress, NodeSite, NodeVisit, Poi, Trajectory
from probeflow.preprocess import preprocess_frame, resolve_conflicts
from probeflow.spatial import (
    average_linkage_merges,
    cut_dendrogram,
    hac_interconnections,
    optimal_leaf_order,
    pairwise_euclidean,
    poi_correlation,
    transition_counts,
    transition_matrix,
)
from probeflow.spatiotemporal import (
    direction_ratios,
    flow_snapshots,
    period_transition_counts,
)
from probeflow.synth import (
    BehaviorMix,
    DayTemplate,
    Dynamics,
    NodeSpec,
    Nuisance,
    SynthSpec,
    VendorSpec,
    generate,
)
from probeflow.temporal import kmeans, kshape, select_k, silhouette_from_distances, znormalize


# --- corpus builders ---------------------------------------------------------------


def _line_nodes(n, zone_split=None):
    """n sites in a row, 50-ish meters apart; zone_split puts the first
    `zone_split` sites in zone I and the rest in zone II."""
    out = []
    for i in range(n):
        zone = "I" if zone_split is None or i < zone_split else "II"
        out.append(NodeSpec(f"n{i + 1}", 43.0 + 0.0005 * i, -89.0 + 0.0002 * i,
                            zone, (f"n{i + 1}a", f"n{i + 1}b")))
    return out


def _spec(seed, *, days, nodes, per_day, behavior, dynamics, nuisance,
          **extra):
    return SynthSpec(
        seed=seed, days=days, start_date=date(2024, 6, 7), nodes=nodes,
        vendor_mix=[VendorSpec("acme", "a4:5e:60", 0.9)],
        day_templates=[DayTemplate("plain", 1.0, (1.0, 1.0))],
        day_assignment=["plain"] * days,
        per_day_base=per_day,
        behavior_mix=behavior, dynamics=dynamics, nuisance=nuisance,
        **extra,
    )


_CLEAN = Dynamics(dropout=0.0, bleed=0.0, gap_prob=0.0)
_QUIET = Nuisance(static_devices=0, vehicles_per_day=0)


def _pipeline(spec):
    frame, truth = generate(spec)
    return preprocess_frame(frame, spec.event_config()), truth


# --- address classification --------------------------------------------------------


def test_local_bit_flag_matches_predicate_for_all_first_octets():
    t0 = time.monotonic()
    for octet in range(256):
        mac = MacAddress(octet << 40)
        assert mac.is_local() == bool(octet & 0x02), f"octet {octet:#04x}"
    assert time.monotonic() - t0 < 1.0


# --- overlap resolution ------------------------------------------------------------


def _random_visit(rng, node):
    t0 = int(rng.integers(0, 40))
    span = int(rng.integers(0, 40))
    staying = 0 if rng.random() < 0.25 else int(rng.integers(0, span + 1))
    rssi = float(rng.choice([-80.0, -70.0, -60.0]))
    return NodeVisit(node, t0, t0 + span, staying, span - staying, rssi)


def test_conflict_resolution_matches_rule_table_on_random_pairs():
    rng = np.random.default_rng(2024)
    n_conflicts = 0
    for _case in range(20_000):
        a = _random_visit(rng, "a")
        b = _random_visit(rng, "b")
        n_conflicts += oracles.visits_conflict(a, b)
        out = resolve_conflicts(Trajectory(MacAddress(9), date(2024, 6, 7), (a, b)))
        assert list(out.visits) == oracles.resolve_two(a, b)
        for i in range(len(out.visits)):
            for j in range(i + 1, len(out.visits)):
                assert not oracles.visits_conflict(out.visits[i], out.visits[j])
    assert n_conflicts >= 10_000


# --- transition matrix structure ---------------------------------------------------


def test_transition_matrices_row_stochastic_and_period_counts_conserved():
    for seed in (1, 2, 3):
        spec = _spec(seed, days=4, nodes=_line_nodes(6), per_day=120,
                     behavior=BehaviorMix(), dynamics=Dynamics(),
                     nuisance=Nuisance())
        res, _truth = _pipeline(spec)
        config = spec.event_config()
        tm = transition_matrix(res.dataset_b, config.node_ids)
        tm.validate()
        assert tm.counts.sum() > 0
        for i in range(tm.n):
            assert tm.probs[i, i] == 1.0
            off = tm.probs[i].sum() - tm.probs[i, i]
            want = 0.0 if i in tm.zero_outgoing else 1.0
            assert abs(off - want) <= 1e-9
        by_period = period_transition_counts(res.dataset_b, config)
        stacked = sum(by_period.values())
        assert np.array_equal(stacked, transition_counts(res.dataset_b,
                                                         config.node_ids))


# --- agglomeration vs naive oracle -------------------------------------------------


def test_average_linkage_and_leaf_order_match_exhaustive_oracles():
    rng = np.random.default_rng(404)
    for trial in range(100):
        n = 7 if trial < 80 else 8
        pts = rng.normal(size=(n, 4))
        merges = average_linkage_merges(pts)
        expected = oracles.hac_average(pts)
        assert len(merges) == len(expected)
        for (a, b, h), (ea, eb, eh) in zip(merges, expected):
            assert (a, b) == (ea, eb)
            assert abs(h - eh) <= 1e-9
        dist = pairwise_euclidean(pts)
        order = optimal_leaf_order(merges, dist)
        candidates = oracles.all_leaf_orders(n, merges)
        assert order in candidates
        best = min(oracles.order_cost(o, dist) for o in candidates)
        assert oracles.order_cost(order, dist) <= best + 1e-9


# --- planted zone recovery ---------------------------------------------------------


def test_two_zone_partition_recovered_for_all_seeds():
    t0 = time.monotonic()
    planted = {frozenset(f"n{i}" for i in range(1, 5)),
               frozenset(f"n{i}" for i in range(5, 9))}
    for seed in range(20):
        spec = _spec(seed, days=5, nodes=_line_nodes(8, zone_split=4),
                     per_day=200, behavior=BehaviorMix(0.0, 0.0, 1.0, 0.0),
                     dynamics=_CLEAN, nuisance=_QUIET,
                     global_share=1.0, cross_zone_prob=0.05)
        res, _truth = _pipeline(spec)
        config = spec.event_config()
        tm = transition_matrix(res.dataset_b, config.node_ids)
        cut = cut_dendrogram(hac_interconnections(tm), 2)
        found = {
            frozenset(config.node_ids[i] for i in range(tm.n)
                      if cut.labels[i] == c)
            for c in range(2)
        }
        assert found == planted, f"seed {seed}: {found}"
    assert time.monotonic() - t0 < 30.0


# --- silhouette and correlation oracles --------------------------------------------


def test_silhouette_and_pearson_match_brute_force():
    rng = np.random.default_rng(606)
    for _trial in range(100):
        n = int(rng.integers(6, 16))
        raw = np.abs(rng.normal(size=(n, n)))
        dist = (raw + raw.T) / 2.0
        np.fill_diagonal(dist, 0.0)
        labels = rng.integers(0, int(rng.integers(2, 5)), size=n)
        while np.unique(labels).size < 2:
            labels = rng.integers(0, 3, size=n)
        mean, scores = silhouette_from_distances(dist, labels)
        slow_mean, slow_scores = oracles.silhouette_slow(dist, labels)
        assert abs(mean - slow_mean) <= 1e-12
        assert np.max(np.abs(np.asarray(scores) - np.asarray(slow_scores))) <= 1e-12

    for _trial in range(100):
        n = int(rng.integers(3, 30))
        x = rng.normal(size=n)
        y = rng.normal(size=n)
        _mx, _my, cov, vx, vy = spatial._pearson_parts(x, y)
        r = cov / np.sqrt(vx * vy)
        assert abs(r - oracles.pearson_slow(x, y)) <= 1e-12

    nodes = [NodeSite(f"n{i + 1}", 43.0 + 0.001 * i, -89.0, (f"n{i + 1}a",))
             for i in range(6)]
    config = EventConfig(nodes=nodes, pois=[Poi("stage", 43.0, -89.0)])
    dist_m = {
        n.node_id: spatial.haversine_m(n.lat, n.lon, 43.0, -89.0)
        for n in nodes
    }
    ratios = {k: 0.9 - 1e-6 * v for k, v in dist_m.items()}
    corr = poi_correlation(ratios, config, n_permutations=200, seed=0)
    assert abs(corr.r - (-1.0)) <= 1e-9


# --- planted day-type recovery -----------------------------------------------------


def test_planted_day_types_recovered_and_k_selection_peaks():
    for seed in range(20):
        rng = np.random.default_rng([77, seed])
        pts = np.vstack([
            rng.normal(0.0, 0.1, size=(6, 20)) + 10.0 * np.eye(20)[i]
            for i in range(4)
        ])
        planted = np.repeat(np.arange(4), 6)
        got = kmeans(pts, 4, seed=[seed, 4])
        mapping = {}
        for p, g in zip(planted.tolist(), got.labels.tolist()):
            assert mapping.setdefault(p, g) == g, f"seed {seed}"
        assert len(set(mapping.values())) == 4
        k_star, curve = select_k(pts, range(2, 9), seed=seed)
        assert k_star == 4, f"seed {seed}: {curve}"
        peak = max(curve, key=lambda kv: kv[1])
        assert peak[0] == 4


# --- shift-invariant distance ------------------------------------------------------


def test_shift_distance_properties_and_naive_oracle():
    rng = np.random.default_rng(808)
    for _trial in range(1000):
        m = int(rng.integers(2, 33))
        x = rng.normal(size=m)
        y = rng.normal(size=m)
        d_xy, s_xy = temporal.sbd(x, y)
        d_yx, _s_yx = temporal.sbd(y, x)
        assert abs(d_xy - d_yx) <= 1e-9
        assert -1e-12 <= d_xy <= 2.0 + 1e-12
        d_self, s_self = temporal.sbd(x, x)
        assert d_self <= 1e-9
        assert s_self == 0
        slow_d, slow_s = oracles.sbd_slow(x, y)
        assert abs(d_xy - slow_d) <= 1e-9
        assert s_xy == slow_s

    for _trial in range(50):
        m = 24
        pulse = np.zeros(m)
        pulse[8:13] = rng.normal(size=5) + np.array([3.0, 5.0, 8.0, 5.0, 3.0])
        for shift in (-4, -2, -1, 1, 2, 4):
            moved = np.roll(pulse, shift)
            d, s = temporal.sbd(pulse, moved)
            assert d <= 1e-9
            assert s == -shift


# --- shape clustering under phase jitter -------------------------------------------


def test_shape_families_separated_despite_shifts():
    tri = np.zeros(16)
    tri[5:12] = [1, 2, 3, 4, 3, 2, 1]
    twin = np.zeros(16)
    twin[6] = 4.0
    twin[9] = 4.0
    for seed in range(20):
        rng = np.random.default_rng([51, seed])
        rows, family = [], []
        for label, base in ((0, tri), (1, twin)):
            for _member in range(10):
                shift = int(rng.integers(-3, 4))
                rows.append(znormalize(np.roll(base, shift)))
                family.append(label)
        got = kshape(np.array(rows), 2, restarts=10, seed=seed)
        family = np.array(family)
        a = set(got.labels[family == 0].tolist())
        b = set(got.labels[family == 1].tolist())
        assert len(a) == 1 and len(b) == 1 and a != b, f"seed {seed}"


# --- direction ratios --------------------------------------------------------------


def _link_classes(snap):
    return {(l.node_a, l.node_b): l.dominant for l in snap.links}


def test_direction_ratio_complement_scaling_and_planted_bias():
    rng = np.random.default_rng(909)
    ids = [f"n{i}" for i in range(1, 6)]
    period = (68400, 75600)
    for _trial in range(50):
        counts = rng.integers(0, 30, size=(5, 5))
        np.fill_diagonal(counts, 0)
        snap = direction_ratios(counts, ids, period)
        for link in snap.links:
            i, j = ids.index(link.node_a), ids.index(link.node_b)
            total = counts[i, j] + counts[j, i]
            assert total > 0
            assert abs(link.ratio_ab + counts[j, i] / total - 1.0) <= 1e-9
        for scale in (7, 1000):
            scaled = direction_ratios(counts * scale, ids, period)
            assert _link_classes(scaled) == _link_classes(snap)
        as_float = direction_ratios(counts.astype(np.float64) * 2.5, ids, period)
        assert _link_classes(as_float) == _link_classes(snap)

    periods = [(68400, 75600), (75600, 86400)]
    interior = [(f"n{i}", f"n{i + 1}") for i in range(2, 7)]
    for seed in range(20):
        spec = _spec(seed, days=6, nodes=_line_nodes(8), per_day=400,
                     behavior=BehaviorMix(0.0, 0.0, 1.0, 0.0),
                     dynamics=_CLEAN, nuisance=_QUIET,
                     global_share=1.0, periods=periods, flow_bias=[0.7, 0.3])
        res, _truth = _pipeline(spec)
        snaps = flow_snapshots(res.dataset_b, spec.event_config(), periods)
        for snap, forward in zip(snaps, (True, False)):
            links = {(l.node_a, l.node_b): l for l in snap.links}
            for a, b in interior:
                link = links[(a, b)]
                assert link.dominant == (b if forward else a), f"seed {seed}"
                want = "clockwise" if forward else "anticlockwise"
                assert link.orientation == want, f"seed {seed}"


# --- scale and determinism ---------------------------------------------------------


def _run_all_stages(root: Path):
    synth = root / "synth"
    prep = root / "prep"
    argv_sets = [
        ["synth", "--seed", "12", "--days", "28", "--per-day", "7100",
         "--out", str(synth)],
        ["preprocess", "--records", str(synth / "records.csv"),
         "--config", str(synth / "event_config.json"), "--out", str(prep)],
        ["spatial", "--dataset-b", str(prep / "dataset_b.ndjson"),
         "--config", str(synth / "event_config.json"),
         "--out", str(root / "spatial")],
        ["temporal", "--dataset-a", str(prep / "dataset_a.ndjson"),
         "--config", str(synth / "event_config.json"), "--restarts", "10",
         "--out", str(root / "temporal")],
        ["spatiotemporal", "--dataset-b", str(prep / "dataset_b.ndjson"),
         "--config", str(synth / "event_config.json"),
         "--out", str(root / "spatiotemporal")],
    ]
    for argv in argv_sets:
        assert main(argv) == 0, argv[0]


def test_full_pipeline_scale_determinism(tmp_path):
    run1 = tmp_path / "run1"
    run2 = tmp_path / "run2"
    t0 = time.monotonic()
    _run_all_stages(run1)
    elapsed = time.monotonic() - t0
    assert elapsed < 60.0, f"pipeline took {elapsed:.1f}s"

    manifest = json.loads((run1 / "synth" / "manifest.json").read_text())
    rows = {o["name"]: o.get("rows") for o in manifest["outputs"]}
    assert rows["records.csv"] >= 1_000_000

    _run_all_stages(run2)
    files1 = sorted(p.relative_to(run1) for p in run1.rglob("*") if p.is_file())
    files2 = sorted(p.relative_to(run2) for p in run2.rglob("*") if p.is_file())
    assert files1 == files2
    for rel in files1:
        assert (run1 / rel).read_bytes() == (run2 / rel).read_bytes(), rel
