"""Command line pipeline.

Five stages: `synth` makes a synthetic record table with planted truth,
`preprocess` turns raw records into the cleaned datasets, and `spatial`,
`temporal`, `spatiotemporal` derive the analysis tables from those.

Exit codes: 0 success (an empty input is a warning, not an error),
1 usage problems, 2 malformed data or infeasible analysis requests.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from . import reports, spatial, spatiotemporal, temporal
from .core import EventConfig, format_clock, parse_clock
from .errors import ProbeflowError
from .preprocess import preprocess_frame, vendor_share
from .reports import Manifest, stage_seed
from .synth import SynthSpec, demo_spec, generate

log = logging.getLogger("probeflow")


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; the pipeline reserves 2 for bad
    data, so usage problems are remapped to 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _parse_periods(text: str) -> list[tuple[int, int]]:
    out = []
    for part in text.split(","):
        a, sep, b = part.strip().partition("-")
        if not sep:
            raise ValueError(f"period {part!r} is not HH:MM-HH:MM")
        out.append((parse_clock(a), parse_clock(b)))
    return out


def _parse_k_range(text: str) -> range:
    a, sep, b = text.partition(":")
    if not sep:
        raise ValueError(f"k range {text!r} is not LO:HI")
    return range(int(a), int(b) + 1)


def _parse_slice(text: str) -> tuple[int, int]:
    a, sep, b = text.partition("-")
    if not sep:
        raise ValueError(f"slice {text!r} is not HH:MM-HH:MM")
    return parse_clock(a), parse_clock(b)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# --- synth ---------------------------------------------------------------------


def cmd_synth(args) -> int:
    if args.spec:
        spec = SynthSpec.load(args.spec)
        if args.seed is not None:
            spec = dataclasses.replace(spec, seed=args.seed)
    else:
        spec = demo_spec(seed=args.seed if args.seed is not None else 7,
                         days=args.days, per_day_base=args.per_day)
    out = _out_dir(args)

    manifest = Manifest(stage="synth", seed=spec.seed)
    manifest.set_config(spec.to_dict())
    run_key = manifest.run_key

    records, truth = generate(spec)
    reports.write_records_csv(records, out / "records.csv", run_key)
    truth.save(out / "ground_truth.json")
    spec.event_config().save(out / "event_config.json")
    spec.save(out / "synth_spec.json")

    manifest.add_output(out / "records.csv", rows=len(records))
    manifest.add_output(out / "ground_truth.json")
    manifest.add_output(out / "event_config.json")
    manifest.add_output(out / "synth_spec.json")
    manifest.save(out / "manifest.json")
    log.info("wrote %d records for %d days to %s", len(records), spec.days, out)
    return 0


# --- preprocess ------------------------------------------------------------------


def cmd_preprocess(args) -> int:
    config = EventConfig.load(args.config)
    raw = reports.read_records_csv(args.records)
    out = _out_dir(args)
    if len(raw) == 0:
        log.warning("input %s has no records; outputs will be empty", args.records)

    manifest = Manifest(stage="preprocess")
    manifest.set_config(config.to_dict())
    manifest.add_input("records", args.records)
    manifest.parameters = {
        "combine_gap_s": args.combine_gap_s,
        "frequent_per_week": args.frequent_per_week,
    }
    run_key = manifest.run_key

    result = preprocess_frame(raw, config,
                              combine_gap_s=args.combine_gap_s,
                              threshold_per_week=args.frequent_per_week)

    reports.write_dataset_a(result.dataset_a, out / "dataset_a.ndjson", run_key)
    reports.write_dataset_a(result.dataset_a_global,
                            out / "dataset_a_global.ndjson", run_key)
    reports.write_dataset_a(result.dataset_a_local,
                            out / "dataset_a_local.ndjson", run_key)
    reports.write_dataset_b(result.dataset_b, out / "dataset_b.ndjson", run_key)

    summary = dict(result.summary)
    if config.oui_table:
        summary["vendor_share_global"] = vendor_share(
            result.dataset_a_global.mac_values, config.oui_table)
    reports.write_json(summary, out / "summary.json", run_key)

    for name in ("dataset_a.ndjson", "dataset_a_global.ndjson",
                 "dataset_a_local.ndjson", "dataset_b.ndjson"):
        manifest.add_output(out / name)
    manifest.add_output(out / "summary.json")
    manifest.save(out / "manifest.json")
    log.info("preprocess: %d raw -> %d cleaned records, %d pedestrian trajectories",
             summary["n_input_records"], summary["n_dataset_a_records"],
             summary["n_pedestrian_trajectories"])
    return 0


# --- spatial ---------------------------------------------------------------------


def cmd_spatial(args) -> int:
    config = EventConfig.load(args.config)
    ds = reports.read_dataset_b(args.dataset_b)
    out = _out_dir(args)

    manifest = Manifest(stage="spatial", seed=args.seed)
    manifest.set_config(config.to_dict())
    manifest.add_input("dataset_b", args.dataset_b)
    manifest.parameters = {
        "cut_k": args.cut_k,
        "poi_permutations": args.poi_permutations,
    }
    run_key = manifest.run_key

    if ds.n_visits == 0:
        log.warning("dataset %s is empty; nothing to analyze", args.dataset_b)
        manifest.save(out / "manifest.json")
        return 0

    split = spatial.trajectory_split_table(ds)
    reports.write_table_csv(
        pd.DataFrame([dataclasses.asdict(r) for r in split]),
        out / "split_table.csv", run_key)
    manifest.add_output(out / "split_table.csv", rows=len(split))

    pop = spatial.node_popularity(ds, config.node_ids)
    pop_frame = pd.DataFrame(
        [{"node": nid, **dataclasses.asdict(p)} for nid, p in pop.items()])
    reports.write_table_csv(pop_frame, out / "node_popularity.csv", run_key)
    manifest.add_output(out / "node_popularity.csv", rows=len(pop_frame))

    if config.pois:
        ratios = {nid: p.pass_ratio for nid, p in pop.items()}
        corr = spatial.poi_correlation(
            ratios, config, n_permutations=args.poi_permutations,
            seed=stage_seed(args.seed, "spatial.poi"))
        reports.write_json(
            {
                "r": corr.r, "p_value": corr.p_value, "slope": corr.slope,
                "intercept": corr.intercept, "n_nodes": corr.n_nodes,
                "n_permutations": corr.n_permutations,
                "distances_m": {n: corr.distances_m[n] for n in sorted(corr.distances_m)},
                "pass_ratios": {n: corr.ratios[n] for n in sorted(corr.ratios)},
            },
            out / "poi_correlation.json", run_key)
        manifest.add_output(out / "poi_correlation.json")

    tm = spatial.transition_matrix(ds, config.node_ids)
    n = len(tm.node_ids)
    long = pd.DataFrame(
        {
            "src": np.repeat(tm.node_ids, n),
            "dst": tm.node_ids * n,
            "count": tm.counts.reshape(-1),
            "prob": tm.probs.reshape(-1),
        }
    )
    reports.write_table_csv(long, out / "transitions.csv", run_key)
    manifest.add_output(out / "transitions.csv", rows=len(long))

    dend = spatial.hac_interconnections(tm)
    payload = dend.to_dict()
    payload["zero_outgoing_nodes"] = list(tm.zero_outgoing)
    if args.cut_k:
        cut = spatial.cut_dendrogram(dend, args.cut_k)
        payload["cut"] = {
            "k": args.cut_k,
            "labels": {nid: int(c)
                       for nid, c in zip(tm.node_ids, cut.labels.tolist())},
        }
    reports.write_json(payload, out / "dendrogram.json", run_key)
    manifest.add_output(out / "dendrogram.json")

    if config.zones:
        rows = spatial.zone_ratio_distribution(ds, config.zones)
        reports.write_table_csv(
            pd.DataFrame([dataclasses.asdict(r) for r in rows]),
            out / "zone_ratios.csv", run_key)
        manifest.add_output(out / "zone_ratios.csv", rows=len(rows))

    manifest.save(out / "manifest.json")
    log.info("spatial: %d trajectories analyzed over %d nodes",
             ds.n_trajectories, n)
    return 0


# --- temporal ---------------------------------------------------------------------


def cmd_temporal(args) -> int:
    config = EventConfig.load(args.config)
    if args.interval_min:
        config = dataclasses.replace(config, interval_minutes=args.interval_min)
    ds = reports.read_dataset_a(args.dataset_a)
    out = _out_dir(args)

    manifest = Manifest(stage="temporal", seed=args.seed)
    manifest.set_config(config.to_dict())
    manifest.add_input("dataset_a", args.dataset_a)
    manifest.parameters = {
        "k_range": [args.k_range.start, args.k_range.stop - 1],
        "k_override": args.k_override,
        "restarts": args.restarts,
        "kshape_k": args.kshape_k,
        "slice": list(args.slice) if args.slice else None,
    }
    run_key = manifest.run_key

    if ds.n_records == 0:
        log.warning("dataset %s is empty; nothing to analyze", args.dataset_a)
        manifest.save(out / "manifest.json")
        return 0

    grid = temporal.build_count_grid(ds, config)
    grid_payload = {
        "dates": [d.isoformat() for d in grid.dates()],
        "day_indexes": list(grid.days),
        "node_ids": list(grid.node_ids),
        "interval_minutes": grid.interval_minutes,
        "window": [format_clock(grid.window[0]), format_clock(grid.window[1])],
        "overall": grid.overall.tolist(),
        "per_node": grid.per_node.tolist(),
    }
    reports.write_json(grid_payload, out / "count_grid.json", run_key)
    manifest.add_output(out / "count_grid.json")

    points = temporal.minmax_normalize(grid.overall)
    if args.k_override:
        chosen_k = args.k_override
        curve = []
    else:
        k_range = args.k_range
        feasible_hi = len(grid.days) - 1
        if k_range.stop - 1 > feasible_hi:
            log.warning("clamping k range %d:%d to %d days - 1",
                        k_range.start, k_range.stop - 1, len(grid.days))
            k_range = range(k_range.start, feasible_hi + 1)
        chosen_k, curve = temporal.select_k(
            points, k_range, restarts=args.restarts,
            seed=stage_seed(args.seed, "temporal.kmeans"))
    day_clusters = temporal.kmeans(
        points, chosen_k, restarts=args.restarts,
        seed=[stage_seed(args.seed, "temporal.kmeans"), chosen_k])
    reports.write_json(
        {
            "k": chosen_k,
            "silhouette_by_k": {str(k): q for k, q in curve},
            "quality": day_clusters.quality,
            "labels": {d.isoformat(): int(c) for d, c in
                       zip(grid.dates(), day_clusters.labels.tolist())},
        },
        out / "day_clusters.json", run_key)
    manifest.add_output(out / "day_clusters.json")

    clock = args.slice if args.slice else grid.window
    curve_rows = []
    shape_payload = {}
    for cluster_id in sorted(set(day_clusters.labels.tolist())):
        days = [d for d, c in zip(grid.days, day_clusters.labels.tolist())
                if c == cluster_id]
        curves = temporal.node_count_curves(grid, days, clock)
        for node, vec in curves.items():
            for t, val in enumerate(vec.tolist()):
                curve_rows.append({
                    "day_cluster": cluster_id,
                    "node": node,
                    "clock": format_clock(clock[0] + t * grid.interval_minutes * 60),
                    "value": val,
                })
        names = sorted(curves)
        series = np.stack([curves[n] for n in names])
        shapes = temporal.kshape(
            series, args.kshape_k, restarts=args.restarts,
            seed=[stage_seed(args.seed, "temporal.kshape"), cluster_id])
        shape_payload[str(cluster_id)] = {
            "k": args.kshape_k,
            "quality": shapes.quality,
            "labels": {n: int(c) for n, c in zip(names, shapes.labels.tolist())},
            "centroids": shapes.centroids.tolist(),
        }
    reports.write_table_csv(pd.DataFrame(curve_rows),
                            out / "node_curves.csv", run_key)
    manifest.add_output(out / "node_curves.csv", rows=len(curve_rows))
    reports.write_json(shape_payload, out / "curve_clusters.json", run_key)
    manifest.add_output(out / "curve_clusters.json")

    manifest.save(out / "manifest.json")
    log.info("temporal: %d days x %d intervals, day clusters k=%d",
             len(grid.days), grid.n_intervals, chosen_k)
    return 0


# --- spatiotemporal ------------------------------------------------------------------


def cmd_spatiotemporal(args) -> int:
    config = EventConfig.load(args.config)
    ds = reports.read_dataset_b(args.dataset_b)
    out = _out_dir(args)

    periods = _parse_periods(args.periods) if args.periods else None

    manifest = Manifest(stage="spatiotemporal")
    manifest.set_config(config.to_dict())
    manifest.add_input("dataset_b", args.dataset_b)
    manifest.parameters = {
        "dominance_threshold": args.dominance_threshold,
        "periods": [[format_clock(a), format_clock(b)] for a, b in periods]
        if periods else None,
    }
    run_key = manifest.run_key

    if ds.n_visits == 0:
        log.warning("dataset %s is empty; nothing to analyze", args.dataset_b)
        manifest.save(out / "manifest.json")
        return 0

    stats = spatiotemporal.duration_vs_length(ds)
    reports.write_table_csv(
        pd.DataFrame([dataclasses.asdict(s) for s in stats]),
        out / "duration_vs_length.csv", run_key)
    manifest.add_output(out / "duration_vs_length.csv", rows=len(stats))

    by_period = spatiotemporal.period_transition_counts(ds, config, periods)
    rows = []
    for period, counts in by_period.items():
        n = len(config.node_ids)
        for i in range(n):
            for j in range(n):
                if counts[i, j]:
                    rows.append({
                        "period": spatiotemporal.period_label(period),
                        "src": config.node_ids[i],
                        "dst": config.node_ids[j],
                        "count": int(counts[i, j]),
                    })
    reports.write_table_csv(pd.DataFrame(rows),
                            out / "period_transitions.csv", run_key)
    manifest.add_output(out / "period_transitions.csv", rows=len(rows))

    snaps = spatiotemporal.flow_snapshots(ds, config, periods,
                                          threshold=args.dominance_threshold)
    link_rows = []
    for snap in snaps:
        for link in snap.links:
            link_rows.append({
                "period": snap.period_text,
                "node_a": link.node_a,
                "node_b": link.node_b,
                "count_ab": link.count_ab,
                "count_ba": link.count_ba,
                "ratio_ab": link.ratio_ab,
                "dominant": link.dominant if link.dominant else "",
                "orientation": link.orientation if link.orientation else "",
            })
    reports.write_table_csv(pd.DataFrame(link_rows),
                            out / "flow_links.csv", run_key)
    manifest.add_output(out / "flow_links.csv", rows=len(link_rows))

    manifest.save(out / "manifest.json")
    log.info("spatiotemporal: %d periods, %d directed links",
             len(by_period), len(link_rows))
    return 0


# --- parser ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="probeflow",
                     description="Crowd analytics from passive WiFi probe records")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate synthetic records with ground truth")
    p.add_argument("--spec", help="generator spec JSON; omit for the demo event")
    p.add_argument("--demo", action="store_true",
                   help="use the built-in demo event (default when --spec is absent)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--days", type=int, default=28)
    p.add_argument("--per-day", type=int, default=160,
                   help="baseline pedestrians per day for the demo event")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("preprocess", help="raw records to cleaned datasets")
    p.add_argument("--records", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--combine-gap-s", type=int, default=300)
    p.add_argument("--frequent-per-week", type=float, default=4.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("spatial", help="trajectory mix, popularity, interconnections")
    p.add_argument("--dataset-b", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--cut-k", type=int, default=2,
                   help="clusters to cut the node dendrogram into (0 to skip)")
    p.add_argument("--poi-permutations", type=int, default=10000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_spatial)

    p = sub.add_parser("temporal", help="count grids, day types, curve shapes")
    p.add_argument("--dataset-a", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--interval-min", type=int, default=None,
                   help="override the configured counting interval")
    p.add_argument("--k-range", type=_parse_k_range, default=range(2, 9),
                   metavar="LO:HI", help="candidate day-cluster counts (default 2:8)")
    p.add_argument("--k-override", type=int, default=None,
                   help="skip selection and force this day-cluster count")
    p.add_argument("--restarts", type=int, default=temporal.DEFAULT_RESTARTS)
    p.add_argument("--kshape-k", type=int, default=2,
                   help="shape clusters per day type")
    p.add_argument("--slice", type=_parse_slice, default=None, metavar="HH:MM-HH:MM",
                   help="clock range for node curves (default: whole window)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_temporal)

    p = sub.add_parser("spatiotemporal",
                       help="stay duration by length, per-period flow directions")
    p.add_argument("--dataset-b", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--dominance-threshold", type=float,
                   default=spatiotemporal.DOMINANCE_THRESHOLD)
    p.add_argument("--periods", default=None,
                   help="comma-separated HH:MM-HH:MM spans tiling the window")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_spatiotemporal)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except ProbeflowError as exc:
        log.error("%s", exc)
        return 2
    except ValueError as exc:
        log.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
