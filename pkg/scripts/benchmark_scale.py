#!/usr/bin/env python3
"""Time every pipeline stage on a large synthetic corpus.

The default settings produce a bit over a million raw records; pass a
different --per-day to scale up or down.  Stages run through the same CLI
entry points users call, so the numbers include serialization.
"""

import argparse
import json
import sys
import tempfile
import time
from pathlib import Path

from probeflow.cli import main as probeflow


def timed_stage(name, argv) -> float:
    t0 = time.monotonic()
    rc = probeflow([str(a) for a in argv])
    if rc != 0:
        sys.exit(rc)
    return time.monotonic() - t0


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=None,
                    help="output root (default: a temporary directory)")
    ap.add_argument("--seed", type=int, default=12)
    ap.add_argument("--days", type=int, default=28)
    ap.add_argument("--per-day", type=int, default=7100)
    args = ap.parse_args()

    root = args.out or Path(tempfile.mkdtemp(prefix="probeflow_bench_"))
    synth = root / "synth"
    prep = root / "prep"
    cfg = synth / "event_config.json"
    stages = [
        ("synth", ["synth", "--seed", args.seed, "--days", args.days,
                   "--per-day", args.per_day, "--out", synth]),
        ("preprocess", ["preprocess", "--records", synth / "records.csv",
                        "--config", cfg, "--out", prep]),
        ("spatial", ["spatial", "--dataset-b", prep / "dataset_b.ndjson",
                     "--config", cfg, "--out", root / "spatial"]),
        ("temporal", ["temporal", "--dataset-a", prep / "dataset_a.ndjson",
                      "--config", cfg, "--out", root / "temporal"]),
        ("spatiotemporal", ["spatiotemporal",
                            "--dataset-b", prep / "dataset_b.ndjson",
                            "--config", cfg, "--out", root / "spatiotemporal"]),
    ]
    total = 0.0
    print(f"outputs under {root}")
    for name, argv in stages:
        took = timed_stage(name, argv)
        total += took
        print(f"{name:<16}{took:7.2f} s")
    manifest = json.loads((synth / "manifest.json").read_text())
    rows = {o["name"]: o.get("rows") for o in manifest["outputs"]}
    print(f"{'total':<16}{total:7.2f} s for {rows['records.csv']} raw records")


if __name__ == "__main__":
    main()
