"""File formats and run provenance.

Record tables travel as plain CSV, the two cleaned datasets as NDJSON with
a header line, and derived tables as CSV or JSON.  Every output carries the
short run key of the stage that produced it (a `manifest_hash` column or
field), and a manifest JSON per stage lists the outputs with row counts and
content digests.  Nothing here embeds wall-clock time, so reruns with the
same inputs are byte-identical.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .core import RSSI_PLAUSIBLE
from .errors import MalformedRecord

log = logging.getLogger(__name__)

TOOL_VERSION = "0.1.0"

RECORD_COLUMNS = ["mac", "t_first", "t_last", "rssi", "sniffer_id"]
DATASET_A_COLUMNS = ["mac", "t_first", "t_last", "rssi", "node"]
DATASET_B_COLUMNS = ["mac", "day", "node", "t_start", "t_end",
                     "staying_s", "missing_s", "rssi"]


# --- MAC text <-> integer, vectorized ------------------------------------------------

_HEX_LUT = np.array([f"{i:02x}" for i in range(256)])


def macs_to_text(values) -> np.ndarray:
    """uint64 MAC values to colon-separated lowercase hex."""
    v = np.asarray(values, dtype=np.uint64)
    parts = []
    for k in range(6):
        parts.append(_HEX_LUT[((v >> np.uint64(8 * (5 - k))) & np.uint64(0xFF))
                              .astype(np.int64)])
    out = parts[0]
    for p in parts[1:]:
        out = np.char.add(np.char.add(out, ":"), p)
    return out


def text_to_macs(texts) -> np.ndarray:
    """Colon-separated hex to uint64; pins the first bad row on failure."""
    ser = pd.Series(texts, dtype=object).astype(str)
    stripped = ser.str.replace(":", "", regex=False).str.lower()
    try:
        if not (stripped.str.len() == 12).all():
            raise ValueError("length")
        raw = bytes.fromhex("".join(stripped.tolist()))
    except ValueError:
        for i, (orig, s) in enumerate(zip(ser, stripped)):
            ok = len(s) == 12
            if ok:
                try:
                    bytes.fromhex(s)
                except ValueError:
                    ok = False
            if not ok:
                raise MalformedRecord(
                    f"row {i + 1}, column 'mac': {orig!r} is not a MAC address"
                ) from None
        raise
    octets = np.frombuffer(raw, dtype=np.uint8).reshape(-1, 6).astype(np.uint64)
    weights = (256 ** np.arange(5, -1, -1)).astype(np.uint64)
    return (octets * weights).sum(axis=1, dtype=np.uint64)


# --- record CSV ----------------------------------------------------------------------


def _pin_bad_value(values: pd.Series, as_type, column: str) -> None:
    for i, raw in enumerate(values):
        try:
            v = as_type(raw)
            if isinstance(v, float) and not np.isfinite(v):
                raise ValueError
        except (TypeError, ValueError):
            raise MalformedRecord(
                f"row {i + 1}, column '{column}': {raw!r} is not "
                f"a {as_type.__name__}") from None


def read_records_csv(path) -> pd.DataFrame:
    """Read raw sniffer records.

    Extra columns are ignored.  Malformed rows raise with the 1-based data
    row and offending column; records with implausible signal strength are
    kept but counted in a warning.
    """
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError:
        frame = pd.DataFrame(columns=RECORD_COLUMNS)
    missing = [c for c in RECORD_COLUMNS if c not in frame.columns]
    if missing:
        raise MalformedRecord(f"missing column(s): {', '.join(missing)}")
    frame = frame[RECORD_COLUMNS]
    if len(frame) == 0:
        out = pd.DataFrame({
            "mac": np.array([], dtype=np.uint64),
            "t_first": np.array([], dtype=np.int64),
            "t_last": np.array([], dtype=np.int64),
            "rssi": np.array([], dtype=np.float64),
            "sniffer_id": pd.Series([], dtype=object),
        })
        return out

    mac = text_to_macs(frame["mac"])
    for col in ("t_first", "t_last"):
        try:
            frame[col] = frame[col].astype(np.int64)
        except (ValueError, TypeError):
            _pin_bad_value(frame[col], int, col)
            raise
    try:
        rssi = frame["rssi"].astype(np.float64)
        if not np.isfinite(rssi).all():
            raise ValueError
    except (ValueError, TypeError):
        _pin_bad_value(frame["rssi"], float, "rssi")
        raise
    t0 = frame["t_first"].to_numpy(np.int64)
    t1 = frame["t_last"].to_numpy(np.int64)
    bad_order = np.nonzero(t1 < t0)[0]
    if bad_order.size:
        i = int(bad_order[0])
        raise MalformedRecord(
            f"row {i + 1}, column 't_last': span ends ({t1[i]}) "
            f"before it starts ({t0[i]})")
    blank = frame["sniffer_id"].str.len() == 0
    if blank.any():
        i = int(np.nonzero(blank.to_numpy())[0][0])
        raise MalformedRecord(f"row {i + 1}, column 'sniffer_id': empty")

    lo, hi = RSSI_PLAUSIBLE
    implausible = int(((rssi < lo) | (rssi > hi)).sum())
    if implausible:
        log.warning("%d record(s) with signal strength outside [%g, %g] dBm",
                    implausible, lo, hi)
    return pd.DataFrame({
        "mac": mac,
        "t_first": t0,
        "t_last": t1,
        "rssi": rssi.to_numpy(np.float64),
        "sniffer_id": frame["sniffer_id"].to_numpy(object),
    })


def write_records_csv(frame: pd.DataFrame, path, manifest_hash: str | None = None
                      ) -> None:
    out = pd.DataFrame({
        "mac": macs_to_text(frame["mac"]),
        "t_first": frame["t_first"].to_numpy(np.int64),
        "t_last": frame["t_last"].to_numpy(np.int64),
        "rssi": frame["rssi"].to_numpy(np.float64),
        "sniffer_id": frame["sniffer_id"].to_numpy(object),
    })
    if manifest_hash is not None:
        out["manifest_hash"] = manifest_hash
    out.to_csv(path, index=False)


# --- dataset NDJSON ------------------------------------------------------------------


def _write_ndjson(frame: pd.DataFrame, path, kind: str, columns: list[str],
                  manifest_hash: str | None, meta: dict) -> None:
    header = {"kind": kind, "columns": columns, "meta": meta}
    if manifest_hash is not None:
        header["manifest_hash"] = manifest_hash
    with open(path, "w") as fh:
        fh.write(json.dumps(header, sort_keys=True))
        fh.write("\n")
        cells = [frame[c].tolist() for c in columns]
        for row in zip(*cells):
            fh.write(json.dumps(list(row)))
            fh.write("\n")


def _read_ndjson(path, kind: str) -> tuple[pd.DataFrame, dict]:
    with open(path) as fh:
        first = fh.readline()
        if not first.strip():
            raise MalformedRecord("missing NDJSON header line")
        header = json.loads(first)
        if header.get("kind") != kind:
            raise MalformedRecord(
                f"expected kind {kind!r}, found {header.get('kind')!r}")
        columns = header["columns"]
        rows = [json.loads(line) for line in fh if line.strip()]
    frame = pd.DataFrame(rows, columns=columns) if rows \
        else pd.DataFrame(columns=columns)
    return frame, header


def write_dataset_a(ds, path, manifest_hash: str | None = None) -> None:
    """Cleaned per-node records of every device, one JSON row per record."""
    frame = ds.records.copy()
    frame["mac"] = macs_to_text(frame["mac"])
    frame = frame.sort_values(["mac", "t_first", "t_last", "node"],
                              kind="mergesort", ignore_index=True)
    meta = {
        "tz_offset_s": ds.tz_offset_s,
        "span_days": ds.span_days,
        "span_weeks": ds.span_weeks,
        "removed_frequent_macs": sorted(
            macs_to_text(np.array(sorted(ds.removed_frequent_macs),
                                  dtype=np.uint64)).tolist()
            if ds.removed_frequent_macs else []),
    }
    _write_ndjson(frame, path, "dataset_a", DATASET_A_COLUMNS, manifest_hash, meta)


def read_dataset_a(path):
    from .preprocess import DatasetA
    frame, header = _read_ndjson(path, "dataset_a")
    meta = header["meta"]
    out = pd.DataFrame({
        "mac": text_to_macs(frame["mac"]) if len(frame)
        else np.array([], dtype=np.uint64),
        "t_first": frame["t_first"].to_numpy(np.int64),
        "t_last": frame["t_last"].to_numpy(np.int64),
        "rssi": frame["rssi"].to_numpy(np.float64),
        "node": frame["node"].to_numpy(object),
    })
    removed = frozenset(
        int(m) for m in (text_to_macs(meta["removed_frequent_macs"])
                         if meta["removed_frequent_macs"] else []))
    return DatasetA(records=out, tz_offset_s=meta["tz_offset_s"],
                    removed_frequent_macs=removed,
                    span_days=meta["span_days"], span_weeks=meta["span_weeks"])


def write_dataset_b(ds, path, manifest_hash: str | None = None) -> None:
    """Pedestrian visit table, one JSON row per node visit."""
    frame = ds.visits.copy()
    frame["mac"] = macs_to_text(frame["mac"])
    frame = frame.sort_values(["mac", "day", "t_start", "t_end"],
                              kind="mergesort", ignore_index=True)
    meta = {"tz_offset_s": ds.tz_offset_s}
    _write_ndjson(frame, path, "dataset_b", DATASET_B_COLUMNS, manifest_hash, meta)


def read_dataset_b(path):
    from .preprocess import DatasetB
    frame, header = _read_ndjson(path, "dataset_b")
    out = pd.DataFrame({
        "mac": text_to_macs(frame["mac"]) if len(frame)
        else np.array([], dtype=np.uint64),
        "day": frame["day"].to_numpy(np.int64),
        "node": frame["node"].to_numpy(object),
        "t_start": frame["t_start"].to_numpy(np.int64),
        "t_end": frame["t_end"].to_numpy(np.int64),
        "staying_s": frame["staying_s"].to_numpy(np.int64),
        "missing_s": frame["missing_s"].to_numpy(np.int64),
        "rssi": frame["rssi"].to_numpy(np.float64),
    })
    return DatasetB(visits=out, tz_offset_s=header["meta"]["tz_offset_s"])


# --- generic outputs -----------------------------------------------------------------


def write_table_csv(frame: pd.DataFrame, path, manifest_hash: str | None = None
                    ) -> None:
    out = frame.copy()
    if manifest_hash is not None:
        out["manifest_hash"] = manifest_hash
    out.to_csv(path, index=False)


def write_json(obj: dict, path, manifest_hash: str | None = None) -> None:
    payload = dict(obj)
    if manifest_hash is not None:
        payload["manifest_hash"] = manifest_hash
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


# --- provenance ----------------------------------------------------------------------


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def stage_seed(root_seed: int, stage: str) -> int:
    """Stable per-stage sub-seed so stages draw independent streams."""
    digest = hashlib.blake2b(f"{root_seed}:{stage}".encode(), digest_size=8)
    return int.from_bytes(digest.digest(), "big")


@dataclass
class Manifest:
    """Provenance of one pipeline stage: what ran, on what, with what seed."""

    stage: str
    seed: int | None = None
    config_digest: str | None = None
    inputs: dict[str, str] = field(default_factory=dict)   # name -> sha256
    parameters: dict = field(default_factory=dict)
    outputs: list[dict] = field(default_factory=list)      # name, rows, sha256
    version: str = TOOL_VERSION

    @property
    def run_key(self) -> str:
        body = json.dumps(
            {
                "stage": self.stage,
                "version": self.version,
                "seed": self.seed,
                "config": self.config_digest,
                "inputs": dict(sorted(self.inputs.items())),
                "parameters": self.parameters,
            },
            sort_keys=True,
        )
        return hashlib.sha256(body.encode()).hexdigest()[:12]

    def add_input(self, name: str, path) -> None:
        self.inputs[name] = file_sha256(path)

    def set_config(self, config_dict: dict) -> None:
        body = json.dumps(config_dict, sort_keys=True)
        self.config_digest = hashlib.sha256(body.encode()).hexdigest()

    def add_output(self, path, rows: int | None = None) -> None:
        entry = {"name": Path(path).name, "sha256": file_sha256(path)}
        if rows is not None:
            entry["rows"] = rows
        self.outputs.append(entry)

    def save(self, path) -> None:
        payload = {
            "stage": self.stage,
            "version": self.version,
            "seed": self.seed,
            "config_digest": self.config_digest,
            "inputs": dict(sorted(self.inputs.items())),
            "parameters": self.parameters,
            "run_key": self.run_key,
            "outputs": sorted(self.outputs, key=lambda e: e["name"]),
        }
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
