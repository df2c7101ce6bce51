"""Temporal crowd patterns: interval count grids, day clustering by count
curves, and shape-based clustering of per-node curves.

Clustering quality throughout is the mean Silhouette value; day clustering
uses Euclidean distance on min-max-normalized grids, node-curve clustering
uses the shift-invariant shape-based distance on z-scored curves.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .core import ClusterAssignment, EventConfig, day_to_date, format_clock
from .errors import (
    ConstantGrid,
    EmptyInput,
    InvalidK,
    SingleCluster,
    UnknownNode,
    ZeroNorm,
    ZeroVariance,
)
from .preprocess import DatasetA

DEFAULT_RESTARTS = 50


# --- count grids -------------------------------------------------------------


@dataclass
class CountGrid:
    """Unique-device counts per (day, interval) and (day, interval, node)."""

    days: list[int]                 # event-local day indexes, ascending
    node_ids: list[str]
    interval_minutes: int
    window: tuple[int, int]         # seconds of day
    overall: np.ndarray             # (D, T) int64
    per_node: np.ndarray            # (D, T, N) int64

    @property
    def n_intervals(self) -> int:
        return self.overall.shape[1]

    def dates(self) -> list:
        return [day_to_date(d) for d in self.days]

    def interval_label(self, t: int) -> str:
        return format_clock(self.window[0] + t * self.interval_minutes * 60)


def build_count_grid(ds: DatasetA, config: EventConfig) -> CountGrid:
    """Count distinct MACs whose record spans touch each interval.

    A record belongs to the day its detection started on; spans running past
    midnight stay with that day.  A record counts in every interval its
    closed [t_first, t_last] span overlaps.
    """
    frame = ds.records
    node_ids = config.node_ids
    win0, win1 = config.daily_window
    step = config.interval_minutes * 60
    n_t = config.n_intervals
    n_n = len(node_ids)

    if len(frame) == 0:
        return CountGrid([], node_ids, config.interval_minutes,
                         (win0, win1), np.zeros((0, n_t), dtype=np.int64),
                         np.zeros((0, n_t, n_n), dtype=np.int64))
    unknown = set(frame["node"].unique()) - set(node_ids)
    if unknown:
        raise UnknownNode(f"nodes outside the configured universe: {sorted(unknown)}")

    tz = config.tz_offset_s
    t0 = frame["t_first"].to_numpy(np.int64)
    t1 = frame["t_last"].to_numpy(np.int64)
    day = (t0 + tz) // 86400
    day_base = day * 86400 - tz
    sod0 = t0 - day_base
    sod1 = t1 - day_base  # may exceed 24h for spans crossing midnight

    inside = (sod1 >= win0) & (sod0 < win1)
    if not inside.any():
        return CountGrid([], node_ids, config.interval_minutes,
                         (win0, win1), np.zeros((0, n_t), dtype=np.int64),
                         np.zeros((0, n_t, n_n), dtype=np.int64))
    day = day[inside]
    i0 = np.clip((sod0[inside] - win0) // step, 0, n_t - 1).astype(np.int64)
    i1 = np.clip((sod1[inside] - win0) // step, 0, n_t - 1).astype(np.int64)
    mac = frame["mac"].to_numpy(np.uint64)[inside]
    node_index = {nid: i for i, nid in enumerate(node_ids)}
    node = frame["node"].map(node_index).to_numpy(np.int64)[inside]

    reps = (i1 - i0 + 1).astype(np.int64)
    total = int(reps.sum())
    offsets = np.repeat(np.cumsum(reps) - reps, reps)
    interval_e = np.arange(total, dtype=np.int64) - offsets + np.repeat(i0, reps)
    expanded = pd.DataFrame(
        {
            "day": np.repeat(day, reps),
            "interval": interval_e,
            "node": np.repeat(node, reps),
            "mac": np.repeat(mac, reps),
        }
    )

    days = np.unique(day)
    day_pos = {d: i for i, d in enumerate(days.tolist())}
    per_node = np.zeros((days.size, n_t, n_n), dtype=np.int64)
    overall = np.zeros((days.size, n_t), dtype=np.int64)

    uniq_n = expanded.drop_duplicates(["day", "interval", "node", "mac"])
    np.add.at(
        per_node,
        (uniq_n["day"].map(day_pos).to_numpy(np.int64),
         uniq_n["interval"].to_numpy(np.int64),
         uniq_n["node"].to_numpy(np.int64)),
        1,
    )
    uniq_o = expanded.drop_duplicates(["day", "interval", "mac"])
    np.add.at(
        overall,
        (uniq_o["day"].map(day_pos).to_numpy(np.int64),
         uniq_o["interval"].to_numpy(np.int64)),
        1,
    )
    return CountGrid(days.tolist(), node_ids, config.interval_minutes,
                     (win0, win1), overall, per_node)


def minmax_normalize(grid: np.ndarray) -> np.ndarray:
    """Scale by the global extrema of the whole grid, not per row."""
    arr = np.asarray(grid, dtype=np.float64)
    lo = arr.min()
    hi = arr.max()
    if hi == lo:
        raise ConstantGrid(f"all cells equal {lo}")
    return (arr - lo) / (hi - lo)


def znormalize(v) -> np.ndarray:
    """Zero mean, unit population standard deviation."""
    arr = np.asarray(v, dtype=np.float64)
    mu = arr.mean()
    sigma = arr.std()
    if sigma == 0:
        raise ZeroVariance("constant vector")
    return (arr - mu) / sigma


# --- Silhouette ---------------------------------------------------------------


def pairwise_euclidean(points: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - points[None, :, :]
    return np.sqrt((diff ** 2).sum(axis=2))


def silhouette_from_distances(dist: np.ndarray, labels: np.ndarray
                              ) -> tuple[float, np.ndarray]:
    labels = np.asarray(labels)
    ids = np.unique(labels)
    if ids.size < 2:
        raise SingleCluster("need at least two clusters")
    n = dist.shape[0]
    masks = {c: labels == c for c in ids}
    sizes = {c: int(m.sum()) for c, m in masks.items()}
    scores = np.zeros(n, dtype=np.float64)
    for i in range(n):
        own = labels[i]
        if sizes[own] == 1:
            scores[i] = 0.0  # lone members are neutral by definition
            continue
        d_in = dist[i, masks[own]].sum() / (sizes[own] - 1)
        d_ex = min(dist[i, masks[c]].mean() for c in ids if c != own)
        denom = max(d_in, d_ex)
        scores[i] = 0.0 if denom == 0 else (d_ex - d_in) / denom
    return float(scores.mean()), scores


def silhouette(points: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean and per-point Silhouette under Euclidean distance."""
    pts = np.asarray(points, dtype=np.float64)
    return silhouette_from_distances(pairwise_euclidean(pts), labels)


# --- k-means -------------------------------------------------------------------


def lloyd_iterations(points: np.ndarray, centroids: np.ndarray):
    """Yield (labels, centroids, objective) per iteration until the labels
    stop changing.  Emptied clusters are re-seeded with the point farthest
    from its assigned centroid, which keeps the objective non-increasing."""
    pts = np.asarray(points, dtype=np.float64)
    cent = np.array(centroids, dtype=np.float64, copy=True)
    k = cent.shape[0]
    n = pts.shape[0]
    labels = None
    while True:
        d2 = ((pts[:, None, :] - cent[None, :, :]) ** 2).sum(axis=2)
        new_labels = d2.argmin(axis=1)
        guard = 0
        while guard < 2 * k:
            present = np.unique(new_labels)
            empty = sorted(set(range(k)) - set(present.tolist()))
            if not empty:
                break
            c = empty[0]
            worst = int(np.argmax(d2[np.arange(n), new_labels]))
            cent[c] = pts[worst]
            d2[:, c] = ((pts - cent[c]) ** 2).sum(axis=1)
            new_labels = d2.argmin(axis=1)
            guard += 1
        objective = float(d2[np.arange(n), new_labels].sum())
        converged = labels is not None and np.array_equal(labels, new_labels)
        labels = new_labels
        for c in range(k):
            members = pts[labels == c]
            if len(members):
                cent[c] = members.mean(axis=0)
        yield labels.copy(), cent.copy(), objective
        if converged:
            return


def kmeans(points, k: int, restarts: int = DEFAULT_RESTARTS, seed=0,
           max_iter: int = 300) -> ClusterAssignment:
    """Lloyd k-means, restarted `restarts` times from uniformly drawn
    distinct points; the restart with the best mean Silhouette wins."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] == 0:
        raise EmptyInput("no points to cluster")
    n = pts.shape[0]
    if not 1 <= k <= n:
        raise InvalidK(f"k={k} outside [1, {n}]")
    if np.unique(pts, axis=0).shape[0] < k:
        raise InvalidK(f"fewer than k={k} distinct points")

    if k == 1:
        labels = np.zeros(n, dtype=np.int64)
        return ClusterAssignment(labels, 1, pts.mean(axis=0, keepdims=True), None)

    rng = np.random.default_rng(seed)
    best: ClusterAssignment | None = None
    for _trial in range(restarts):
        init = pts[rng.choice(n, size=k, replace=False)]
        labels = cent = None
        for labels, cent, _obj in itertools.islice(
                lloyd_iterations(pts, init), max_iter):
            pass
        quality, _scores = silhouette(pts, labels)
        if best is None or quality > best.quality:
            best = ClusterAssignment(labels.astype(np.int64), k, cent, quality)
    best.validate()
    return best


def select_k(points, k_range, restarts: int = DEFAULT_RESTARTS, seed: int = 0
             ) -> tuple[int, list[tuple[int, float]]]:
    """Mean-Silhouette curve over candidate k; best k wins, ties to the
    smallest candidate."""
    ks = sorted(set(int(k) for k in k_range))
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] == 0:
        raise EmptyInput("no points to cluster")
    if not ks or ks[0] < 2 or ks[-1] > pts.shape[0] - 1:
        raise InvalidK(f"candidate range {ks} infeasible for {pts.shape[0]} points")
    curve = []
    for k in ks:
        result = kmeans(pts, k, restarts=restarts, seed=[seed, k])
        curve.append((k, float(result.quality)))
    k_star = max(curve, key=lambda kv: (kv[1], -kv[0]))[0]
    return k_star, curve


# --- shape-based distance -------------------------------------------------------


def sbd(x, y) -> tuple[float, int]:
    """Shift-invariant distance in [0, 2] plus the aligning shift.

    The shift maximizes the zero-padded cross-correlation normalized by the
    two vector norms; ties prefer the smallest magnitude, then the negative
    shift.  Positive shift means `y` delayed matches `x`.
    """
    xv = np.asarray(x, dtype=np.float64)
    yv = np.asarray(y, dtype=np.float64)
    if xv.shape != yv.shape or xv.ndim != 1 or xv.size == 0:
        raise ValueError("sbd needs two equal-length 1-d vectors")
    m = xv.size
    nx = math.sqrt(float(xv @ xv))
    ny = math.sqrt(float(yv @ yv))
    if nx == 0 or ny == 0:
        raise ZeroNorm("all-zero vector has no shape")

    cc = np.correlate(xv, yv, mode="full")  # index s + m - 1 holds shift s
    denom = nx * ny
    best_val = -math.inf
    best_shift = 0
    for a in range(m + 1):
        for s in ((0,) if a == 0 else (-a, a)):
            val = 0.0 if abs(s) == m else float(cc[s + m - 1]) / denom
            if val > best_val:
                best_val = val
                best_shift = s
    dist = 1.0 - best_val
    return min(max(dist, 0.0), 2.0), best_shift


def _shift_fill(y: np.ndarray, s: int) -> np.ndarray:
    """Delay by s (advance when negative), zero-filling the vacated end."""
    out = np.zeros_like(y)
    m = y.size
    if s >= 0:
        out[s:] = y[: m - s]
    else:
        out[: m + s] = y[-s:]
    return out


_POWER_TOL = 1e-8
_POWER_MAX_ITER = 5000


def _principal_eigenvector(mat: np.ndarray) -> np.ndarray:
    """Power iteration from a fixed start vector; `mat` is PSD here so the
    iterate converges without sign flips."""
    m = mat.shape[0]
    v = np.arange(1, m + 1, dtype=np.float64)
    v /= np.linalg.norm(v)
    for _ in range(_POWER_MAX_ITER):
        w = mat @ v
        norm = np.linalg.norm(w)
        if norm == 0:
            return v
        w /= norm
        if np.linalg.norm(w - v) < _POWER_TOL:
            return w
        v = w
    return v


def _shape_extract(members: np.ndarray, ref: np.ndarray) -> np.ndarray:
    """Centroid update: align members to the reference at their best shift,
    take the principal direction of the centered aligned scatter, z-score
    it, and orient it along the member mean."""
    m = ref.size
    aligned = np.empty_like(members)
    for i, y in enumerate(members):
        _d, s = sbd(ref, y)
        aligned[i] = _shift_fill(y, s)
    scatter = aligned.T @ aligned
    q = np.eye(m) - np.full((m, m), 1.0 / m)
    centered = q @ scatter @ q
    v = _principal_eigenvector(centered)
    try:
        mu = znormalize(v)
    except ZeroVariance:
        return ref.copy()
    if float(mu @ aligned.mean(axis=0)) < 0:
        mu = -mu
    return mu


def _kshape_once(X: np.ndarray, k: int, rng: np.random.Generator,
                 max_iter: int) -> tuple[np.ndarray, np.ndarray]:
    """One k-shape run from a random choice of k distinct starting curves."""
    n = X.shape[0]
    centroids = X[rng.choice(n, size=k, replace=False)].copy()
    labels = None
    for _it in range(max_iter):
        dist = np.empty((n, k), dtype=np.float64)
        for c in range(k):
            for i in range(n):
                dist[i, c] = sbd(centroids[c], X[i])[0]
        new_labels = dist.argmin(axis=1)
        guard = 0
        while guard < 2 * k:
            empty = sorted(set(range(k)) - set(np.unique(new_labels).tolist()))
            if not empty:
                break
            c = empty[0]
            worst = int(np.argmax(dist[np.arange(n), new_labels]))
            centroids[c] = X[worst]
            for i in range(n):
                dist[i, c] = sbd(centroids[c], X[i])[0]
            new_labels = dist.argmin(axis=1)
            guard += 1
        if labels is not None and np.array_equal(labels, new_labels):
            break
        labels = new_labels
        for c in range(k):
            members = X[labels == c]
            if len(members):
                centroids[c] = _shape_extract(members, centroids[c])
    return labels, centroids


def kshape(series, k: int, restarts: int = DEFAULT_RESTARTS, seed=0,
           max_iter: int = 100) -> ClusterAssignment:
    """Cluster z-scored curves by shape: assign to the nearest centroid
    under the shift-invariant distance, then re-extract each centroid from
    its members.  Emptied clusters are re-seeded with the worst-fit curve.

    A single run can settle into a mixed local optimum, so the whole loop
    is restarted `restarts` times and the best mean Silhouette (under the
    same distance) wins."""
    X = np.asarray(series, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise EmptyInput("no series to cluster")
    n, m = X.shape
    if not 1 <= k <= n:
        raise InvalidK(f"k={k} outside [1, {n}]")
    norms = np.sqrt((X ** 2).sum(axis=1))
    if (norms == 0).any():
        raise ZeroNorm("series with zero norm cannot be clustered by shape")

    rng = np.random.default_rng(seed)
    if k == 1:
        labels, centroids = _kshape_once(X, 1, rng, max_iter)
        out = ClusterAssignment(labels.astype(np.int64), 1, centroids, None)
        out.validate()
        return out

    full = np.zeros((n, n), dtype=np.float64)
    for i in range(n):
        for j in range(i + 1, n):
            d = sbd(X[i], X[j])[0]
            full[i, j] = full[j, i] = d
    best: ClusterAssignment | None = None
    for _trial in range(restarts):
        labels, centroids = _kshape_once(X, k, rng, max_iter)
        quality, _scores = silhouette_from_distances(full, labels)
        if best is None or quality > best.quality:
            best = ClusterAssignment(labels.astype(np.int64), k, centroids, quality)
    best.validate()
    return best


# --- per-node count curves -------------------------------------------------------


def node_count_curves(grid: CountGrid, day_cluster, clock_range: tuple[int, int]
                      ) -> dict[str, np.ndarray]:
    """Average each node's interval counts over the chosen days, z-score the
    full curve, slice the clock range, and z-score again."""
    wanted = sorted(int(d) for d in day_cluster)
    pos = {d: i for i, d in enumerate(grid.days)}
    missing = [d for d in wanted if d not in pos]
    if missing:
        raise ValueError(f"days not in grid: {missing}")
    if not wanted:
        raise ValueError("day cluster is empty")

    win0, _win1 = grid.window
    step = grid.interval_minutes * 60
    a_sod, b_sod = clock_range
    if (a_sod - win0) % step or (b_sod - win0) % step:
        raise ValueError("clock range must align to interval boundaries")
    a = (a_sod - win0) // step
    b = (b_sod - win0) // step
    if not 0 <= a < b <= grid.n_intervals:
        raise ValueError(f"clock range {clock_range} outside the daily window")

    rows = [pos[d] for d in wanted]
    avg = grid.per_node[rows].mean(axis=0)  # (T, N)
    out = {}
    for j, node in enumerate(grid.node_ids):
        try:
            full = znormalize(avg[:, j])
            out[node] = znormalize(full[a:b])
        except ZeroVariance:
            raise ZeroVariance(f"node {node}: flat count curve") from None
    return out
