"""Location-interconnection analyses over pedestrian trajectories.

Everything here consumes Dataset B style visit tables: trajectory length
statistics, per-node popularity, popularity-vs-POI-distance correlation,
the node transition matrix, agglomerative grouping of nodes with an exact
optimal leaf ordering, and zone visit-ratio histograms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .core import ClusterAssignment, EventConfig, Trajectory, haversine_m
from .errors import (
    ConfigError,
    DegenerateVariance,
    EmptyDataset,
    EmptyInput,
    InvalidK,
    MergeMonotonicityError,
    UnknownNode,
)
from .preprocess import DatasetB, trajectories_to_visits_frame

LENGTH_BUCKETS = ["1", "2", "3", "4", "5", "6+"]


def _as_visits(ds) -> pd.DataFrame:
    if isinstance(ds, DatasetB):
        return ds.visits
    if isinstance(ds, pd.DataFrame):
        return ds
    return trajectories_to_visits_frame(ds)


def _trajectory_table(visits: pd.DataFrame) -> pd.DataFrame:
    """One row per (mac, day): length, first node, last node."""
    ordered = visits.sort_values(["mac", "day", "t_start", "t_end", "node"],
                                 kind="mergesort", ignore_index=True)
    g = ordered.groupby(["mac", "day"], sort=False)
    out = g.agg(length=("node", "size"), first_node=("node", "first"),
                last_node=("node", "last"))
    return out.reset_index()


# --- trajectory length statistics -------------------------------------------


@dataclass(frozen=True, slots=True)
class SplitTableRow:
    bucket: str       # one of LENGTH_BUCKETS
    category: str     # "round", "not_round", or "n/a" for lengths < 3
    count: int
    share: float


def trajectory_split_table(ds) -> list[SplitTableRow]:
    """Trajectory shares by length bucket and round-trip flag.

    Lengths of one and two cannot close a loop, so their flag is 'n/a'.
    Shares are fractions of all trajectories and sum to one.
    """
    visits = _as_visits(ds)
    if len(visits) == 0:
        raise EmptyDataset("no trajectories to tabulate")
    table = _trajectory_table(visits)
    total = len(table)
    length = table["length"].to_numpy()
    is_round = (length >= 3) & (table["first_node"] == table["last_node"]).to_numpy()

    rows = []
    for bucket in LENGTH_BUCKETS:
        if bucket == "6+":
            in_bucket = length >= 6
        else:
            in_bucket = length == int(bucket)
        if bucket in ("1", "2"):
            rows.append(SplitTableRow(bucket, "n/a", int(in_bucket.sum()),
                                      in_bucket.sum() / total))
        else:
            for category, mask in (("round", in_bucket & is_round),
                                   ("not_round", in_bucket & ~is_round)):
                rows.append(SplitTableRow(bucket, category, int(mask.sum()),
                                          mask.sum() / total))
    return rows


# --- node popularity ---------------------------------------------------------


@dataclass(frozen=True, slots=True)
class NodePopularity:
    pass_count: int
    pass_ratio: float
    single_count: int
    single_ratio: float | None  # undefined for nodes nothing passed


def node_popularity(ds, node_ids: list[str]) -> dict[str, NodePopularity]:
    """Share of trajectory-node incidences per node, plus the fraction of
    its visitors that stopped there and nowhere else."""
    visits = _as_visits(ds)
    if len(visits) == 0:
        raise EmptyDataset("no trajectories to rank")
    _check_nodes(visits, node_ids)

    incidences = visits[["mac", "day", "node"]].drop_duplicates()
    pass_counts = incidences.groupby("node", sort=False).size().to_dict()
    table = _trajectory_table(visits)
    singles = table.loc[table["length"] == 1]
    single_counts = singles.groupby("first_node", sort=False).size().to_dict()

    denom = sum(pass_counts.get(n, 0) for n in node_ids)
    out = {}
    for n in node_ids:
        pc = int(pass_counts.get(n, 0))
        sc = int(single_counts.get(n, 0))
        out[n] = NodePopularity(
            pass_count=pc,
            pass_ratio=pc / denom if denom else 0.0,
            single_count=sc,
            single_ratio=sc / pc if pc else None,
        )
    return out


# --- popularity vs POI distance ----------------------------------------------


@dataclass
class PoiCorrelation:
    r: float
    p_value: float
    slope: float
    intercept: float
    n_nodes: int
    n_permutations: int
    distances_m: dict[str, float]
    ratios: dict[str, float]


def _pearson_parts(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float, float, float]:
    mx, my = x.mean(), y.mean()
    cov = ((x - mx) * (y - my)).mean()
    vx = ((x - mx) ** 2).mean()
    vy = ((y - my) ** 2).mean()
    return mx, my, cov, vx, vy


def poi_correlation(pass_ratios: dict[str, float], config: EventConfig,
                    n_permutations: int = 10000, seed: int = 0) -> PoiCorrelation:
    """Pearson correlation between a node's distance to its nearest point of
    interest and its popularity, with a permutation-test p-value.

    The p-value is two-sided: the fraction of label permutations whose |r|
    reaches the observed one, with the +1 smoothing that keeps it positive.
    """
    if not config.pois:
        raise ConfigError("poi_correlation needs at least one POI")
    nodes = [n for n in config.nodes if n.node_id in pass_ratios]
    if len(nodes) < 3:
        raise EmptyDataset("need at least 3 nodes with ratios")
    dist = {
        n.node_id: min(haversine_m(n.lat, n.lon, p.lat, p.lon)
                       for p in config.pois)
        for n in nodes
    }
    x = np.array([dist[n.node_id] for n in nodes], dtype=np.float64)
    y = np.array([pass_ratios[n.node_id] for n in nodes], dtype=np.float64)

    mx, my, cov, vx, vy = _pearson_parts(x, y)
    if vx == 0 or vy == 0:
        raise DegenerateVariance("constant distances or ratios")
    r = cov / math.sqrt(vx * vy)
    slope = cov / vx
    intercept = my - slope * mx

    rng = np.random.default_rng(seed)
    perms = rng.permuted(np.tile(y, (n_permutations, 1)), axis=1)
    cov_p = perms @ x / x.size - mx * my
    r_p = cov_p / math.sqrt(vx * vy)
    hits = int(np.count_nonzero(np.abs(r_p) >= abs(r)))
    p_value = (1 + hits) / (n_permutations + 1)

    return PoiCorrelation(
        r=float(r), p_value=float(p_value), slope=float(slope),
        intercept=float(intercept), n_nodes=len(nodes),
        n_permutations=n_permutations,
        distances_m={k: float(v) for k, v in dist.items()},
        ratios={n.node_id: float(pass_ratios[n.node_id]) for n in nodes},
    )


# --- transition matrix --------------------------------------------------------


@dataclass
class TransitionMatrix:
    node_ids: list[str]
    counts: np.ndarray        # (n, n) int64, diagonal structurally zero
    probs: np.ndarray         # (n, n) float64, diagonal fixed at 1
    zero_outgoing: list[int]  # row indexes with no outgoing transitions

    @property
    def n(self) -> int:
        return len(self.node_ids)

    def validate(self) -> None:
        off = self.probs - np.diag(np.diag(self.probs))
        for i in range(self.n):
            if self.probs[i, i] != 1.0:
                raise ValueError(f"diagonal must be 1, row {i}")
            s = off[i].sum()
            want = 0.0 if i in self.zero_outgoing else 1.0
            if abs(s - want) > 1e-9:
                raise ValueError(f"row {i} off-diagonal sum {s} != {want}")


def _check_nodes(visits: pd.DataFrame, node_ids: list[str]) -> None:
    seen = set(visits["node"].unique())
    unknown = seen - set(node_ids)
    if unknown:
        raise UnknownNode(f"nodes outside the configured universe: {sorted(unknown)}")


def transition_counts(ds, node_ids: list[str]) -> np.ndarray:
    """Counts of consecutive visit pairs i -> j across all trajectories."""
    visits = _as_visits(ds)
    n = len(node_ids)
    counts = np.zeros((n, n), dtype=np.int64)
    if len(visits) == 0:
        return counts
    _check_nodes(visits, node_ids)
    ordered = visits.sort_values(["mac", "day", "t_start", "t_end", "node"],
                                 kind="mergesort", ignore_index=True)
    index = {nid: i for i, nid in enumerate(node_ids)}
    codes = ordered["node"].map(index).to_numpy(np.int64)
    mac = ordered["mac"].to_numpy(np.uint64)
    dayv = ordered["day"].to_numpy(np.int64)
    same = (mac[1:] == mac[:-1]) & (dayv[1:] == dayv[:-1])
    src = codes[:-1][same]
    dst = codes[1:][same]
    np.add.at(counts, (src, dst), 1)
    return counts


def transition_matrix(ds, node_ids: list[str]) -> TransitionMatrix:
    """Row-normalized transition probabilities with the diagonal pinned to 1.

    Rows without outgoing transitions keep zero off-diagonals and are listed
    in `zero_outgoing` rather than being silently renormalized.
    """
    counts = transition_counts(ds, node_ids)
    n = len(node_ids)
    off = counts.copy()
    np.fill_diagonal(off, 0)
    out_sums = off.sum(axis=1)
    probs = np.zeros((n, n), dtype=np.float64)
    zero_rows = []
    for i in range(n):
        if out_sums[i] > 0:
            probs[i] = off[i] / out_sums[i]
        else:
            zero_rows.append(i)
        probs[i, i] = 1.0
    tm = TransitionMatrix(list(node_ids), counts, probs, zero_rows)
    tm.validate()
    return tm


# --- agglomerative node grouping ----------------------------------------------


@dataclass
class Dendrogram:
    """Full merge tree over items 0..n-1; merged clusters take ids n, n+1, ...
    in merge order, and `leaf_order` is the successive-distance-minimal
    ordering consistent with the tree."""

    n: int
    labels: list[str]
    merges: list[tuple[int, int, float]]
    leaf_order: list[int]

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "labels": list(self.labels),
            "merges": [[a, b, h] for a, b, h in self.merges],
            "leaf_order": list(self.leaf_order),
            "leaf_order_labels": [self.labels[i] for i in self.leaf_order],
        }


def pairwise_euclidean(points: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - points[None, :, :]
    return np.sqrt((diff ** 2).sum(axis=2))


def average_linkage_merges(points: np.ndarray) -> list[tuple[int, int, float]]:
    """Agglomerate by smallest mean pairwise distance.

    Ties break on the lexicographically smallest (min id, max id) pair.
    Uses the size-weighted linkage update, so each step is exact for
    average linkage.  Non-decreasing heights are asserted.
    """
    n = len(points)
    if n < 2:
        raise EmptyInput("need at least 2 items to agglomerate")
    base = pairwise_euclidean(points)
    link: dict[tuple[int, int], float] = {
        (i, j): float(base[i, j]) for i in range(n) for j in range(i + 1, n)
    }
    sizes = {i: 1 for i in range(n)}
    merges: list[tuple[int, int, float]] = []
    prev_h = -math.inf
    for step in range(n - 1):
        best_pair = None
        best_d = math.inf
        for pair, d in link.items():
            if d < best_d or (d == best_d and pair < best_pair):
                best_d, best_pair = d, pair
        a, b = best_pair
        if best_d < prev_h - 1e-12:
            raise MergeMonotonicityError(
                f"height decreased: {best_d} after {prev_h}")
        prev_h = best_d
        new_id = n + step
        sa, sb = sizes[a], sizes[b]
        merges.append((a, b, best_d))

        others = [c for c in sizes if c not in (a, b)]
        for c in others:
            da = link[(min(a, c), max(a, c))]
            db = link[(min(b, c), max(b, c))]
            link[(c, new_id)] = (sa * da + sb * db) / (sa + sb)
        for pair in [p for p in link if a in p or b in p]:
            del link[pair]
        del sizes[a], sizes[b]
        sizes[new_id] = sa + sb
    return merges


def _cluster_leaves(n: int, merges) -> dict[int, list[int]]:
    leaves = {i: [i] for i in range(n)}
    for step, (a, b, _h) in enumerate(merges):
        leaves[n + step] = leaves[a] + leaves[b]
    return leaves


def optimal_leaf_order(merges, dist: np.ndarray) -> list[int]:
    """Exact ordering minimizing the summed distance between successive
    leaves, over all subtree flips.  Dynamic program over (cluster,
    leftmost leaf, rightmost leaf); fine for the n <= 20 regime."""
    n = dist.shape[0]
    if n == 1:
        return [0]
    leaves = _cluster_leaves(n, merges)

    # cost[v][(l, r)] and the (m, k, left_child) choice realizing it
    cost: dict[int, dict[tuple[int, int], float]] = {
        i: {(i, i): 0.0} for i in range(n)
    }
    choice: dict[tuple[int, int, int], tuple[int, int, int]] = {}

    for step, (a, b, _h) in enumerate(merges):
        v = n + step
        table: dict[tuple[int, int], float] = {}
        for left, right in ((a, b), (b, a)):
            lv, rv = leaves[left], leaves[right]
            for l in lv:
                for r in rv:
                    best = math.inf
                    best_mk = None
                    for m in lv:
                        cl = cost[left].get((l, m))
                        if cl is None:
                            continue
                        for k in rv:
                            cr = cost[right].get((k, r))
                            if cr is None:
                                continue
                            c = cl + dist[m, k] + cr
                            if c < best:
                                best = c
                                best_mk = (m, k)
                    if best_mk is not None:
                        table[(l, r)] = best
                        choice[(v, l, r)] = (best_mk[0], best_mk[1], left)
        cost[v] = table

    root = n + len(merges) - 1
    (l, r) = min(cost[root], key=lambda lr: (cost[root][lr], lr))

    def rebuild(v: int, l: int, r: int) -> list[int]:
        if v < n:
            return [l]
        m, k, left = choice[(v, l, r)]
        step = v - n
        a, b = merges[step][0], merges[step][1]
        right = b if left == a else a
        return rebuild(left, l, m) + rebuild(right, k, r)

    return rebuild(root, l, r)


def hac_interconnections(tm: TransitionMatrix) -> Dendrogram:
    """Group nodes by the similarity of their transition-probability rows
    (diagonal included)."""
    points = tm.probs.astype(np.float64)
    merges = average_linkage_merges(points)
    order = optimal_leaf_order(merges, pairwise_euclidean(points))
    return Dendrogram(n=tm.n, labels=list(tm.node_ids), merges=merges,
                      leaf_order=order)


def cut_dendrogram(dend: Dendrogram, k: int) -> ClusterAssignment:
    """Flat labels from the k-cluster cut; clusters are numbered by their
    smallest member index."""
    if not 1 <= k <= dend.n:
        raise InvalidK(f"k={k} outside [1, {dend.n}]")
    members = {i: [i] for i in range(dend.n)}
    for step in range(dend.n - k):
        a, b, _h = dend.merges[step]
        members[dend.n + step] = members.pop(a) + members.pop(b)
    groups = sorted((min(v), sorted(v)) for v in members.values())
    labels = np.empty(dend.n, dtype=np.int64)
    for label, (_mn, group) in enumerate(groups):
        for i in group:
            labels[i] = label
    out = ClusterAssignment(labels=labels, k=k)
    out.validate()
    return out


# --- zone visit ratios ----------------------------------------------------------


@dataclass(frozen=True, slots=True)
class ZoneRatioRow:
    group: str    # "short" (length <= 3) or "long"
    level: float  # ratio rounded to the nearest tenth, half away from zero
    count: int
    share: float  # fraction of all trajectories


RATIO_LEVELS = [round(i / 10, 1) for i in range(11)]


def zone_ratio_distribution(ds, zones: dict[str, str]) -> list[ZoneRatioRow]:
    """Distribution of per-trajectory Zone-I visit fractions, split into
    short (length <= 3) and long trajectories."""
    visits = _as_visits(ds)
    if len(visits) == 0:
        raise EmptyDataset("no trajectories to histogram")
    unknown = set(visits["node"].unique()) - set(zones)
    if unknown:
        raise UnknownNode(f"nodes without a zone: {sorted(unknown)}")

    work = visits[["mac", "day"]].copy()
    work["zone1"] = (visits["node"].map(zones) == "I").astype(np.int64)
    g = work.groupby(["mac", "day"], sort=False)["zone1"]
    z1 = g.sum().to_numpy(np.float64)
    length = g.size().to_numpy(np.float64)
    ratio = z1 / length
    level = np.floor(ratio * 10 + 0.5) / 10  # deterministic half-up
    short = length <= 3

    total = length.size
    rows = []
    for group, mask in (("short", short), ("long", ~short)):
        for lv in RATIO_LEVELS:
            c = int(np.count_nonzero(mask & (level == lv)))
            rows.append(ZoneRatioRow(group, lv, c, c / total))
    return rows
