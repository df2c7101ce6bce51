"""Crowd behavior analytics from passive WiFi probe-request records.

The pipeline turns per-sniffer detection records into cleaned per-node
datasets, walking trajectories, node interconnections, temporal visit
patterns, and time-resolved flow directions, with a synthetic generator
that plants known ground truth for validation.
"""

from .core import (
    ClusterAssignment,
    EventConfig,
    MacAddress,
    MacKind,
    NodeSite,
    NodeVisit,
    Poi,
    ProbeRecord,
    Trajectory,
    classify_mac,
    format_clock,
    haversine_m,
    parse_clock,
)
from .errors import ProbeflowError
from .preprocess import (
    DatasetA,
    DatasetB,
    aggregate_by_node,
    extract_trajectories,
    filter_frequent_devices,
    filter_non_pedestrians,
    preprocess_frame,
    resolve_conflicts,
    split_global_local,
    vendor_share,
)
from .spatial import (
    cut_dendrogram,
    hac_interconnections,
    node_popularity,
    poi_correlation,
    trajectory_split_table,
    transition_matrix,
    zone_ratio_distribution,
)
from .spatiotemporal import (
    direction_ratios,
    duration_vs_length,
    flow_orientation,
    flow_snapshots,
    period_transition_counts,
)
from .synth import GroundTruth, SynthSpec, demo_spec, generate
from .temporal import (
    build_count_grid,
    kmeans,
    kshape,
    minmax_normalize,
    node_count_curves,
    sbd,
    select_k,
    silhouette,
    znormalize,
)

__version__ = "0.1.0"

__all__ = [
    "ClusterAssignment", "EventConfig", "MacAddress", "MacKind", "NodeSite",
    "NodeVisit", "Poi", "ProbeRecord", "Trajectory", "classify_mac",
    "format_clock", "haversine_m", "parse_clock", "ProbeflowError",
    "DatasetA", "DatasetB", "aggregate_by_node", "extract_trajectories",
    "filter_frequent_devices", "filter_non_pedestrians", "preprocess_frame",
    "resolve_conflicts", "split_global_local", "vendor_share",
    "cut_dendrogram", "hac_interconnections", "node_popularity",
    "poi_correlation", "trajectory_split_table", "transition_matrix",
    "zone_ratio_distribution", "direction_ratios", "duration_vs_length",
    "flow_orientation", "flow_snapshots", "period_transition_counts",
    "GroundTruth", "SynthSpec", "demo_spec", "generate",
    "build_count_grid", "kmeans", "kshape", "minmax_normalize",
    "node_count_curves", "sbd", "select_k", "silhouette", "znormalize",
    "__version__",
]
