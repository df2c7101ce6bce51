import numpy as np
import pandas as pd
import pytest

from probeflow.core import EventConfig, NodeSite, Poi


def line_config(n_nodes=4, **overrides):
    """n nodes on a straight lat/lon line, two sniffers each."""
    nodes = [
        NodeSite(f"n{i + 1}", 10.0 + 0.001 * i, 20.0 + 0.001 * i,
                 (f"n{i + 1}a", f"n{i + 1}b"))
        for i in range(n_nodes)
    ]
    return EventConfig(nodes=nodes, **overrides)


def records_frame(rows):
    """rows: (mac, t_first, t_last, rssi, source)."""
    cols = list(zip(*rows)) if rows else [[], [], [], [], []]
    return pd.DataFrame(
        {
            "mac": np.array(cols[0], dtype=np.uint64),
            "t_first": np.array(cols[1], dtype=np.int64),
            "t_last": np.array(cols[2], dtype=np.int64),
            "rssi": np.array(cols[3], dtype=np.float64),
            "source": list(cols[4]),
        }
    )


def node_records_frame(rows):
    """rows: (mac, t_first, t_last, rssi, node) already aggregated."""
    return records_frame(rows).rename(columns={"source": "node"})


def visits_frame(rows):
    """rows: (mac, day, node, t_start, t_end, staying_s, missing_s, rssi)."""
    cols = list(zip(*rows)) if rows else [[]] * 8
    return pd.DataFrame(
        {
            "mac": np.array(cols[0], dtype=np.uint64),
            "day": np.array(cols[1], dtype=np.int64),
            "node": list(cols[2]),
            "t_start": np.array(cols[3], dtype=np.int64),
            "t_end": np.array(cols[4], dtype=np.int64),
            "staying_s": np.array(cols[5], dtype=np.int64),
            "missing_s": np.array(cols[6], dtype=np.int64),
            "rssi": np.array(cols[7], dtype=np.float64),
        }
    )


@pytest.fixture
def cfg4():
    return line_config(4)


@pytest.fixture
def cfg2():
    return line_config(2)


@pytest.fixture
def cfg_poi():
    """Four nodes with one POI at the first node's position."""
    nodes = [
        NodeSite(f"n{i + 1}", 10.0 + 0.001 * i, 20.0, (f"n{i + 1}a", f"n{i + 1}b"))
        for i in range(4)
    ]
    return EventConfig(nodes=nodes, pois=[Poi("gate", 10.0, 20.0)])
