"""Exception types raised across the pipeline.

Every error that signals bad input data (as opposed to a bug) derives from
ProbeflowError so the CLI can map it onto a single exit code.
"""

from __future__ import annotations


class ProbeflowError(Exception):
    """Base class for all data and configuration errors."""


class ConfigError(ProbeflowError):
    """Event configuration is internally inconsistent."""


class UnknownSniffer(ProbeflowError):
    """A record names a source that no configured node owns."""


class UnknownNode(ProbeflowError):
    """A node id is absent from the configured node universe."""


class EmptyDataset(ProbeflowError):
    """An analysis step received a dataset with no usable rows."""


class EmptyInput(ProbeflowError):
    """A clustering routine received no points."""


class InvalidK(ProbeflowError):
    """Requested cluster count is infeasible for the given points."""


class SingleCluster(ProbeflowError):
    """Silhouette needs at least two non-empty clusters."""


class DegenerateVariance(ProbeflowError):
    """Correlation is undefined because one variable is constant."""


class ZeroVariance(ProbeflowError):
    """z-normalization of a constant vector was requested."""


class ZeroNorm(ProbeflowError):
    """Shape-based distance is undefined for an all-zero vector."""


class ConstantGrid(ProbeflowError):
    """Min-max normalization of a constant count grid was requested."""


class InvalidSpec(ProbeflowError):
    """Generator spec failed validation; message carries the field path."""

    def __init__(self, field: str, reason: str):
        self.field = field
        self.reason = reason
        super().__init__(f"{field}: {reason}")


class MalformedRecord(ProbeflowError):
    """An input row cannot be parsed; message pins the row and column."""


class MergeMonotonicityError(ProbeflowError):
    """Agglomerative merge heights decreased, which average linkage forbids."""
