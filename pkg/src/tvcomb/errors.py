"""Exception hierarchy.

Every error carries a short ``kind`` tag so the command line front end can
emit machine-readable failure records.
"""
from __future__ import annotations


class TvcError(Exception):
    kind = "domain"

    def __init__(self, message: str, **location):
        super().__init__(message)
        self.location = {k: v for k, v in location.items() if v is not None}

    def to_dict(self) -> dict:
        return {"kind": self.kind, "message": str(self), "location": self.location}


class SchemaError(TvcError):
    kind = "schema"


class ParseError(TvcError):
    kind = "parse"


class InsufficientDataError(TvcError):
    kind = "insufficient_data"


class DegenerateScaleError(TvcError):
    kind = "degenerate_scale"


class DimensionError(TvcError):
    kind = "dimension"


class WindowTooSmallError(TvcError):
    kind = "window_too_small"


class SingularDesignError(TvcError):
    kind = "singular_design"

    def __init__(self, message: str, t: int | None = None, h: float | None = None):
        super().__init__(message, t=t, h=h)
        self.t = t
        self.h = h


class NoAdmissibleBandwidthError(TvcError):
    kind = "no_admissible_bandwidth"


class UndefinedOptimumError(TvcError):
    kind = "undefined_optimum"


class ConvergenceError(TvcError):
    kind = "convergence"


class DegenerateGroupError(TvcError):
    kind = "degenerate_group"


class ConfigurationError(TvcError):
    kind = "configuration"


class DegenerateVarianceError(TvcError):
    kind = "degenerate_variance"


class EstimationError(TvcError):
    kind = "estimation"


class ReplicationFailureError(TvcError):
    kind = "replication_failure"


class IoError(TvcError):
    kind = "io"
