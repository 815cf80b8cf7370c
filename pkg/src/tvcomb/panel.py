"""Forecast panels, CSV ingestion and whole-sample standardization.

Alignment convention: row ``t`` of the forecast matrix holds the forecasts
made at time ``t`` for the target at ``t + 1``.  A panel with ``T`` forecast
rows therefore carries ``T + 1`` target values, and the pair
``(f_t, y_{t+1})`` is referred to as pair ``t`` (1-based) throughout the
package.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    DegenerateScaleError,
    DimensionError,
    InsufficientDataError,
    ParseError,
    SchemaError,
)

__all__ = [
    "ForecastPanel",
    "Standardizer",
    "load_csv",
    "standardize",
    "destandardize_weights",
]


@dataclass(frozen=True)
class ForecastPanel:
    """Target series plus the matrix of candidate forecasts.

    Parameters
    ----------
    y : (T + 1,) array
        Targets ``y_1 ... y_{T+1}``.
    F : (T, p) array
        Row ``t`` holds the forecasts of ``y_{t+1}``.
    labels : sequence of str, optional
        Forecast names, defaults to ``f1 ... fp``.
    time_index : sequence of str, optional
        Labels for the ``T + 1`` time points.
    """

    y: np.ndarray
    F: np.ndarray
    labels: tuple = ()
    time_index: tuple | None = None

    def __post_init__(self):
        y = np.array(self.y, dtype=float).ravel()
        F = np.array(self.F, dtype=float)
        if F.ndim == 1:
            F = F[:, None]
        if F.ndim != 2:
            raise DimensionError("forecast matrix must be two-dimensional")
        if F.shape[0] != y.size - 1:
            raise DimensionError(
                f"forecast rows ({F.shape[0]}) must equal len(y) - 1 ({y.size - 1})"
            )
        if F.shape[1] < 1:
            raise DimensionError("at least one forecast column is required")
        if F.shape[0] < 2:
            raise InsufficientDataError("a panel needs T >= 2 forecast rows")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(F))):
            raise ParseError("panel contains non-finite values")
        labels = tuple(self.labels) if self.labels else tuple(
            f"f{j + 1}" for j in range(F.shape[1])
        )
        if len(labels) != F.shape[1]:
            raise DimensionError("one label per forecast column is required")
        if self.time_index is not None and len(self.time_index) != y.size:
            raise DimensionError("time_index must have len(y) entries")
        y.flags.writeable = False
        F.flags.writeable = False
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "F", F)
        object.__setattr__(self, "labels", labels)
        if self.time_index is not None:
            object.__setattr__(self, "time_index", tuple(str(v) for v in self.time_index))

    @property
    def T(self) -> int:
        """Number of (forecast, target) pairs."""
        return self.F.shape[0]

    @property
    def p(self) -> int:
        return self.F.shape[1]

    @property
    def X(self) -> np.ndarray:
        """Regressors ``(1, f_t')`` for every forecast row."""
        return np.column_stack([np.ones(self.T), self.F])

    @property
    def target(self) -> np.ndarray:
        """``y_{t+1}`` aligned with the forecast rows."""
        return self.y[1:]

    def head(self, n_pairs: int) -> "ForecastPanel":
        """The first ``n_pairs`` pairs, i.e. the information up to ``y_{n+1}``."""
        if not 2 <= n_pairs <= self.T:
            raise InsufficientDataError(f"cannot take {n_pairs} of {self.T} pairs")
        ti = None if self.time_index is None else self.time_index[: n_pairs + 1]
        return ForecastPanel(self.y[: n_pairs + 1], self.F[:n_pairs], self.labels, ti)

    def select(self, columns: Sequence[int]) -> "ForecastPanel":
        cols = list(columns)
        return ForecastPanel(
            self.y, self.F[:, cols], tuple(self.labels[c] for c in cols), self.time_index
        )

    def to_json(self) -> str:
        return json.dumps(
            {
                "labels": list(self.labels),
                "y": self.y.tolist(),
                "F": self.F.tolist(),
                "time_index": None if self.time_index is None else list(self.time_index),
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "ForecastPanel":
        d = json.loads(text)
        return cls(np.asarray(d["y"]), np.asarray(d["F"]), tuple(d["labels"]), d.get("time_index"))


def _parse_cell(text: str, row: int, column: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ParseError(
            f"non-numeric value {text!r} in column {column!r}, row {row}",
            row=row,
            column=column,
        ) from None
    if not math.isfinite(value):
        raise ParseError(
            f"non-finite value {text!r} in column {column!r}, row {row}",
            row=row,
            column=column,
        )
    return value


def load_csv(
    path: str | Path,
    target_column: str,
    time_column: str | None = None,
    forecast_columns: Sequence[str] | None = None,
    with_next: bool = False,
):
    """Read a panel from a comma-delimited UTF-8 file with one header row.

    Every non-target column (other than ``time_column``) is taken as a
    forecast unless ``forecast_columns`` is given.  Forecasts in row ``t``
    predict the target in row ``t + 1``; the forecasts of the last row are
    not used unless ``with_next`` is set, in which case ``(panel, f_next)``
    is returned with ``f_next`` the final row's forecasts.  Row numbers in
    error messages count data rows from 1.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path} is empty") from None
        rows = [r for r in reader if any(cell.strip() for cell in r)]

    if target_column not in header:
        raise SchemaError(f"target column {target_column!r} not found", column=target_column)
    if time_column is not None and time_column not in header:
        raise SchemaError(f"time column {time_column!r} not found", column=time_column)
    if forecast_columns is None:
        forecast_columns = [h for h in header if h not in (target_column, time_column)]
    else:
        missing = [c for c in forecast_columns if c not in header]
        if missing:
            raise SchemaError(f"forecast columns not found: {missing}", column=missing[0])
    if not forecast_columns:
        raise SchemaError("no forecast columns present")
    if len(rows) < 3:
        raise InsufficientDataError(f"{path} has {len(rows)} data rows, need at least 3")

    pos = {h: i for i, h in enumerate(header)}
    y = np.empty(len(rows))
    F = np.empty((len(rows), len(forecast_columns)))
    times = []
    for i, r in enumerate(rows, start=1):
        if len(r) != len(header):
            raise ParseError(f"row {i} has {len(r)} cells, expected {len(header)}", row=i)
        y[i - 1] = _parse_cell(r[pos[target_column]].strip(), i, target_column)
        for j, c in enumerate(forecast_columns):
            F[i - 1, j] = _parse_cell(r[pos[c]].strip(), i, c)
        if time_column is not None:
            times.append(r[pos[time_column]].strip())

    panel = ForecastPanel(y, F[:-1], tuple(forecast_columns), tuple(times) if times else None)
    return (panel, F[-1].copy()) if with_next else panel


@dataclass(frozen=True)
class Standardizer:
    """Affine maps applied to ``(y, f_1, ..., f_p)``; index 0 is the target."""

    means: np.ndarray
    sds: np.ndarray

    def __post_init__(self):
        means = np.asarray(self.means, dtype=float)
        sds = np.asarray(self.sds, dtype=float)
        if means.shape != sds.shape or means.ndim != 1:
            raise DimensionError("means and sds must be vectors of equal length")
        if np.any(sds <= 0):
            raise DegenerateScaleError("standard deviations must be strictly positive")
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "sds", sds)

    @property
    def dim(self) -> int:
        return self.means.size

    def apply(self, panel: ForecastPanel) -> ForecastPanel:
        if panel.p + 1 != self.dim:
            raise DimensionError("standardizer does not match the panel width")
        y = (panel.y - self.means[0]) / self.sds[0]
        F = (panel.F - self.means[1:]) / self.sds[1:]
        return ForecastPanel(y, F, panel.labels, panel.time_index)

    def apply_forecasts(self, f: np.ndarray) -> np.ndarray:
        return (np.asarray(f, dtype=float) - self.means[1:]) / self.sds[1:]

    def invert(self, panel: ForecastPanel) -> ForecastPanel:
        y = panel.y * self.sds[0] + self.means[0]
        F = panel.F * self.sds[1:] + self.means[1:]
        return ForecastPanel(y, F, panel.labels, panel.time_index)

    def coefficients_to_raw(self, beta: np.ndarray, with_intercept_shift: bool = True) -> np.ndarray:
        """Map standardized-scale coefficients ``(b0, b1..bp)`` rowwise to raw scale.

        With ``with_intercept_shift=False`` the mean terms are dropped, which is
        the correct map for the local slopes (derivatives of the weights).
        """
        beta = np.asarray(beta, dtype=float)
        if beta.shape[-1] != self.dim:
            raise DimensionError(
                f"weight dimension {beta.shape[-1]} does not match standardizer ({self.dim})"
            )
        sy = self.sds[0]
        out = np.empty_like(beta)
        out[..., 1:] = beta[..., 1:] * (sy / self.sds[1:])
        out[..., 0] = sy * beta[..., 0] - out[..., 1:] @ self.means[1:]
        if with_intercept_shift:
            out[..., 0] += self.means[0]
        return out


def standardize(panel: ForecastPanel) -> tuple[ForecastPanel, Standardizer]:
    """Center and scale the target and each forecast column over the whole sample.

    Uses the ``N - 1`` divisor.  The target is standardized over all
    ``T + 1`` values, forecasts over their ``T`` rows.
    """
    cols = [panel.y] + [panel.F[:, j] for j in range(panel.p)]
    names = ["target"] + list(panel.labels)
    means = np.array([c.mean() for c in cols])
    sds = np.array([c.std(ddof=1) for c in cols])
    for name, c, s in zip(names, cols, sds):
        if not s > 0 or s <= 1e-14 * max(1.0, float(np.abs(c).max())):
            raise DegenerateScaleError(f"column {name!r} is constant", column=name)
    s = Standardizer(means, sds)
    return s.apply(panel), s


def destandardize_weights(weights, s: Standardizer):
    """Back-transform a :class:`~tvcomb.smoother.WeightPath` fitted on standardized data.

    For every row, ``X_t' beta_raw`` on the raw regressors equals the
    standardized-space prediction mapped back through the target's affine map.
    """
    beta = np.asarray(weights.beta)
    if beta.shape[1] != s.dim:
        raise DimensionError(
            f"weight dimension {beta.shape[1]} does not match standardizer ({s.dim})"
        )
    return replace(
        weights,
        beta=s.coefficients_to_raw(beta),
        slope=s.coefficients_to_raw(np.asarray(weights.slope), with_intercept_shift=False),
    )
