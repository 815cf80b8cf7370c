"""Competing combination schemes and univariate benchmarks.

All recursive schemes respect the predictive timing of the panel: a
forecast of ``y_{n+1}`` issued at origin ``n`` uses the pairs
``1 ... n - 1`` (their targets run up to ``y_n``) and the forecasts
``f_n``.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.signal import lfilter

from .errors import EstimationError, InsufficientDataError, SingularDesignError
from .panel import ForecastPanel

__all__ = [
    "COMBINERS",
    "CombinerKind",
    "OosForecasts",
    "bg_weights",
    "gr_weights",
    "gr_fit",
    "equal_weights_forecast",
    "historical_average",
    "arma11_fit",
    "arma11_forecast",
    "oos_forecasts",
]

COMBINERS = (
    "BG",
    "GRregconst",
    "GRreg",
    "GRregconstr",
    "TVGRregconst",
    "TVGRreg",
    "TVGRregconstr",
    "EQ",
    "HistAvg",
    "ARMA11",
)


@dataclass(frozen=True)
class CombinerKind:
    tag: str
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.tag not in COMBINERS:
            raise ValueError(f"unknown combiner {self.tag!r}")


@dataclass(frozen=True)
class OosForecasts:
    """Holdout forecasts; ``horizon_index`` holds the 1-based target index ``n + 1``."""

    horizon_index: np.ndarray
    yhat: dict
    actuals: np.ndarray

    def __post_init__(self):
        for name, v in self.yhat.items():
            if len(v) != len(self.actuals):
                raise ValueError(f"{name}: {len(v)} forecasts for {len(self.actuals)} actuals")

    @property
    def methods(self) -> list[str]:
        return list(self.yhat)

    def losses(self) -> dict:
        return {k: (self.actuals - np.asarray(v)) ** 2 for k, v in self.yhat.items()}

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["t", "actual"] + self.methods)
        for i, t in enumerate(self.horizon_index):
            wr.writerow(
                [int(t), repr(float(self.actuals[i]))]
                + [repr(float(self.yhat[m][i])) for m in self.methods]
            )
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text)
        return text


def bg_weights(panel: ForecastPanel, t: int) -> np.ndarray:
    """Inverse-MSE weights from the first ``t`` pairs (expanding window).

    Forecasters with zero past error share the whole weight equally.
    """
    if not 1 <= t <= panel.T:
        raise ValueError(f"t={t} outside [1, {panel.T}]")
    e = np.mean((panel.target[:t, None] - panel.F[:t]) ** 2, axis=0)
    perfect = e == 0
    if perfect.any():
        return perfect / perfect.sum()
    inv = 1.0 / e
    return inv / inv.sum()


def _ols(X, y):
    if np.linalg.matrix_rank(X) < X.shape[1]:
        raise SingularDesignError(f"rank-deficient design ({X.shape[0]} x {X.shape[1]})")
    return np.linalg.lstsq(X, y, rcond=None)[0]


def gr_weights(F: np.ndarray, ynext: np.ndarray, variant: str) -> np.ndarray:
    """Regression weights ``(w0, w1..wp)``; ``w0 = 0`` for the intercept-free variants."""
    F = np.asarray(F, dtype=float)
    ynext = np.asarray(ynext, dtype=float)
    n, p = F.shape
    if variant == "const":
        return _ols(np.column_stack([np.ones(n), F]), ynext)
    if variant == "noconst":
        return np.r_[0.0, _ols(F, ynext)]
    if variant == "constrained":
        if p == 1:
            return np.array([0.0, 1.0])
        w = _ols(F[:, :-1] - F[:, -1:], ynext - F[:, -1])
        return np.r_[0.0, w, 1.0 - w.sum()]
    raise ValueError(f"unknown variant {variant!r}")


def gr_fit(panel: ForecastPanel, variant: str, window: str, n_train: int) -> np.ndarray:
    """Weights used at each holdout origin ``n = n_train + 1 ... T``.

    ``static_T`` fits once on the first ``n_train`` pairs; ``expanding``
    refits at every origin on pairs ``1 ... n - 1``.
    """
    origins = range(n_train + 1, panel.T + 1)
    if window == "static_T":
        w = gr_weights(panel.F[:n_train], panel.target[:n_train], variant)
        return np.tile(w, (len(origins), 1))
    if window == "expanding":
        return np.array([gr_weights(panel.F[: n - 1], panel.target[: n - 1], variant) for n in origins])
    raise ValueError(f"unknown window {window!r}")


def equal_weights_forecast(panel_or_F) -> np.ndarray:
    """Arithmetic mean of the forecasts, row by row."""
    F = panel_or_F.F if isinstance(panel_or_F, ForecastPanel) else np.atleast_2d(panel_or_F)
    return F.mean(axis=1)


def historical_average(y, t: int) -> float:
    """Mean of ``y_1 ... y_{t-1}``, the forecast of ``y_t``."""
    y = np.asarray(y, dtype=float)
    if not 2 <= t <= y.size + 1:
        raise ValueError(f"t={t} needs at least one observed value")
    return float(np.mean(y[: t - 1]))


def _css_residuals(params, y):
    c, phi, theta = params
    x = y[1:] - c - phi * y[:-1]
    return lfilter([1.0], [1.0, theta], x)


def arma11_fit(y) -> tuple[float, float, float]:
    """Conditional-sum-of-squares ARMA(1,1) with zero pre-sample innovation.

    Nelder-Mead on ``(c, phi, theta)`` with both roots kept inside
    ``(-0.999, 0.999)``.
    """
    y = np.asarray(y, dtype=float)
    if y.size < 10:
        raise InsufficientDataError("ARMA(1,1) needs at least 10 observations")
    scale = float(np.std(y))
    if scale == 0.0:
        return float(y[0]), 0.0, 0.0
    z = (y - y.mean()) / scale

    def clamp(v):
        return np.clip(v, -0.999, 0.999)

    def objective(q):
        e = _css_residuals((q[0], clamp(q[1]), clamp(q[2])), z)
        return float(e @ e)

    best = None
    for start in ((0.0, 0.0, 0.0), (0.0, 0.5, -0.3), (0.0, -0.5, 0.3)):
        res = minimize(objective, np.array(start), method="Nelder-Mead",
                       options={"xatol": 1e-7, "fatol": 1e-10, "maxiter": 4000})
        if best is None or res.fun < best.fun:
            best = res
    if not np.isfinite(best.fun):
        raise EstimationError("ARMA(1,1) objective is not finite")
    c_z, phi, theta = best.x[0], float(clamp(best.x[1])), float(clamp(best.x[2]))
    c = scale * c_z + y.mean() * (1.0 - phi)
    return float(c), phi, theta


def arma11_forecast(y) -> float:
    """One-step forecast ``c + phi y_n + theta e_n`` from the CSS fit."""
    y = np.asarray(y, dtype=float)
    c, phi, theta = arma11_fit(y)
    e = _css_residuals((c, phi, theta), y)
    return float(c + phi * y[-1] + theta * e[-1])


def oos_forecasts(
    panel: ForecastPanel,
    n_train: int,
    methods=COMBINERS,
    nprf_bandwidth: float | None = None,
    kernel=None,
) -> OosForecasts:
    """Recursive holdout forecasts of ``y_{n+1}`` for ``n = n_train + 1 ... T``.

    ``NPRf`` may be listed in ``methods``; its bandwidth is selected by
    cross-validation on the first ``n_train`` pairs unless given.
    """
    from .bandwidth import select_bandwidth
    from .smoother import epanechnikov, recursive_forecasts

    if not 2 <= n_train < panel.T:
        raise ValueError(f"n_train={n_train} must leave at least one holdout pair")
    origins = np.arange(n_train + 1, panel.T + 1)
    Xo = panel.X[origins - 1]
    out = {}
    for m in methods:
        if m == "NPRf":
            kernel = epanechnikov() if kernel is None else kernel
            h = nprf_bandwidth
            if h is None:
                h = select_bandwidth(panel.head(n_train), kernel).h_star
            out[m] = recursive_forecasts(panel, n_train, h, kernel)
        elif m == "BG":
            out[m] = np.array([bg_weights(panel, n - 1) @ panel.F[n - 1] for n in origins])
        elif m in ("GRregconst", "GRreg", "GRregconstr", "TVGRregconst", "TVGRreg", "TVGRregconstr"):
            variant = {"regconst": "const", "reg": "noconst", "regconstr": "constrained"}[
                m.removeprefix("TV").removeprefix("GR")
            ]
            window = "expanding" if m.startswith("TV") else "static_T"
            W = gr_fit(panel, variant, window, n_train)
            out[m] = np.einsum("ij,ij->i", Xo, W)
        elif m == "EQ":
            out[m] = equal_weights_forecast(panel.F[origins - 1])
        elif m == "HistAvg":
            out[m] = np.array([historical_average(panel.y, n + 1) for n in origins])
        elif m == "ARMA11":
            out[m] = np.array([arma11_forecast(panel.y[:n]) for n in origins])
        else:
            raise ValueError(f"unknown method {m!r}")
    return OosForecasts(origins + 1, out, panel.y[origins])
