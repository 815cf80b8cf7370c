"""Reflected leave-one-out local linear estimation of time-varying weights.

For a target index ``t`` the window contains the real pairs
``s = t - 1, ..., t - m`` and, on the right, pseudodata obtained by
mirroring them: the row at ``s = t + j`` reuses pair ``t - j``.  The pair at
``s = t`` (which needs the unobserved ``y_{t+1}``) is never used.  Here
``m = floor(T h)``.  Near the start of the sample the window is cut at
``s = 1`` and the reflected side is cut symmetrically, so every source row
lies inside the observed sample.
"""
from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DimensionError, SingularDesignError, WindowTooSmallError
from .panel import ForecastPanel

__all__ = [
    "KernelSpec",
    "epanechnikov",
    "uniform",
    "quartic",
    "get_kernel",
    "LocalFit",
    "WeightPath",
    "synthesized_window",
    "local_linear_fit",
    "fit_path",
    "forecast_next",
    "recursive_forecasts",
    "default_start",
    "half_width",
]

COND_LIMIT = 1e12


@dataclass(frozen=True)
class KernelSpec:
    """Symmetric density on [-1, 1] with its second moment and roughness."""

    name: str
    evaluate: Callable[[np.ndarray], np.ndarray]
    mu2: float
    nu0: float

    def __call__(self, u):
        return self.evaluate(u)


def _epanechnikov(u):
    u = np.asarray(u, dtype=float)
    return np.where(np.abs(u) <= 1.0, 0.75 * (1.0 - u * u), 0.0)


def _uniform(u):
    u = np.asarray(u, dtype=float)
    return np.where(np.abs(u) <= 1.0, 0.5, 0.0)


def _quartic(u):
    u = np.asarray(u, dtype=float)
    return np.where(np.abs(u) <= 1.0, (15.0 / 16.0) * (1.0 - u * u) ** 2, 0.0)


def epanechnikov() -> KernelSpec:
    return KernelSpec("epanechnikov", _epanechnikov, 0.2, 0.6)


def uniform() -> KernelSpec:
    return KernelSpec("uniform", _uniform, 1.0 / 3.0, 0.5)


def quartic() -> KernelSpec:
    return KernelSpec("quartic", _quartic, 1.0 / 7.0, 5.0 / 7.0)


_KERNELS = {"epanechnikov": epanechnikov, "uniform": uniform, "quartic": quartic}


def get_kernel(name: str) -> KernelSpec:
    try:
        return _KERNELS[name.lower()]()
    except KeyError:
        raise ValueError(f"unknown kernel {name!r}; choose from {sorted(_KERNELS)}") from None


def half_width(T: int, h: float) -> int:
    """``floor(T h)`` with a guard against representation error (0.29 * 100)."""
    return int(math.floor(T * h + 1e-9))


def default_start(p: int) -> int:
    """First estimated index: at least ``2 (p + 1)`` past pairs in the window."""
    return 2 * (p + 1) + 1


def synthesized_window(t: int, T: int, h: float) -> list[tuple[int, int, int]]:
    """Rows ``(s, y_source, f_source)`` of the window at ``t`` (all 1-based).

    Sources index the observed series: ``y_source`` in ``[1, T + 1]`` and
    ``f_source`` in ``[1, T]``.  ``t`` may equal ``T + 1``, the forecast
    origin one step past the last complete pair.
    """
    if not 0.0 < h < 1.0:
        raise ValueError(f"bandwidth must lie in (0, 1), got {h}")
    if not 1 <= t <= T + 1:
        raise ValueError(f"t={t} outside [1, {T + 1}]")
    m = half_width(T, h)
    if m < 1:
        raise WindowTooSmallError(f"floor(T h) = {m} < 1 for T={T}, h={h}", t=t, h=h)
    reach = min(m, t - 1)
    rows = [(s, s + 1, s) for s in range(t - reach, t)]
    rows += [(s, 2 * t - s + 1, 2 * t - s) for s in range(t + 1, t + reach + 1)]
    return rows


@dataclass(frozen=True)
class _Design:
    ts: np.ndarray  # (n,) 1-based target indices
    Q: np.ndarray  # (n, 2J, 2d) local regressors q_st
    w: np.ndarray  # (n, 2J) kernel weights k_st, zero on padding
    y: np.ndarray  # (n, 2J) responses y_{s+1}
    src: np.ndarray  # (n, J) 0-based source pair row (clipped on padding)
    m: int


def _build_design(X, ynext, ts, T, h, kernel, J=None):
    """Stack the reflected windows of every target in ``ts``.

    Rows ``0..J-1`` hold ``s = t - j`` and rows ``J..2J-1`` the mirrored
    ``s = t + j``.  Padding to a common ``J`` keeps per-target arithmetic
    independent of which other targets share the batch.
    """
    ts = np.asarray(ts, dtype=np.int64)
    m = half_width(T, h)
    if m < 1:
        raise WindowTooSmallError(f"floor(T h) = {m} < 1 for T={T}, h={h}", h=h)
    J = m if J is None else J
    j = np.arange(1, J + 1)
    reach = np.minimum(m, ts - 1)
    valid = j[None, :] <= reach[:, None]
    src = np.where(valid, ts[:, None] - j[None, :] - 1, 0)
    kv = np.where(valid, kernel(j / (T * h))[None, :] / h, 0.0)
    u = j / T
    Xs = X[src]  # (n, J, d)
    Q = np.concatenate(
        [
            np.concatenate([Xs, -u[None, :, None] * Xs], axis=2),
            np.concatenate([Xs, u[None, :, None] * Xs], axis=2),
        ],
        axis=1,
    )
    w = np.concatenate([kv, kv], axis=1)
    ys = ynext[src]
    yy = np.concatenate([ys, ys], axis=1)
    return _Design(ts, Q, w, yy, src, m)


def _solve_local(design: _Design, T: int, h: float, raise_on_singular: bool = True):
    """Weighted normal equations for every target in the design.

    Returns ``(gamma, cond, ok)``; rows that fail the effective-count or
    condition checks get NaN coefficients when ``raise_on_singular`` is off.
    """
    Q, w = design.Q, design.w
    D = Q.shape[2]
    Qw = Q * w[:, :, None]
    G = np.matmul(Qw.transpose(0, 2, 1), Q) / T
    b = np.matmul(Qw.transpose(0, 2, 1), design.y[:, :, None])[:, :, 0] / T

    n_eff = np.count_nonzero(w > 0, axis=1)
    ok = n_eff >= D
    eig = np.linalg.eigvalsh(np.where(ok[:, None, None], G, np.eye(D)))
    with np.errstate(divide="ignore", invalid="ignore"):
        cond = np.where(eig[:, 0] > 0, eig[:, -1] / eig[:, 0], np.inf)
    cond = np.where(ok, cond, np.inf)
    ok &= cond <= COND_LIMIT

    if raise_on_singular and not ok.all():
        bad = int(np.flatnonzero(~ok)[0])
        t_bad = int(design.ts[bad])
        if n_eff[bad] < D:
            msg = f"only {n_eff[bad]} effective observations at t={t_bad}, need {D}"
        else:
            msg = f"local Gram matrix at t={t_bad} has condition {cond[bad]:.3g}"
        raise SingularDesignError(msg, t=t_bad, h=h)

    gamma = np.full((Q.shape[0], D), np.nan)
    if ok.any():
        L = np.linalg.cholesky(G[ok])
        z = np.linalg.solve(L, b[ok][:, :, None])
        gamma[ok] = np.linalg.solve(L.transpose(0, 2, 1), z)[:, :, 0]
    return gamma, cond, ok


@dataclass(frozen=True)
class LocalFit:
    """Local linear solution at one time index.

    ``gamma`` stacks the level coefficients (intercept then forecast
    weights) followed by the matching local slopes.
    """

    gamma: np.ndarray
    t_index: int
    h: float
    cond_estimate: float

    @property
    def beta(self) -> np.ndarray:
        return self.gamma[: self.gamma.size // 2]

    @property
    def slope(self) -> np.ndarray:
        return self.gamma[self.gamma.size // 2 :]


@dataclass(frozen=True)
class WeightPath:
    """Estimated combination weights for the time indices in ``t``.

    ``beta[i]`` is the intercept-plus-weights vector at time ``t[i]``;
    ``slope[i]`` its local derivative with respect to ``(s - t) / T``.
    """

    t: np.ndarray
    beta: np.ndarray
    slope: np.ndarray
    h: float

    def predict(self, panel: ForecastPanel) -> np.ndarray:
        """In-sample combined forecasts ``X_t' beta_t`` of ``y_{t+1}``."""
        X = panel.X[self.t - 1]
        return np.einsum("ij,ij->i", X, self.beta)

    def to_csv(self, path=None) -> str:
        d = self.beta.shape[1]
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["t"] + [f"beta_{j}" for j in range(d)] + [f"slope_{j}" for j in range(d)])
        for t, b, s in zip(self.t, self.beta, self.slope):
            wr.writerow([int(t)] + [repr(float(v)) for v in b] + [repr(float(v)) for v in s])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text)
        return text

    def to_json(self) -> str:
        return json.dumps(
            {"h": self.h, "t": self.t.tolist(), "beta": self.beta.tolist(), "slope": self.slope.tolist()}
        )

    @classmethod
    def from_json(cls, text: str) -> "WeightPath":
        d = json.loads(text)
        return cls(np.asarray(d["t"], dtype=np.int64), np.asarray(d["beta"]), np.asarray(d["slope"]), d["h"])


def _check_h(h):
    if not 0.0 < h < 1.0:
        raise ValueError(f"bandwidth must lie in (0, 1), got {h}")


def local_linear_fit(panel: ForecastPanel, t: int, h: float, kernel: KernelSpec) -> LocalFit:
    """Leave-one-out reflected local linear fit at index ``t`` (1-based).

    ``t`` may run up to ``T + 1``; the fit never touches ``y_{t+1}``.
    """
    _check_h(h)
    T = panel.T
    if not 1 <= t <= T + 1:
        raise ValueError(f"t={t} outside [1, {T + 1}]")
    design = _build_design(panel.X, panel.target, [t], T, h, kernel)
    gamma, cond, _ = _solve_local(design, T, h)
    return LocalFit(gamma[0], int(t), h, float(cond[0]))


def _path_arrays(panel, h, kernel, ts, n_jobs=1, chunk=128, raise_on_singular=True):
    X, yn, T = panel.X, panel.target, panel.T
    m = half_width(T, h)
    chunks = [ts[i : i + chunk] for i in range(0, len(ts), chunk)]

    def work(c):
        return _solve_local(_build_design(X, yn, c, T, h, kernel, J=m), T, h, raise_on_singular)

    if n_jobs > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as ex:
            parts = list(ex.map(work, chunks))
    else:
        parts = [work(c) for c in chunks]
    gamma = np.concatenate([p[0] for p in parts])
    cond = np.concatenate([p[1] for p in parts])
    ok = np.concatenate([p[2] for p in parts])
    return gamma, cond, ok


def fit_path(
    panel: ForecastPanel,
    h: float,
    kernel: KernelSpec,
    start: int | None = None,
    stop: int | None = None,
    n_jobs: int = 1,
) -> WeightPath:
    """Weight path for ``t = start ... stop`` (defaults: :func:`default_start`, ``T``).

    Targets are solved in fixed-size chunks that may run on several
    threads; the result is identical to a sequential run.
    """
    _check_h(h)
    start = default_start(panel.p) if start is None else int(start)
    stop = panel.T if stop is None else int(stop)
    if not 1 <= start <= stop <= panel.T + 1:
        raise ValueError(f"invalid index range [{start}, {stop}]")
    ts = np.arange(start, stop + 1)
    gamma, _, _ = _path_arrays(panel, h, kernel, ts, n_jobs=n_jobs)
    d = panel.p + 1
    return WeightPath(ts, gamma[:, :d], gamma[:, d:], h)


def forecast_next(panel: ForecastPanel, h: float, kernel: KernelSpec, f_new) -> float:
    """One-step combined forecast ``(1, f_new') beta_{T+1}``.

    ``f_new`` are the forecasts issued at time ``T + 1`` for ``y_{T+2}``;
    the weights at ``T + 1`` come from the reflected window of observed
    pairs only.
    """
    f_new = np.asarray(f_new, dtype=float).ravel()
    if f_new.size != panel.p:
        raise DimensionError(f"expected {panel.p} forecasts, got {f_new.size}")
    fit = local_linear_fit(panel, panel.T + 1, h, kernel)
    return float(fit.beta[0] + f_new @ fit.beta[1:])


def recursive_forecasts(panel: ForecastPanel, n_train: int, h: float, kernel: KernelSpec) -> np.ndarray:
    """Expanding-sample forecasts of ``y_{n+1}`` for ``n = n_train + 1 ... T``.

    At origin ``n`` only pairs ``1 ... n - 1`` enter the fit, with the time
    scale set to the current sample size ``n - 1``.
    """
    out = np.empty(panel.T - n_train)
    for k, n in enumerate(range(n_train + 1, panel.T + 1)):
        out[k] = forecast_next(panel.head(n - 1), h, kernel, panel.F[n - 1])
    return out
