"""Cross-validated bandwidth selection and the plug-in optimal bandwidth."""
from __future__ import annotations

import csv
import io
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import simpson

from .errors import NoAdmissibleBandwidthError, UndefinedOptimumError
from .panel import ForecastPanel
from .smoother import KernelSpec, _path_arrays, default_start, half_width

__all__ = ["CvCurve", "PluginInputs", "cv_score", "cv_grid", "select_bandwidth", "plugin_h_opt"]


class SingularCandidateWarning(UserWarning):
    """A bandwidth candidate produced a singular local design."""


@dataclass(frozen=True)
class CvCurve:
    grid: np.ndarray
    scores: np.ndarray
    h_star: float
    disqualified: tuple = field(default_factory=tuple)

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["h", "score"])
        for h, s in zip(self.grid, self.scores):
            wr.writerow([repr(float(h)), repr(float(s))])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text)
        return text


def _loo_errors(panel, h, kernel, start):
    ts = np.arange(start, panel.T + 1)
    gamma, _, ok = _path_arrays(panel, h, kernel, ts, raise_on_singular=False)
    d = panel.p + 1
    pred = np.einsum("ij,ij->i", panel.X[ts - 1], np.nan_to_num(gamma[:, :d]))
    return panel.y[ts] - pred, ok, ts


def cv_score(panel: ForecastPanel, h: float, kernel: KernelSpec, start: int | None = None) -> float:
    """Mean squared leave-one-out combined-forecast error over ``t = start ... T``.

    A singular local design anywhere on the range disqualifies ``h``: the
    score is ``inf`` and a :class:`SingularCandidateWarning` is issued.
    """
    if not 0.0 < h < 1.0 or half_width(panel.T, h) < 1:
        warnings.warn(f"bandwidth {h} is inadmissible for T={panel.T}", SingularCandidateWarning)
        return float("inf")
    start = default_start(panel.p) if start is None else int(start)
    err, ok, ts = _loo_errors(panel, h, kernel, start)
    if not ok.all():
        t_bad = int(ts[np.flatnonzero(~ok)[0]])
        warnings.warn(f"singular local design at t={t_bad} for h={h:.6g}", SingularCandidateWarning)
        return float("inf")
    return float(np.mean(err**2))


def cv_grid(T: int, c1: float = 0.5, c2: float = 3.0, n_grid: int = 20) -> np.ndarray:
    """Log-spaced candidates on ``[c1, c2] T^{-1/5}``, capped below 1."""
    if not 0 < c1 < c2:
        raise ValueError("need 0 < c1 < c2")
    if n_grid < 1:
        raise ValueError("n_grid must be positive")
    lo = c1 * T ** -0.2
    hi = min(c2 * T ** -0.2, 1.0 - 1.0 / T)
    if n_grid == 1:
        return np.array([lo])
    if hi <= lo:
        raise ValueError(f"grid [{lo:.4g}, {hi:.4g}] is empty for T={T}")
    return np.geomspace(lo, hi, n_grid)


def select_bandwidth(
    panel: ForecastPanel,
    kernel: KernelSpec,
    c1: float = 0.5,
    c2: float = 3.0,
    n_grid: int = 20,
    start: int | None = None,
    grid: np.ndarray | None = None,
    n_jobs: int = 1,
) -> CvCurve:
    """Minimize the CV score over a grid (ties go to the smaller ``h``)."""
    grid = cv_grid(panel.T, c1, c2, n_grid) if grid is None else np.asarray(grid, dtype=float)
    if np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing")
    start = default_start(panel.p) if start is None else int(start)

    def score(h):
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            s = cv_score(panel, float(h), kernel, start)
        return s, [str(w.message) for w in caught]

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as ex:
            results = list(ex.map(score, grid))
    else:
        results = [score(h) for h in grid]
    scores = np.array([r[0] for r in results])
    notes = tuple(m for r in results for m in r[1])
    for m in notes:
        warnings.warn(m, SingularCandidateWarning)
    if not np.isfinite(scores).any():
        raise NoAdmissibleBandwidthError(
            f"every candidate in [{grid[0]:.4g}, {grid[-1]:.4g}] is singular"
        )
    return CvCurve(grid, scores, float(grid[int(np.argmin(scores))]), notes)


@dataclass(frozen=True)
class PluginInputs:
    """True-DGP ingredients of the optimal bandwidth, as functions of rescaled time."""

    M: Callable[[float], np.ndarray]
    V: Callable[[float], np.ndarray]
    beta_dd: Callable[[float], np.ndarray]
    mu2: float
    nu0: float


def plugin_h_opt(inputs: PluginInputs, T: int, n_points: int = 201) -> float:
    """Bandwidth minimizing the leading terms of the integrated MSCFE.

    ``T^{-1/5} (2 nu0 int tr[V M^{-1}] / (mu2^2 int tr[M b'' b''^T]))^{1/5}``
    with both integrals over [0, 1] by Simpson's rule on a uniform grid.
    """
    tau = np.linspace(0.0, 1.0, n_points)
    var_term = np.empty(n_points)
    bias_term = np.empty(n_points)
    for i, s in enumerate(tau):
        M = np.atleast_2d(np.asarray(inputs.M(s), dtype=float))
        V = np.atleast_2d(np.asarray(inputs.V(s), dtype=float))
        b = np.atleast_1d(np.asarray(inputs.beta_dd(s), dtype=float))
        var_term[i] = np.trace(np.linalg.solve(M, V.T).T)
        bias_term[i] = b @ M @ b
    num = 2.0 * inputs.nu0 * simpson(var_term, x=tau)
    den = inputs.mu2**2 * simpson(bias_term, x=tau)
    if not den > 0:
        raise UndefinedOptimumError("curvature integral is zero; no finite optimum")
    return float(T ** -0.2 * (num / den) ** 0.2)
