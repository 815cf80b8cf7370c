"""Two-stage penalized local linear estimation for many candidate forecasts.

Stage 1 solves, separately at every time index, a Lasso-penalized local
linear regression on the reflected window.  Stage 2 treats the whole time
path of each coefficient as a group and runs group coordinate descent
with SCAD-derivative weights computed from the stage-1 paths (a local
linear approximation of the group SCAD penalty).  The stage-2 penalty is
picked by a modified BIC.

Both stages work on the per-index Gram matrices

    G_t = N^{-1} sum_s k_st q_st q_st',   c_t = N^{-1} sum_s k_st q_st y_{s+1}

with ``q_st = (X_s, ((s - t) / (N h)) X_s)``, so the slope block carries
``h alpha_1``, which is the quantity the slope penalty acts on.  Stacking
every window gives a block-diagonal problem across ``t``; the Gram of one
coefficient group (one column of ``G_t`` across ``t``) is therefore
diagonal, and orthogonalizing a group is a per-``t`` rescaling by
``sqrt(G_t[i, i])``.
"""
from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numba
import numpy as np

from .errors import ConfigurationError, ConvergenceError, DegenerateGroupError, InsufficientDataError
from .panel import ForecastPanel, Standardizer, standardize
from .smoother import KernelSpec, _build_design, epanechnikov, half_width

__all__ = [
    "PenaltyConfig",
    "StagedPaths",
    "GcdWorkspace",
    "scad_derivative",
    "smoothness_measure",
    "local_grams",
    "stage1_lasso",
    "orthogonalize_groups",
    "stage2_gscad",
    "bic_score",
    "default_bandwidth",
    "default_lambda3_grid",
    "fit_two_stage",
    "forecast_two_stage",
]

MIN_PAST = 10
LASSO_MAX_SWEEPS = 1_000_000


@dataclass(frozen=True)
class PenaltyConfig:
    """Penalty levels of both stages; ``lambda2`` and ``lambda4`` follow ``lambda1`` and ``lambda3``."""

    lambda1: float = 0.0
    lambda3: float = 0.0
    h: float = 0.5
    a: float = 3.7
    tolerance: float = 1e-3
    max_sweeps: int = 10_000
    lasso_tolerance: float = 1e-7

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda3 < 0:
            raise ConfigurationError("penalties must be non-negative")
        if not self.a > 2:
            raise ConfigurationError("SCAD shape a must exceed 2")
        if not self.tolerance > 0 or not self.lasso_tolerance > 0:
            raise ConfigurationError("tolerances must be positive")
        if not 0 < self.h < 1:
            raise ConfigurationError("bandwidth must lie in (0, 1)")

    @property
    def lambda2(self) -> float:
        return self.lambda1

    @property
    def lambda4(self) -> float:
        return self.lambda3


def scad_derivative(x, lam: float, a: float = 3.7):
    """Derivative of the SCAD penalty, ``lam`` on ``[0, lam]`` then linear decay to 0 at ``a lam``."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("SCAD derivative is defined for x >= 0")
    if lam < 0 or not a > 2:
        raise ValueError("need lam >= 0 and a > 2")
    if lam == 0:
        out = np.zeros_like(x)
    else:
        out = np.where(x <= lam, lam, np.maximum(a * lam - x, 0.0) / (a - 1.0))
    return float(out) if out.ndim == 0 else out


def smoothness_measure(paths) -> np.ndarray:
    """Centered l2 norm over time of each column."""
    B = np.atleast_2d(np.asarray(paths, dtype=float))
    return np.sqrt(np.sum((B - B.mean(axis=0)) ** 2, axis=0))


@dataclass(frozen=True)
class GcdWorkspace:
    """Per-index Gram matrices plus the stacked representation they summarize.

    ``stacked_response`` and ``kernel_weights`` are ``(n, 2J)`` arrays, one
    row per fitted index; padding rows carry weight 0.  ``group_scales``
    holds ``sqrt(G_t[i, i])``: dividing group ``i``'s regressor at ``t`` by
    it makes the group Gram the identity.
    """

    t: np.ndarray
    G: np.ndarray
    c: np.ndarray
    stacked_response: np.ndarray
    kernel_weights: np.ndarray
    regressors: np.ndarray
    group_scales: np.ndarray
    h: float
    n_pairs: int
    response_ss: np.ndarray

    @property
    def n_groups(self) -> int:
        return self.G.shape[1]

    def residual(self, gamma: np.ndarray) -> np.ndarray:
        """Stacked residual ``Y - Q gamma`` for coefficients ``gamma`` of shape ``(n, 2d)``."""
        return self.stacked_response - np.einsum("nrk,nk->nr", self.regressors, gamma)

    def group_gram(self, i: int, orthogonalized: bool = False) -> np.ndarray:
        """Dense ``Xi_i' K Xi_i`` (``n x n``) assembled from the stacked arrays."""
        col = self.regressors[:, :, i]
        if orthogonalized:
            col = col / self.group_scales[:, i : i + 1]
        # block structure: entry (t, t') is zero unless t == t'
        return np.diag(np.einsum("nr,nr,nr->n", col, self.kernel_weights, col))


def local_grams(
    panel: ForecastPanel,
    h: float,
    kernel: KernelSpec,
    ts,
    fold_of_pair: np.ndarray | None = None,
    fold_of_t: np.ndarray | None = None,
) -> GcdWorkspace:
    """Gram matrices of the reflected windows at every ``t`` in ``ts``.

    With fold labels, a window pair whose source lies in the same fold as
    the target ``t`` gets weight zero.  The time scale is ``N = panel.T``.
    """
    N = panel.T
    ts = np.asarray(ts, dtype=np.int64)
    design = _build_design(panel.X, panel.target, ts, N, h, kernel)
    d = panel.p + 1
    Q = design.Q.copy()
    Q[:, :, d:] /= h
    w = design.w / N
    if fold_of_pair is not None:
        same = fold_of_pair[design.src] == fold_of_t[:, None]
        keep = np.where(same, 0.0, 1.0)
        w = w * np.concatenate([keep, keep], axis=1)
    Qw = Q * w[:, :, None]
    G = np.matmul(Qw.transpose(0, 2, 1), Q)
    c = np.matmul(Qw.transpose(0, 2, 1), design.y[:, :, None])[:, :, 0]
    diag = np.einsum("nii->ni", G)
    scales = np.sqrt(np.maximum(diag, 0.0))
    yy = np.einsum("nr,nr,nr->n", w, design.y, design.y)
    return GcdWorkspace(ts, G, c, design.y, w, Q, scales, float(h), N, yy)


@numba.njit(cache=True)
def _duality_gap(G, c, yy, b, Gb, lam, i):
    """Gap of the weighted Lasso ``||y - Q b||^2_W + lam |b|_1`` written in Gram form."""
    D = b.size
    bGb = 0.0
    cb = 0.0
    l1 = 0.0
    zmax = 0.0
    for j in range(D):
        bGb += b[j] * Gb[j]
        cb += c[i, j] * b[j]
        l1 += abs(b[j])
        z = abs(c[i, j] - Gb[j])
        if z > zmax:
            zmax = z
    rr = max(yy[i] - 2.0 * cb + bGb, 0.0)
    ry = yy[i] - cb
    s = 1.0
    if zmax > 0.0 and lam < 2.0 * zmax:
        s = lam / (2.0 * zmax)
    primal = rr + lam * l1
    dual = 2.0 * s * ry - s * s * rr
    return primal - dual


@numba.njit(cache=True)
def _lasso_path(G, c, yy, lams, tol, max_sweeps, out):
    """Coordinate descent for ``b'G b - 2 c'b + lam |b|_1`` at every row, warm along ``lams``.

    A row stops once the largest coordinate change or the duality gap
    (relative to the weighted response sum of squares) drops below
    ``tol``.  Returns ``(row, lambda index)`` of the first failure or
    ``(-1, -1)``.
    """
    n, D = c.shape
    for i in range(n):
        b = np.zeros(D)
        Gb = np.zeros(D)
        for li in range(lams.size):
            half = 0.5 * lams[li]
            converged = False
            for _ in range(max_sweeps):
                delta = 0.0
                for j in range(D):
                    gjj = G[i, j, j]
                    if gjj <= 0.0:
                        continue
                    z = c[i, j] - Gb[j] + gjj * b[j]
                    if z > half:
                        nb = (z - half) / gjj
                    elif z < -half:
                        nb = (z + half) / gjj
                    else:
                        nb = 0.0
                    diff = nb - b[j]
                    if diff != 0.0:
                        for k in range(D):
                            Gb[k] += G[i, k, j] * diff
                        b[j] = nb
                        if abs(diff) > delta:
                            delta = abs(diff)
                if delta < tol or _duality_gap(G, c, yy, b, Gb, lams[li], i) <= tol * max(yy[i], 1e-300):
                    converged = True
                    break
            if not converged:
                return i, li
            for j in range(D):
                out[li, i, j] = b[j]
    return -1, -1


def _run_lasso_path(ws: GcdWorkspace, lams, tol, max_sweeps) -> np.ndarray:
    lams = np.ascontiguousarray(lams, dtype=float)
    out = np.zeros((lams.size,) + ws.c.shape)
    row, li = _lasso_path(ws.G, ws.c, ws.response_ss, lams, tol, max_sweeps, out)
    if row >= 0:
        raise ConvergenceError(
            f"stage-1 Lasso did not converge in {max_sweeps} sweeps",
            t=int(ws.t[row]),
            lambda1=float(lams[li]),
        )
    return out


def lambda1_max(ws: GcdWorkspace) -> float:
    """Smallest penalty at which every stage-1 coefficient is zero."""
    return float(2.0 * np.max(np.abs(ws.c)))


def stage1_lasso(
    panel: ForecastPanel,
    h: float,
    kernel: KernelSpec,
    lambda1: float,
    ts=None,
    tolerance: float = 1e-7,
    max_sweeps: int = LASSO_MAX_SWEEPS,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-index Lasso local linear fits.

    Minimizes ``N^{-1} sum_s k_st (y_{s+1} - q_st' g)^2 + lambda1 |g|_1`` with
    the slope regressors scaled by ``1 / h``.  Returns the level
    coefficients and the slopes ``alpha_1`` (derivatives with respect to
    ``(s - t) / N``), each with one row per index in ``ts``.
    """
    ts = np.arange(MIN_PAST + 1, panel.T + 1) if ts is None else np.asarray(ts)
    ws = local_grams(panel, h, kernel, ts)
    b = _run_lasso_path(ws, [lambda1], tolerance, max_sweeps)[0]
    d = panel.p + 1
    return b[:, :d], b[:, d:] / h


@numba.njit(cache=True)
def _objective(G, c, theta, scales, tau):
    n, D = c.shape
    val = 0.0
    for t in range(n):
        for j in range(D):
            gj = theta[t, j] / scales[t, j]
            acc = 0.0
            for k in range(D):
                acc += G[t, j, k] * theta[t, k] / scales[t, k]
            val += 0.5 * gj * acc - c[t, j] * gj
    for j in range(D):
        s = 0.0
        for t in range(n):
            s += theta[t, j] ** 2
        val += tau[j] * math.sqrt(s)
    return val


@numba.njit(cache=True)
def _gcd(G, c, scales, tau, theta, tol, max_sweeps, trace):
    """Group coordinate descent in orthogonalized coordinates.

    Group ``j`` is column ``j`` of ``theta`` (one entry per time index).
    Levels are updated first, then slopes, each in column order.  Returns
    ``(sweeps, last_change, n_trace)``; ``sweeps > max_sweeps`` signals
    failure.
    """
    n, D = c.shape
    Gg = np.zeros((n, D))
    for t in range(n):
        for j in range(D):
            acc = 0.0
            for k in range(D):
                acc += G[t, j, k] * theta[t, k] / scales[t, k]
            Gg[t, j] = acc
    S = np.empty(n)
    n_trace = 0
    if trace.size > 0:
        trace[0] = _objective(G, c, theta, scales, tau)
        n_trace = 1
    change = np.inf
    for sweep in range(1, max_sweeps + 1):
        change = 0.0
        for j in range(D):
            nrm = 0.0
            for t in range(n):
                S[t] = theta[t, j] + (c[t, j] - Gg[t, j]) / scales[t, j]
                nrm += S[t] * S[t]
            nrm = math.sqrt(nrm)
            shrink = 0.0
            if nrm > tau[j]:
                shrink = 1.0 - tau[j] / nrm
            for t in range(n):
                new = shrink * S[t]
                diff = new - theta[t, j]
                if diff != 0.0:
                    dg = diff / scales[t, j]
                    for k in range(D):
                        Gg[t, k] += G[t, k, j] * dg
                    theta[t, j] = new
                    if abs(diff) > change:
                        change = abs(diff)
            if n_trace < trace.size:
                trace[n_trace] = _objective(G, c, theta, scales, tau)
                n_trace += 1
        if change < tol:
            return sweep, change, n_trace
    return max_sweeps + 1, change, n_trace


def orthogonalize_groups(panel: ForecastPanel, h: float, kernel: KernelSpec, ts=None) -> GcdWorkspace:
    """Workspace for the stacked stage-2 problem; checks every group scale is positive."""
    ts = np.arange(MIN_PAST + 1, panel.T + 1) if ts is None else np.asarray(ts)
    ws = local_grams(panel, h, kernel, ts)
    bad = np.argwhere(~(ws.group_scales > 0))
    if bad.size:
        r, i = bad[0]
        raise DegenerateGroupError(
            f"group {int(i)} has a zero Gram entry at t={int(ts[r])}", group=int(i), t=int(ts[r])
        )
    return ws


@dataclass(frozen=True)
class Stage2Result:
    gamma: np.ndarray
    sweeps: int
    last_change: float
    tau: np.ndarray
    trace: np.ndarray


def stage2_gscad(
    ws: GcdWorkspace,
    stage1: np.ndarray,
    config: PenaltyConfig,
    record_trace: bool = False,
    level_norms: np.ndarray | None = None,
    smoothness: np.ndarray | None = None,
) -> Stage2Result:
    """Group SCAD (linearized at the stage-1 paths) by group coordinate descent.

    ``stage1`` holds the stage-1 coefficients ``(levels, h * slopes)`` per
    row of the workspace.  Minimizes

        sum_t (gamma_t' G_t gamma_t / 2 - c_t' gamma_t)
        + sum_i tau_i ||theta_i|| + h sum_i tau*_i ||theta*_i||

    where ``theta`` are the orthogonalized coefficients, ``tau_i`` is the
    SCAD derivative at the norm of stage-1 level path ``i`` and ``tau*_i``
    at its smoothness measure.  ``level_norms`` and ``smoothness``
    override the stage-1 summaries when given.
    """
    stage1 = np.asarray(stage1, dtype=float)
    n, D = ws.c.shape
    if stage1.shape != (n, D):
        raise ConfigurationError(f"stage-1 coefficients have shape {stage1.shape}, expected {(n, D)}")
    d = D // 2
    levels = stage1[:, :d]
    bn = np.linalg.norm(levels, axis=0) if level_norms is None else np.asarray(level_norms)
    dm = smoothness_measure(levels) if smoothness is None else np.asarray(smoothness)
    tau = np.concatenate(
        [
            np.atleast_1d(scad_derivative(bn, config.lambda3, config.a)),
            config.h * np.atleast_1d(scad_derivative(dm, config.lambda4, config.a)),
        ]
    )
    theta = np.ascontiguousarray(stage1 * ws.group_scales)
    trace = np.empty(1 + D * config.max_sweeps if record_trace else 0)
    sweeps, change, n_trace = _gcd(ws.G, ws.c, ws.group_scales, tau, theta, config.tolerance,
                                   config.max_sweeps, trace)
    if sweeps > config.max_sweeps:
        raise ConvergenceError(
            f"group coordinate descent did not converge in {config.max_sweeps} sweeps "
            f"(last max change {change:.3g})",
            lambda3=config.lambda3,
        )
    return Stage2Result(theta / ws.group_scales, sweeps, float(change), tau, trace[:n_trace])


def bic_score(ssr: float, l: int, p_T: int, m: int) -> tuple[float, bool]:
    """``log(SSR) + log(p_T) l log(m) / m``; returns ``(score, exact_fit)``."""
    if ssr < 0:
        raise ValueError("SSR must be non-negative")
    if ssr == 0:
        return -math.inf, True
    return math.log(ssr) + math.log(p_T) * l * math.log(m) / m, False


def default_bandwidth(T: int, p_T: int, C: float = 1.0) -> float:
    """``C (log(p_T + 1) / T)^{1/5}``."""
    return C * (math.log(p_T + 1) / T) ** 0.2


def default_lambda3_grid(n_rows: int, p_T: int, m: int, n_grid: int = 20) -> np.ndarray:
    """Log-spaced penalties on ``[1e-3, 1e1] sqrt(log(p_T + 1) / m) sqrt(n_rows)``.

    The ``sqrt(n_rows)`` factor matches the size of a standardized group
    norm summed over ``n_rows`` time indices.
    """
    scale = math.sqrt(math.log(p_T + 1) / m) * math.sqrt(n_rows)
    return np.geomspace(1e-3, 1e1, n_grid) * scale


@dataclass(frozen=True)
class StagedPaths:
    """Result of the two-stage fit, on the original scale of the data.

    ``stage1``/``stage2`` hold intercept-plus-weight paths (one row per index
    in ``t``); the ``*_slope`` arrays are derivatives with respect to
    ``(s - t) / N``.  ``D`` is the smoothness measure of the standardized
    stage-1 levels that weighted the slope penalty.  ``active_set`` lists the
    1-based forecast columns with a nonzero stage-2 path.
    """

    t: np.ndarray
    stage1: np.ndarray
    stage1_slope: np.ndarray
    D: np.ndarray
    stage2: np.ndarray
    stage2_slope: np.ndarray
    active_set: tuple
    h: float
    lambda1: float
    lambda3: float
    lambda3_grid: np.ndarray
    bic: np.ndarray
    exact_fit: bool = False
    forecast: float | None = None
    cv_lambda1: np.ndarray = field(default_factory=lambda: np.empty(0))
    cv_scores: np.ndarray = field(default_factory=lambda: np.empty(0))

    def to_csv(self, path=None) -> str:
        d = self.stage2.shape[1]
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(
            ["t"]
            + [f"stage1_{j}" for j in range(d)]
            + [f"stage2_{j}" for j in range(d)]
            + [f"stage2_slope_{j}" for j in range(d)]
        )
        for i, t in enumerate(self.t):
            wr.writerow(
                [int(t)]
                + [repr(float(v)) for v in self.stage1[i]]
                + [repr(float(v)) for v in self.stage2[i]]
                + [repr(float(v)) for v in self.stage2_slope[i]]
            )
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text)
        return text

    def to_json(self) -> str:
        return json.dumps(
            {
                "t": self.t.tolist(),
                "active_set": list(self.active_set),
                "h": self.h,
                "lambda1": self.lambda1,
                "lambda2": self.lambda1,
                "lambda3": self.lambda3,
                "lambda4": self.lambda3,
                "lambda3_grid": self.lambda3_grid.tolist(),
                "bic": [None if not math.isfinite(b) else b for b in self.bic],
                "exact_fit": self.exact_fit,
                "forecast": self.forecast,
                "D": self.D.tolist(),
                "stage1": self.stage1.tolist(),
                "stage2": self.stage2.tolist(),
                "stage2_slope": self.stage2_slope.tolist(),
            }
        )


def _contiguous_folds(n: int, K: int) -> np.ndarray:
    K = min(K, n)
    return np.minimum(np.arange(n) * K // n, K - 1)


def _select_lambda1(panel, h, kernel, ts, K, n_lambda, tol, max_sweeps):
    """K-fold CV over contiguous blocks of target indices."""
    full = local_grams(panel, h, kernel, ts)
    lmax = lambda1_max(full)
    lams = lmax * np.geomspace(1.0, 1e-3, n_lambda)
    fold_t = _contiguous_folds(ts.size, K)
    fold_pair = np.full(panel.T, -1)
    fold_pair[ts - 1] = fold_t
    masked = local_grams(panel, h, kernel, ts, fold_pair, fold_t)
    paths = _run_lasso_path(masked, lams, tol, max_sweeps)
    d = panel.p + 1
    Xt = panel.X[ts - 1]
    pred = np.einsum("nj,lnj->ln", Xt, paths[:, :, :d])
    err = np.mean((panel.y[ts][None, :] - pred) ** 2, axis=1)
    best = int(np.argmin(err))  # earliest index: the larger penalty wins ties
    return lams, err, lams[: best + 1]


def fit_two_stage(
    panel: ForecastPanel,
    lambda3_grid=None,
    C_bandwidth: float = 1.0,
    kernel: KernelSpec | None = None,
    f_new=None,
    folds: int = 10,
    n_lambda1: int = 20,
    min_past: int = MIN_PAST,
    a: float = 3.7,
    tolerance: float = 1e-3,
    max_sweeps: int = 10_000,
    n_jobs: int = 1,
) -> StagedPaths:
    """Standardize, run both stages, and return the BIC-selected fit on the raw scale.

    Paths are estimated for ``t = min_past + 1 ... N`` where ``N = panel.T``.
    With ``f_new`` (forecasts issued at ``N + 1``) the index ``N + 1`` is
    added to the stacked problem and ``forecast`` holds the combined
    forecast of ``y_{N+2}``; that row does not enter CV or the BIC.
    """
    kernel = epanechnikov() if kernel is None else kernel
    N, p = panel.T, panel.p
    if N < max(10, min_past + 2):
        raise InsufficientDataError(f"two-stage fit needs more than {min_past + 1} pairs, got {N}")
    h = default_bandwidth(N, p, C_bandwidth)
    if not 0 < h < 1:
        raise ConfigurationError(f"bandwidth {h:.4g} outside (0, 1); lower C_bandwidth")
    m = half_width(N, h)
    std_panel, scaler = standardize(panel)
    ts_in = np.arange(min_past + 1, N + 1)
    ts = ts_in if f_new is None else np.append(ts_in, N + 1)
    n_in = ts_in.size

    lams, cv_err, lam_path = _select_lambda1(std_panel, h, kernel, ts_in, folds, n_lambda1, 1e-7, LASSO_MAX_SWEEPS)
    ws = orthogonalize_groups(std_panel, h, kernel, ts)
    gamma1 = _run_lasso_path(ws, lam_path, 1e-7, LASSO_MAX_SWEEPS)[-1]
    lambda1 = float(lam_path[-1])

    d = p + 1
    levels1 = gamma1[:, :d]
    bn = np.linalg.norm(levels1, axis=0)
    dm = smoothness_measure(levels1)
    if lambda3_grid is None:
        lambda3_grid = default_lambda3_grid(ts.size, p, m)
    grid = np.asarray(lambda3_grid, dtype=float).ravel()
    if grid.size == 0:
        raise ConfigurationError("the lambda3 grid is empty")

    Xin = std_panel.X[ts_in - 1]
    yin = std_panel.y[ts_in]

    def run(lam3):
        cfg = PenaltyConfig(lambda1=lambda1, lambda3=float(lam3), h=h, a=a,
                            tolerance=tolerance, max_sweeps=max_sweeps)
        res = stage2_gscad(ws, gamma1, cfg, level_norms=bn, smoothness=dm)
        g = res.gamma
        pred = np.einsum("nj,nj->n", Xin, g[:n_in, :d])
        ssr = float(np.mean((yin - pred) ** 2))
        active = tuple(int(j) for j in range(1, d) if np.any(g[:, j] != 0.0))
        score, exact = bic_score(ssr, len(active), p, m)
        return g, active, score, exact

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as ex:
            results = list(ex.map(run, grid))
    else:
        results = [run(v) for v in grid]
    scores = np.array([r[2] for r in results])
    # ties go to the larger penalty
    order = np.argsort(-grid, kind="stable")
    best = int(order[np.argmin(scores[order])])
    g2, active, _, exact = results[best]

    def raw(levels, slopes):
        return (scaler.coefficients_to_raw(levels),
                scaler.coefficients_to_raw(slopes, with_intercept_shift=False))

    s1, s1_slope = raw(levels1, gamma1[:, d:] / h)
    s2, s2_slope = raw(g2[:, :d], g2[:, d:] / h)
    for j in range(1, d):
        if j not in active:
            s2[:, j] = 0.0
            s2_slope[:, j] = 0.0
    forecast = None
    if f_new is not None:
        f_new = np.asarray(f_new, dtype=float).ravel()
        forecast = float(s2[-1, 0] + f_new @ s2[-1, 1:])
    return StagedPaths(
        t=ts, stage1=s1, stage1_slope=s1_slope, D=dm, stage2=s2, stage2_slope=s2_slope,
        active_set=active, h=h, lambda1=lambda1, lambda3=float(grid[best]),
        lambda3_grid=grid, bic=scores, exact_fit=exact, forecast=forecast,
        cv_lambda1=lams, cv_scores=cv_err,
    )


def forecast_two_stage(panel: ForecastPanel, f_new, **kwargs) -> tuple[float, tuple]:
    """Combined forecast of ``y_{N+2}`` from forecasts ``f_new`` and the active set used."""
    fit = fit_two_stage(panel, f_new=f_new, **kwargs)
    return fit.forecast, fit.active_set
