"""Monte Carlo designs with smoothly time-varying combination weights.

Low-dimensional design: two forecasts built from the lagged target,

    f1_t = 0.5 + 0.8 y_t + e1_t
    f2_t = 0.5 + 0.3 sin(2 tau + 0.25) y_t + e2_t
    y_{t+1} = w0(tau) + w1(tau) f1_t + w2(tau) f2_t + u_{t+1}

High-dimensional design: the same plus ``J`` redundant Gaussian forecasts
with ``cov(f_j, f_k) = 2 exp(-|j - k|)``.

Replications draw from counter-based substreams
``SeedSequence([seed, stream, T, J, rep, attempt])`` so results do not
depend on execution order or worker count.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .bandwidth import PluginInputs
from .errors import ConfigurationError, ReplicationFailureError, TvcError
from .panel import ForecastPanel

__all__ = [
    "omega0",
    "omega1",
    "omega2",
    "DgpConfig",
    "SimulatedPanel",
    "simulate_lowdim",
    "simulate_highdim",
    "redundant_covariance",
    "lowdim_plugin_inputs",
    "McResult",
    "run_table1",
    "run_table2",
    "TABLE1_METHODS",
]


def omega0(tau):
    return np.exp(-3.0 + 2.5 * np.asarray(tau, dtype=float))


def omega1(tau):
    return 0.5 * (1.5 * np.asarray(tau, dtype=float) - 0.8) ** 3 + 0.5


def omega2(tau):
    return 0.2 * np.sin(4.0 * np.asarray(tau, dtype=float)) + 0.4


def _omega0_dd(tau):
    return 6.25 * omega0(tau)


def _omega1_dd(tau):
    return 6.75 * (1.5 * np.asarray(tau, dtype=float) - 0.8)


def _omega2_dd(tau):
    return -3.2 * np.sin(4.0 * np.asarray(tau, dtype=float))


def _f2_loading(tau):
    return 0.3 * np.sin(2.0 * np.asarray(tau, dtype=float) + 0.25)


@dataclass(frozen=True)
class DgpConfig:
    """Simulation settings.  ``burn_in`` defaults to ``2 T``."""

    T: int
    n_oos: int = 50
    seed: int = 0
    J: int = 0
    burn_in: int | None = None
    noise_scale: float = 1.0
    w0: Callable = omega0
    w1: Callable = omega1
    w2: Callable = omega2

    def __post_init__(self):
        if self.burn_in is None:
            object.__setattr__(self, "burn_in", 2 * self.T)
        if self.T < 2:
            raise ConfigurationError("T must be at least 2")
        if self.burn_in < self.T:
            raise ConfigurationError("burn_in must be at least T")
        if self.n_oos < 1:
            raise ConfigurationError("n_oos must be at least 1")
        if self.J < 0:
            raise ConfigurationError("J must be non-negative")


@dataclass(frozen=True)
class SimulatedPanel:
    """A simulated panel with ``T + n_oos`` pairs and the true weights per pair."""

    panel: ForecastPanel
    beta_true: np.ndarray
    relevant: tuple = (1, 2)


def _rng_for(config: DgpConfig) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([config.seed, 0, config.T, config.J]))


def _simulate_core(config: DgpConfig, rng: np.random.Generator):
    T, B, N = config.T, config.burn_in, config.T + config.n_oos
    steps = B + N
    shocks = config.noise_scale * rng.standard_normal((steps, 3))
    # time index of step i is t = i - B + 1, running 1 - B ... N
    t = np.arange(1 - B, N + 1)
    tau = np.maximum(t / N, 0.0)
    w0, w1, w2 = config.w0(tau), config.w1(tau), config.w2(tau)
    load2 = _f2_loading(tau)
    y = np.empty(steps + 1)
    f1 = np.empty(steps)
    f2 = np.empty(steps)
    y[0] = 0.0
    for i in range(steps):
        f1[i] = 0.5 + 0.8 * y[i] + shocks[i, 1]
        f2[i] = 0.5 + load2[i] * y[i] + shocks[i, 2]
        y[i + 1] = w0[i] + w1[i] * f1[i] + w2[i] * f2[i] + shocks[i, 0]
    keep = slice(B, B + N)
    beta = np.column_stack([w0[keep], w1[keep], w2[keep]])
    return y[B : B + N + 1], np.column_stack([f1[keep], f2[keep]]), beta


def simulate_lowdim(config: DgpConfig, rng: np.random.Generator | None = None) -> SimulatedPanel:
    """Two-forecast panel with ``T + n_oos`` pairs.

    Rescaled time ``tau = t / (T + n_oos)`` spans the estimation and holdout
    stretch; burn-in steps use the coefficients at ``tau = 0``.
    """
    rng = _rng_for(config) if rng is None else rng
    y, F, beta = _simulate_core(config, rng)
    return SimulatedPanel(ForecastPanel(y, F), beta)


def redundant_covariance(J: int) -> np.ndarray:
    idx = np.arange(J)
    return 2.0 * np.exp(-np.abs(idx[:, None] - idx[None, :]))


def simulate_highdim(config: DgpConfig, rng: np.random.Generator | None = None) -> SimulatedPanel:
    """Low-dimensional design plus ``J`` redundant forecasts, iid across time.

    The first two columns are the relevant forecasts.  The low-dimensional
    part is drawn first, so it coincides with :func:`simulate_lowdim` for
    the same generator state.
    """
    if config.J < 1:
        raise ConfigurationError("the high-dimensional design needs J >= 1")
    rng = _rng_for(config) if rng is None else rng
    y, F, beta = _simulate_core(config, rng)
    L = np.linalg.cholesky(redundant_covariance(config.J))
    Z = rng.standard_normal((F.shape[0], config.J)) @ L.T
    beta_full = np.column_stack([beta, np.zeros((beta.shape[0], config.J))])
    return SimulatedPanel(ForecastPanel(y, np.column_stack([F, Z])), beta_full)


def lowdim_plugin_inputs(noise_scale: float = 1.0, mu2: float = 0.2, nu0: float = 0.6) -> PluginInputs:
    """True moment functions of the low-dimensional design.

    At fixed ``tau`` the target follows an AR(1) with intercept
    ``w0 + 0.5 (w1 + w2)``, slope ``0.8 w1 + 0.3 sin(2 tau + 0.25) w2`` and
    innovation variance ``s^2 (1 + w1^2 + w2^2)``; the second moments of
    ``X_t = (1, f1_t, f2_t)`` follow from its stationary mean and variance.
    With homoskedastic ``u``, ``V(tau) = s^2 M(tau)``.
    """
    s2 = noise_scale**2

    def M(tau):
        w0, w1, w2 = float(omega0(tau)), float(omega1(tau)), float(omega2(tau))
        b2 = float(_f2_loading(tau))
        c = w0 + 0.5 * (w1 + w2)
        phi = 0.8 * w1 + b2 * w2
        m = c / (1.0 - phi)
        v = s2 * (1.0 + w1**2 + w2**2) / (1.0 - phi**2)
        ey2 = v + m * m
        a = np.array([1.0, 0.5, 0.5])  # intercepts of (1, f1, f2)
        b = np.array([0.0, 0.8, b2])  # loadings on y
        out = np.outer(a, a) + (np.outer(a, b) + np.outer(b, a)) * m + np.outer(b, b) * ey2
        out[1, 1] += s2
        out[2, 2] += s2
        return out

    def V(tau):
        return s2 * M(tau)

    def beta_dd(tau):
        return np.array([_omega0_dd(tau), _omega1_dd(tau), _omega2_dd(tau)], dtype=float)

    return PluginInputs(M, V, beta_dd, mu2, nu0)


TABLE1_METHODS = (
    "NPRf",
    "BG",
    "TVGRregconst",
    "TVGRreg",
    "TVGRregconstr",
    "GRregconst",
    "GRreg",
    "GRregconstr",
    "EQ",
)


def _rep_rng(seed: int, stream: int, T: int, J: int, rep: int, attempt: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, stream, T, J, rep, attempt]))


def _fsum_mean_sd(values) -> tuple[float, float]:
    v = [float(x) for x in values]
    n = len(v)
    mean = math.fsum(v) / n
    sd = math.sqrt(math.fsum((x - mean) ** 2 for x in v) / (n - 1)) if n > 1 else 0.0
    return mean, sd


@dataclass
class McResult:
    """Aggregated Monte Carlo output.

    ``rows`` holds one dict per table cell group: for the low-dimensional
    table ``{"T", "method", "mean", "sd"}``, for the high-dimensional one
    ``{"T", "J", "ascfe", "sd", "pct_correct", "relevant_included"}``.
    """

    kind: str
    rows: list
    n_reps: int
    seed: int
    failures: dict
    config: dict = field(default_factory=dict)
    wall_time: float = 0.0

    def get(self, **keys) -> dict:
        for r in self.rows:
            if all(r.get(k) == v for k, v in keys.items()):
                return r
        raise KeyError(keys)

    def best(self, T: int) -> str:
        cands = [r for r in self.rows if r["T"] == T]
        return min(cands, key=lambda r: r["mean"])["method"]

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        if self.kind == "table1":
            Ts = sorted({r["T"] for r in self.rows})
            methods = [m for m in TABLE1_METHODS if any(r["method"] == m for r in self.rows)]
            wr.writerow(["method"] + [f"{s}_T{T}" for T in Ts for s in ("mean", "sd")])
            for m in methods:
                cells = []
                for T in Ts:
                    r = self.get(T=T, method=m)
                    cells += [f"{r['mean']:.6f}", f"{r['sd']:.6f}"]
                wr.writerow([m] + cells)
            wr.writerow(["Best"] + [c for T in Ts for c in (self.best(T), "")])
        else:
            wr.writerow(["J", "T", "ascfe", "sd", "pct_correct", "relevant_included", "n_reps"])
            for r in sorted(self.rows, key=lambda r: (r["J"], r["T"])):
                wr.writerow([r["J"], r["T"], f"{r['ascfe']:.6f}", f"{r['sd']:.6f}",
                             f"{r['pct_correct']:.6f}", f"{r['relevant_included']:.6f}", self.n_reps])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text)
        return text

    def manifest(self) -> dict:
        return {
            "kind": self.kind,
            "seed": self.seed,
            "n_reps": self.n_reps,
            "failures": {str(k): v for k, v in self.failures.items()},
            "config": self.config,
            "wall_time_seconds": self.wall_time,
        }

    def write_manifest(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.manifest(), fh, indent=2, sort_keys=True)


MAX_ATTEMPTS = 20


def _table1_task(args):
    from .baselines import oos_forecasts

    seed, T, rep, n_oos, methods = args
    failed = 0
    for attempt in range(MAX_ATTEMPTS):
        rng = _rep_rng(seed, 1, T, 0, rep, attempt)
        try:
            sim = simulate_lowdim(DgpConfig(T=T, n_oos=n_oos, seed=seed), rng)
            out = oos_forecasts(sim.panel, T, methods)
            losses = out.losses()
            return {m: float(np.mean(losses[m])) for m in methods}, failed
        except TvcError:
            failed += 1
    return None, failed


def _table2_task(args):
    from .sparse import fit_two_stage

    seed, T, J, rep, n_oos = args
    failed = 0
    for attempt in range(MAX_ATTEMPTS):
        rng = _rep_rng(seed, 2, T, J, rep, attempt)
        try:
            sim = simulate_highdim(DgpConfig(T=T, n_oos=n_oos, seed=seed, J=J), rng)
            P = sim.panel
            sq, exact, incl = [], True, True
            for n in range(T + 1, T + n_oos + 1):
                fit = fit_two_stage(P.head(n - 1), f_new=P.F[n - 1])
                active = set(fit.active_set)
                exact &= active == {1, 2}
                incl &= {1, 2} <= active
                sq.append((P.y[n] - fit.forecast) ** 2)
            return (float(np.mean(sq)), bool(exact), bool(incl)), failed
        except TvcError:
            failed += 1
    return None, failed


def _run_tasks(fn, tasks, n_jobs):
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as ex:
            return list(ex.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * n_jobs))))
    return [fn(t) for t in tasks]


def _check_failures(failures: dict, reps: int) -> None:
    for key, n_fail in failures.items():
        if n_fail > 0.01 * reps:
            raise ReplicationFailureError(
                f"{n_fail} failed replications for {key} exceed 1% of {reps}", cell=str(key)
            )


def run_table1(
    reps: int = 500,
    T_list: Sequence[int] = (200, 300, 500),
    seed: int = 0,
    n_oos: int = 50,
    methods: Sequence[str] = TABLE1_METHODS,
    n_jobs: int = 1,
) -> McResult:
    """Low-dimensional experiment: mean and sd of the holdout ASCFE per method.

    NPRf's bandwidth is chosen by cross-validation on the first ``T``
    pairs and kept for the whole holdout stretch.
    """
    if reps < 1:
        raise ConfigurationError("reps must be positive")
    start = time.perf_counter()
    methods = tuple(methods)
    tasks = [(seed, T, r, n_oos, methods) for T in T_list for r in range(reps)]
    results = _run_tasks(_table1_task, tasks, n_jobs)
    rows, failures = [], {}
    for T in T_list:
        cell = [res for (s, t, *_), res in zip(tasks, results) if t == T]
        failures[T] = sum(f for _, f in cell)
        if any(r is None for r, _ in cell):
            raise ReplicationFailureError(f"a replication at T={T} failed {MAX_ATTEMPTS} times", T=T)
        for m in methods:
            mean, sd = _fsum_mean_sd(r[m] for r, _ in cell)
            rows.append({"T": T, "method": m, "mean": mean, "sd": sd})
    _check_failures(failures, reps)
    cfg = {"T_list": list(T_list), "n_oos": n_oos, "methods": list(methods), "burn_in": "2T"}
    return McResult("table1", rows, reps, seed, failures, cfg, time.perf_counter() - start)


def run_table2(
    reps: int = 200,
    T_list: Sequence[int] = (50, 100, 150),
    J_list: Sequence[int] = (10, 50, 100),
    seed: int = 0,
    n_oos: int = 10,
    n_jobs: int = 1,
) -> McResult:
    """High-dimensional experiment with the two-stage estimator refitted at every holdout origin."""
    if reps < 1:
        raise ConfigurationError("reps must be positive")
    start = time.perf_counter()
    tasks = [(seed, T, J, r, n_oos) for J in J_list for T in T_list for r in range(reps)]
    results = _run_tasks(_table2_task, tasks, n_jobs)
    rows, failures = [], {}
    for J in J_list:
        for T in T_list:
            cell = [res for (s, t, j, *_), res in zip(tasks, results) if t == T and j == J]
            failures[f"T={T},J={J}"] = sum(f for _, f in cell)
            if any(r is None for r, _ in cell):
                raise ReplicationFailureError(f"a replication at T={T}, J={J} failed repeatedly", T=T, J=J)
            mean, sd = _fsum_mean_sd(r[0] for r, _ in cell)
            rows.append({
                "T": T, "J": J, "ascfe": mean, "sd": sd,
                "pct_correct": sum(r[1] for r, _ in cell) / reps,
                "relevant_included": sum(r[2] for r, _ in cell) / reps,
            })
    _check_failures(failures, reps)
    cfg = {"T_list": list(T_list), "J_list": list(J_list), "n_oos": n_oos, "bandwidth": "(log(J+3)/T)^0.2"}
    return McResult("table2", rows, reps, seed, failures, cfg, time.perf_counter() - start)
