"""Out-of-sample losses and predictive-accuracy tests."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from .errors import ConfigurationError, DegenerateVarianceError, DimensionError

__all__ = ["LossSeries", "TestResult", "ascfe", "dm_test", "rc_test", "summary_csv"]


@dataclass(frozen=True)
class LossSeries:
    """Squared forecast errors, one column per method."""

    losses: dict

    def __post_init__(self):
        lengths = {len(v) for v in self.losses.values()}
        if len(lengths) > 1:
            raise DimensionError("all methods must share the same number of holdout points")
        for k, v in self.losses.items():
            if np.any(np.asarray(v) < 0):
                raise ValueError(f"negative loss for {k}")

    @classmethod
    def from_forecasts(cls, actuals, forecasts: dict) -> "LossSeries":
        a = np.asarray(actuals, dtype=float)
        out = {}
        for k, f in forecasts.items():
            f = np.asarray(f, dtype=float)
            if f.shape != a.shape:
                raise DimensionError(f"{k}: {f.size} forecasts for {a.size} actuals")
            out[k] = (a - f) ** 2
        return cls(out)

    @property
    def n_oos(self) -> int:
        return len(next(iter(self.losses.values()))) if self.losses else 0

    def ascfe(self) -> dict:
        return {k: float(np.mean(v)) for k, v in self.losses.items()}


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    alternative: str
    meta: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(
            {"statistic": self.statistic, "p_value": self.p_value, "alternative": self.alternative,
             "meta": self.meta},
            sort_keys=True,
        )


def ascfe(actuals, forecasts) -> float:
    """Average squared combined forecast error."""
    a = np.asarray(actuals, dtype=float).ravel()
    f = np.asarray(forecasts, dtype=float).ravel()
    if a.size != f.size:
        raise DimensionError(f"{a.size} actuals but {f.size} forecasts")
    if a.size == 0:
        raise DimensionError("need at least one holdout point")
    return float(np.mean((a - f) ** 2))


def _bartlett_lrv(d: np.ndarray, lag: int) -> float:
    n = d.size
    z = d - d.mean()
    lrv = z @ z / n
    for k in range(1, lag + 1):
        lrv += 2.0 * (1.0 - k / (lag + 1)) * (z[k:] @ z[:-k]) / n
    return float(lrv)


def dm_test(loss_a, loss_b, alternative: str = "less") -> TestResult:
    """Diebold-Mariano test on ``d = loss_a - loss_b``.

    ``alternative="less"`` is the hypothesis that method ``a`` has the
    smaller expected loss; it rejects for large negative statistics.  The
    long-run variance uses Bartlett weights with ``floor(n^{1/3})`` lags.
    """
    a = np.asarray(loss_a, dtype=float).ravel()
    b = np.asarray(loss_b, dtype=float).ravel()
    if a.size != b.size:
        raise DimensionError("loss series differ in length")
    n = a.size
    if n < 5:
        raise ValueError("the DM test needs at least 5 holdout points")
    if alternative not in ("less", "greater"):
        raise ValueError("alternative must be 'less' or 'greater'")
    d = a - b
    lag = int(math.floor(n ** (1.0 / 3.0) + 1e-12))
    meta = {"lag": lag, "kernel": "bartlett", "n": n}
    dbar = float(d.mean())
    if np.all(d == d[0]) and d[0] == 0.0:
        return TestResult(0.0, 0.5, alternative, meta)
    lrv = _bartlett_lrv(d, lag)
    if not lrv > 0:
        raise DegenerateVarianceError(f"long-run variance is {lrv:.3g} with mean differential {dbar:.3g}")
    stat = dbar / math.sqrt(lrv / n)
    p = norm.cdf(stat) if alternative == "less" else norm.sf(stat)
    return TestResult(float(stat), float(p), alternative, meta)


def _stationary_indices(rng: np.random.Generator, n: int, q: float) -> np.ndarray:
    """One stationary-bootstrap resample of ``0..n-1`` with mean block length ``1/q``."""
    starts = rng.integers(0, n, size=n)
    new_block = rng.random(n) < q
    new_block[0] = True
    block_id = np.cumsum(new_block) - 1
    first = np.flatnonzero(new_block)
    offset = np.arange(n) - first[block_id]
    return (starts[first][block_id] + offset) % n


def rc_test(benchmark_loss, candidate_losses, B: int = 1000, q: float = 0.1, seed: int = 0) -> TestResult:
    """White's Reality Check that no candidate beats the benchmark.

    The statistic is ``max_k sqrt(n) mean(benchmark - candidate_k)``.  The
    null distribution comes from the stationary bootstrap of the
    differentials, recentred at their sample means; the p-value is the
    share of replicates at or above the observed statistic.  Replicate
    ``b`` draws from its own child of ``SeedSequence(seed)``.
    """
    bench = np.asarray(benchmark_loss, dtype=float).ravel()
    cands = np.atleast_2d(np.asarray(candidate_losses, dtype=float))
    if cands.shape[1] != bench.size:
        if cands.shape[0] == bench.size:
            cands = cands.T
        else:
            raise DimensionError("candidate and benchmark losses differ in length")
    n = bench.size
    if n < 10:
        raise ValueError("the Reality Check needs at least 10 holdout points")
    if not 0 < q < 1:
        raise ConfigurationError(f"restart probability must lie in (0, 1), got {q}")
    if B < 100:
        raise ConfigurationError(f"need at least 100 bootstrap replicates, got {B}")
    d = bench[None, :] - cands  # (k, n)
    dbar = d.mean(axis=1)
    stat = float(np.sqrt(n) * dbar.max())
    children = np.random.SeedSequence(seed).spawn(B)
    vstar = np.empty(B)
    for b, child in enumerate(children):
        idx = _stationary_indices(np.random.default_rng(child), n, q)
        vstar[b] = np.sqrt(n) * (d[:, idx].mean(axis=1) - dbar).max()
    p = float(np.mean(vstar >= stat))
    return TestResult(stat, p, "benchmark worse", {"B": B, "q": q, "seed": seed, "n": n, "k": d.shape[0]})


def summary_csv(losses: LossSeries, path=None) -> str:
    """Table with one row per method: ``method, ascfe, sd`` of the squared errors."""
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["method", "ascfe", "sd"])
    for k, v in losses.losses.items():
        v = np.asarray(v)
        sd = float(np.std(v, ddof=1)) if v.size > 1 else 0.0
        wr.writerow([k, repr(float(v.mean())), repr(sd)])
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    return text
