import json

import numpy as np
import pytest

from tvcomb.errors import ConfigurationError, DegenerateVarianceError, DimensionError
from tvcomb.evaluation import LossSeries, ascfe, dm_test, rc_test, summary_csv


def test_ascfe_examples():
    assert ascfe([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert ascfe([0.0, 0.0], [1.0, -1.0]) == 1.0
    with pytest.raises(DimensionError):
        ascfe([1.0], [1.0, 2.0])
    with pytest.raises(DimensionError):
        ascfe([], [])


def test_loss_series(rng):
    a = rng.standard_normal(20)
    ls = LossSeries.from_forecasts(a, {"x": a + 1.0, "y": a})
    assert ls.n_oos == 20
    assert ls.ascfe() == {"x": 1.0, "y": 0.0}
    with pytest.raises(DimensionError):
        LossSeries({"a": np.ones(3), "b": np.ones(4)})
    with pytest.raises(ValueError):
        LossSeries({"a": -np.ones(3)})
    lines = summary_csv(ls).splitlines()
    assert lines[0] == "method,ascfe,sd"
    assert lines[1].startswith("x,1.0,")


class TestDieboldMariano:
    def test_identical_losses(self, rng):
        loss = rng.random(30)
        r = dm_test(loss, loss)
        assert (r.statistic, r.p_value) == (0.0, 0.5)

    def test_antisymmetry_and_complement(self, rng):
        a, b = rng.random(50), rng.random(50)
        ab, ba = dm_test(a, b), dm_test(b, a)
        assert ab.statistic == pytest.approx(-ba.statistic, rel=1e-14)
        assert ab.p_value + ba.p_value == pytest.approx(1.0, abs=1e-14)
        assert dm_test(a, b, "greater").p_value == pytest.approx(ba.p_value, abs=1e-14)

    def test_lag_and_serialization(self, rng):
        r = dm_test(rng.random(100), rng.random(100))
        assert r.meta["lag"] == 4
        d = json.loads(r.to_json())
        assert 0 <= d["p_value"] <= 1 and d["alternative"] == "less"

    def test_hand_computed_statistic(self):
        d = np.array([1.0, -1.0, 2.0, 0.0, 1.0, 3.0, -2.0, 1.0])
        n, lag = 8, 2
        z = d - d.mean()
        gam = [z[k:] @ z[: n - k] / n for k in range(lag + 1)]
        lrv = gam[0] + 2 * (2 / 3 * gam[1] + 1 / 3 * gam[2])
        r = dm_test(d, np.zeros(n))
        assert r.statistic == pytest.approx(d.mean() / np.sqrt(lrv / n), rel=1e-12)

    def test_errors(self):
        with pytest.raises(ValueError):
            dm_test(np.ones(4), np.zeros(4))
        with pytest.raises(DegenerateVarianceError):
            dm_test(np.ones(10), np.zeros(10))
        with pytest.raises(DimensionError):
            dm_test(np.ones(10), np.zeros(11))

    def test_size(self):
        rng = np.random.default_rng(2024)
        rejections = sum(dm_test(rng.standard_normal(100), np.zeros(100)).p_value < 0.05 for _ in range(2000))
        assert 0.03 <= rejections / 2000 <= 0.08


class TestRealityCheck:
    def test_degenerate_differential(self, rng):
        bench = rng.random(40)
        r = rc_test(bench, bench[None, :], B=200)
        assert r.statistic == 0.0
        assert r.p_value >= 0.5

    def test_dominance(self, rng):
        bench = 2.0 + rng.random(100)
        r = rc_test(bench, bench - 1.0, B=1000, seed=5)
        assert r.statistic == pytest.approx(10.0)
        assert r.p_value < 0.05

    def test_duplicate_candidate(self, rng):
        bench = rng.random(60)
        cand = bench + 0.1 * rng.standard_normal(60)
        one = rc_test(bench, cand, B=300, seed=1)
        two = rc_test(bench, np.vstack([cand, cand]), B=300, seed=1)
        assert one.p_value == two.p_value and one.statistic == two.statistic

    def test_seeded(self, rng):
        bench = rng.random(60)
        cands = rng.random((3, 60))
        a = rc_test(bench, cands, B=200, seed=9)
        b = rc_test(bench, cands, B=200, seed=9)
        assert a.to_json() == b.to_json()
        assert rc_test(bench, cands.T, B=200, seed=9).p_value == a.p_value

    def test_errors(self, rng):
        bench = rng.random(20)
        with pytest.raises(ConfigurationError):
            rc_test(bench, bench, q=1.0)
        with pytest.raises(ConfigurationError):
            rc_test(bench, bench, B=50)
        with pytest.raises(ValueError):
            rc_test(bench[:5], bench[:5])
