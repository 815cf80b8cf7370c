import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tvcomb.errors import (
    DegenerateScaleError,
    DimensionError,
    InsufficientDataError,
    ParseError,
    SchemaError,
)
from tvcomb.panel import ForecastPanel, Standardizer, destandardize_weights, load_csv, standardize
from tvcomb.smoother import epanechnikov, fit_path

from conftest import random_panel


def write(tmp_path, text, name="p.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_alignment_convention(tmp_path):
    path = write(tmp_path, "y,f1\n1,0.9\n2,1.9\n3,2.9\n4,3.9\n")
    panel = load_csv(path, "y")
    assert panel.T == 3
    np.testing.assert_array_equal(panel.y, [1, 2, 3, 4])
    np.testing.assert_array_equal(panel.F[:, 0], [0.9, 1.9, 2.9])
    np.testing.assert_array_equal(panel.target, [2, 3, 4])


def test_with_next_returns_last_forecast_row(tmp_path):
    path = write(tmp_path, "y,f1,f2\n1,0.9,1\n2,1.9,2\n3,2.9,3\n4,3.9,5\n")
    panel, f_new = load_csv(path, "y", with_next=True)
    np.testing.assert_array_equal(f_new, [3.9, 5.0])
    assert panel.p == 2


def test_missing_target_column(tmp_path):
    path = write(tmp_path, "x,f1\n1,0.9\n2,1.9\n3,2.9\n")
    with pytest.raises(SchemaError):
        load_csv(path, "y")


def test_bad_cell_names_location(tmp_path):
    path = write(tmp_path, "y,f1\n1,0.9\n2,abc\n3,2.9\n")
    with pytest.raises(ParseError) as info:
        load_csv(path, "y")
    d = info.value.to_dict()
    assert d["kind"] == "parse"
    assert d["location"]["row"] == 2
    assert d["location"]["column"] == "f1"


def test_nan_cell_rejected(tmp_path):
    path = write(tmp_path, "y,f1\n1,0.9\n2,nan\n3,2.9\n")
    with pytest.raises(ParseError):
        load_csv(path, "y")


def test_too_few_rows(tmp_path):
    path = write(tmp_path, "y,f1\n1,0.9\n2,1.9\n")
    with pytest.raises(InsufficientDataError):
        load_csv(path, "y")


def test_time_column_kept_as_labels(tmp_path):
    path = write(tmp_path, "date,y,f1\n2001,1,0.9\n2002,2,1.9\n2003,3,2.9\n")
    panel = load_csv(path, "y", time_column="date")
    assert panel.time_index == ("2001", "2002", "2003")
    assert panel.labels == ("f1",)


def test_construction_checks():
    with pytest.raises(DimensionError):
        ForecastPanel(np.zeros(4), np.zeros((4, 1)))
    with pytest.raises(ParseError):
        ForecastPanel([1.0, np.inf, 2.0], [[1.0], [2.0]])


def test_standardize_moments(rng):
    panel = random_panel(rng, 40, 3)
    z, s = standardize(panel)
    for col in [z.y] + [z.F[:, j] for j in range(3)]:
        assert abs(col.mean()) < 1e-12
        assert abs(col.std(ddof=1) - 1.0) < 1e-12
    back = s.invert(z)
    np.testing.assert_allclose(back.y, panel.y, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(back.F, panel.F, rtol=1e-12, atol=1e-12)


def test_standardize_small_target():
    panel = ForecastPanel([1.0, 2.0, 3.0], [[0.0], [1.0]])
    z, _ = standardize(panel)
    np.testing.assert_allclose(z.y, [-1.0, 0.0, 1.0])


def test_standardize_idempotent_parameters(rng):
    z, _ = standardize(random_panel(rng, 30, 2))
    _, s2 = standardize(z)
    np.testing.assert_allclose(s2.means, 0.0, atol=1e-12)
    np.testing.assert_allclose(s2.sds, 1.0, atol=1e-12)


def test_constant_column_names_column(rng):
    F = np.column_stack([rng.standard_normal(10), np.full(10, 2.0)])
    with pytest.raises(DegenerateScaleError) as info:
        standardize(ForecastPanel(rng.standard_normal(11), F))
    assert info.value.to_dict()["location"]["column"] == "f2"


def test_identity_standardizer_leaves_weights():
    s = Standardizer(np.zeros(3), np.ones(3))
    beta = np.arange(6.0).reshape(2, 3)
    np.testing.assert_array_equal(s.coefficients_to_raw(beta), beta)


def test_intercept_only_backtransform():
    s = Standardizer(np.array([2.0, 1.0]), np.array([3.0, 0.5]))
    raw = s.coefficients_to_raw(np.array([0.4, 0.0]))
    assert raw[0] == pytest.approx(2.0 + 3.0 * 0.4)
    assert raw[1] == 0.0


def test_destandardized_predictions_match(rng):
    panel = random_panel(rng, 60, 2)
    z, s = standardize(panel)
    path = fit_path(z, 0.4, epanechnikov())
    raw = destandardize_weights(path, s)
    pred_std = path.predict(z) * s.sds[0] + s.means[0]
    assert np.max(np.abs(raw.predict(panel) - pred_std)) < 1e-10


def test_json_round_trip(rng):
    panel = ForecastPanel(rng.standard_normal(6), rng.standard_normal((5, 2)), ("a", "b"),
                          tuple(str(i) for i in range(6)))
    back = ForecastPanel.from_json(panel.to_json())
    np.testing.assert_array_equal(back.y, panel.y)
    np.testing.assert_array_equal(back.F, panel.F)
    assert back.labels == panel.labels
    assert back.time_index == panel.time_index


def test_head_and_select(rng):
    panel = random_panel(rng, 10, 3)
    h = panel.head(4)
    assert h.T == 4 and h.y.size == 5
    np.testing.assert_array_equal(panel.select([2, 0]).F, panel.F[:, [2, 0]])


@settings(max_examples=30, deadline=None)
@given(st.integers(3, 30), st.integers(1, 4), st.integers(0, 2**31 - 1))
def test_standardize_round_trip_property(T, p, seed):
    panel = random_panel(np.random.default_rng(seed), T, p)
    z, s = standardize(panel)
    back = s.invert(z)
    scale = max(1.0, float(np.abs(panel.F).max()), float(np.abs(panel.y).max()))
    assert np.max(np.abs(back.F - panel.F)) <= 1e-12 * scale
    assert np.max(np.abs(back.y - panel.y)) <= 1e-12 * scale
