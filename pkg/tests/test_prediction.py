import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hstqgcn.geospatial import GeoPoint, haversine_distance
from hstqgcn.prediction import (coords_from_probs, eds, predict, read_prediction_dump, rmse, score_dump,
                                softmax_np, summarize, write_prediction_dump)

CENTERS = np.array([[-8.61, 41.14], [-8.60, 41.15], [-8.62, 41.16]])


def test_predict_examples():
    fc = np.zeros((2, 3))
    out = predict(np.zeros(2), fc, CENTERS, fc_b=np.array([0.0, 80.0, 0.0]))
    assert out.argmax_grid == 1
    assert tuple(out.coords) == pytest.approx(tuple(CENTERS[1]), abs=1e-12)
    c = coords_from_probs([0.5, 0.5, 0.0], CENTERS)
    np.testing.assert_allclose(c, (CENTERS[0] + CENTERS[1]) / 2, atol=1e-15)
    out = predict(np.ones(2), fc, CENTERS)
    np.testing.assert_allclose(out.probs, 1 / 3, atol=1e-15)
    np.testing.assert_allclose(tuple(out.coords), CENTERS.mean(axis=0), atol=1e-14)
    assert out.argmax_grid == 0  # ties go to the smallest id


@given(st.lists(st.floats(-30, 30), min_size=3, max_size=3), st.floats(-100, 100))
def test_predict_shift_invariance_and_bounds(bias, c):
    fc = np.zeros((1, 3))
    a = predict(np.ones(1), fc, CENTERS, np.array(bias))
    b = predict(np.ones(1), fc, CENTERS, np.array(bias) + c)
    np.testing.assert_allclose(a.probs, b.probs, atol=1e-12)
    assert tuple(a.coords) == pytest.approx(tuple(b.coords), abs=1e-12)
    assert a.argmax_grid == b.argmax_grid or np.isclose(np.sort(a.probs)[-1], np.sort(a.probs)[-2])
    lo, hi = CENTERS.min(axis=0), CENTERS.max(axis=0)
    assert lo[0] - 1e-12 <= a.coords.lon <= hi[0] + 1e-12
    assert lo[1] - 1e-12 <= a.coords.lat <= hi[1] + 1e-12


def test_eds_rmse_examples():
    p = [(0.0, 0.0), (5.0, 5.0)]
    assert eds(p, p) == 0.0 and rmse(p, p) == 0.0
    assert eds([(0.0, 0.0)], [(1.0, 0.0)]) == pytest.approx(111.195, abs=1e-3)
    d = haversine_distance(GeoPoint(0.0, 0.0), GeoPoint(1.0, 0.0))
    assert eds([(0.0, 0.0), (2.0, 2.0)], [(1.0, 0.0), (2.0, 2.0)]) == pytest.approx(d / 2, abs=1e-12)
    assert rmse([(0.0, 0.0)], [(1.0, 0.0)]) == pytest.approx(eds([(0.0, 0.0)], [(1.0, 0.0)]), abs=1e-12)


def test_rmse_from_distances_3_4():
    # points due north on a meridian: distance is r * dlat exactly
    km_per_deg = haversine_distance(GeoPoint(0.0, 0.0), GeoPoint(0.0, 1.0))
    truth = [(0.0, 0.0), (10.0, 0.0)]
    pred = [(0.0, 3.0 / km_per_deg), (10.0, 4.0 / km_per_deg)]
    assert rmse(pred, truth) == pytest.approx(np.sqrt(12.5), abs=1e-9)
    assert eds(pred, truth) == pytest.approx(3.5, abs=1e-9)


@given(st.integers(1, 30), st.integers(0, 10 ** 6))
def test_rmse_at_least_eds(n, seed):
    rng = np.random.default_rng(seed)
    p = np.column_stack([rng.uniform(-9, -8, n), rng.uniform(41, 42, n)])
    t = np.column_stack([rng.uniform(-9, -8, n), rng.uniform(41, 42, n)])
    assert rmse(p, t) >= eds(p, t) - 1e-12


def test_softmax_np_stable():
    np.testing.assert_allclose(softmax_np([1000.0, 1000.0]), [0.5, 0.5])


def test_dump_roundtrip(tmp_path, rng):
    pred = rng.uniform(41, 42, (5, 2))
    truth = rng.uniform(41, 42, (5, 2))
    path = tmp_path / "pred.csv"
    write_prediction_dump(path, range(5), [3, 1, 4, 1, 5], pred, truth)
    header = path.read_text().splitlines()[0]
    assert header == "sample_id,argmax_grid,pred_lon,pred_lat,true_lon,true_lat"
    p, t = read_prediction_dump(path)
    np.testing.assert_array_equal(p, pred)
    np.testing.assert_array_equal(t, truth)
    s = score_dump(path)
    assert s == {"n": 5, "eds_km": eds(pred, truth), "rmse_km": rmse(pred, truth)}


def test_summarize_top1():
    m = summarize([(0, 0), (1, 1)], [(0, 0), (1, 1)], [2, 3], [2, 4])
    assert m["top1_acc"] == 0.5 and m["eds_km"] == 0.0
