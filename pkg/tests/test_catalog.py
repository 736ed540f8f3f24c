import numpy as np
import pytest
from hypothesis import given, strategies as st

from vodsim.catalog import (X_MAX, X_MIN, Video, ZipfModel, estimate_popularity, make_catalog,
                            prefix_sizes, scaled_x, zipf_pmf)


@pytest.mark.parametrize("n,s,expected", [
    (1, 1.0, [1.0]),
    (4, 1.0, [0.48, 0.24, 0.16, 0.12]),
    (5, 0.0, [0.2] * 5),
])
def test_zipf_pmf_examples(n, s, expected):
    assert np.allclose(zipf_pmf(n, s), expected)


@pytest.mark.parametrize("n,s", [(0, 1.0), (3, -0.1)])
def test_zipf_pmf_rejects_bad_args(n, s):
    with pytest.raises(ValueError):
        zipf_pmf(n, s)


@given(st.integers(1, 200), st.floats(0, 3))
def test_zipf_pmf_normalized_and_decreasing(n, s):
    p = zipf_pmf(n, s)
    assert abs(p.sum() - 1.0) < 1e-9
    assert np.all(np.diff(p) <= 1e-15)
    assert np.allclose(ZipfModel(n, s).pmf(), p)


def test_estimate_empty_log():
    est = estimate_popularity([], 60, 100, [0, 1, 2])
    assert est.total == 0
    assert all(est[v] == X_MIN for v in range(3))


def test_estimate_counts():
    log = [(95, 1), (96, 1), (97, 2), (98, 3)]
    est = estimate_popularity(log, 60, 100, [1, 2, 3])
    assert est.x == {1: 0.5, 2: 0.25, 3: 0.25}
    assert est.ranked()[0] == 1


def test_estimate_clamps_to_x_max():
    est = estimate_popularity([(50 + i, 1) for i in range(10)], 60, 100, [1, 2])
    assert est[1] == X_MAX
    assert est[2] == X_MIN


def test_estimate_window_is_half_open():
    # the request exactly at now - window is outside, the one at now is inside
    est = estimate_popularity([(40, 1), (100, 2)], 60, 100, [1, 2])
    assert est.total == 1 and est.count(2) == 1


@given(st.lists(st.tuples(st.floats(0, 200), st.integers(0, 9)), max_size=60),
       st.floats(1, 120), st.floats(0, 200))
def test_estimate_bounds(log, window, now):
    est = estimate_popularity(log, window, now, list(range(10)))
    assert all(X_MIN <= est[v] <= X_MAX for v in range(10))
    assert est.total == sum(1 for t, _ in log if now - window < t <= now)


@pytest.mark.parametrize("x,S,w", [(0.2, 120, (24.0, 19.2)), (0.5, 180, (90.0, 45.0)),
                                   (X_MIN, 120, (6.0, 5.7))])
def test_prefix_sizes_examples(x, S, w):
    assert np.allclose(prefix_sizes(x, S), w)


@given(st.floats(0.001, 0.999), st.floats(1, 500))
def test_prefixes_fit_inside_video(x, S):
    w1, w2 = prefix_sizes(x, S)
    assert 0 < w1 < S and 0 < w2 and w1 + w2 < S


@pytest.mark.parametrize("x", [0.0, 1.0, -0.5])
def test_prefix_sizes_rejects_out_of_range(x):
    with pytest.raises(ValueError):
        prefix_sizes(x, 120)


def test_scaled_x_caps():
    assert scaled_x(0.5, 0.2) == pytest.approx(0.1)
    assert scaled_x(0.9, 2.0) == X_MAX


def test_make_catalog_deterministic_and_in_range():
    a = make_catalog(50, np.random.default_rng(3))
    b = make_catalog(50, np.random.default_rng(3))
    assert a == b
    assert [v.id for v in a] == list(range(50))
    assert all(120 <= v.duration_min <= 180 and v.duration_min == int(v.duration_min) for v in a)


def test_video_validation_and_units():
    with pytest.raises(ValueError):
        Video(0, 0)
    assert Video(0, 120, 200).units(60) == pytest.approx(200)
