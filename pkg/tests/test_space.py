import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from besovtrace import generators as g
from besovtrace.errors import DegenerateFitError
from besovtrace.space import (
    PointCloudSpace, SubsetEmbedding, ball, ball_sums, distance_to_set, distances_to_set,
    estimate_regularity, load_space, measure, quotient_exponent, save_space, space_from_json,
    space_to_json, subset_from_json, subset_to_json,
)


def line(n, h=1.0, w=None):
    x = np.arange(n) * h
    return PointCloudSpace(np.full(n, h if w is None else w), h, x[-1] - x[0], coords=x)


def test_ball_examples():
    X = line(4)
    assert ball(X, 1, 0.0).size == 0
    assert ball(X, 1, 1.5).tolist() == [0, 1, 2]
    assert ball(X, 0, 10.0).tolist() == [0, 1, 2, 3]
    # balls are open
    assert ball(X, 0, 1.0).tolist() == [0]


def test_ball_invalid_index():
    with pytest.raises(IndexError):
        ball(line(4), 7, 1.0)
    with pytest.raises(IndexError):
        measure(line(4), [0, 9])


def test_measure_examples():
    X = g.grid_space(1, 2)
    assert measure(X, []) == 0
    assert measure(X, [0, 2]) == pytest.approx(0.5, abs=0)
    Y = PointCloudSpace(np.full(4, 0.25), 1.0, 3.0, coords=np.arange(4.0))
    assert measure(Y, Y.point_ids) == 1.0


def test_distance_to_set():
    X = g.grid_space(1, 2)
    assert distance_to_set(X, 1, [0]) == 0.25
    assert distance_to_set(X, 0, [0, 3]) == 0.0
    with pytest.raises(ValueError):
        distances_to_set(X, [])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 288), st.floats(0.0, 1.6))
def test_ball_matches_brute_force(c, r):
    X = g.grid_space(2, 4)
    d = np.linalg.norm(X.coords - X.coords[c], axis=1)
    assert ball(X, c, r).tolist() == np.flatnonzero(d < r).tolist()


@settings(max_examples=20, deadline=None)
@given(st.floats(0.01, 0.7), st.floats(1.0, 3.0))
def test_ball_sums_match_brute_force(r, p):
    X = g.grid_space(2, 3)
    rng = np.random.default_rng(0)
    v = rng.normal(size=X.n)
    mass, acc = ball_sums(X, X.point_ids, r, values=v, center_values=v, p=p)
    D = X.pairwise()
    inside = D < r
    np.testing.assert_allclose(mass, inside @ X.weights, rtol=1e-12)
    ref = (inside * np.abs(v[None, :] - v[:, None]) ** p) @ X.weights
    np.testing.assert_allclose(acc[:, 0], ref, rtol=1e-10, atol=1e-15)


def test_matrix_metric_space_agrees_with_coords():
    X = g.grid_space(1, 3)
    Y = PointCloudSpace(X.weights, X.resolution, X.diameter, dist_matrix=X.pairwise())
    for c in range(X.n):
        assert ball(X, c, 0.3).tolist() == ball(Y, c, 0.3).tolist()
    v = np.sin(np.arange(X.n))
    np.testing.assert_allclose(ball_sums(X, X.point_ids, 0.3, v, v)[1],
                               ball_sums(Y, Y.point_ids, 0.3, v, v)[1], rtol=1e-13)


def test_space_validation():
    with pytest.raises(ValueError):
        PointCloudSpace(np.array([1.0, 0.0]), 1.0, 1.0, coords=np.arange(2.0))
    with pytest.raises(ValueError):
        PointCloudSpace(np.ones(2), 1.0, 1.0, dist_matrix=np.array([[0, 1], [2, 0.0]]))
    with pytest.raises(ValueError):
        PointCloudSpace(np.ones(2), 0.0, 1.0, coords=np.arange(2.0))


def test_regularity_grid_1d():
    rep = estimate_regularity(g.grid_space(1, 7))
    assert abs(rep.fitted_exponent - 1) < 0.05
    lo, hi = rep.r_range
    assert 2 ** -7 < lo < hi < 1


def test_regularity_single_point_is_degenerate():
    X = PointCloudSpace(np.ones(1), 1.0, 0.0, coords=np.zeros(1))
    with pytest.raises(DegenerateFitError):
        estimate_regularity(X)


def test_regularity_rejects_radii_outside_window():
    X = g.grid_space(1, 5)
    with pytest.raises(ValueError):
        estimate_regularity(X, r_grid=[0.01, 0.1])


def test_quotient_exponent_examples():
    X = g.grid_space(2, 6)
    assert abs(quotient_exponent(g.axis_segment(X)).fitted_exponent - 1) < 0.1
    full = SubsetEmbedding(X, X.point_ids, X.weights.copy())
    assert abs(quotient_exponent(full).fitted_exponent) < 1e-12


def test_quotient_exponent_product_space():
    F, Y = g.grid_space(1, 7), g.grid_space(1, 7)
    X, emb = g.product_space(F, Y)
    assert abs(quotient_exponent(emb).fitted_exponent - 1) < 0.1


def test_space_json_roundtrip(tmp_path):
    X = g.sierpinski_gasket(2)
    path = tmp_path / "x.json"
    save_space(X, path)
    Y = load_space(path)
    np.testing.assert_array_equal(X.weights, Y.weights)
    np.testing.assert_array_equal(X.coords, Y.coords)
    assert (X.resolution, X.diameter) == (Y.resolution, Y.diameter)
    doc = json.loads(json.dumps(space_to_json(X)))
    assert space_from_json(doc).n == X.n
    emb = g.embed_subset(X, [0, 3, 5], "uniform")
    emb2 = subset_from_json(Y, subset_to_json(emb))
    np.testing.assert_array_equal(emb.subset, emb2.subset)
    np.testing.assert_array_equal(emb.mu_weights, emb2.mu_weights)


def test_subset_embedding_invariants():
    X = g.grid_space(1, 3)
    with pytest.raises(ValueError):
        SubsetEmbedding(X, np.array([1, 1]), np.ones(2))
    with pytest.raises(ValueError):
        SubsetEmbedding(X, np.array([1, 2]), np.array([1.0, 0.0]))
    emb = SubsetEmbedding(X, np.array([4, 1]), np.array([2.0, 1.0]))
    assert emb.subset.tolist() == [1, 4] and emb.mu_weights.tolist() == [1.0, 2.0]
