import numpy as np
import pytest

from besovtrace import generators as g
from besovtrace.errors import DegenerateFitError
from besovtrace.space import estimate_regularity, quotient_exponent

# brute-force ball counting on an independently built level-6 gasket (scipy cKDTree,
# dyadic radii 1/2 .. 1/16): envelope counts 945, 336, 112, 35 -> slope log 3 / log 2
GASKET6_POINTS = 1095


def test_grid_example():
    X = g.grid_space(1, 2)
    np.testing.assert_allclose(X.coords[:, 0], [0, 0.25, 0.5, 0.75, 1])
    np.testing.assert_allclose(X.weights, 0.25)


@pytest.mark.parametrize("n,level", [(1, 6), (2, 4), (3, 2)])
def test_grid_total_measure(n, level):
    h = 2.0 ** -level
    X = g.grid_space(n, level)
    assert X.total_measure == pytest.approx((1 + h) ** n, rel=1e-12)


def test_grid_size_guard():
    with pytest.raises(ValueError):
        g.grid_space(2, 9)


def test_gasket_level0():
    X = g.sierpinski_gasket(0)
    assert X.n == 3
    np.testing.assert_allclose(X.weights, 1 / 3)


@pytest.mark.parametrize("level", [1, 3, 6])
def test_gasket_mass_and_count(level):
    X = g.sierpinski_gasket(level)
    assert X.total_measure == pytest.approx(1.0, abs=1e-12)
    assert X.n == (3 ** (level + 1) + 3) // 2


def test_gasket_regularity():
    X = g.sierpinski_gasket(6)
    assert X.n == GASKET6_POINTS
    assert abs(estimate_regularity(X).fitted_exponent - g.LOG3_LOG2) < 0.1


def test_dilated_gasket_single_dilate():
    T, D = g.sierpinski_gasket(3), g.dilated_gasket(3, 1)
    order_T = np.lexsort(T.coords.T)
    order_D = np.lexsort(D.coords.T)
    np.testing.assert_allclose(D.coords[order_D], 2 * T.coords[order_T], atol=1e-12)
    np.testing.assert_allclose(D.weights[order_D], 3 * T.weights[order_T], rtol=1e-12)


def test_dilated_gasket_mass():
    D = g.dilated_gasket(2, 3)
    assert D.total_measure == pytest.approx(3 + 9 + 27, rel=1e-12)


def test_cantor_level1():
    X = g.cantor_set(1)
    np.testing.assert_allclose(np.sort(X.coords[:, 0]), [1 / 6, 5 / 6])
    np.testing.assert_allclose(X.weights, 0.5)


def test_cantor_regularity():
    X = g.cantor_set(9)
    assert abs(estimate_regularity(X).fitted_exponent - g.LOG2_LOG3) < 0.1


def test_product_space_cardinality():
    F = g.embed_subset(g.grid_space(1, 1), [0, 2], "parent").space
    Y = g.grid_space(1, 1)
    X, emb = g.product_space(F, Y)
    assert X.n == 6 and emb.size == 2
    assert X.metric == "product"
    # max metric: the distance between (0, 0) and (1, 0.5) is 1
    assert X.distance(0, 4) == 1.0


def test_embed_subset_rules():
    X = g.grid_space(2, 3)
    seg = g.axis_segment(X)
    assert seg.size == 9
    np.testing.assert_allclose(seg.mu_weights, 1 / 8)
    diag = g.diagonal_segment(X)
    np.testing.assert_allclose(diag.mu_weights, np.sqrt(2) / 8)
    with pytest.raises(ValueError):
        g.embed_subset(X, [], "uniform")
    with pytest.raises(ValueError):
        g.embed_subset(X, [0, 1], "bogus")


def test_embed_identity_gamma_zero():
    X = g.grid_space(1, 6)
    emb = g.embed_subset(X, X.point_ids, "parent")
    assert abs(quotient_exponent(emb).fitted_exponent) < 1e-12


def test_corner_point_embeds_but_fit_degenerates():
    X = g.grid_space(2, 4)
    emb = g.embed_subset(X, [0], "uniform")
    assert emb.size == 1
    with pytest.raises(DegenerateFitError):
        estimate_regularity(emb.space)


@pytest.mark.parametrize("make", [lambda: g.grid_space(2, 4), lambda: g.sierpinski_gasket(4),
                                  lambda: g.product_space(g.grid_space(1, 4), g.cantor_set(3))[0]])
def test_metric_axioms(make):
    assert g.check_metric_axioms(make()) <= 1e-12


def test_generator_spec():
    assert g.build_space(g.GeneratorSpec("gasket", 2)).n == 15
    with pytest.raises(ValueError):
        g.GeneratorSpec("torus")
