import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from besovtrace import generators as g
from besovtrace.besov import (
    BesovParams, BesovProfile, DiscreteFunction, besov_norm, besov_profile, dyadic_scales,
    fit_smoothness, lp_norm, modulus_of_continuity,
)
from besovtrace.errors import InfinitelySmoothError
from besovtrace.space import PointCloudSpace

# explicit double sum on the level-5 grid for the hat max(0, 1 - 4|x - 1/2|), p = 1
HAT_E1 = {0.5: 0.37497732399060085, 0.25: 0.20088583291708292,
          0.125: 0.10044642857142858, 0.0625: 0.041666666666666664}


def two_points():
    return PointCloudSpace(np.ones(2), 1.0, 1.0, coords=np.array([0.0, 1.0]))


def test_modulus_two_point_examples():
    f = DiscreteFunction(two_points(), [0.0, 1.0])
    assert modulus_of_continuity(f, 2.0, 1.0) == 1.0
    assert modulus_of_continuity(f, 0.5, 1.0) == 0.0
    with pytest.raises(ValueError):
        modulus_of_continuity(f, 0.0, 1.0)


def test_modulus_hat_oracle():
    X = g.grid_space(1, 5)
    f = DiscreteFunction(X, np.maximum(0, 1 - 4 * np.abs(X.coords[:, 0] - 0.5)))
    prof = besov_profile(f, 1.0, list(HAT_E1))
    np.testing.assert_allclose(prof.moduli, list(HAT_E1.values()), rtol=1e-12)


def test_constant_function():
    X = g.grid_space(1, 6)
    f = DiscreteFunction(X, np.full(X.n, 3.0))
    prof = besov_profile(f, 2.0)
    assert np.all(prof.moduli == 0)
    params = BesovParams(0.5, 2, 2)
    assert besov_norm(f, params) == pytest.approx(float(lp_norm(X, f.values, 2)), rel=1e-15)
    with pytest.raises(InfinitelySmoothError):
        fit_smoothness(prof)


def test_profile_reproducible():
    X = g.grid_space(2, 4)
    f = DiscreteFunction(X, np.sin(7 * X.coords[:, 0]) * X.coords[:, 1])
    a, b = besov_profile(f, 1.5), besov_profile(f, 1.5)
    assert a.moduli.tobytes() == b.moduli.tobytes()


def test_fit_smoothness_lipschitz():
    X = g.grid_space(1, 9)
    f = DiscreteFunction(X, X.coords[:, 0])
    assert abs(fit_smoothness(besov_profile(f, 2.0)) - 1) < 0.1


def test_fit_smoothness_jump():
    X = g.grid_space(1, 10)
    f = DiscreteFunction(X, (X.coords[:, 0] >= 0.5).astype(float))
    assert abs(fit_smoothness(besov_profile(f, 1.0)) - 1) < 0.15


def test_quadrature_mode_agrees_with_dyadic():
    X = g.grid_space(1, 8)
    x = X.coords[:, 0]
    f = DiscreteFunction(X, np.exp(-40 * (x - 0.4) ** 2))
    p = BesovParams(0.5, 2, 2)
    a, b = besov_norm(f, p, "dyadic"), besov_norm(f, p, "quadrature")
    assert abs(a - b) / a < 0.05


def test_params_validation():
    for bad in [(0.0, 2, 2), (1.0, 2, 2), (0.5, 0.5, 2), (0.5, 2, 0.5)]:
        with pytest.raises(ValueError):
            BesovParams(*bad)
    BesovParams(0.5, 1, np.inf)


def test_profile_validation():
    with pytest.raises(ValueError):
        BesovProfile(np.array([0.1, 0.2]), np.zeros(2), 1.0)
    with pytest.raises(ValueError):
        BesovProfile(np.array([0.2, 0.1]), np.array([1.0, -1.0]), 1.0)


def test_dyadic_scales():
    np.testing.assert_array_equal(dyadic_scales(g.grid_space(1, 4)), [0.5, 0.25, 0.125, 0.0625])


def test_discrete_function_checks():
    X = g.grid_space(1, 2)
    with pytest.raises(ValueError):
        DiscreteFunction(X, np.ones(3))
    with pytest.raises(ValueError):
        DiscreteFunction(X, [0, 1, np.nan, 0, 0])
    f = DiscreteFunction(X, np.arange(5.0))
    np.testing.assert_array_equal((2 * f - f).values, f.values)


@settings(max_examples=25, deadline=None)
@given(st.floats(-5, 5), st.floats(1.0, 4.0), st.sampled_from([0.05, 0.2, 0.6]))
def test_modulus_homogeneous_and_shift_invariant(c, p, t):
    X = g.grid_space(1, 5)
    v = np.cos(9 * X.coords[:, 0])
    f = DiscreteFunction(X, v)
    base = modulus_of_continuity(f, t, p)
    assert modulus_of_continuity(DiscreteFunction(X, c * v), t, p) == pytest.approx(abs(c) * base, rel=1e-10, abs=1e-14)
    assert modulus_of_continuity(DiscreteFunction(X, v + c), t, p) == pytest.approx(base, rel=1e-10, abs=1e-14)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_besov_norm_triangle_inequality(seed):
    X = g.grid_space(1, 5)
    rng = np.random.default_rng(seed)
    u, v = rng.normal(size=X.n), rng.normal(size=X.n)
    p = BesovParams(0.4, 2, 2)
    nu = besov_norm(DiscreteFunction(X, u), p)
    nv = besov_norm(DiscreteFunction(X, v), p)
    assert besov_norm(DiscreteFunction(X, u + v), p) <= nu + nv + 1e-12
