import numpy as np
import pytest

from besovtrace import generators as g
from besovtrace.space import PointCloudSpace
from besovtrace.whitney import (
    RADIUS_GUARD, bounded_overlap_check, partition_of_unity, verify_cover, verify_partition,
    whitney_cover,
)


def symmetric_line(level):
    h = 2.0 ** -level
    x = np.arange(-2 ** level, 2 ** level + 1) * h
    return PointCloudSpace(np.full(x.size, h), h, 2.0, coords=x, grid_shape=(x.size,))


def test_empty_cover_when_F_is_X():
    X = g.grid_space(1, 4)
    cover = whitney_cover(X, X.point_ids)
    assert cover.size == 0 and cover.overlap_bound == 0
    assert all(v is True or v == 0 for v in verify_cover(cover).values())
    with pytest.raises(ValueError):
        partition_of_unity(cover)


def test_cover_rejects_empty_F():
    with pytest.raises(ValueError):
        whitney_cover(g.grid_space(1, 3), [])


def test_point_F_on_symmetric_line():
    X = symmetric_line(8)
    zero = int(np.flatnonzero(X.coords[:, 0] == 0)[0])
    cover = whitney_cover(X, [zero])
    x = np.abs(X.coords[cover.centers, 0])
    np.testing.assert_allclose(cover.radii, x / 12 * RADIUS_GUARD, rtol=1e-15)
    # every point of 6B_i: 6 r_i <= |x| <= 18 r_i
    inc = cover.incidence.tocoo()
    d = np.abs(X.coords[inc.col, 0])
    r = cover.radii[inc.row]
    assert np.all((6 * r <= d) & (d <= 18 * r))
    assert np.all(cover.anchors == zero)


@pytest.mark.parametrize("make", ["diagonal", "axis", "gasket_edge"])
def test_cover_and_partition_pass_exhaustive_checks(make):
    if make == "gasket_edge":
        X = g.sierpinski_gasket(5)
        F = np.flatnonzero(np.abs(X.coords[:, 1]) < 1e-12)
    else:
        X = g.grid_space(2, 5)
        emb = g.diagonal_segment(X) if make == "diagonal" else g.axis_segment(X, 0.5)
        F = emb.subset
    cover = whitney_cover(X, F)
    c = cover.checks
    assert all(c[k] for k in ["item1_disjoint", "item2_centers", "item2_band_covered",
                              "item3_bracket", "item4_anchor", "item5_F_outside_omega"])
    assert c["item6_overlap"] <= 32
    pou = partition_of_unity(cover)
    pc = pou.checks
    assert pc["item1_support"] and pc["item2_range"] and pc["item4_zero_outside_omega"]
    assert pc["item3_band_sum_error"] <= 1e-12
    assert pc["item5_weak"]
    tot = pou.total()
    assert np.all(np.abs(tot[cover.band()] - 1) <= 1e-12)
    assert np.all(tot[~cover.omega()] == 0)


def test_partition_lipschitz_ratio_reported():
    X = g.grid_space(2, 5)
    pou = partition_of_unity(whitney_cover(X, g.diagonal_segment(X).subset))
    assert pou.lipschitz_ratios.shape == (pou.cover.size,)
    assert 0 < pou.checks["item6_lipschitz_max"] <= 2


def test_partition_bump_support_brute_force():
    X = g.grid_space(2, 4)
    cover = whitney_cover(X, g.axis_segment(X).subset)
    pou = partition_of_unity(cover)
    Phi = pou.values.toarray()
    D = X.pairwise(cover.centers)
    r = cover.radii[:, None]
    H = np.clip((6 * r - D) / (3 * r), 0, 1)
    ref = H / np.maximum(1.0, H.sum(axis=0))[None, :]
    np.testing.assert_allclose(Phi, ref, atol=1e-15)


def test_verify_partition_detects_tampering():
    X = g.grid_space(2, 4)
    pou = partition_of_unity(whitney_cover(X, g.diagonal_segment(X).subset))
    bad = pou.values.copy()
    bad.data[0] += 0.5
    from besovtrace.whitney import PartitionOfUnity
    res = verify_partition(PartitionOfUnity(pou.cover, bad, pou.lipschitz_ratios))
    assert not (res["item2_range"] and res["item3_band_sum"])


def test_overlap_single_ball():
    X = g.grid_space(1, 5)
    assert bounded_overlap_check(X, [16], [0.1], 1, 2, 6) == 1


def test_overlap_two_balls_midpoint():
    x = np.arange(-12, 25) * 0.25
    X = PointCloudSpace(np.full(x.size, 0.25), 0.25, x[-1] - x[0], coords=x)
    c0, c1 = int(np.flatnonzero(x == 0)[0]), int(np.flatnonzero(x == 2.5)[0])
    assert bounded_overlap_check(X, [c0, c1], [1.0, 1.0], 1, 2, 2) == 2


def test_overlap_rejects_overlapping_balls():
    X = g.grid_space(1, 5)
    with pytest.raises(ValueError):
        bounded_overlap_check(X, [10, 11], [0.1, 0.1], 1, 2, 6)


def test_overlap_point_F_small_and_stable():
    vals = []
    for level in (7, 8):
        X = symmetric_line(level)
        zero = int(np.flatnonzero(X.coords[:, 0] == 0)[0])
        cover = whitney_cover(X, [zero])
        vals.append(bounded_overlap_check(X, cover.centers, cover.radii, 1, 2, 6))
    assert max(vals) <= 8
    assert max(vals) / min(vals) < 2
