"""Whitney-type cover of the complement of a closed set and its partition of unity."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import _kernels
from .errors import ConstructionError
from .space import PointCloudSpace, ball_with_distances, distances_to_set

RADIUS_DIVISOR = 12.0
# radii sit a relative 2^-30 below d/12 so rounding in the metric cannot put a
# point whose exact distance is 6 r_i (or r_i + r_j) on the wrong side
RADIUS_GUARD = 1.0 - 2.0 ** -30


@dataclass(frozen=True, eq=False)
class WhitneyCover:
    """Disjoint balls ``B(x_i, r_i)`` with ``r_i = d(x_i, F) / 12`` (less a 2^-30 relative guard).

    ``incidence`` is the sparse (balls x points) matrix of ``d(x, x_i)`` over
    ``6B_i``, stored as distance + 1 so that zero distances survive sparsity.
    """

    space: PointCloudSpace
    F: np.ndarray
    scale_unit: float
    centers: np.ndarray
    radii: np.ndarray
    layers: np.ndarray
    anchors: np.ndarray
    dist_to_F: np.ndarray
    incidence: sp.csr_matrix
    overlap_bound: int
    pairwise_overlap: int
    checks: dict = field(default_factory=dict)

    @property
    def size(self) -> int:
        return self.centers.size

    def band(self) -> np.ndarray:
        """Mask of points with ``0 < d(x, F) < scale_unit``."""
        return (self.dist_to_F > 0) & (self.dist_to_F < self.scale_unit)

    def omega(self) -> np.ndarray:
        """Mask of points in ``Omega``, the union of the ``6B_i``."""
        mask = np.zeros(self.space.n, dtype=bool)
        mask[self.incidence.indices] = True
        return mask

    def to_dict(self) -> dict:
        return {
            "balls": [{"center": int(c), "radius": float(r), "layer": int(k), "anchor": int(a)}
                      for c, r, k, a in zip(self.centers, self.radii, self.layers, self.anchors)],
            "overlap_bound": int(self.overlap_bound),
            "pairwise_overlap": int(self.pairwise_overlap),
            "scale_unit": self.scale_unit,
            "checks": self.checks,
        }


def _select_centers(X: PointCloudSpace, dF: np.ndarray, scale_unit: float):
    cand = np.flatnonzero((dF > 0) & (dF < scale_unit))
    if cand.size == 0:
        return cand, cand, np.empty(0)
    layer = np.floor(-np.log2(dF[cand] / scale_unit)).astype(np.int64)
    # guard the floor against rounding at exact dyadic ratios
    layer = np.where(dF[cand] / scale_unit < 2.0 ** -layer, layer, layer - 1)
    layer = np.where(dF[cand] / scale_unit >= 2.0 ** (-layer - 1), layer, layer + 1)
    order = cand[np.lexsort((cand, layer))]
    radii = dF / RADIUS_DIVISOR * RADIUS_GUARD
    if X.dist_matrix is not None:
        keep = _kernels.greedy_disjoint_matrix(X.dist_matrix, order, radii)
    else:
        keep = _kernels.greedy_disjoint(X.coords, X.blocks, order, radii)
    lay = dict(zip(cand.tolist(), layer.tolist()))
    layers = np.array([lay[int(i)] for i in keep], dtype=np.int64)
    return keep.astype(np.int64), layers, radii[keep]


def _incidence(X: PointCloudSpace, centers, radii, factor: float) -> sp.csr_matrix:
    rows, cols, vals = [], [], []
    for i, (c, r) in enumerate(zip(centers, radii)):
        idx, d = ball_with_distances(X, int(c), factor * r)
        rows.append(np.full(idx.size, i))
        cols.append(idx)
        vals.append(d + 1.0)
    if not rows:
        return sp.csr_matrix((0, X.n))
    m = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(len(centers), X.n))
    m.sort_indices()
    return m


def _nearest_in_F(X: PointCloudSpace, F: np.ndarray, pts: np.ndarray) -> np.ndarray:
    out = np.empty(pts.size, dtype=np.int64)
    for k, x in enumerate(pts):
        d = X.pairwise([x], F)[0]
        out[k] = F[int(np.argmin(d))]
    return out


def whitney_cover(X: PointCloudSpace, F, scale_unit: float = 1.0,
                  verify: bool = True) -> WhitneyCover:
    """Greedy Whitney cover of ``{0 < d(x, F) < scale_unit}``.

    Candidates are scanned by dyadic layer ``2^(-k-1) <= d(x, F)/scale_unit < 2^-k``
    from coarse to fine, then by point index; a candidate becomes a center when
    its ball ``B(x, d(x, F)/12)`` is metrically disjoint from every ball kept so
    far.  Every candidate that is not kept lies within ``24/11`` radii of a kept
    center, so the band is covered by the ``3B_i``.
    """
    F = X._check_index(F)
    if F.size == 0:
        raise ValueError("F must be nonempty")
    if not scale_unit > 0:
        raise ValueError("scale_unit must be positive")
    dF = distances_to_set(X, F)
    centers, layers, radii = _select_centers(X, dF, scale_unit)
    anchors = _nearest_in_F(X, F, centers)
    inc = _incidence(X, centers, radii, 6.0)
    counts = np.bincount(inc.indices, minlength=X.n) if centers.size else np.zeros(X.n, int)
    overlap = int(counts.max()) if centers.size else 0
    pairwise = 0
    if centers.size:
        B = (inc > 0).astype(np.int32)
        pairwise = int((B @ B.T > 0).sum(axis=1).max())
    cover = WhitneyCover(X, F, float(scale_unit), centers, radii, layers, anchors, dF, inc,
                         overlap, pairwise)
    if verify:
        cover.checks.update(verify_cover(cover))
        failed = [k for k, v in cover.checks.items() if k.startswith("item") and v is False]
        if failed:
            raise ConstructionError(f"Whitney cover post-conditions failed: {failed}")
    return cover


def verify_cover(cover: WhitneyCover) -> dict:
    """Exhaustive check of the cover conclusions over every point of the space.

    Item 2 is checked with ``scale_unit`` as the upper bound on ``d(x_i, F)``;
    the count of centers beyond ``scale_unit/2`` is reported separately.
    Item 6 is the pointwise overlap of the ``6B_i``.
    """
    X, dF = cover.space, cover.dist_to_F
    out = {}
    if cover.size == 0:
        empty_band = not cover.band().any()
        return {"item1_disjoint": True, "item2_centers": True, "item2_band_covered": empty_band,
                "item3_bracket": True, "item4_anchor": True, "item5_F_outside_omega": True,
                "item6_overlap": 0, "centers_beyond_half_unit": 0}
    C, R = cover.centers, cover.radii
    D = X.pairwise(C, C)
    np.fill_diagonal(D, np.inf)
    out["item1_disjoint"] = bool(np.all(D >= R[:, None] + R[None, :]))
    inc = cover.incidence.tocoo()
    dist = inc.data - 1.0
    ball_pts = np.bincount(inc.col[dist < R[inc.row]], minlength=X.n)
    out["item1_disjoint"] &= bool(ball_pts.max() <= 1)
    out["item2_centers"] = bool(np.all((dF[C] > 0) & (dF[C] < cover.scale_unit)))
    in3 = np.zeros(X.n, dtype=bool)
    in3[inc.col[dist < 3.0 * R[inc.row]]] = True
    out["item2_band_covered"] = bool(np.all(in3[cover.band()]))
    dx = dF[inc.col]
    out["item3_bracket"] = bool(np.all((6.0 * R[inc.row] <= dx) & (dx <= 18.0 * R[inc.row])))
    da = np.array([X.distance(int(c), int(a)) for c, a in zip(C, cover.anchors)])
    out["item4_anchor"] = bool(np.all(da < 18.0 * R) & np.all(np.isin(cover.anchors, cover.F)))
    out["item5_F_outside_omega"] = bool(not np.isin(cover.F, inc.col).any())
    out["item6_overlap"] = int(cover.overlap_bound)
    out["centers_beyond_half_unit"] = int(np.sum(dF[C] >= cover.scale_unit / 2))
    return out


@dataclass(frozen=True, eq=False)
class PartitionOfUnity:
    """Sparse bumps ``phi_i`` (rows) over the points (columns)."""

    cover: WhitneyCover
    values: sp.csr_matrix
    lipschitz_ratios: np.ndarray
    checks: dict = field(default_factory=dict)

    def total(self) -> np.ndarray:
        return np.asarray(self.values.sum(axis=0)).ravel()

    def to_dict(self) -> dict:
        return {"lipschitz_max": float(self.lipschitz_ratios.max(initial=0.0)),
                "checks": self.checks}


def _bumps(cover: WhitneyCover) -> sp.csr_matrix:
    inc = cover.incidence.tocoo()
    R = cover.radii[inc.row]
    h = np.clip((6.0 * R - (inc.data - 1.0)) / (3.0 * R), 0.0, 1.0)
    H = sp.csr_matrix((h, (inc.row, inc.col)), shape=inc.shape)
    H.eliminate_zeros()
    return H


def partition_of_unity(cover: WhitneyCover, verify: bool = True,
                       lipschitz_sample: int = 128, seed: int = 0) -> PartitionOfUnity:
    """``phi_i = h_i / max(1, sum_j h_j)`` with tents ``h_i = clamp((6r_i - d(x, x_i))/(3r_i), 0, 1)``."""
    if cover.size == 0:
        raise ValueError("partition of unity needs a nonempty cover")
    H = _bumps(cover)
    S = np.asarray(H.sum(axis=0)).ravel()
    Phi = H @ sp.diags(1.0 / np.maximum(1.0, S))
    Phi = sp.csr_matrix(Phi)
    Phi.sort_indices()
    lip = _lipschitz_ratios(cover, Phi, lipschitz_sample, seed)
    pou = PartitionOfUnity(cover, Phi, lip)
    if verify:
        pou.checks.update(verify_partition(pou))
        failed = [k for k, v in pou.checks.items() if k.startswith("item") and v is False]
        if failed:
            raise ConstructionError(f"partition of unity post-conditions failed: {failed}")
    return pou


def _lipschitz_ratios(cover, Phi, sample, seed):
    """Per ball, sup of ``|phi_i(x) - phi_i(y)| r_i / d(x, y)`` over pairs closer than ``r_i``.

    Pairs at distance ``>= r_i`` have ratio at most 1 and are not enumerated.
    Centers ``x`` are sampled (seeded) from ``7B_i``; every ``y`` in ``B(x, r_i)`` is used.
    """
    X = cover.space
    rng = np.random.default_rng(seed)
    out = np.zeros(cover.size)
    for i, (c, r) in enumerate(zip(cover.centers, cover.radii)):
        row = np.zeros(X.n)
        sl = slice(Phi.indptr[i], Phi.indptr[i + 1])
        row[Phi.indices[sl]] = Phi.data[sl]
        pts, _ = ball_with_distances(X, int(c), 7.0 * r)
        if pts.size > sample:
            pts = np.sort(rng.choice(pts, size=sample, replace=False))
        if X.dist_matrix is None:
            gi = X.grid_index(X.point_ids)
            best = _kernels.grid_lipschitz(pts, X.coords, gi.origin, gi.cell_size, gi.counts,
                                           gi.strides, gi.cell_start, gi.order, X.blocks,
                                           float(r), row)
        else:
            best = 0.0
            for x in pts:
                nb, d = ball_with_distances(X, int(x), r)
                ok = d > 0
                if ok.any():
                    best = max(best, float(np.max(np.abs(row[nb[ok]] - row[x]) * r / d[ok])))
        out[i] = best
    return out


def verify_partition(pou: PartitionOfUnity, tol: float = 1e-12) -> dict:
    """Exhaustive check of the partition conclusions.

    The strict ``phi_i = 1 on B_i`` requirement is reported as a violation count,
    together with the weaker form that always holds: where ``phi_i < 1`` on
    ``B_i`` the total ``sum_j phi_j`` equals 1.
    """
    cover, Phi = pou.cover, pou.values
    inc = cover.incidence.tocoo()
    dist = inc.data - 1.0
    R = cover.radii[inc.row]
    P = Phi.tocoo()
    pos = set(zip(P.row.tolist(), P.col.tolist()))
    in3 = dist < 3.0 * R
    out = {}
    out["item1_support"] = bool(all((i, x) in pos for i, x in zip(inc.row[in3], inc.col[in3]))
                                and set(pos) <= set(zip(inc.row.tolist(), inc.col.tolist())))
    tot = pou.total()
    out["item2_range"] = bool(P.data.min() >= 0 and P.data.max() <= 1 and tot.max() <= 1 + tol)
    band = cover.band()
    out["item3_band_sum_error"] = float(np.abs(tot[band] - 1.0).max(initial=0.0))
    out["item3_band_sum"] = out["item3_band_sum_error"] <= tol
    out["item4_zero_outside_omega"] = bool(np.all(tot[~cover.omega()] == 0.0))
    Pd = Phi.tocsr()
    inB = dist < R
    vals = np.asarray(Pd[inc.row[inB], inc.col[inB]]).ravel()
    viol = vals < 1.0
    out["item5_strict_violations"] = int(viol.sum())
    out["item5_weak"] = bool(np.all(np.abs(tot[inc.col[inB][viol]] - 1.0) <= tol))
    out["item6_lipschitz_max"] = float(pou.lipschitz_ratios.max(initial=0.0))
    return out


def bounded_overlap_check(space: PointCloudSpace, centers, radii, a: float, b: float,
                          kappa: float) -> int:
    """``max_x max_r #{i : a r <= r_i <= b r, x in kappa B_i}`` for disjoint balls.

    The maximum over ``r`` is exact: for each point the covering radii are sorted
    and the largest run with ``max/min <= b/a`` is taken.
    """
    if not (1 <= a < b) or not kappa > 1:
        raise ValueError("need 1 <= a < b and kappa > 1")
    centers = space._check_index(centers)
    radii = np.asarray(radii, dtype=float)
    if centers.size == 0:
        return 0
    inner = _incidence(space, centers, radii, 1.0)
    if np.bincount(inner.indices, minlength=space.n).max() > 1:
        raise ValueError("balls are not pairwise disjoint")
    K = _incidence(space, centers, radii, kappa).tocsc()
    ptr = K.indptr.astype(np.int64)
    rs = radii[K.indices]
    for s in range(space.n):
        rs[ptr[s]:ptr[s + 1]].sort()
    return int(_kernels.max_window_count(ptr, rs, b / a))
