"""Finite metric measure spaces: points, metric, weights, ball queries.

Integrals over a space are weighted sums ``sum_i w_i f(x_i)`` and ball averages
are weighted sums divided by the ball's measure.  Balls are open:
``B(x, r) = {y : d(x, y) < r}``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import _kernels
from .errors import DegenerateFitError


@dataclass(frozen=True, eq=False)
class PointCloudSpace:
    """Finite weighted point cloud with a metric.

    The metric is either Euclidean on ``coords``, the max over coordinate
    blocks of the Euclidean metric on each block (``blocks`` gives the block
    boundaries, used for product spaces), or an explicit ``dist_matrix``.
    """

    weights: np.ndarray
    resolution: float
    diameter: float
    coords: np.ndarray | None = None
    blocks: np.ndarray | None = None
    dist_matrix: np.ndarray | None = None
    name: str = ""
    grid_shape: tuple | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        w = np.ascontiguousarray(self.weights, dtype=float)
        if w.ndim != 1 or w.size == 0:
            raise ValueError("weights must be a nonempty 1-D array")
        if not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise ValueError("all weights must be finite and positive")
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)
        if self.coords is None and self.dist_matrix is None:
            raise ValueError("need coords or dist_matrix")
        if self.coords is not None:
            c = np.ascontiguousarray(self.coords, dtype=float)
            if c.ndim == 1:
                c = c[:, None]
            if c.shape[0] != w.size:
                raise ValueError("coords and weights disagree on point count")
            c.flags.writeable = False
            object.__setattr__(self, "coords", c)
            blocks = self.blocks
            if blocks is None:
                blocks = [0, c.shape[1]]
            blocks = np.asarray(blocks, dtype=np.int64)
            if blocks[0] != 0 or blocks[-1] != c.shape[1] or np.any(np.diff(blocks) <= 0):
                raise ValueError(f"bad coordinate blocks {blocks.tolist()}")
            object.__setattr__(self, "blocks", blocks)
        if self.dist_matrix is not None:
            dm = np.ascontiguousarray(self.dist_matrix, dtype=float)
            if dm.shape != (w.size, w.size):
                raise ValueError("distance matrix shape mismatch")
            if np.any(np.diag(dm) != 0) or np.any(dm != dm.T) or np.any(dm < 0):
                raise ValueError("distance matrix must be symmetric, nonnegative, zero diagonal")
            dm.flags.writeable = False
            object.__setattr__(self, "dist_matrix", dm)
        if not self.resolution > 0:
            raise ValueError("resolution must be positive")
        if self.grid_shape is not None:
            shape = tuple(int(k) for k in self.grid_shape)
            if self.coords is None or int(np.prod(shape)) != w.size or len(shape) != self.coords.shape[1]:
                raise ValueError("grid_shape does not match the coordinates")
            object.__setattr__(self, "grid_shape", shape)

    @property
    def n(self) -> int:
        return self.weights.size

    @property
    def min_spacing(self) -> float:
        """Smallest distance between two distinct points."""
        if "min_spacing" not in self._cache:
            if self.n < 2:
                v = np.inf
            elif self.dist_matrix is not None:
                d = self.dist_matrix
                v = float(d[d > 0].min())
            elif self.grid_shape is not None:
                v = float(self.resolution)
            else:
                v = float(_kernels.min_pair_dist(self.coords, self.blocks))
            self._cache["min_spacing"] = v
        return self._cache["min_spacing"]

    @property
    def point_ids(self) -> np.ndarray:
        return np.arange(self.n)

    @property
    def metric(self) -> str:
        if self.dist_matrix is not None:
            return "matrix"
        return "euclidean" if self.blocks.size == 2 else "product"

    @property
    def total_measure(self) -> float:
        return float(self.weights.sum())

    def _check_index(self, idx) -> np.ndarray:
        idx = np.atleast_1d(np.asarray(idx))
        if idx.size and (idx.dtype.kind not in "iu" or idx.min() < 0 or idx.max() >= self.n):
            raise IndexError(f"point index out of range for space of {self.n} points")
        return idx.astype(np.int64)

    def distances_from(self, i: int) -> np.ndarray:
        """Distances from point ``i`` to every point."""
        i = int(self._check_index(i)[0])
        if self.dist_matrix is not None:
            return self.dist_matrix[i].copy()
        return _kernels.pair_dists(self.coords[i:i + 1], self.coords, self.blocks)[0]

    def distance(self, i: int, j: int) -> float:
        i, j = self._check_index([i, j])
        if self.dist_matrix is not None:
            return float(self.dist_matrix[i, j])
        return float(_kernels.pair_dists(self.coords[i:i + 1], self.coords[j:j + 1], self.blocks)[0, 0])

    def pairwise(self, rows=None, cols=None) -> np.ndarray:
        """Dense distance block between index sets (all points by default)."""
        rows = self.point_ids if rows is None else self._check_index(rows)
        cols = self.point_ids if cols is None else self._check_index(cols)
        if self.dist_matrix is not None:
            return self.dist_matrix[np.ix_(rows, cols)]
        return _kernels.pair_dists(self.coords[rows], self.coords[cols], self.blocks)

    def grid_index(self, targets: np.ndarray) -> "_GridIndex":
        key = ("grid", targets.tobytes())
        if key not in self._cache:
            self._cache[key] = _GridIndex.build(self.coords[targets], self.resolution)
        return self._cache[key]


@dataclass(frozen=True)
class _GridIndex:
    origin: np.ndarray
    cell_size: float
    counts: np.ndarray
    strides: np.ndarray
    cell_start: np.ndarray
    order: np.ndarray

    @classmethod
    def build(cls, pts: np.ndarray, resolution: float) -> "_GridIndex":
        origin = pts.min(axis=0)
        extent = pts.max(axis=0) - origin
        cs = float(resolution)
        while True:
            counts = np.floor(extent / cs).astype(np.int64) + 1
            if np.prod(counts.astype(float)) <= 4 * len(pts) + 64:
                break
            cs *= 2.0
        strides = np.ones_like(counts)
        for k in range(len(counts) - 2, -1, -1):
            strides[k] = strides[k + 1] * counts[k + 1]
        cells = np.clip(np.floor((pts - origin) / cs).astype(np.int64), 0, counts - 1)
        key = cells @ strides
        order = np.argsort(key, kind="stable").astype(np.int64)
        ncell = int(np.prod(counts))
        cell_start = np.zeros(ncell + 1, dtype=np.int64)
        np.add.at(cell_start, key + 1, 1)
        cell_start = np.cumsum(cell_start)
        return cls(origin, cs, counts, strides, cell_start, order)


def ball_sums(space: PointCloudSpace, centers, r: float, values=None, center_values=None,
              p: float = 1.0, targets=None, target_weights=None, mode: str = "diff"):
    """Per-center weighted sums over the open ball ``B(c, r)`` restricted to ``targets``.

    Returns ``(mass, acc)``: ``mass[c] = sum w_y`` and, with ``mode="diff"``,
    ``acc[c, k] = sum w_y |values[y, k] - center_values[c, k]|^p``; with
    ``mode="mean"``, ``acc[c, k] = sum w_y values[y, k]``.  ``values`` is indexed
    by position in ``targets``.
    """
    centers = space._check_index(centers)
    targets = space.point_ids if targets is None else space._check_index(targets)
    tw = space.weights[targets] if target_weights is None else np.asarray(target_weights, float)
    if values is None:
        values = np.zeros((targets.size, 1))
    values = np.asarray(values, float)
    if values.ndim == 1:
        values = values[:, None]
    m = values.shape[1]
    if center_values is None:
        center_values = np.zeros((centers.size, m))
    center_values = np.asarray(center_values, float)
    if center_values.ndim == 1:
        center_values = center_values[:, None]
    out0 = np.empty(centers.size)
    out1 = np.empty((centers.size, m))
    code = _kernels.MODE_DIFF if mode == "diff" else _kernels.MODE_MEAN
    values = np.ascontiguousarray(values)
    center_values = np.ascontiguousarray(center_values)
    if space.dist_matrix is not None:
        _kernels.matrix_ball_sums(centers, center_values, targets, tw, values,
                                  space.dist_matrix, float(r), float(p), code, out0, out1)
    else:
        gi = space.grid_index(targets)
        _kernels.grid_ball_sums(np.ascontiguousarray(space.coords[centers]), center_values,
                                np.ascontiguousarray(space.coords[targets]), tw, values,
                                gi.origin, gi.cell_size, gi.counts, gi.strides, gi.cell_start,
                                gi.order, space.blocks, float(r), float(p), code, out0, out1)
    return out0, out1


def ball(space: PointCloudSpace, center: int, r: float) -> np.ndarray:
    """Sorted indices ``{j : d(center, j) < r}``."""
    if r < 0:
        raise ValueError("radius must be nonnegative")
    c = int(space._check_index(center)[0])
    if r == 0:
        return np.empty(0, dtype=np.int64)
    if space.dist_matrix is not None:
        return np.flatnonzero(space.dist_matrix[c] < r)
    gi = space.grid_index(space.point_ids)
    return _kernels.grid_ball_members(space.coords[c:c + 1], space.coords, gi.origin,
                                      gi.cell_size, gi.counts, gi.strides, gi.cell_start,
                                      gi.order, space.blocks, float(r))


def measure(space: PointCloudSpace, idx) -> float:
    idx = space._check_index(idx) if np.size(idx) else np.empty(0, dtype=np.int64)
    return float(space.weights[idx].sum())


def distances_to_set(space: PointCloudSpace, F, points=None) -> np.ndarray:
    """``d(x, F)`` for every ``x`` in ``points`` (all points by default)."""
    F = space._check_index(F)
    if F.size == 0:
        raise ValueError("distance to an empty set is undefined")
    pts = space.point_ids if points is None else space._check_index(points)
    if space.dist_matrix is not None:
        return space.dist_matrix[np.ix_(pts, F)].min(axis=1)
    return _kernels.min_dist_to_set(np.ascontiguousarray(space.coords[pts]),
                                    np.ascontiguousarray(space.coords[F]), space.blocks)


def distance_to_set(space: PointCloudSpace, x: int, F) -> float:
    return float(distances_to_set(space, F, [x])[0])


@dataclass(frozen=True, eq=False)
class SubsetEmbedding:
    """A closed subset ``F`` of a parent space carrying its own measure ``mu``."""

    parent: PointCloudSpace
    subset: np.ndarray
    mu_weights: np.ndarray
    gamma: float | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        sub = self.parent._check_index(self.subset)
        if sub.size == 0:
            raise ValueError("subset is empty")
        if np.unique(sub).size != sub.size:
            raise ValueError("subset indices must be distinct")
        mu = np.asarray(self.mu_weights, dtype=float)
        if mu.shape != sub.shape or np.any(~np.isfinite(mu)) or np.any(mu <= 0):
            raise ValueError("mu must be positive on every subset point")
        order = np.argsort(sub, kind="stable")
        object.__setattr__(self, "subset", sub[order])
        object.__setattr__(self, "mu_weights", mu[order])

    @property
    def size(self) -> int:
        return self.subset.size

    @property
    def space(self) -> PointCloudSpace:
        """``F`` as a standalone space with weights ``mu``."""
        if "space" not in self._cache:
            P, sub = self.parent, self.subset
            if P.dist_matrix is not None:
                dm = P.dist_matrix[np.ix_(sub, sub)]
                coords = None if P.coords is None else P.coords[sub]
            else:
                dm, coords = None, P.coords[sub]
            res = P.resolution
            if sub.size > 1 and sub.size <= 20000:
                res = float(dm[dm > 0].min()) if dm is not None else \
                    float(_kernels.min_pair_dist(np.ascontiguousarray(coords), P.blocks))
            diam = 0.0
            if sub.size > 1:
                diam = float(dm.max()) if dm is not None else \
                    float(_kernels.max_pair_dist(np.ascontiguousarray(coords), P.blocks))
            self._cache["space"] = PointCloudSpace(
                self.mu_weights, res, diam, coords=coords,
                blocks=None if coords is None else P.blocks,
                dist_matrix=dm, name=f"{P.name}|subset")
        return self._cache["space"]

    def with_gamma(self, gamma: float) -> "SubsetEmbedding":
        return replace(self, gamma=float(gamma), _cache=self._cache)


@dataclass(frozen=True)
class RegularityReport:
    fitted_exponent: float
    r_range: tuple
    max_rel_deviation: float
    per_point_slopes: list
    radii: list = field(default_factory=list)
    log_curve: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "fitted_exponent": self.fitted_exponent,
            "r_range": list(self.r_range),
            "max_rel_deviation": self.max_rel_deviation,
            "per_point_slopes": list(self.per_point_slopes),
            "radii": list(self.radii),
            "log_curve": list(self.log_curve),
        }


def default_radii(lo: float, hi: float, count: int = 12) -> np.ndarray:
    """Log-spaced radii strictly inside ``(lo, hi)``, offset from dyadic lattice values."""
    if not hi > lo * 1.1:
        return np.empty(0)
    return np.geomspace(lo * 1.09, hi * 0.97, count)


def sample_points(n: int, size: int = 256, seed: int = 0) -> np.ndarray:
    if n <= size:
        return np.arange(n)
    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(n, size=size, replace=False))


def _fit_loglog(radii, logm, aggregate):
    """OLS slope of the aggregated log curve, per-point slopes, max relative deviation.

    ``logm`` has shape (radii, points).  ``aggregate`` is ``"mean"`` (mean of
    logs) or ``"max"`` (upper envelope over centers).
    """
    lr = np.log(radii)
    A = np.vstack([lr, np.ones_like(lr)]).T
    coef, *_ = np.linalg.lstsq(A, logm, rcond=None)
    slopes = coef[0]
    curve = logm.max(axis=1) if aggregate == "max" else logm.mean(axis=1)
    (slope, icpt), *_ = np.linalg.lstsq(A, curve, rcond=None)
    dev = np.exp(curve - (slope * lr + icpt)) - 1.0
    return float(slope), slopes, float(np.abs(dev).max()), curve


def estimate_regularity(space: PointCloudSpace, r_grid=None, sample=None,
                        seed: int = 0) -> RegularityReport:
    """Fit ``m(B(x, r)) ~ r^N`` over sampled centers in log-log coordinates.

    The exponent is the OLS slope of the upper envelope ``max_x log m(B(x, r))``:
    boundary truncation bends individual curves inside the window but leaves the
    envelope, attained at interior centers, a clean power law.  The deviation is
    measured against the same envelope fit; per-point slopes are reported as is.
    """
    h, diam = space.resolution, space.diameter
    if r_grid is None:
        radii = default_radii(2 * h, diam / 4)
    else:
        radii = np.asarray(r_grid, dtype=float)
        if radii.size and (np.any(np.diff(radii) <= 0)):
            raise ValueError("r_grid must be strictly increasing")
        if radii.size and (radii[0] <= 2 * h or radii[-1] >= diam / 2):
            raise ValueError(f"r_grid must lie inside (2h, diam/2) = ({2 * h}, {diam / 2})")
    if radii.size < 2 or space.n < 2:
        raise DegenerateFitError("fewer than 2 usable radii for a regularity fit")
    pts = sample_points(space.n, seed=seed) if sample is None else space._check_index(sample)
    if pts.size == 0:
        raise ValueError("sample must be nonempty")
    logm = np.empty((radii.size, pts.size))
    for k, r in enumerate(radii):
        mass, _ = ball_sums(space, pts, r, mode="mean")
        logm[k] = np.log(mass)
    slope, slopes, dev, curve = _fit_loglog(radii, logm, "max")
    return RegularityReport(slope, (float(radii[0]), float(radii[-1])), dev,
                            slopes.tolist(), radii.tolist(), curve.tolist())


def quotient_exponent(emb: SubsetEmbedding, r_grid=None, sample=None,
                      seed: int = 0) -> RegularityReport:
    """Fit ``m(B)/mu(B) ~ r^gamma`` over balls centered in ``F``."""
    X, Fs = emb.parent, emb.space
    lo = 2 * X.resolution
    hi = min(2 * Fs.diameter, X.diameter / 2) if Fs.diameter > 0 else X.diameter / 2
    if r_grid is None:
        radii = default_radii(lo, min(Fs.diameter, X.diameter) / 4 if Fs.diameter > 0 else hi / 2)
    else:
        radii = np.asarray(r_grid, dtype=float)
        if radii.size and np.any(np.diff(radii) <= 0):
            raise ValueError("r_grid must be strictly increasing")
        if radii.size and Fs.diameter > 0 and radii[-1] >= 2 * Fs.diameter:
            raise ValueError("radii must stay below 2 diam(F)")
    if radii.size < 2:
        raise DegenerateFitError("fewer than 2 usable radii for a quotient fit")
    local = sample_points(emb.size, seed=seed) if sample is None else np.asarray(sample)
    centers = emb.subset[local]
    logq = np.empty((radii.size, local.size))
    for k, r in enumerate(radii):
        m_mass, _ = ball_sums(X, centers, r, mode="mean")
        mu_mass, _ = ball_sums(X, centers, r, mode="mean", targets=emb.subset,
                               target_weights=emb.mu_weights)
        if np.any(mu_mass <= 0):
            raise ValueError(f"mu(B) = 0 for a ball of radius {r}")
        logq[k] = np.log(m_mass / mu_mass)
    slope, slopes, dev, curve = _fit_loglog(radii, logq, "mean")
    return RegularityReport(slope, (float(radii[0]), float(radii[-1])), dev,
                            slopes.tolist(), radii.tolist(), curve.tolist())


def fit_gamma(emb: SubsetEmbedding, **kw) -> SubsetEmbedding:
    """Copy of ``emb`` with ``gamma`` set to the fitted quotient exponent."""
    return emb.with_gamma(quotient_exponent(emb, **kw).fitted_exponent)


# ---------------------------------------------------------------- file formats

def space_to_json(space: PointCloudSpace) -> dict:
    doc = {
        "points": None if space.coords is None else space.coords.tolist(),
        "metric": space.metric,
        "weights": space.weights.tolist(),
        "resolution": space.resolution,
        "diameter": space.diameter,
        "name": space.name,
    }
    if space.metric == "product":
        doc["blocks"] = space.blocks.tolist()
    if space.grid_shape is not None:
        doc["grid_shape"] = list(space.grid_shape)
    if space.dist_matrix is not None:
        doc["distance_matrix"] = space.dist_matrix.tolist()
    return doc


def space_from_json(doc: dict) -> PointCloudSpace:
    metric = doc.get("metric", "euclidean")
    coords = doc.get("points")
    coords = None if coords is None else np.asarray(coords, dtype=float)
    dm = doc.get("distance_matrix")
    if metric == "matrix":
        if dm is None:
            raise ValueError("matrix metric requires distance_matrix")
        dm = np.asarray(dm, dtype=float)
    elif coords is None:
        raise ValueError(f"{metric} metric requires points")
    else:
        dm = None
    weights = np.asarray(doc["weights"], dtype=float)
    blocks = doc.get("blocks") if metric == "product" else None
    diameter = doc.get("diameter")
    if diameter is None:
        if dm is not None:
            diameter = float(dm.max())
        else:
            b = np.asarray(blocks if blocks else [0, coords.shape[1] if coords.ndim > 1 else 1])
            c = coords if coords.ndim > 1 else coords[:, None]
            diameter = float(_kernels.max_pair_dist(np.ascontiguousarray(c), b.astype(np.int64)))
    shape = doc.get("grid_shape")
    return PointCloudSpace(weights, float(doc["resolution"]), float(diameter), coords=coords,
                           blocks=blocks, dist_matrix=dm, name=doc.get("name", ""),
                           grid_shape=None if shape is None else tuple(shape))


def save_space(space: PointCloudSpace, path) -> None:
    Path(path).write_text(json.dumps(space_to_json(space)))


def load_space(path) -> PointCloudSpace:
    return space_from_json(json.loads(Path(path).read_text()))


def subset_to_json(emb: SubsetEmbedding) -> dict:
    return {"subset": emb.subset.tolist(), "mu": emb.mu_weights.tolist(), "gamma": emb.gamma}


def subset_from_json(parent: PointCloudSpace, doc: dict) -> SubsetEmbedding:
    return SubsetEmbedding(parent, np.asarray(doc["subset"], dtype=np.int64),
                           np.asarray(doc["mu"], dtype=float), doc.get("gamma"))


def ball_with_distances(space: PointCloudSpace, center: int, r: float):
    """``ball(space, center, r)`` together with the distances from ``center``."""
    idx = ball(space, center, r)
    if space.dist_matrix is not None:
        return idx, space.dist_matrix[center, idx]
    c = int(center)
    return idx, _kernels.pair_dists(space.coords[c:c + 1], space.coords[idx], space.blocks)[0]
