"""Constructors for example spaces: grids, gasket and Cantor prefractals, products, subsets."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .space import PointCloudSpace, SubsetEmbedding

LOG3_LOG2 = np.log(3.0) / np.log(2.0)
LOG2_LOG3 = np.log(2.0) / np.log(3.0)
MAX_POINTS = 200_000
_SQRT3_2 = np.sqrt(3.0) / 2.0


@dataclass(frozen=True)
class GeneratorSpec:
    """Recipe for a generated space; ``build_space`` turns it into a space."""

    kind: str
    level: int = 0
    dimension: int = 1
    dilation_count: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("grid", "gasket", "dilated_gasket", "cantor"):
            raise ValueError(f"unknown generator kind {self.kind!r}")
        if self.level < 0:
            raise ValueError("level must be nonnegative")


def build_space(spec: GeneratorSpec) -> PointCloudSpace:
    if spec.kind == "grid":
        return grid_space(spec.dimension, spec.level)
    if spec.kind == "gasket":
        return sierpinski_gasket(spec.level)
    if spec.kind == "dilated_gasket":
        return dilated_gasket(spec.level, spec.dilation_count)
    return cantor_set(spec.level)


def grid_space(n: int, level: int) -> PointCloudSpace:
    """Uniform grid on ``[0, 1]^n`` with spacing ``2^-level`` and cell weights ``h^n``."""
    if not 1 <= n <= 3:
        raise ValueError("grid dimension must be 1, 2 or 3")
    if level < 0 or n * level > 16:
        raise ValueError(f"grid too large: n*level = {n * level} exceeds 16")
    h = 2.0 ** -level
    axis = np.arange(2 ** level + 1) * h
    mesh = np.meshgrid(*([axis] * n), indexing="ij")
    coords = np.stack([m.ravel() for m in mesh], axis=1)
    weights = np.full(coords.shape[0], h ** n)
    return PointCloudSpace(weights, h, float(np.sqrt(n)), coords=coords,
                           name=f"grid(n={n},level={level})", grid_shape=(2 ** level + 1,) * n)


def _gasket_cells(level: int) -> np.ndarray:
    """Integer lattice corners of the ``3^level`` level cells (cell side 1)."""
    corners = np.zeros((1, 2), dtype=np.int64)
    size = 2 ** level
    for _ in range(level):
        size //= 2
        corners = np.concatenate([corners, corners + [size, 0], corners + [0, size]])
    return corners


def _gasket_lattice(level: int):
    """Vertex lattice coordinates and vertex masses of the level prefractal (total mass 1)."""
    cells = _gasket_cells(level)
    verts = np.concatenate([cells, cells + [1, 0], cells + [0, 1]])
    uniq, inv = np.unique(verts, axis=0, return_inverse=True)
    mass = np.bincount(inv.ravel(), minlength=len(uniq)) * (3.0 ** -level / 3.0)
    return uniq, mass


def _lattice_to_plane(ij: np.ndarray, unit: float) -> np.ndarray:
    i, j = ij[:, 0].astype(float), ij[:, 1].astype(float)
    return np.stack([(i + 0.5 * j) * unit, j * _SQRT3_2 * unit], axis=1)


def sierpinski_gasket(level: int) -> PointCloudSpace:
    """Vertices of the level prefractal of the unit gasket; each cell splits ``3^-level`` over its corners."""
    if not 0 <= level <= 8:
        raise ValueError("gasket level must be in [0, 8]")
    ij, mass = _gasket_lattice(level)
    h = 2.0 ** -level
    return PointCloudSpace(mass, h, 1.0, coords=_lattice_to_plane(ij, h),
                           name=f"gasket(level={level})")


def dilated_gasket(level: int, K: int) -> PointCloudSpace:
    """Union of the dilates ``2^k T`` for ``k = 1..K``, masses scaled by ``3^k``.

    Coincident vertices from different dilates are merged with summed weights.
    """
    if not 1 <= K <= 5:
        raise ValueError("dilation count K must be in [1, 5]")
    if not 0 <= level <= 8:
        raise ValueError("gasket level must be in [0, 8]")
    ij, mass = _gasket_lattice(level)
    pts = np.concatenate([ij * 2 ** k for k in range(1, K + 1)])
    w = np.concatenate([mass * 3.0 ** k for k in range(1, K + 1)])
    uniq, inv = np.unique(pts, axis=0, return_inverse=True)
    weights = np.bincount(inv.ravel(), weights=w, minlength=len(uniq))
    h = 2.0 ** -level
    return PointCloudSpace(weights, 2.0 * h, float(2 ** K), coords=_lattice_to_plane(uniq, h),
                           name=f"dilated_gasket(level={level},K={K})")


def cantor_set(level: int) -> PointCloudSpace:
    """Midpoints of the ``2^level`` surviving intervals of the ternary construction."""
    if not 0 <= level <= 12:
        raise ValueError("cantor level must be in [0, 12]")
    left = np.zeros(1)
    for k in range(1, level + 1):
        left = np.concatenate([left, left + 2.0 * 3.0 ** -k])
    left.sort()
    L = 3.0 ** -level
    mid = left + L / 2
    res = 2.0 * L if level > 0 else 1.0
    return PointCloudSpace(np.full(mid.size, 2.0 ** -level), res, 1.0 - L if level else 0.0,
                           coords=mid[:, None], name=f"cantor(level={level})")


def product_space(F: PointCloudSpace, Y: PointCloudSpace):
    """``F x Y`` with the max metric and product weights; ``F`` embeds as ``F x {y0}``.

    Point ``(s, y)`` has index ``s * |Y| + y``; ``y0`` is ``Y``'s first point.
    """
    if F.coords is None or Y.coords is None:
        raise ValueError("product spaces need coordinate-based factors")
    if F.n * Y.n > MAX_POINTS:
        raise ValueError(f"product has {F.n * Y.n} points, above the {MAX_POINTS} guard")
    coords = np.concatenate([np.repeat(F.coords, Y.n, axis=0), np.tile(Y.coords, (F.n, 1))], axis=1)
    blocks = np.concatenate([F.blocks, Y.blocks[1:] + F.coords.shape[1]])
    weights = np.outer(F.weights, Y.weights).ravel()
    # the coarser factor sets the scale below which balls stop resolving both factors
    X = PointCloudSpace(weights, max(F.resolution, Y.resolution), max(F.diameter, Y.diameter),
                        coords=coords, blocks=blocks, name=f"{F.name}x{Y.name}")
    emb = SubsetEmbedding(X, np.arange(F.n) * Y.n, F.weights.copy())
    return X, emb


def embed_subset(X: PointCloudSpace, selector, mu_rule: str = "uniform",
                 cell_dim: float | None = None) -> SubsetEmbedding:
    """Select ``F`` by index list or coordinate predicate and assign ``mu``.

    ``mu_rule``: ``"uniform"`` gives each point ``1/|F|``; ``"cell"`` gives each
    point ``h^cell_dim`` (the cell measure of a ``cell_dim``-dimensional piece);
    ``"parent"`` reuses the parent weights.
    """
    if callable(selector):
        if X.coords is None:
            raise ValueError("predicate selection needs coordinates")
        idx = np.flatnonzero(np.asarray(selector(X.coords), dtype=bool))
    else:
        idx = np.asarray(selector, dtype=np.int64).ravel()
    if idx.size == 0:
        raise ValueError("selected subset is empty")
    if mu_rule == "uniform":
        mu = np.full(idx.size, 1.0 / idx.size)
    elif mu_rule == "cell":
        if cell_dim is None:
            raise ValueError("cell rule needs cell_dim")
        mu = np.full(idx.size, X.resolution ** cell_dim)
    elif mu_rule == "parent":
        mu = X.weights[idx].copy()
    else:
        raise ValueError(f"unknown mu rule {mu_rule!r}")
    return SubsetEmbedding(X, idx, mu)


def axis_segment(X: PointCloudSpace, offset: float = 0.0) -> SubsetEmbedding:
    """Points with every coordinate after the first equal to ``offset``, weighted as 1-D cells."""
    return embed_subset(X, lambda c: np.all(c[:, 1:] == offset, axis=1), "cell", 1.0)


def diagonal_segment(X: PointCloudSpace) -> SubsetEmbedding:
    """Points on the main diagonal of a 2-D grid, weighted by arclength ``sqrt(2) h``."""
    emb = embed_subset(X, lambda c: c[:, 0] == c[:, 1], "cell", 1.0)
    return SubsetEmbedding(X, emb.subset, emb.mu_weights * np.sqrt(2.0))


def check_metric_axioms(space: PointCloudSpace, n_triples: int = 10_000, seed: int = 0) -> float:
    """Largest triangle-inequality or symmetry violation over random triples (0 when exact)."""
    rng = np.random.default_rng(seed)
    tri = rng.integers(0, space.n, size=(n_triples, 3))
    if space.dist_matrix is not None:
        D = space.dist_matrix
        dij, djk, dik = D[tri[:, 0], tri[:, 1]], D[tri[:, 1], tri[:, 2]], D[tri[:, 0], tri[:, 2]]
        sym = np.abs(D[tri[:, 0], tri[:, 1]] - D[tri[:, 1], tri[:, 0]])
    else:
        c = space.coords

        def d(a, b):
            return _kernels.pair_dists(np.ascontiguousarray(c[a]), np.ascontiguousarray(c[b]),
                                       space.blocks).diagonal()

        # pair_dists over k x k blocks is wasteful for 1e4 triples; chunk diagonally
        dij = np.concatenate([d(tri[s:s + 256, 0], tri[s:s + 256, 1]) for s in range(0, n_triples, 256)])
        djk = np.concatenate([d(tri[s:s + 256, 1], tri[s:s + 256, 2]) for s in range(0, n_triples, 256)])
        dik = np.concatenate([d(tri[s:s + 256, 0], tri[s:s + 256, 2]) for s in range(0, n_triples, 256)])
        dji = np.concatenate([d(tri[s:s + 256, 1], tri[s:s + 256, 0]) for s in range(0, n_triples, 256)])
        sym = np.abs(dij - dji)
    viol = np.maximum(dik - (dij + djk), 0.0)
    return float(max(viol.max(), sym.max()))
