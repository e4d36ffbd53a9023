"""Seeded test-function ensembles with tunable smoothness.

The main family is a random multiscale bump sum

    f = sum_k 2^(-k beta) sum_j eps_kj psi_kj,   psi_kj(x) = max(0, 1 - d(x, c_kj) 2^k),

with centres ``c_kj`` a greedy ``2^-k``-net and seeded signs ``eps_kj``.  Nets
are scanned in lexicographic coordinate order and signs are seeded per
``(seed, member, k)``, so on nested grids a member is the same function at
every level up to the extra fine-scale terms.
"""

from __future__ import annotations

import numpy as np

from . import _kernels
from .space import PointCloudSpace, ball_with_distances

KINDS = ("constant", "indicator", "smooth_random", "bump_sum")


def _scan_order(space: PointCloudSpace) -> np.ndarray:
    if space.coords is None:
        return space.point_ids
    return np.lexsort(space.coords.T[::-1])


def greedy_net(space: PointCloudSpace, r: float) -> np.ndarray:
    """Maximal ``r``-separated subset, scanned in lexicographic coordinate order."""
    key = ("net", float(r))
    if key not in space._cache:
        order = _scan_order(space)
        radii = np.full(space.n, r / 2.0)
        if space.dist_matrix is not None:
            net = _kernels.greedy_disjoint_matrix(space.dist_matrix, order, radii)
        else:
            net = _kernels.greedy_disjoint(space.coords, space.blocks, order, radii)
        net.flags.writeable = False
        space._cache[key] = net
    return space._cache[key]


def tent_sum(space: PointCloudSpace, centers, r: float, coeffs) -> np.ndarray:
    """``sum_j coeffs_j max(0, 1 - d(x, c_j)/r)``."""
    out = np.zeros(space.n)
    for c, a in zip(centers, coeffs):
        idx, d = ball_with_distances(space, int(c), r)
        out[idx] += a * (1.0 - d / r)
    return out


def net_levels(space: PointCloudSpace) -> np.ndarray:
    """``k >= 1`` with ``2^-k`` at least twice the resolution."""
    K = int(np.floor(-np.log2(2.0 * space.resolution) + 1e-12))
    return np.arange(1, max(K, 0) + 1)


def bump_sum(space: PointCloudSpace, beta: float, seed: int) -> np.ndarray:
    """One multiscale bump sum with decay ``2^(-k beta)``."""
    out = np.zeros(space.n)
    for k in net_levels(space):
        r = 2.0 ** -int(k)
        centers = greedy_net(space, r)
        rng = np.random.default_rng([seed, int(k)])
        eps = rng.choice([-1.0, 1.0], size=centers.size)
        out += 2.0 ** (-k * beta) * tent_sum(space, centers, r, eps)
    return out


def smooth_random(space: PointCloudSpace, scale: float, seed: int) -> np.ndarray:
    """Gaussian-coefficient tent sum at one fixed scale."""
    centers = greedy_net(space, scale)
    rng = np.random.default_rng([seed, 7919])
    return tent_sum(space, centers, scale, rng.normal(size=centers.size))


def indicator(space: PointCloudSpace, r: float, seed: int) -> np.ndarray:
    """Indicator of ``B(c, r)`` with ``c`` the net point picked by ``seed`` from a ``1/4``-net."""
    centers = greedy_net(space, 0.25)
    c = centers[np.random.default_rng([seed, 104729]).integers(centers.size)]
    idx, _ = ball_with_distances(space, int(c), r)
    out = np.zeros(space.n)
    out[idx] = 1.0
    return out


def ensemble(space: PointCloudSpace, beta: float, size: int = 50, seed: int = 0,
             with_special: bool = True):
    """``(values, kinds)``: ``values`` has shape ``(n, size)``.

    With ``with_special`` the first members are a constant, two ball
    indicators and two fixed-scale random tent sums; the rest are bump sums.
    """
    if size < 1:
        raise ValueError("ensemble size must be positive")
    cols, kinds = [], []
    if with_special:
        special = [
            ("constant", lambda: np.ones(space.n)),
            ("indicator", lambda: indicator(space, 0.25, seed)),
            ("indicator", lambda: indicator(space, 0.125, seed + 1)),
            ("smooth_random", lambda: smooth_random(space, 0.25, seed)),
            ("smooth_random", lambda: smooth_random(space, 0.125, seed + 1)),
        ]
        for kind, make in special[:size]:
            cols.append(make())
            kinds.append(kind)
    m = 0
    while len(cols) < size:
        cols.append(bump_sum(space, beta, seed * 100_003 + m))
        kinds.append("bump_sum")
        m += 1
    return np.stack(cols, axis=1), kinds
