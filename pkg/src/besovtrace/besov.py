"""p-modulus of continuity, Besov norms and smoothness fits."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateFitError, InfinitelySmoothError
from .space import PointCloudSpace, ball_sums


@dataclass(frozen=True, eq=False)
class DiscreteFunction:
    """Real values attached to the points of a space."""

    space: PointCloudSpace
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.space.n,):
            raise ValueError(f"expected {self.space.n} values, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("function values must be finite")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    def __add__(self, other):
        if isinstance(other, DiscreteFunction):
            return DiscreteFunction(self.space, self.values + other.values)
        return DiscreteFunction(self.space, self.values + other)

    def __mul__(self, c):
        return DiscreteFunction(self.space, self.values * c)

    __rmul__ = __mul__

    def __sub__(self, other):
        return self + (-1.0) * other


@dataclass(frozen=True)
class BesovParams:
    alpha: float
    p: float
    q: float

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if not 1 <= self.p < np.inf:
            raise ValueError("p must lie in [1, inf)")
        if not 1 <= self.q <= np.inf:
            raise ValueError("q must lie in [1, inf]")


@dataclass(frozen=True)
class BesovProfile:
    scales: np.ndarray
    moduli: np.ndarray
    p: float

    def __post_init__(self):
        s = np.asarray(self.scales, dtype=float)
        m = np.asarray(self.moduli, dtype=float)
        if s.shape != m.shape:
            raise ValueError("scales and moduli disagree in length")
        if np.any(np.diff(s) >= 0) or np.any(s <= 0):
            raise ValueError("scales must be positive and strictly decreasing")
        if np.any(m < 0):
            raise ValueError("moduli must be nonnegative")
        object.__setattr__(self, "scales", s)
        object.__setattr__(self, "moduli", m)

    def to_dict(self) -> dict:
        return {"p": self.p, "profile": [{"t": float(t), "E": float(e)}
                                         for t, e in zip(self.scales, self.moduli)]}


def lp_norm(space: PointCloudSpace, values, p: float) -> np.ndarray | float:
    """Weighted ``L^p`` norm of each column of ``values`` (``p = inf`` gives the max)."""
    v = np.abs(np.asarray(values, dtype=float))
    if p == np.inf:
        return v.max(axis=0)
    w = space.weights if v.ndim == 1 else space.weights[:, None]
    if p == 1:
        return (w * v).sum(axis=0)
    if p == 2:
        return np.sqrt((w * v * v).sum(axis=0))
    return ((w * v ** p).sum(axis=0)) ** (1.0 / p)


def moduli(space: PointCloudSpace, values, t: float, p: float) -> np.ndarray:
    """``E_p f(t)`` for every column ``f`` of ``values`` (shape ``(n,)`` or ``(n, m)``)."""
    if not t > 0:
        raise ValueError("scale t must be positive")
    if p < 1:
        raise ValueError("p must be at least 1")
    V = np.asarray(values, dtype=float)
    squeeze = V.ndim == 1
    V = V[:, None] if squeeze else V
    mass, acc = ball_sums(space, space.point_ids, t, values=V, center_values=V, p=p)
    Ep = (space.weights[:, None] * acc / mass[:, None]).sum(axis=0)
    out = Ep ** (1.0 / p)
    return out[0] if squeeze else out


def modulus_of_continuity(f: DiscreteFunction, t: float, p: float) -> float:
    """``E_p f(t)``: the ``L^p`` size of ``f(y) - f(x)`` averaged over ``y`` in ``B(x, t)``."""
    return float(moduli(f.space, f.values, t, p))


def dyadic_scales(space: PointCloudSpace) -> np.ndarray:
    """``2^-k`` for ``k >= 1`` down to the resolution."""
    K = int(np.floor(-np.log2(space.resolution) + 1e-12))
    if K < 1:
        raise DegenerateFitError("no dyadic scale 2^-k (k >= 1) at or above the resolution")
    return 2.0 ** -np.arange(1, K + 1)


def besov_profile(f: DiscreteFunction, p: float, scales=None) -> BesovProfile:
    scales = dyadic_scales(f.space) if scales is None else np.asarray(scales, dtype=float)
    E = np.array([modulus_of_continuity(f, t, p) for t in scales])
    return BesovProfile(scales, E, p)


def _profiles(space, V, p, scales):
    return np.array([moduli(space, V, t, p) for t in scales])  # (scales, m)


def log_trapezoid(t, y) -> float | np.ndarray:
    """Trapezoid rule for ``int y(t) dt/t`` on a log-spaced grid ``t``."""
    s = np.log(np.asarray(t, dtype=float))
    y = np.asarray(y, dtype=float)
    ds = np.diff(s).reshape((-1,) + (1,) * (y.ndim - 1))
    return (0.5 * (y[1:] + y[:-1]) * ds).sum(axis=0)


def quadrature_scales(space: PointCloudSpace, nodes: int = 64) -> np.ndarray:
    """Log grid on ``[2^(-K-1/2), 2^(-1/2)]``: the union of the dyadic cells around each ``2^-k``."""
    K = dyadic_scales(space).size
    return np.geomspace(2.0 ** -0.5, 2.0 ** (-K - 0.5), max(nodes, 64))


def besov_seminorms(space: PointCloudSpace, values, params: BesovParams,
                    mode: str = "dyadic", nodes: int = 64) -> np.ndarray:
    """Besov seminorm of each column of ``values``."""
    V = np.asarray(values, dtype=float)
    V2 = V[:, None] if V.ndim == 1 else V
    a, q = params.alpha, params.q
    if mode == "dyadic":
        t = dyadic_scales(space)
        terms = (t ** -a)[:, None] * _profiles(space, V2, params.p, t)
        semi = terms.max(axis=0) if q == np.inf else (terms ** q).sum(axis=0) ** (1.0 / q)
    elif mode == "quadrature":
        t = quadrature_scales(space, nodes)
        terms = (t ** -a)[:, None] * _profiles(space, V2, params.p, t)
        if q == np.inf:
            semi = terms.max(axis=0)
        else:
            semi = (log_trapezoid(t[::-1], (terms ** q)[::-1]) / np.log(2.0)) ** (1.0 / q)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return semi[0] if V.ndim == 1 else semi


def besov_norms(space: PointCloudSpace, values, params: BesovParams,
                mode: str = "dyadic", nodes: int = 64) -> np.ndarray:
    """``||f||_p`` plus the Besov seminorm, for each column of ``values``."""
    return lp_norm(space, values, params.p) + besov_seminorms(space, values, params, mode, nodes)


def besov_norm(f: DiscreteFunction, params: BesovParams, mode: str = "dyadic",
               nodes: int = 64) -> float:
    """``||f||_p + (sum_k (2^(k alpha) E_p f(2^-k))^q)^(1/q)`` over ``2^-k >= h``.

    ``mode="quadrature"`` replaces the sum by a log-trapezoid integral of
    ``(t^-alpha E_p f(t))^q dt/t`` over the dyadic cells, divided by ``log 2``
    so both modes estimate the same quantity.
    """
    return float(besov_norms(f.space, f.values, params, mode, nodes))


def fit_smoothness(profile: BesovProfile) -> float:
    """Least-squares slope of ``log E_p f(t)`` against ``log t`` over nonzero moduli."""
    ok = profile.moduli > 0
    if not ok.any():
        raise InfinitelySmoothError("all moduli vanish: infinitely smooth at this resolution")
    if ok.sum() < 3:
        raise DegenerateFitError("need at least 3 scales with nonzero moduli")
    return float(np.polyfit(np.log(profile.scales[ok]), np.log(profile.moduli[ok]), 1)[0])
