"""Peetre K- and J-functionals, interpolated norms and the Calderon decomposition."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate

from .besov import BesovParams, besov_norms, lp_norm, moduli
from .calculus import CalculusConfig, _aoi, _derivative, check_potential_window, potential_norms
from .errors import HypothesisError
from .space import PointCloudSpace

INTERPOLATION = "interpolation theorem for potential spaces"
DECOMPOSITION = "decomposition bounds for the Calderon pieces"


@dataclass(frozen=True)
class NormedPair:
    """Two norms on functions of one space; each maps ``(n,)`` or ``(n, m)`` to per-column norms."""

    norm_X: Callable
    norm_Y: Callable
    label: str = ""

    def norms(self, F):
        F = np.asarray(F, dtype=float)
        return np.asarray(self.norm_X(F), float), np.asarray(self.norm_Y(F), float)


def lp_pair(space: PointCloudSpace, p: float) -> NormedPair:
    """``(L^p, L^p)``: the ``X = Y`` pair."""
    f = lambda F: lp_norm(space, F, p)
    return NormedPair(f, f, f"(L^{p}, L^{p})")


def potential_pair(space: PointCloudSpace, alpha: float, beta: float, p: float,
                   config: CalculusConfig | None = None) -> NormedPair:
    """``(L^{alpha,p}, L^{beta,p})`` with norms ``||(I + D_a) f||_p``."""
    return NormedPair(lambda F: potential_norms(space, F, alpha, p, config),
                      lambda F: potential_norms(space, F, beta, p, config),
                      f"(L^{{{alpha},{p}}}, L^{{{beta},{p}}})")


# ---------------------------------------------------------------- K functional


@dataclass(frozen=True, eq=False)
class SmoothingFamily:
    """Candidate splittings ``f = g + (f - g)``: ``g`` in ``{0, f, S_s f, f - S_s f}``."""

    candidates: np.ndarray  # (n, k) columns g
    labels: list

    @classmethod
    def build(cls, space: PointCloudSpace, f, s_grid=None) -> "SmoothingFamily":
        f = np.asarray(getattr(f, "values", f), dtype=float)
        if s_grid is None:
            s_grid = np.geomspace(space.resolution, 2 * space.diameter, 25)
        A = _aoi(space)
        S = A.apply  # columns computed one s at a time
        cols, labels = [np.zeros_like(f), f], ["zero", "f"]
        for s in s_grid:
            Sf = S(float(s), f)
            cols += [Sf, f - Sf]
            labels += [f"S({s:.6g})", f"I-S({s:.6g})"]
        return cls(np.stack(cols, axis=1), labels)


@dataclass(frozen=True)
class KCurve:
    t_grid: np.ndarray
    values: np.ndarray
    decomposition_witnesses: list
    knee_spanned: bool = True

    def to_dict(self) -> dict:
        return {"knee_spanned": self.knee_spanned,
                "curve": [{"t": float(t), "K": float(k), "witness": w}
                          for t, k, w in zip(self.t_grid, self.values, self.decomposition_witnesses)]}

    def to_csv(self) -> str:
        rows = ["t,K,witness_s"]
        rows += [f"{t:.17g},{k:.17g},{w}" for t, k, w in
                 zip(self.t_grid, self.values, self.decomposition_witnesses)]
        return "\n".join(rows) + "\n"


def _lines(pair: NormedPair, f, family: SmoothingFamily):
    """``(a, b)``: ``||g||_X`` and ``||f - g||_Y`` per candidate."""
    f = np.asarray(getattr(f, "values", f), dtype=float)
    G = family.candidates
    a = np.asarray(pair.norm_X(G), float)
    b = np.asarray(pair.norm_Y(f[:, None] - G), float)
    # the endpoints are exact by construction
    a[0], b[1] = 0.0, 0.0
    return a, b


def k_functional(pair: NormedPair, f, t: float, smoothing_family: SmoothingFamily,
                 space: PointCloudSpace | None = None):
    """``(min_g ||g||_X + t ||f - g||_Y, witness label)`` over the family."""
    if not t > 0:
        raise ValueError("t must be positive")
    a, b = _lines(pair, f, smoothing_family)
    v = a + t * b
    k = int(np.argmin(v))
    return float(v[k]), smoothing_family.labels[k]


def j_functional(pair: NormedPair, f, t: float) -> float:
    """``max(||f||_X, t ||f||_Y)``."""
    if not t > 0:
        raise ValueError("t must be positive")
    a, b = pair.norms(np.asarray(getattr(f, "values", f), dtype=float))
    return float(max(a, t * b))


def _envelope(a, b):
    """Lower envelope of ``a_i + t b_i`` on ``t > 0`` as ``(breaks, pieces)``.

    ``pieces[k]`` is the active line on ``(breaks[k-1], breaks[k])`` with
    ``breaks[-1] = 0`` and ``breaks[len] = inf`` implied.
    """
    a, b = np.asarray(a, float), np.asarray(b, float)
    # as t -> 0 the smallest a wins (ties: smallest b); then walk to larger t
    order = np.lexsort((b, a))
    cur = int(order[0])
    t = 0.0
    breaks, pieces = [], [cur]
    while True:
        # lines with smaller slope that cross cur at some t' > t
        cand = np.flatnonzero(b < b[cur])
        if cand.size == 0:
            break
        cross = (a[cand] - a[cur]) / (b[cur] - b[cand])
        ok = cross >= t  # slopes strictly decrease, so ties cannot loop
        cand, cross = cand[ok], cross[ok]
        tn = cross.min()
        nxt = cand[cross == tn]
        cur = int(nxt[np.argmin(b[nxt])])
        t = float(tn)
        breaks.append(t)
        pieces.append(cur)
    return np.array(breaks), pieces


def k_curve(pair: NormedPair, f, t_grid, smoothing_family: SmoothingFamily) -> KCurve:
    a, b = _lines(pair, f, smoothing_family)
    t_grid = np.asarray(t_grid, dtype=float)
    V = a[None, :] + t_grid[:, None] * b[None, :]
    k = V.argmin(axis=1)
    breaks, _ = _envelope(a, b)
    spanned = bool(breaks.size == 0 or (breaks.min() >= t_grid[0] and breaks.max() <= t_grid[-1]))
    return KCurve(t_grid, V[np.arange(t_grid.size), k],
                  [smoothing_family.labels[i] for i in k], spanned)


def _piece_integral(a, b, theta, q, lo, hi) -> float:
    """``int_lo^hi (t^-theta (a + b t))^q dt/t`` (``lo`` may be 0, ``hi`` may be inf)."""
    if a == 0 and b == 0:
        return 0.0
    if a == 0:  # b^q t^((1-theta) q)
        e = (1 - theta) * q
        return b ** q * ((hi ** e if np.isfinite(hi) else np.inf) - lo ** e) / e
    if b == 0:  # a^q t^(-theta q)
        e = theta * q
        return a ** q * ((lo ** -e if lo > 0 else np.inf) - (hi ** -e if np.isfinite(hi) else 0.0)) / e
    if lo == 0 or not np.isfinite(hi):
        return np.inf
    g = lambda s: (np.exp(-theta * s) * (a + b * np.exp(s))) ** q
    val, _ = integrate.quad(g, np.log(lo), np.log(hi), epsabs=0.0, epsrel=1e-13, limit=200)
    return float(val)


def _piece_sup(a, b, theta, lo, hi) -> float:
    """``sup t^-theta (a + b t)`` over ``[lo, hi]``."""
    def g(t):
        if t == 0:
            return np.inf if a > 0 else 0.0
        if not np.isfinite(t):
            return np.inf if b > 0 else 0.0
        return t ** -theta * (a + b * t)
    return max(g(lo), g(hi))  # t^-theta (a + b t) is convex in log t: max at an end


def interpolation_norm_K(pair: NormedPair, f, theta: float, q: float,
                         smoothing_family: SmoothingFamily, t_grid=None) -> dict:
    """Upper estimate of ``||t^-theta K f(t)||_{L^q(dt/t)}`` from the family.

    The estimated ``K`` is a minimum of finitely many affine functions of
    ``t``; the norm integrates that envelope piece by piece (power laws in
    closed form, mixed pieces by adaptive quadrature in ``log t``), so no
    truncation of ``(0, inf)`` is involved.  ``t_grid`` only sets the reported
    knee check.
    """
    if not 0 < theta < 1:
        raise ValueError("theta must lie in (0, 1)")
    if not 1 <= q <= np.inf:
        raise ValueError("q must lie in [1, inf]")
    a, b = _lines(pair, f, smoothing_family)
    breaks, pieces = _envelope(a, b)
    edges = np.concatenate([[0.0], breaks, [np.inf]])
    if q == np.inf:
        val = max(_piece_sup(a[k], b[k], theta, lo, hi)
                  for k, lo, hi in zip(pieces, edges[:-1], edges[1:]))
    else:
        total = sum(_piece_integral(a[k], b[k], theta, q, lo, hi)
                    for k, lo, hi in zip(pieces, edges[:-1], edges[1:]) if hi > lo)
        val = total ** (1.0 / q)
    spanned = True
    if t_grid is not None and breaks.size:
        t_grid = np.asarray(t_grid, float)
        spanned = bool(breaks.min() >= t_grid[0] and breaks.max() <= t_grid[-1])
    return {"value": float(val), "label": "upper estimate", "knee_spanned": spanned,
            "breakpoints": breaks.tolist(), "witnesses": [smoothing_family.labels[k] for k in pieces]}


def closed_form_c(theta: float, q: float) -> float:
    """``||t^-theta min(1, t)||_{L^q(dt/t)}``."""
    if q == np.inf:
        return 1.0
    return (1.0 / (q * theta * (1.0 - theta))) ** (1.0 / q)


# ---------------------------------------------------------------- Calderon


def calderon_grid(space: PointCloudSpace, per_octave: int = 4) -> np.ndarray:
    """Log grid on ``[h, 1]`` with ``per_octave`` nodes per factor 2."""
    K = max(1, int(np.ceil(-np.log2(space.resolution) * per_octave)))
    return np.geomspace(space.resolution, 1.0, K + 1)


def _log_weights(t):
    s = np.log(t)
    w = np.zeros(t.size)
    w[1:] += np.diff(s) / 2
    w[:-1] += np.diff(s) / 2
    return w


def calibrate_cpsi(space: PointCloudSpace, F, t_grid, eps: float = 1e-3):
    """``(c_psi, residual)``: least squares fit of ``int Q_t^2 dt/t ~ c_psi I`` on the columns of ``F``.

    ``residual`` is ``||f - g/c_psi|| / ||f||`` (worst column) with ``g`` the integral.
    """
    A = _aoi(space)
    F = np.asarray(F, float)
    F = F[:, None] if F.ndim == 1 else F
    w = _log_weights(np.asarray(t_grid, float))
    G = np.zeros_like(F)
    for t, wt in zip(t_grid, w):
        G += wt * A.q_apply(t, A.q_apply(t, F, eps), eps)
    m = space.weights[:, None]
    lam = float((m * F * G).sum() / (m * G * G).sum())
    res = lp_norm(space, F - lam * G, 2) / np.maximum(lp_norm(space, F, 2), np.finfo(float).tiny)
    return 1.0 / lam, float(res.max())


def calibration_ensemble(space: PointCloudSpace, size: int = 8, seed: int = 0) -> np.ndarray:
    """Mean-zero fine-scale bump sums used to fit ``c_psi``."""
    from .ensembles import bump_sum

    cols = []
    for k in range(size):
        v = bump_sum(space, 0.0, 1_000_003 + seed * 101 + k)
        cols.append(v - (space.weights * v).sum() / space.total_measure)
    return np.stack(cols, axis=1)


@dataclass(frozen=True, eq=False)
class CalderonDecomposition:
    """``f = sum_j w_j A_{t_j} f + Af`` with ``A_t = c_psi^-1 Q_t Q_t`` and ``Af`` the remainder."""

    t_grid: np.ndarray
    weights: np.ndarray
    pieces: np.ndarray  # (t, n, members)
    tail: np.ndarray  # (n, members)
    c_psi: float
    calibration_residual: float
    reconstruction_residual: np.ndarray  # ||Af||_2 / ||f||_2 per member

    def to_dict(self) -> dict:
        return {"t_grid": self.t_grid.tolist(), "c_psi": self.c_psi,
                "calibration_residual": self.calibration_residual,
                "tail_ratio": self.reconstruction_residual.tolist()}


def _cpsi(space: PointCloudSpace, t_grid, eps):
    key = ("cpsi", tuple(np.round(np.log(t_grid), 12)), eps)
    if key not in space._cache:
        space._cache[key] = calibrate_cpsi(space, calibration_ensemble(space), t_grid, eps)
    return space._cache[key]


def calderon_decomposition(space: PointCloudSpace, f, config: CalculusConfig | None = None,
                           t_grid=None) -> CalderonDecomposition:
    config = config or CalculusConfig()
    t_grid = calderon_grid(space) if t_grid is None else np.asarray(t_grid, float)
    h = space.resolution
    if t_grid.min() < h * (1 - 1e-12) or t_grid.max() > 1 + 1e-12:
        raise ValueError("t_grid must lie in [h, 1]")
    F = np.asarray(getattr(f, "values", f), float)
    squeeze = F.ndim == 1
    F = F[:, None] if squeeze else F
    c_psi, cres = _cpsi(space, t_grid, config.fd_step)
    A = _aoi(space)
    w = _log_weights(t_grid)
    pieces = np.array([A.q_apply(t, A.q_apply(t, F, config.fd_step), config.fd_step) / c_psi
                       for t in t_grid])
    tail = F - np.tensordot(w, pieces, axes=1)
    ratio = lp_norm(space, tail, 2) / np.maximum(lp_norm(space, F, 2), np.finfo(float).tiny)
    return CalderonDecomposition(t_grid, w, pieces, tail, c_psi, cres, np.atleast_1d(ratio))


# ---------------------------------------------------------------- harnesses


def fuerte_hypothesis_check(space: PointCloudSpace, f, alpha: float, p: float,
                            config: CalculusConfig | None = None, factor: float = 4.0) -> dict:
    """Measured constants for the bounds on the Calderon pieces.

    Per ``t``: ``||(I + D_a) A_t f||_p / (t^-a E_p f(factor t))`` and
    ``t^a ||D_a A_t f||_p / ||Q_t f||_p``; plus the tail ratio
    ``||(I + D_a) Af||_p / ||f||_p``.  Columns of ``f`` are ensemble members;
    sups run over ``t`` and members.
    """
    config = config or CalculusConfig()
    check_potential_window(alpha, p, config, DECOMPOSITION)
    F = np.asarray(getattr(f, "values", f), float)
    F = F[:, None] if F.ndim == 1 else F
    dec = calderon_decomposition(space, F, config)
    D = _derivative(space, alpha, config)
    A = _aoi(space)
    tiny = np.finfo(float).tiny
    fp = lp_norm(space, F, p)
    floor = 1e-12 * np.maximum(fp, tiny)  # Q_t f at rounding level: constants and flat members
    piece_ratio, deriv_ratio, qmod = [], [], []
    for t, P in zip(dec.t_grid, dec.pieces):
        DP = D(P)
        num = lp_norm(space, P + DP, p)
        E = moduli(space, F, factor * t, p)
        piece_ratio.append(np.where(E > 0, num / np.maximum(t ** -alpha * E, tiny), 0.0))
        Qf = lp_norm(space, A.q_apply(t, F, config.fd_step), p)
        deriv_ratio.append(np.where(Qf > floor, t ** alpha * lp_norm(space, DP, p) / np.maximum(Qf, tiny), 0.0))
        qmod.append(np.where((E > 0) & (Qf > floor), Qf / np.maximum(E, tiny), 0.0))
    tail = np.where(fp > 0, lp_norm(space, dec.tail + D(dec.tail), p) / np.maximum(fp, tiny), 0.0)
    piece_ratio, deriv_ratio, qmod = np.array(piece_ratio), np.array(deriv_ratio), np.array(qmod)
    return {
        "alpha": alpha, "p": p, "t_grid": dec.t_grid.tolist(), "c_psi": dec.c_psi,
        "calibration_residual": dec.calibration_residual,
        "piece_ratio_sup": float(piece_ratio.max()),
        "piece_ratio_by_t": piece_ratio.max(axis=1).tolist(),
        "derivative_ratio_sup": float(deriv_ratio.max()),
        "derivative_ratio_by_t": deriv_ratio.max(axis=1).tolist(),
        "q_modulus_sup": float(qmod.max()),
        "q_modulus_by_t": qmod.max(axis=1).tolist(),
        "tail_ratio_sup": float(tail.max()),
    }


def j_estimate(pair: NormedPair, dec: CalderonDecomposition, alpha: float, beta: float,
               theta: float, q: float) -> np.ndarray:
    """``J(Af)(1) + |b-a|^(1/q-1) (int (t^(-theta (b-a)) J(A_t f)(t^(b-a)))^q dt/t)^(1/q)`` per member.

    The integral runs over the decomposition grid with the trapezoid weights
    used to build the pieces.
    """
    d = beta - alpha
    aX, aY = pair.norms(dec.tail)
    head = np.maximum(aX, aY)
    vals = []
    for t, P in zip(dec.t_grid, dec.pieces):
        pX, pY = pair.norms(P)
        s = t ** d
        vals.append(t ** (-theta * d) * np.maximum(pX, s * pY))
    vals = np.array(vals)
    if q == np.inf:
        integral = vals.max(axis=0)
    else:
        integral = (dec.weights @ vals ** q) ** (1.0 / q)
    return head + abs(d) ** (1.0 / q - 1.0 if q != np.inf else -1.0) * integral


def interpolation_theorem_harness(space: PointCloudSpace, alpha: float, beta: float, theta: float,
                                  p: float, q: float, ensemble=None, config: CalculusConfig | None = None,
                                  ensemble_size: int = 20, seed: int = 0) -> dict:
    """Besov norm, K-upper estimate and J-upper estimate per ensemble member, with ratio spreads."""
    config = config or CalculusConfig()
    for a in (alpha, beta):
        check_potential_window(a, p, config, INTERPOLATION)
    if alpha == beta:
        raise HypothesisError("requires alpha != beta", INTERPOLATION)
    if not 0 < theta < 1:
        raise HypothesisError(f"requires 0 < theta < 1 (got {theta})", INTERPOLATION)
    if not 1 < q < np.inf:
        raise HypothesisError(f"requires 1 < q < inf (got {q})", INTERPOLATION)
    gamma = (1 - theta) * alpha + theta * beta
    if ensemble is None:
        from .ensembles import ensemble as make

        ensemble, _ = make(space, gamma, ensemble_size, seed)
    F = np.asarray(ensemble, float)
    F = F[:, None] if F.ndim == 1 else F
    B = besov_norms(space, F, BesovParams(gamma, p, q))
    pair = potential_pair(space, alpha, beta, p, config)
    K = np.array([interpolation_norm_K(pair, F[:, k], theta, q,
                                       SmoothingFamily.build(space, F[:, k]))["value"]
                  for k in range(F.shape[1])])
    dec = calderon_decomposition(space, F, config)
    J = j_estimate(pair, dec, alpha, beta, theta, q)
    rK, rJ = B / K, B / J

    def spread(r):
        return float(r.max() / r.min())

    return {
        "alpha": alpha, "beta": beta, "theta": theta, "gamma": gamma, "p": p, "q": q,
        "besov": B.tolist(), "k_estimate": K.tolist(), "j_estimate": J.tolist(),
        "ratio_besov_over_K": rK.tolist(), "ratio_besov_over_J": rJ.tolist(),
        "spread_K": spread(rK), "spread_J": spread(rJ),
        "c_psi": dec.c_psi, "calibration_residual": dec.calibration_residual,
    }
