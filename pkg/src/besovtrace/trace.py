"""Extension from a closed subset, restriction to it, and operator-norm harnesses."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .besov import BesovParams, besov_norms, lp_norm, moduli
from .calculus import CalculusConfig, bessel_kernel, regularity_exponents
from .ensembles import ensemble
from .errors import ConstructionError, HypothesisError
from .space import SubsetEmbedding, ball_sums, quotient_exponent
from .whitney import PartitionOfUnity, WhitneyCover, partition_of_unity, whitney_cover

EXTENSION = "extension theorem"
RESTRICTION_POTENTIAL = "restriction theorem for potential spaces"
RESTRICTION_BESOV = "restriction theorem for Besov spaces"


def check_extension_window(beta: float, p: float, gamma: float) -> None:
    """Refuse parameters outside ``0 < beta < 1 - gamma/p``, ``p >= 1``, ``gamma > 0``."""
    if not gamma > 0:
        raise HypothesisError(f"requires gamma > 0 (got {gamma})", EXTENSION)
    if not 1 <= p < np.inf:
        raise HypothesisError(f"requires 1 <= p < inf (got {p})", EXTENSION)
    if not 0 < beta < 1 - gamma / p:
        raise HypothesisError(f"requires 0 < beta < 1 - gamma/p = {1 - gamma / p:.4g} "
                              f"(got beta = {beta})", EXTENSION)


def check_restriction_window(alpha: float, p: float, N: float, d: float,
                             alpha_0: float | None = None) -> float:
    """Return ``beta = alpha - (N - d)/p`` after checking the hypotheses.

    With ``alpha_0`` the Besov version is checked (``alpha < alpha_0``,
    ``beta > 0``); otherwise the potential version (``0 < alpha < 1``,
    ``0 < beta < 1``).
    """
    theorem = RESTRICTION_BESOV if alpha_0 is not None else RESTRICTION_POTENTIAL
    if not 1 < p < np.inf:
        raise HypothesisError(f"requires 1 < p < inf (got {p})", theorem)
    if not 0 < d < N:
        raise HypothesisError(f"requires 0 < d < N (got d = {d:.4g}, N = {N:.4g})", theorem)
    beta = alpha - (N - d) / p
    if alpha_0 is not None:
        if not 0 < alpha < alpha_0:
            raise HypothesisError(f"requires 0 < alpha < alpha_0 = {alpha_0} (got {alpha})", theorem)
        if not beta > 0:
            raise HypothesisError(f"requires beta = alpha - (N - d)/p > 0 (got {beta:.4g})", theorem)
    else:
        if not 0 < alpha < 1:
            raise HypothesisError(f"requires 0 < alpha < 1 (got {alpha})", theorem)
        if not 0 < beta < 1:
            raise HypothesisError(f"requires 0 < beta = alpha - (N - d)/p < 1 (got {beta:.4g})", theorem)
    return beta


@dataclass(frozen=True, eq=False)
class ExtensionOperator:
    """``Ef(x) = sum_i phi_i(x) avg_{19 B_i} f dmu``.

    ``averages`` is the sparse (balls x F) matrix of ``mu``-averaging weights.
    With ``on_F="identity"`` the extension keeps ``f`` on ``F`` itself, where
    every ``phi_i`` vanishes; ``on_F="zero"`` leaves ``Ef = 0`` there.
    """

    embedding: SubsetEmbedding
    cover: WhitneyCover
    pou: PartitionOfUnity
    averaging_radius_factor: float
    averages: sp.csr_matrix
    on_F: str = "identity"

    def __call__(self, f) -> np.ndarray:
        F = np.asarray(getattr(f, "values", f), dtype=float)
        squeeze = F.ndim == 1
        F2 = F[:, None] if squeeze else F
        if F2.shape[0] != self.embedding.size:
            raise ValueError(f"expected {self.embedding.size} values on F, got {F2.shape[0]}")
        out = self.pou.values.T @ (self.averages @ F2)
        if self.on_F == "identity":
            out[self.embedding.subset] = F2
        return out[:, 0] if squeeze else out


def extension_operator(emb: SubsetEmbedding, scale_unit: float = 1.0,
                       averaging_radius_factor: float = 19.0, on_F: str = "identity",
                       verify: bool = True) -> ExtensionOperator:
    if on_F not in ("identity", "zero"):
        raise ValueError("on_F must be 'identity' or 'zero'")
    X = emb.parent
    cover = whitney_cover(X, emb.subset, scale_unit, verify=verify)
    pou = partition_of_unity(cover, verify=verify)
    rows, cols, vals = [], [], []
    Fs = emb.space
    for i, (c, r) in enumerate(zip(cover.centers, cover.radii)):
        d = X.pairwise([c], emb.subset)[0]
        sel = np.flatnonzero(d < averaging_radius_factor * r)
        mass = emb.mu_weights[sel].sum()
        if not mass > 0:
            raise ConstructionError(f"mu({averaging_radius_factor:g}B_i) = 0 for ball {i} at point {c}")
        rows.append(np.full(sel.size, i))
        cols.append(sel)
        vals.append(emb.mu_weights[sel] / mass)
    if rows:
        A = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(cover.size, Fs.n))
    else:
        A = sp.csr_matrix((0, Fs.n))
    return ExtensionOperator(emb, cover, pou, float(averaging_radius_factor), A, on_F)


def extend(op: ExtensionOperator, f):
    from .besov import DiscreteFunction

    if isinstance(f, DiscreteFunction):
        return DiscreteFunction(op.embedding.parent, op(f.values))
    return op(f)


@dataclass(frozen=True)
class RestrictionReport:
    radii: list
    averages: np.ndarray  # (radii, |F|)
    skipped: list
    cauchy: list  # max |avg(r_k) - avg(r_{k+1})| over F

    def to_dict(self) -> dict:
        return {"radii": self.radii, "skipped_radii": self.skipped, "cauchy": self.cauchy}


def restrict(values, emb: SubsetEmbedding, radii=None):
    """Lebesgue averages ``avg_{B(t, r)} f dm`` at ``t`` in ``F`` for decreasing ``radii``.

    Returns ``(values on F at the smallest usable radius, report)``.  Without
    ``radii`` the plain pointwise restriction ``f|_F`` is returned.
    """
    X = emb.parent
    v = np.asarray(getattr(values, "values", values), dtype=float)
    if radii is None:
        return v[emb.subset].copy(), None
    radii = [float(r) for r in radii]
    if any(b >= a for a, b in zip(radii, radii[1:])):
        raise ValueError("radii must be strictly decreasing")
    if radii and not (2 * X.resolution < radii[-1] and radii[0] < X.diameter):
        raise ValueError("radii must lie in (2h, diameter)")
    kept, skipped, avgs = [], [], []
    for r in radii:
        mass, acc = ball_sums(X, emb.subset, r, values=v, mode="mean")
        if np.any(mass <= 0):
            skipped.append(r)
            continue
        kept.append(r)
        avgs.append(acc[:, 0] / mass)
    if not avgs:
        raise ValueError("every radius gave an empty ball")
    avgs = np.array(avgs)
    cauchy = [float(np.abs(a - b).max()) for a, b in zip(avgs[:-1], avgs[1:])]
    return avgs[-1].copy(), RestrictionReport(kept, avgs, skipped, cauchy)


def recovery_deviation(op: ExtensionOperator, F, radii) -> np.ndarray:
    """``avg_{B(t, r)} |Ef - f(t)| dm`` for each ``r`` (rows) and ``t`` in ``F`` (columns) per member.

    Shape ``(len(radii), |F|, members)``.
    """
    F = np.asarray(F, dtype=float)
    F2 = F[:, None] if F.ndim == 1 else F
    Ef = op(F2)
    X = op.embedding.parent
    out = []
    for r in radii:
        mass, acc = ball_sums(X, op.embedding.subset, r, values=Ef, center_values=F2, p=1.0)
        out.append(acc / mass[:, None])
    return np.array(out)


@dataclass(frozen=True)
class TraceReport:
    lp_ratio_max: float
    besov_ratio_max: float
    recovery_errors: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"lp_ratio_max": self.lp_ratio_max, "besov_ratio_max": self.besov_ratio_max,
                "recovery_errors": self.recovery_errors, "params": self.params, **self.extra}


def _safe_ratios(num, den) -> np.ndarray:
    num, den = np.asarray(num, float), np.asarray(den, float)
    ok = den > 0
    return num[ok] / den[ok]


def extension_harness(emb: SubsetEmbedding, beta: float, p: float, q: float,
                      ensemble_size: int = 50, seed: int = 0, scale_unit: float = 1.0,
                      gamma: float | None = None, recovery_radii=(4, 32)) -> TraceReport:
    """Empirical ``L^p`` and Besov operator norms of ``E`` over a seeded ensemble on ``F``.

    ``recovery_radii`` are multiples of the parent resolution; the report
    carries the fraction of ``F`` points where the deviation at the
    first radius is below that at the second.  ``fraction_improving`` uses
    the ensemble-mean deviation at each point; ``member_fraction_min`` and
    ``pooled_fraction`` give the per-member view.
    """
    if gamma is None:
        gamma = emb.gamma if emb.gamma is not None else quotient_exponent(emb).fitted_exponent
    check_extension_window(beta, p, gamma)
    alpha = beta + gamma / p
    op = extension_operator(emb, scale_unit)
    Fs, X = emb.space, emb.parent
    F, kinds = ensemble(Fs, beta, ensemble_size, seed)
    Ef = op(F)
    lp = _safe_ratios(lp_norm(X, Ef, p), lp_norm(Fs, F, p))
    bX = besov_norms(X, Ef, BesovParams(alpha, p, q))
    bF = besov_norms(Fs, F, BesovParams(beta, p, q))
    bes = _safe_ratios(bX, bF)
    h = X.resolution
    radii = [k * h for k in recovery_radii]
    dev = recovery_deviation(op, F, radii)
    per_point = dev.mean(axis=2)  # ensemble mean, (radii, |F|)
    # exact ties (constants, flat pieces of indicators) sit at rounding level
    tol = 1e-12 * np.maximum(np.abs(F).max(axis=0), 1.0)
    member_ok = (dev[0] < dev[1]) | ((dev[0] <= tol) & (dev[1] <= tol))
    rec = {"radii": radii,
           "per_point": per_point.tolist(),
           "fraction_improving": float((per_point[0] < per_point[1]).mean()),
           "member_fraction_min": float(member_ok.mean(axis=0).min()),
           "pooled_fraction": float(member_ok.mean())}
    params = {"alpha": alpha, "beta": beta, "p": p, "q": q, "gamma": gamma,
              "ensemble_size": ensemble_size, "seed": seed, "scale_unit": scale_unit}
    extra = {"lp_ratios": lp.tolist(), "besov_ratios": bes.tolist(), "kinds": kinds,
             "whitney_balls": op.cover.size, "overlap_bound": op.cover.overlap_bound}
    return TraceReport(float(lp.max(initial=0.0)), float(bes.max(initial=0.0)), rec, params, extra)


def _besov_alpha0(config: CalculusConfig | None) -> float:
    return (config or CalculusConfig()).alpha_0


def restriction_harness(emb: SubsetEmbedding, alpha: float, p: float, ensemble_size: int = 50,
                        seed: int = 0, r_grid=None, config: CalculusConfig | None = None,
                        N: float | None = None, d: float | None = None) -> TraceReport:
    """Measure the two inequalities behind restriction of ``f = J_alpha g`` to ``F``.

    (1) ``sum_F |f|^p mu / ||g||_p^p``.  (2) For each ``r`` the ``mu``
    double average ``E_p(f|_F)(r)^p / ||g||_p^p``; its sup over the ensemble
    is fitted against ``r`` and compared with ``beta p``.
    """
    X, Fs = emb.parent, emb.space
    if N is None or d is None:
        N_fit, d_fit = regularity_exponents(emb)
        N = N_fit if N is None else N
        d = d_fit if d is None else d
    beta = check_restriction_window(alpha, p, N, d)
    K = bessel_kernel(X, alpha, config)
    G, kinds = ensemble(X, 0.0, ensemble_size, seed)
    f = K.apply(G)
    fF = f[emb.subset]
    gp = lp_norm(X, G, p) ** p
    ok = gp > 0
    ineq1 = (lp_norm(Fs, fF, p) ** p)[ok] / gp[ok]
    if r_grid is None:
        r_grid = np.geomspace(2.2 * Fs.resolution, Fs.diameter / 4, 10)
    r_grid = np.asarray(r_grid, dtype=float)
    I = np.array([moduli(Fs, fF, r, p) ** p for r in r_grid])[:, ok] / gp[ok]
    sup = I.max(axis=1)
    pos = sup > 0
    slope = float(np.polyfit(np.log(r_grid[pos]), np.log(sup[pos]), 1)[0]) if pos.sum() >= 2 else float("nan")
    params = {"alpha": alpha, "beta": beta, "p": p, "N": N, "d": d,
              "ensemble_size": ensemble_size, "seed": seed}
    extra = {"inequality1_max": float(ineq1.max(initial=0.0)),
             "inequality2_radii": r_grid.tolist(),
             "inequality2_sup": sup.tolist(),
             "inequality2_slope": slope,
             "inequality2_target_slope": beta * p,
             "kernel_residual": K.quadrature_residual}
    return TraceReport(float(ineq1.max(initial=0.0)), float("nan"), {}, params, extra)


def besov_restriction_harness(emb: SubsetEmbedding, alpha: float, p: float, q: float,
                              ensemble_size: int = 50, seed: int = 0,
                              config: CalculusConfig | None = None,
                              N: float | None = None, d: float | None = None) -> TraceReport:
    """``||f|_F||_{B^beta(F)} / ||f||_{B^alpha(X)}`` over a Besov-``alpha`` ensemble on ``X``."""
    if not 1 <= q < np.inf:
        raise HypothesisError(f"requires 1 <= q < inf (got {q})", RESTRICTION_BESOV)
    if N is None or d is None:
        N_fit, d_fit = regularity_exponents(emb)
        N = N_fit if N is None else N
        d = d_fit if d is None else d
    beta = check_restriction_window(alpha, p, N, d, _besov_alpha0(config))
    X, Fs = emb.parent, emb.space
    G, kinds = ensemble(X, alpha, ensemble_size, seed)
    num = besov_norms(Fs, G[emb.subset], BesovParams(beta, p, q))
    den = besov_norms(X, G, BesovParams(alpha, p, q))
    r = _safe_ratios(num, den)
    params = {"alpha": alpha, "beta": beta, "p": p, "q": q, "N": N, "d": d,
              "ensemble_size": ensemble_size, "seed": seed}
    return TraceReport(float("nan"), float(r.max(initial=0.0)), {}, params,
                       {"besov_ratios": r.tolist(), "kinds": kinds})


def hardy_inequality_check(b, a: float, gamma_exp: float):
    """``(lhs, rhs, lhs/rhs)`` with ``lhs = sum_n 2^(-na) (sum_{k<=n} b_k)^gamma``, ``rhs = sum_n 2^(-na) b_n^gamma``."""
    b = np.asarray(b, dtype=float)
    if np.any(b < 0):
        raise ValueError("sequence entries must be nonnegative")
    if not (a > 0 and gamma_exp > 0):
        raise ValueError("a and gamma must be positive")
    w = 2.0 ** (-a * np.arange(b.size))
    lhs = float((w * np.cumsum(b) ** gamma_exp).sum())
    rhs = float((w * b ** gamma_exp).sum())
    return lhs, rhs, (lhs / rhs if rhs > 0 else 0.0)


def drift(values) -> float:
    """Largest ratio ``max(a/b, b/a)`` between consecutive entries."""
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        return 1.0
    if np.any(v <= 0):
        return float("inf")
    r = v[1:] / v[:-1]
    return float(np.maximum(r, 1 / r).max())
