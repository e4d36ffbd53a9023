"""Approximation of the identity, Bessel-type potentials and fractional derivatives.

``S_t`` is the three-factor construction

    T_t f(x) = sum_y psi(d(x, y)/t) f(y) m_y,   psi(s) = max(0, 1 - s),
    u = T_t 1,   w = 1 / T_t(1/u),
    S_t f = (1/u) T_t(w T_t(f/u)),

whose kernel is symmetric with ``S_t 1 = 1``.  For ``t`` at or below the
smallest spacing ``psi(d/t)`` vanishes off the diagonal and ``S_t`` is the
identity exactly; it is returned as such.

Operators are applied through one of three backends: dense matrices (small
spaces), FFT convolution (regular grids) and sparse ball queries (everything
else, small ``t`` only).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft
import scipy.sparse as sp

from .besov import lp_norm, moduli
from .errors import HypothesisError, QuadratureError
from .space import PointCloudSpace, SubsetEmbedding, ball_sums, ball_with_distances

DENSE_MAX = 3000
SPARSE_NNZ_MAX = 40_000_000


@dataclass(frozen=True)
class CalculusConfig:
    """Quadrature and threshold parameters.

    ``t_min, t_max, t_nodes`` set the log grid used for the ``dt/t`` integrals
    defining ``k_alpha`` and ``n_alpha``; mass below ``t_min`` and above
    ``t_max`` is added in closed form (see ``bessel_weights``).
    """

    alpha_0: float = 0.5
    xi: float = 0.75
    t_min: float = 1e-3
    t_max: float = 1e3
    t_nodes: int = 200
    fd_step: float = 1e-3

    def __post_init__(self):
        if not 0 < self.alpha_0 <= 1:
            raise ValueError("alpha_0 must lie in (0, 1]")
        if not 0.5 < self.xi < 1:
            raise ValueError("xi must lie in (1/2, 1)")
        if not 0 < self.t_min < self.t_max or self.t_nodes < 2:
            raise ValueError("need 0 < t_min < t_max and at least 2 nodes")
        if not 0 < self.fd_step < 0.1:
            raise ValueError("fd_step must lie in (0, 0.1)")

    def nodes(self) -> np.ndarray:
        return np.geomspace(self.t_min, self.t_max, self.t_nodes)

    def log_weights(self) -> np.ndarray:
        """Trapezoid weights for ``int g(t) dt/t`` on ``nodes()``."""
        ds = np.log(self.t_max / self.t_min) / (self.t_nodes - 1)
        w = np.full(self.t_nodes, ds)
        w[[0, -1]] = ds / 2
        return w

    def refined(self, factor: int = 2) -> "CalculusConfig":
        return CalculusConfig(self.alpha_0, self.xi, self.t_min, self.t_max,
                              (self.t_nodes - 1) * factor + 1, self.fd_step)


def sweep_grid(space: PointCloudSpace, count: int = 24, upper: float = 1.0) -> np.ndarray:
    """Log grid on ``[h, upper]`` for scale sweeps."""
    return np.geomspace(space.resolution, upper, count)


def bessel_weights(alpha: float, config: CalculusConfig):
    """Node weights ``c_j`` with ``k_alpha = head * I + sum_j c_j s_j`` (tail folded into the last node).

    ``head`` is the exact mass ``t_min^a/(1 + t_min^a)`` of the weight
    ``a t^a/(1 + t^a)^2 dt/t`` on ``(0, t_min)``, carried by ``S_t = I`` when
    ``t_min`` is at most the spacing; the tail mass ``1/(1 + t_max^a)`` is
    carried by ``S_{t_max}``.
    """
    t = config.nodes()
    ta = t ** alpha
    c = config.log_weights() * alpha * ta / (1.0 + ta) ** 2
    c[-1] += 1.0 / (1.0 + config.t_max ** alpha)
    head = config.t_min ** alpha / (1.0 + config.t_min ** alpha)
    return t, c, head


def derivative_weights(alpha: float, config: CalculusConfig):
    """Node weights for ``n_alpha = sum_j c_j s_j``, tail mass ``t_max^-a`` on the last node."""
    t = config.nodes()
    c = config.log_weights() * alpha * t ** -alpha
    c[-1] += config.t_max ** -alpha
    return t, c


def _as_columns(G):
    G = np.asarray(G, dtype=float)
    return (G[:, None], True) if G.ndim == 1 else (G, False)


class AOI:
    """The family ``t -> S_t`` on one space, with cached normalizations."""

    def __init__(self, space: PointCloudSpace, backend: str = "auto"):
        self.space = space
        self.m = space.weights
        if backend == "auto":
            if space.n <= DENSE_MAX:
                backend = "dense"
            elif space.grid_shape is not None and _is_uniform_grid(space):
                backend = "fft"
            else:
                backend = "sparse"
        if backend == "fft" and (space.grid_shape is None or not _is_uniform_grid(space)):
            raise ValueError("fft backend needs a uniform grid space")
        self.backend = backend
        self.spacing = space.min_spacing
        self._uw = {}
        if backend == "dense":
            self._D = space.pairwise()
        elif backend == "fft":
            self._setup_fft()

    # ------------------------------------------------------------ T_t backends
    def _setup_fft(self):
        shape = self.space.grid_shape
        self._shape = shape
        self._pad = tuple(sfft.next_fast_len(2 * k - 1, real=True) for k in shape)
        grids = []
        for k, P in zip(shape, self._pad):
            idx = np.arange(P)
            grids.append(np.where(idx < k, idx, idx - P).astype(float))
        mesh = np.meshgrid(*grids, indexing="ij")
        self._R = self.space.resolution * np.sqrt(sum(g * g for g in mesh))
        self._axes = tuple(range(1, len(shape) + 1))

    def _psi(self, d, t):
        return np.maximum(0.0, 1.0 - d / t)

    def _T(self, t: float, G: np.ndarray) -> np.ndarray:
        """``T_t`` applied to the columns of ``G``."""
        mG = self.m[:, None] * G
        if self.backend == "dense":
            return self._psi(self._D, t) @ mG
        if self.backend == "fft":
            k = len(self._shape)
            x = mG.T.reshape((G.shape[1],) + self._shape)
            kern = sfft.rfftn(self._psi(self._R, t), s=self._pad)
            X = sfft.rfftn(x, s=self._pad, axes=self._axes)
            y = sfft.irfftn(X * kern[None], s=self._pad, axes=self._axes)
            y = y[(slice(None),) + tuple(slice(0, n) for n in self._shape)]
            return y.reshape(G.shape[1], -1).T.copy()
        return self._psi_sparse(t) @ mG

    def _psi_sparse(self, t: float) -> sp.csr_matrix:
        key = ("psi", t)
        if key in self._uw:
            return self._uw[key]
        X = self.space
        rows, cols, vals = [], [], []
        nnz = 0
        for x in range(X.n):
            idx, d = ball_with_distances(X, x, t)
            rows.append(np.full(idx.size, x))
            cols.append(idx)
            vals.append(self._psi(d, t))
            nnz += idx.size
            if nnz > SPARSE_NNZ_MAX:
                raise MemoryError(f"S_t at t={t} is too dense for the sparse backend")
        P = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(X.n, X.n))
        return P

    # ------------------------------------------------------------ S_t
    def is_identity(self, t: float) -> bool:
        return t <= self.spacing

    def factors(self, t: float):
        """``(u, w)`` with ``u = T_t 1`` and ``w = 1/T_t(1/u)``."""
        if t not in self._uw:
            one = np.ones((self.space.n, 1))
            u = self._T(t, one)[:, 0]
            if np.any(u <= 0):
                bad = int(np.flatnonzero(u <= 0)[0])
                raise ValueError(f"T_t 1 vanishes at point {bad} for t={t}")
            w = 1.0 / self._T(t, (1.0 / u)[:, None])[:, 0]
            self._uw[t] = (u, w)
        return self._uw[t]

    def apply(self, t: float, G) -> np.ndarray:
        """``S_t`` applied to a vector or to the columns of a matrix."""
        G, squeeze = _as_columns(G)
        if self.is_identity(t):
            out = G.copy()
        else:
            u, w = self.factors(t)
            out = self._T(t, w[:, None] * self._T(t, G / u[:, None])) / u[:, None]
        return out[:, 0] if squeeze else out

    def matrix(self, t: float) -> np.ndarray:
        """Dense kernel ``s(x, y, t)`` (with respect to ``dm(y)``), exactly symmetric."""
        n = self.space.n
        if n > DENSE_MAX:
            raise MemoryError("dense kernel matrices are limited to small spaces")
        if self.is_identity(t):
            return np.diag(1.0 / self.m)
        u, w = self.factors(t)
        if self.backend == "dense":
            P = self._psi(self._D, t)
            s = (P / u[:, None]) @ ((self.m * w)[:, None] * (P / u[None, :]))
        else:
            s = self.apply(t, np.diag(1.0 / self.m))
        return 0.5 * (s + s.T)

    def q_apply(self, t: float, G, eps: float = 1e-3) -> np.ndarray:
        """``Q_t = -t d/dt S_t`` by a central difference in ``log t``."""
        a = self.apply(t * np.exp(eps), G)
        b = self.apply(t * np.exp(-eps), G)
        return -(a - b) / (2.0 * eps)

    def q_matrix(self, t: float, eps: float = 1e-3) -> np.ndarray:
        return -(self.matrix(t * np.exp(eps)) - self.matrix(t * np.exp(-eps))) / (2.0 * eps)

    # ------------------------------------------------------------ quadratures
    def combine(self, t_nodes, weights, G, identity_weight: float = 0.0) -> np.ndarray:
        """``identity_weight * G + sum_j weights_j S_{t_j} G``."""
        G, squeeze = _as_columns(G)
        out = identity_weight * G
        ident = 0.0
        for t, c in zip(t_nodes, weights):
            if self.is_identity(t):
                ident += c
            else:
                out = out + c * self.apply(t, G)
        out = out + ident * G
        return out[:, 0] if squeeze else out

    def combine_matrix(self, t_nodes, weights, identity_weight: float = 0.0) -> np.ndarray:
        K = identity_weight * np.diag(1.0 / self.m)
        for t, c in zip(t_nodes, weights):
            K = K + c * self.matrix(t)
        return K


def _is_uniform_grid(space: PointCloudSpace) -> bool:
    shape = space.grid_shape
    h = space.resolution
    if not np.allclose(space.weights, space.weights[0], rtol=0, atol=0):
        return False
    idx = np.stack(np.unravel_index(np.arange(space.n), shape), axis=1)
    expect = space.coords[0] + h * idx
    return bool(np.allclose(space.coords, expect, rtol=0, atol=1e-12 * max(1.0, space.diameter)))


def _aoi(space: PointCloudSpace) -> AOI:
    """Cached ``AOI`` per space (spaces are immutable)."""
    if "aoi" not in space._cache:
        space._cache["aoi"] = AOI(space)
    return space._cache["aoi"]


# ---------------------------------------------------------------- kernels


@dataclass(frozen=True, eq=False)
class ScaledKernel:
    t: float
    matrix: np.ndarray
    support_radius: float
    checks: dict = field(default_factory=dict)


def space_exponent(space: PointCloudSpace) -> float | None:
    """Fitted regularity exponent ``N`` (cached); ``None`` when the space is too small to fit."""
    from .errors import DegenerateFitError
    from .space import estimate_regularity

    if "N" not in space._cache:
        try:
            space._cache["N"] = estimate_regularity(space).fitted_exponent
        except (ValueError, DegenerateFitError):
            space._cache["N"] = None
    return space._cache["N"]


def build_aoi(space: PointCloudSpace, t: float, config: CalculusConfig | None = None) -> ScaledKernel:
    """Dense ``s(., ., t)`` with post-hoc checks: symmetry, ``S_t 1 = 1``, support, size ``t^N max s``."""
    if not t > 0:
        raise ValueError("t must be positive")
    A = _aoi(space)
    s = A.matrix(t)
    D = A._D if A.backend == "dense" else space.pairwise()
    m = space.weights
    N = space_exponent(space)
    checks = {
        "symmetry_max": float(np.abs(s - s.T).max()),
        "row_sum_error": float(np.abs(s @ m - 1.0).max()),
        "nonnegative": bool(s.min() >= 0),
        "support_ok": bool(np.all(s[D >= 2 * t] == 0)),
        "size_constant": float(s.max() * t ** N) if N else None,
    }
    return ScaledKernel(float(t), s, 2.0 * t, checks)


def q_operator(space: PointCloudSpace, t: float, config: CalculusConfig | None = None,
               lipschitz_sample: int = 256, seed: int = 0) -> ScaledKernel:
    """Dense signed ``q(., ., t)`` with checks.

    Reported: ``Q_t 1`` error, symmetry, support within ``4t``, the size
    constant ``t^N max |q|``, a sampled Lipschitz constant
    ``t^(N+1) |q(x, y) - q(x', y)| / d(x, x')`` over ``0 < d(x, x') <= t``, and
    the ``L^2`` operator norm.
    """
    config = config or CalculusConfig()
    if not t > 0:
        raise ValueError("t must be positive")
    A = _aoi(space)
    eps = config.fd_step
    q = A.q_matrix(t, eps)
    D = A._D if A.backend == "dense" else space.pairwise()
    m = space.weights
    N = space_exponent(space)
    rng = np.random.default_rng(seed)
    xs = rng.choice(space.n, size=min(lipschitz_sample, space.n), replace=False)
    lip = 0.0
    for x in xs:
        near = np.flatnonzero((D[x] > 0) & (D[x] <= t))
        if near.size:
            diff = np.abs(q[near] - q[x][None, :]).max(axis=1) / D[x, near]
            lip = max(lip, float(diff.max()))
    sq = np.sqrt(m)
    op = sq[:, None] * q * sq[None, :]  # symmetric form of f -> q (m f)
    checks = {
        "q1_max": float(np.abs(q @ m).max()),
        "symmetry_max": float(np.abs(q - q.T).max()),
        "support_ok": bool(np.all(q[D > 4 * t] == 0)),
        "size_constant": float(np.abs(q).max() * t ** N) if N else None,
        "lipschitz_constant": float(lip * t ** (N + 1)) if N else None,
        "l2_operator_norm": float(np.abs(np.linalg.eigvalsh(0.5 * (op + op.T))).max()),
    }
    return ScaledKernel(float(t), q, 4.0 * t, checks)


@dataclass(frozen=True, eq=False)
class BesselKernel:
    """``k_alpha`` on a space; ``matrix`` is dense when available, else ``None`` (apply-only)."""

    space: PointCloudSpace
    alpha: float
    config: CalculusConfig
    matrix: np.ndarray | None
    quadrature_residual: float

    def apply(self, G) -> np.ndarray:
        """``J_alpha`` on a vector or the columns of a matrix."""
        if self.matrix is not None:
            G, squeeze = _as_columns(G)
            out = self.matrix @ (self.space.weights[:, None] * G)
            return out[:, 0] if squeeze else out
        t, c, head = bessel_weights(self.alpha, self.config)
        return _aoi(self.space).combine(t, c, G, identity_weight=head)

    def rows(self, idx) -> np.ndarray:
        """``k_alpha(x, .)`` for ``x`` in ``idx`` (shape ``(len(idx), n)``)."""
        idx = np.asarray(idx, dtype=np.int64)
        if self.matrix is not None:
            return self.matrix[idx]
        E = np.zeros((self.space.n, idx.size))
        E[idx, np.arange(idx.size)] = 1.0 / self.space.weights[idx]
        return self.apply(E).T


def bessel_kernel(space: PointCloudSpace, alpha: float, config: CalculusConfig | None = None,
                  tolerance: float = 1e-2, dense: bool | None = None) -> BesselKernel:
    """``k_alpha = int a t^a/(1 + t^a)^2 s(., ., t) dt/t`` by log-trapezoid quadrature."""
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    config = config or CalculusConfig()
    A = _aoi(space)
    if config.t_min > A.spacing:
        raise QuadratureError("t_min must not exceed the point spacing (head mass is carried by S_t = I)")
    t, c, head = bessel_weights(alpha, config)
    dense = (space.n <= DENSE_MAX) if dense is None else dense
    if dense:
        K = A.combine_matrix(t, c, head)
        K = 0.5 * (K + K.T)
        residual = float(np.abs(K @ space.weights - 1.0).max())
    else:
        K = None
        one = A.combine(t, c, np.ones(space.n), identity_weight=head)
        residual = float(np.abs(one - 1.0).max())
    if residual > tolerance:
        raise QuadratureError(f"row-sum residual {residual:.3g} exceeds {tolerance}; widen or refine the t grid")
    return BesselKernel(space, float(alpha), config, K, residual)


def space_hash(space: PointCloudSpace) -> str:
    """SHA-256 of the data defining a space (weights, geometry, resolution)."""
    import hashlib

    h = hashlib.sha256()
    for arr in (space.weights, space.coords, space.blocks, space.dist_matrix):
        if arr is not None:
            a = np.ascontiguousarray(arr)
            h.update(str(a.shape).encode())
            h.update(a.tobytes())
        else:
            h.update(b"none")
    h.update(np.array([space.resolution, space.diameter]).tobytes())
    return h.hexdigest()


def _kernel_key(space, alpha, config) -> str:
    return f"{space_hash(space)}|{alpha!r}|{config.t_min!r}|{config.t_max!r}|{config.t_nodes}"


def save_kernel(kernel: BesselKernel, path) -> None:
    """Write a dense kernel to ``.npz`` keyed by (space hash, alpha, t grid)."""
    if kernel.matrix is None:
        raise ValueError("only dense kernels can be cached")
    with open(path, "wb") as fh:
        np.savez_compressed(fh, matrix=kernel.matrix, residual=kernel.quadrature_residual,
                            key=_kernel_key(kernel.space, kernel.alpha, kernel.config))


def load_kernel(path, space: PointCloudSpace, alpha: float,
                config: CalculusConfig | None = None) -> BesselKernel:
    """Read a kernel written by ``save_kernel``; the key must match ``(space, alpha, config)``."""
    config = config or CalculusConfig()
    with np.load(path) as z:
        if str(z["key"]) != _kernel_key(space, alpha, config):
            raise ValueError("cached kernel was built for a different space, alpha or t grid")
        return BesselKernel(space, float(alpha), config, z["matrix"], float(z["residual"]))


def potential(kernel: BesselKernel, g) -> np.ndarray:
    """``J_alpha g(x) = sum_y k_alpha(x, y) g(y) m_y``."""
    from .besov import DiscreteFunction

    if isinstance(g, DiscreteFunction):
        return DiscreteFunction(kernel.space, kernel.apply(g.values))
    return kernel.apply(g)


class FractionalDerivative:
    """``D_alpha f(x) = sum_y (f(x) - f(y)) n_alpha(x, y) m_y``.

    Inputs are shifted by their first value before the quadrature; ``D_alpha``
    ignores constants, and the shift makes ``D_alpha c = 0`` hold exactly.
    """

    def __init__(self, space: PointCloudSpace, alpha: float, config: CalculusConfig | None = None):
        if not 0 < alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        self.space, self.alpha = space, float(alpha)
        self.config = config or CalculusConfig()
        self._A = _aoi(space)
        self._op = None
        if space.n <= DENSE_MAX:
            t, c = derivative_weights(alpha, self.config)
            Nk = self._A.combine_matrix(t, c)
            Nk = 0.5 * (Nk + Nk.T)
            np.fill_diagonal(Nk, 0.0)
            m = space.weights
            self._op = np.diag(Nk @ m) - Nk * m[None, :]

    def __call__(self, F) -> np.ndarray:
        F, squeeze = _as_columns(F)
        F0 = F - F[0:1]
        if self._op is not None:
            out = self._op @ F0
        else:
            t, c = derivative_weights(self.alpha, self.config)
            out = c.sum() * F0 - self._A.combine(t, c, F0)
        return out[:, 0] if squeeze else out


def _derivative(space, alpha, config) -> FractionalDerivative:
    key = ("dalpha", float(alpha), config)
    if key not in space._cache:
        space._cache[key] = FractionalDerivative(space, alpha, config)
    return space._cache[key]


def _bessel(space, alpha, config) -> BesselKernel:
    key = ("jalpha", float(alpha), config)
    if key not in space._cache:
        space._cache[key] = bessel_kernel(space, alpha, config)
    return space._cache[key]


def fractional_derivative(space: PointCloudSpace, f, alpha: float,
                          config: CalculusConfig | None = None, check: bool = True) -> np.ndarray:
    """``D_alpha f``; with ``check`` the result is compared against a doubled quadrature."""
    config = config or CalculusConfig()
    values = getattr(f, "values", f)
    out = _derivative(space, alpha, config)(values)
    if check:
        fine = FractionalDerivative(space, alpha, config.refined(2))(values)
        scale = max(float(lp_norm(space, fine, 2)), np.finfo(float).tiny)
        rel = float(lp_norm(space, out - fine, 2)) / scale
        if float(lp_norm(space, fine, 2)) > 0 and rel > 0.1:
            raise QuadratureError(f"D_alpha changes by {rel:.1%} when doubling the quadrature nodes")
    return out


def check_potential_window(alpha: float, p: float, config: CalculusConfig,
                           theorem: str = "potential-space characterization") -> None:
    """Refuse ``p`` outside ``(1, inf)`` or ``alpha`` outside ``(0, alpha_0)``."""
    if not 1 < p < np.inf:
        raise HypothesisError(f"requires 1 < p < inf (got {p})", theorem)
    if not 0 < alpha < config.alpha_0:
        raise HypothesisError(f"requires 0 < alpha < alpha_0 = {config.alpha_0} (got {alpha})", theorem)


def potential_norms(space: PointCloudSpace, F, alpha: float, p: float,
                    config: CalculusConfig | None = None) -> np.ndarray:
    """``||(I + D_alpha) f||_p`` for each column of ``F``."""
    config = config or CalculusConfig()
    check_potential_window(alpha, p, config)
    F = np.asarray(F, dtype=float)
    return lp_norm(space, F + _derivative(space, alpha, config)(F), p)


def potential_norm(space: PointCloudSpace, f, alpha: float, p: float,
                   config: CalculusConfig | None = None) -> float:
    return float(potential_norms(space, getattr(f, "values", f), alpha, p, config))


# ---------------------------------------------------------------- bound checks


def regularity_exponents(emb: SubsetEmbedding):
    """``(N, d)``: fitted regularity of ``X`` and of ``(F, mu)``."""
    N, d = space_exponent(emb.parent), space_exponent(emb.space)
    if N is None or d is None:
        raise ValueError("space too small to fit a regularity exponent; pass N and d explicitly")
    return N, d


def kernel_bound_checks(kernel: BesselKernel, emb: SubsetEmbedding, q_exp: float,
                        r_grid=None, N: float | None = None, d: float | None = None,
                        z_sample: int = 256, seed: int = 0) -> dict:
    """Integrals of ``k_alpha`` over ``F``.

    Part 1: ``max_z sum_s k(s, z)^q mu_s``.  Part 2: for each ``r``,
    ``max_z sum_s mu_s avg_{t in B(s, r)} |k(s, z) - k(t, z)|^q`` (``mu``
    averages), with its log-log slope compared with ``d - q(N - alpha)``.
    ``z`` runs over all of ``F`` plus a seeded sample of the rest of ``X``.
    """
    a, q = kernel.alpha, q_exp
    if N is None or d is None:
        N_fit, d_fit = regularity_exponents(emb)
        N = N_fit if N is None else N
        d = d_fit if d is None else d
    w1 = q * (N - a) < d < q * (N + a)
    w2 = q * (N - a) < d < q * (N - a + 1)
    if not w2:
        raise HypothesisError(f"requires q(N - alpha) < d < q(N - alpha + 1): "
                              f"{q * (N - a):.3f} < {d:.3f} < {q * (N - a + 1):.3f}",
                              "kernel integrals over F")
    X, Fs = emb.parent, emb.space
    rng = np.random.default_rng(seed)
    rest = np.setdiff1d(X.point_ids, emb.subset)
    zs = np.concatenate([emb.subset, np.sort(rng.choice(rest, size=min(z_sample, rest.size),
                                                        replace=False))])
    KF = kernel.rows(emb.subset)[:, zs]  # k(s, z), s in F
    part1 = (emb.mu_weights[:, None] * KF ** q).sum(axis=0)
    if r_grid is None:
        r_grid = np.geomspace(2.2 * Fs.resolution, Fs.diameter / 4, 10)
    r_grid = np.asarray(r_grid, dtype=float)
    part2 = []
    for r in r_grid:
        mass, acc = ball_sums(Fs, Fs.point_ids, r, values=KF, center_values=KF, p=q)
        part2.append(float(((emb.mu_weights / mass)[:, None] * acc).sum(axis=0).max()))
    part2 = np.array(part2)
    ok = part2 > 0
    slope = float(np.polyfit(np.log(r_grid[ok]), np.log(part2[ok]), 1)[0]) if ok.sum() >= 2 else float("nan")
    dz = X.pairwise(zs, emb.subset).min(axis=1)
    return {
        "alpha": a, "q": q, "N": float(N), "d": float(d),
        "part1_window_ok": bool(w1),
        "part1_max": float(part1.max()),
        "part1_by_distance": _binned(dz, part1),
        "part2_radii": r_grid.tolist(),
        "part2_values": part2.tolist(),
        "part2_slope": slope,
        "part2_expected_slope": float(d - q * (N - a)),
    }


def _binned(dist, vals, bins: int = 6):
    """Mean of ``vals`` over equal-width distance bins (positive distances only)."""
    pos = dist > 0
    if pos.sum() < bins:
        return []
    edges = np.linspace(dist[pos].min(), dist[pos].max() * (1 + 1e-12), bins + 1)
    out = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        sel = pos & (dist >= lo) & (dist < hi)
        if sel.any():
            out.append({"distance": float(0.5 * (lo + hi)), "mean": float(vals[sel].mean())})
    return out


def kernel_size_slope(kernel: BesselKernel, center: int, d_range) -> dict:
    """Log-log slope of ``k_alpha(center, y)`` against ``d(center, y)`` over ``d_range``."""
    row = kernel.rows([center])[0]
    d = kernel.space.pairwise([center])[0]
    lo, hi = d_range
    sel = (d >= lo) & (d <= hi)
    if sel.sum() < 3:
        raise ValueError("too few points in the distance window")
    slope = float(np.polyfit(np.log(d[sel]), np.log(row[sel]), 1)[0])
    return {"slope": slope, "window": [float(lo), float(hi)], "points": int(sel.sum())}


def q_modulus_ratios(space: PointCloudSpace, F, p: float, t_grid, factor: float = 4.0,
                     eps: float = 1e-3) -> np.ndarray:
    """``||Q_t f||_p / E_p f(factor t)`` per ``t`` (rows) and column of ``F``."""
    A = _aoi(space)
    F, _ = _as_columns(F)
    out = np.empty((len(t_grid), F.shape[1]))
    for k, t in enumerate(t_grid):
        num = lp_norm(space, A.q_apply(t, F, eps), p)
        den = moduli(space, F, factor * t, p)
        out[k] = np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)
    return out
