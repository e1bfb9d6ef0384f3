"""Dense two-phase simplex and the two power-control LPs built on it.

Both LPs are assembled in noise-normalised units: every rate row is divided by
the noise variance, so gains enter as beta / sigma^2 (an SNR-scale quantity)
instead of raw path-loss values around 1e-10 that would vanish under any
sensible pivot tolerance.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import _kernels

DEFAULT_TOL = 1e-9


class LpStatus(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    ITERATION_LIMIT = "iteration_limit"


@dataclass
class LpProblem:
    """minimize ``c @ x`` subject to ``a_ub @ x <= b_ub`` and ``x >= lower``.

    ``lower`` defaults to zeros; ``-inf`` entries mark free variables.
    """

    c: np.ndarray
    a_ub: np.ndarray
    b_ub: np.ndarray
    lower: np.ndarray | None = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).reshape(-1)
        n = self.c.size
        self.a_ub = np.asarray(self.a_ub, dtype=float).reshape(-1, n) if n else \
            np.zeros((np.size(self.b_ub), 0))
        self.b_ub = np.asarray(self.b_ub, dtype=float).reshape(-1)
        if self.a_ub.shape != (self.b_ub.size, n):
            raise ValueError(
                f"a_ub has shape {self.a_ub.shape}, expected ({self.b_ub.size}, {n})")
        if self.lower is None:
            self.lower = np.zeros(n)
        else:
            self.lower = np.asarray(self.lower, dtype=float).reshape(-1)
            if self.lower.size != n:
                raise ValueError("lower must have one entry per variable")
            if np.any(np.isposinf(self.lower)) or np.any(np.isnan(self.lower)):
                raise ValueError("lower bounds must be finite or -inf")
        for name in ("c", "a_ub", "b_ub"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"{name} has non-finite entries")

    @property
    def n_vars(self) -> int:
        return self.c.size

    @property
    def n_cons(self) -> int:
        return self.b_ub.size


@dataclass
class LpSolution:
    status: LpStatus
    x: np.ndarray
    objective: float
    iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status is LpStatus.OPTIMAL


def solve_lp(prob: LpProblem, tol: float = DEFAULT_TOL,
             max_iter: int | None = None) -> LpSolution:
    """Two-phase primal simplex with Bland's anti-cycling rule."""
    n, m = prob.n_vars, prob.n_cons
    if max_iter is None:
        max_iter = 50 * (n + m)

    # x = lower + y for bounded columns, x = y+ - y- for free ones
    free = np.isneginf(prob.lower)
    shift = np.where(free, 0.0, prob.lower)
    cols = [prob.a_ub[:, ~free], prob.a_ub[:, free], -prob.a_ub[:, free]]
    costs = [prob.c[~free], prob.c[free], -prob.c[free]]
    A = np.hstack(cols) if n else np.zeros((m, 0))
    cy = np.concatenate(costs) if n else np.zeros(0)
    ny = A.shape[1]
    b = prob.b_ub - prob.a_ub @ shift

    neg = b < 0
    n_art = int(neg.sum())
    width = ny + m + n_art
    T = np.zeros((m + 1, width + 1))
    T[:m, :ny] = A
    T[:m, ny:ny + m] = np.eye(m)
    T[:m, -1] = b
    art_rows = np.flatnonzero(neg)
    T[art_rows, :] *= -1.0
    basis = np.arange(ny, ny + m, dtype=np.int64)
    for a, i in enumerate(art_rows):
        T[i, ny + m + a] = 1.0
        basis[i] = ny + m + a

    feas_tol = tol * max(1.0, float(np.max(np.abs(b), initial=0.0)))
    iters = 0
    if n_art:
        T[m, :] = -T[art_rows, :].sum(axis=0)
        T[m, ny + m:width] = 0.0
        code, it = _kernels.simplex_loop(T, basis, ny + m, tol, max_iter)
        iters += it
        if code == _kernels.ITERATION_LIMIT:
            return _failed(LpStatus.ITERATION_LIMIT, n, iters)
        if -T[m, -1] > feas_tol:
            return _failed(LpStatus.INFEASIBLE, n, iters)
        # pivot zero-level artificials out where a real column allows it
        for i in range(m):
            if basis[i] >= ny + m:
                cand = np.flatnonzero(np.abs(T[i, :ny + m]) > tol)
                if cand.size:
                    _pivot(T, i, cand[0])
                    basis[i] = cand[0]

    cost = np.zeros(width)
    cost[:ny] = cy
    T[m, :] = 0.0
    T[m, :width] = cost
    for i in range(m):
        cb = cost[basis[i]]
        if cb != 0.0:
            T[m, :] -= cb * T[i, :]
    code, it = _kernels.simplex_loop(T, basis, ny + m, tol, max(max_iter - iters, 0))
    iters += it
    if code == _kernels.UNBOUNDED:
        return _failed(LpStatus.UNBOUNDED, n, iters)
    if code == _kernels.ITERATION_LIMIT:
        return _failed(LpStatus.ITERATION_LIMIT, n, iters)

    y = np.zeros(width)
    for i in range(m):
        y[basis[i]] = T[i, -1]
    y = np.where((y < 0) & (y > -feas_tol), 0.0, y)
    nb = int((~free).sum())
    nf = int(free.sum())
    x = shift.copy()
    x[~free] += y[:nb]
    x[free] += y[nb:nb + nf] - y[nb + nf:ny]
    return LpSolution(LpStatus.OPTIMAL, x, float(prob.c @ x), iters)


def _pivot(T, r, c):
    T[r] /= T[r, c]
    f = T[:, c].copy()
    f[r] = 0.0
    T -= np.outer(f, T[r])


def _failed(status, n, iters):
    return LpSolution(status, np.full(n, np.nan), float("nan"), iters)


# --------------------------------------------------------------------------
# power-control LPs

class Allocation(NamedTuple):
    status: LpStatus
    p: np.ndarray
    p_tx_total: float


def _rate_rows(G, gamma):
    """Linearised rate constraints over variables ordered k-major.

    Row k reads  -g_k^T p_k + gamma_k * sum_{j != k} g_k^T p_j  (<= -gamma_k).
    """
    nb, K = G.shape
    rows = np.empty((K, K * nb))
    for k in range(K):
        for j in range(K):
            coef = -1.0 if j == k else gamma[k]
            rows[k, j * nb:(j + 1) * nb] = coef * G[:, k]
    return rows


def _cap_rows(nb, K):
    # sum_k p[m, k] for each active BS m
    return np.tile(np.eye(nb), (1, K))


def _prepare(H, alpha, r_min, sigma2):
    H = np.asarray(H, dtype=float)
    if H.ndim != 2:
        raise ValueError("H must be an M x K matrix")
    M, K = H.shape
    alpha = np.asarray(alpha).reshape(-1)
    r_min = np.broadcast_to(np.asarray(r_min, dtype=float), (K,))
    if alpha.size != M:
        raise ValueError(f"alpha has {alpha.size} entries, H has {M} rows")
    if not sigma2 > 0:
        raise ValueError("sigma2 must be positive")
    active = np.flatnonzero(alpha > 0.5)
    G = H[active, :] / sigma2
    gamma = np.exp2(r_min) - 1.0
    return M, K, active, G, gamma


def _scatter(M, K, active, flat):
    p = np.zeros((M, K))
    if active.size:
        p[active, :] = np.maximum(flat.reshape(K, active.size).T, 0.0)
    return p


def feasibility_value(H, alpha, r_min, sigma2, cfg, *, normalized=True,
                      tol=DEFAULT_TOL):
    """Degree of infeasibility of mode vector ``alpha`` and its minimiser.

    Solves  min v  s.t.  gamma_k - g_k^T (d_k^T kron I) p <= v  for every k,
    per-BS caps  sum_k p[m, k] <= alpha_m eta_m P_max,  p >= 0.

    With ``normalized`` (default) v is reported in noise-normalised units
    (an SINR shortfall); otherwise it is scaled back by ``sigma2``.
    v <= 0 exactly when ``alpha`` can meet every rate requirement.
    """
    M, K, active, G, gamma = _prepare(H, alpha, r_min, sigma2)
    nb = active.size
    nv = K * nb
    cap = (cfg.eta_vector() * cfg.p_max_vector())[active]

    a_ub = np.zeros((K + nb, nv + 1))
    a_ub[:K, :nv] = _rate_rows(G, gamma)
    a_ub[:K, nv] = -1.0
    a_ub[K:, :nv] = _cap_rows(nb, K)
    b_ub = np.concatenate([-gamma, cap])
    c = np.zeros(nv + 1)
    c[nv] = 1.0
    lower = np.zeros(nv + 1)
    lower[nv] = -np.inf
    sol = solve_lp(LpProblem(c, a_ub, b_ub, lower), tol=tol)
    if not sol.optimal:
        raise RuntimeError(f"feasibility LP failed: {sol.status.value}")
    v = sol.x[nv]
    if not normalized:
        v *= sigma2
    return float(v), _scatter(M, K, active, sol.x[:nv])


def allocate_power(H, alpha, r_min, sigma2, cfg, *, tol=DEFAULT_TOL) -> Allocation:
    """Minimum transmit-power allocation for the active BSs of ``alpha``.

    Minimises sum_{m on} (1/eta_m) sum_k p[m, k] under the linearised rate
    constraints and per-BS caps sum_k p[m, k] <= eta_m P_max.  Sleeping BSs
    carry no variables, so their rows of ``p`` are exactly zero.
    """
    M, K, active, G, gamma = _prepare(H, alpha, r_min, sigma2)
    nb = active.size
    eta = cfg.eta_vector()[active]
    cap = eta * cfg.p_max_vector()[active]

    a_ub = np.vstack([_rate_rows(G, gamma), _cap_rows(nb, K)])
    b_ub = np.concatenate([-gamma, cap])
    c = np.tile(1.0 / eta, K)
    sol = solve_lp(LpProblem(c, a_ub, b_ub), tol=tol)
    if sol.status is LpStatus.INFEASIBLE:
        return Allocation(LpStatus.INFEASIBLE, np.zeros((M, K)), float("nan"))
    if not sol.optimal:
        raise RuntimeError(f"power allocation LP failed: {sol.status.value}")
    p = _scatter(M, K, active, sol.x)
    p_tx = float(np.sum(p.sum(axis=1)[active] / eta))
    return Allocation(LpStatus.OPTIMAL, p, p_tx)
