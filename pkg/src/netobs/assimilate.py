"""Weak-constraint Gauss-Newton reconstruction of an exact trajectory.

The unknown is the whole stacked trajectory ``(z_1, ..., z_N)``. The cost is

    sum_i |f(z_i) - z_{i+1}|^2 / q^2  +  sum_i |h(z_i) - y_i|^2 / r^2

with ``q << r`` so the minimiser is an exact orbit to within the
observation error. Each update solves the normal equations
``(DR^T DR) delta = DR^T R`` the way the plain Gauss-Newton iteration
writes them; that is deliberate, since the loss of digits in this solve is
what the condition number ``C`` of ``DR^T DR`` diagnoses.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from netobs.dynamics import DynSystem, Trajectory, simulate
from netobs.observe import Observations, ObsScheme

RELIABLE_LIMIT = 1e16
_LAMBDA_START = 1e-4
_LAMBDA_MAX = 1e12


class DivergenceError(FloatingPointError):
    """The cost became non-finite and damping could not recover it."""


@dataclass(frozen=True)
class GnOptions:
    """Gauss-Newton settings.

    ``svd_rtol`` truncates the pseudo-inverse relative to the largest
    singular value of ``DR``; on ``DR^T DR`` that is a cut at
    ``svd_rtol**2`` times its largest eigenvalue, floored at ``n * eps``
    where smaller eigenvalues are pure rounding. ``step_tol`` is applied to
    ``|delta|_inf / max(1, |z|_inf)``; ``cost_tol`` stops the iteration once
    an accepted step lowers the cost by less than that fraction.
    ``dense_max`` is the largest unknown count solved with a dense
    eigendecomposition; bigger problems use banded Cholesky on the
    block-tridiagonal normal matrix. There a hard eigenvalue cut is not
    available, so the banded path adds ``alpha * |z - z_init|^2`` to the
    cost with ``alpha`` at the same truncation level: well determined
    directions are unaffected to relative order ``alpha / s^2``, directions
    below the cut stay at the initial guess as truncated ones do.
    """

    q: float = 1e-3
    r: float = 1.0
    max_iter: int = 100
    step_tol: float = 1e-10
    cost_tol: float = 0.0
    svd_rtol: float = 1e-12
    damping: float = 0.0
    obs_sum_includes_last: bool = True
    dense_max: int = 600

    def __post_init__(self):
        if not (self.q > 0 and self.r > 0):
            raise ValueError("q and r must be positive")
        if self.q > self.r:
            raise ValueError("q must not exceed r (the dynamics must be the stiffer constraint)")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.step_tol <= 0 or self.cost_tol < 0 or self.svd_rtol < 0 or self.damping < 0:
            raise ValueError("step_tol must be positive; svd_rtol and damping non-negative")


@dataclass
class ReconResult:
    z: Trajectory
    iterations: int
    final_cost: float
    cond_C: float
    reliable: bool
    converged: bool
    sigma: float
    costs: list = field(default_factory=list)

    def diagnostics(self) -> dict:
        return {
            "iterations": self.iterations,
            "final_cost": self.final_cost,
            "cond_C": self.cond_C,
            "C_over_sigma": self.cond_C / self.sigma if self.sigma > 0 else float("inf"),
            "reliable": self.reliable,
            "converged": self.converged,
        }


def _n_obs_steps(N: int, opts_last: bool) -> int:
    return N if opts_last else N - 1


def _check(sys, scheme, z, y=None):
    if z.dim != sys.dim or scheme.dim != sys.dim:
        raise ValueError(f"dimension mismatch: system {sys.dim}, trajectory {z.dim}, scheme {scheme.dim}")
    if z.N < 2:
        raise ValueError("trajectory length must be at least 2")
    if y is not None and y.values.shape != (z.N, scheme.obs_dim):
        raise ValueError(f"observations have shape {y.values.shape}, expected {(z.N, scheme.obs_dim)}")


def residual(sys: DynSystem, scheme: ObsScheme, z: Trajectory, y: Observations,
             q: float, r: float, include_last: bool = True) -> np.ndarray:
    """Stacked residual: dynamics misfits over ``q``, then observation misfits over ``r``."""
    _check(sys, scheme, z, y)
    s = z.states
    fz = np.array([sys.step(s[i], z.t0 + i) for i in range(z.N - 1)])
    dyn = (fz - s[1:]) / q
    m = _n_obs_steps(z.N, include_last)
    obs = (scheme.h(s[:m]) - y.values[:m]) / r
    return np.concatenate([dyn.ravel(), obs.ravel()])


def _jacobians(sys: DynSystem, z: Trajectory) -> np.ndarray:
    return np.array([sys.jac(z.states[i], z.t0 + i) for i in range(z.N - 1)])


def _assemble(J: np.ndarray, N: int, d: int, scheme: ObsScheme, q: float, r: float, m: int):
    """Sparse DR from per-step map Jacobians ``J`` of shape (N-1, d, d)."""
    steps = np.arange(N - 1)
    loc_r, loc_c = np.meshgrid(np.arange(d), np.arange(d), indexing="ij")
    rows_J = (steps[:, None, None] * d + loc_r).ravel()
    cols_J = (steps[:, None, None] * d + loc_c).ravel()
    rows_I = (steps[:, None] * d + np.arange(d)).ravel()
    cols_I = rows_I + d
    n_dyn = (N - 1) * d
    k = scheme.obs_dim
    rows_H = n_dyn + (np.arange(m)[:, None] * k + np.arange(k)).ravel()
    cols_H = (np.arange(m)[:, None] * d + np.asarray(scheme.indices)).ravel()
    rows = np.concatenate([rows_J, rows_I, rows_H])
    cols = np.concatenate([cols_J, cols_I, cols_H])
    vals = np.concatenate([J.ravel() / q, np.full(rows_I.size, -1.0 / q), np.full(rows_H.size, 1.0 / r)])
    shape = (n_dyn + m * k, N * d)
    return sp.csr_matrix((vals, (rows, cols)), shape=shape)


def residual_jacobian(sys: DynSystem, scheme: ObsScheme, z: Trajectory, q: float, r: float,
                      include_last: bool = True) -> sp.csr_matrix:
    """Exact sparse Jacobian of :func:`residual` with respect to the stacked ``z``."""
    _check(sys, scheme, z)
    m = _n_obs_steps(z.N, include_last)
    return _assemble(_jacobians(sys, z), z.N, sys.dim, scheme, q, r, m)


def _banded_lower(G: sp.spmatrix, u: int) -> np.ndarray:
    n = G.shape[0]
    ab = np.zeros((u + 1, n))
    for k in range(u + 1):
        ab[k, :n - k] = G.diagonal(-k)
    return ab


class _NormalSolver:
    """Solves ``(G + lam * diag(G)) delta = g`` for one linearisation."""

    def __init__(self, DR: sp.csr_matrix, d: int, opts: GnOptions, alpha: float = 0.0):
        self.G = (DR.T @ DR).tocsr()
        self.n = self.G.shape[0]
        self.d = d
        self.opts = opts
        self.dense = self.n <= opts.dense_max
        self.diag = self.G.diagonal()
        self.cut = truncation_level(opts, self.n)
        self.alpha = alpha
        if self.dense:
            self.Gd = self.G.toarray()
        else:
            self.ab = _banded_lower(self.G, 2 * d - 1)

    def _pinv_solve(self, A: np.ndarray, g: np.ndarray) -> np.ndarray:
        w, V = np.linalg.eigh(A)
        top = np.max(np.abs(w))
        keep = w > self.cut * top
        return V[:, keep] @ ((V[:, keep].T @ g) / w[keep])

    def solve(self, g: np.ndarray, lam: float) -> np.ndarray:
        if self.dense:
            A = self.Gd + lam * np.diag(self.diag) if lam > 0 else self.Gd
            return self._pinv_solve(A, g)
        ab = self.ab.copy()
        ab[0] += lam * self.diag + self.alpha
        cb = sla.cholesky_banded(ab, lower=True, check_finite=False)
        return sla.cho_solve_banded((cb, True), g, check_finite=False)


def truncation_level(opts: GnOptions, n: int) -> float:
    """Relative eigenvalue cut on ``DR^T DR``, floored where rounding dominates."""
    return max(opts.svd_rtol ** 2, n * np.finfo(float).eps)


def condition_number(DR: sp.spmatrix, d: int, dense_max: int = 600) -> float:
    """2-norm condition number of ``DR^T DR``, i.e. ``(s_max / s_min)^2`` of ``DR``.

    Small problems use singular values of ``DR`` directly. Large ones run
    Lanczos on the normal matrix and on its inverse through a banded
    Cholesky factor. When that factorisation fails the matrix is singular to
    working precision and the result is ``inf``.
    """
    n = DR.shape[1]
    if n <= dense_max:
        s = np.linalg.svd(DR.toarray(), compute_uv=False)
        if s[-1] == 0 or s.size < n:
            return float("inf")
        return float((s[0] / s[-1]) ** 2)
    G = (DR.T @ DR).tocsr()
    v0 = np.ones(n)
    hi = spla.eigsh(G, k=1, which="LA", v0=v0, return_eigenvectors=False)[0]
    try:
        cb = sla.cholesky_banded(_banded_lower(G, 2 * d - 1), lower=True, check_finite=False)
    except np.linalg.LinAlgError:
        return float("inf")
    inv = spla.LinearOperator((n, n), matvec=lambda v: sla.cho_solve_banded((cb, True), v),
                              dtype=float)
    mu = spla.eigsh(inv, k=1, which="LA", v0=v0, return_eigenvectors=False)[0]
    return float(hi * mu) if mu > 0 else float("inf")


def gauss_newton(sys: DynSystem, scheme: ObsScheme, y: Observations, init: Trajectory,
                 opts: GnOptions = GnOptions()) -> ReconResult:
    """Minimise the weak-constraint cost from ``init``.

    Pure Gauss-Newton steps are taken while they reduce the cost. A step
    that raises it is retried with Marquardt damping ``lam * diag(G)``,
    ``lam`` growing tenfold per retry, and damping is dropped again after
    the next accepted step.
    """
    _check(sys, scheme, init, y)
    q, r, last = opts.q, opts.r, opts.obs_sum_includes_last
    N, d = init.N, sys.dim
    m = _n_obs_steps(N, last)
    z = init.states.copy()
    t0 = init.t0

    def res(states):
        return residual(sys, scheme, Trajectory(states, t0), y, q, r, last)

    z_init = z.copy()
    alpha = None

    def objective(states, R):
        dz = (states - z_init).ravel()
        return float(R @ R + alpha * (dz @ dz))

    R = res(z)
    if not np.isfinite(R @ R):
        raise DivergenceError("initial cost is not finite")
    costs = []
    converged = False
    it = 0
    while it < opts.max_iter:
        it += 1
        DR = _assemble(_jacobians(sys, Trajectory(z, t0)), N, d, scheme, q, r, m)
        if alpha is None:
            n = N * d
            G0 = DR.power(2).sum(axis=0)
            alpha = 0.0 if n <= opts.dense_max else truncation_level(opts, n) * float(G0.max())
            cost = objective(z, R)
            costs.append(cost)
        solver = _NormalSolver(DR, d, opts, alpha)
        g = DR.T @ R + alpha * (z - z_init).ravel()
        lam = opts.damping
        stalled = False
        while True:
            delta = solver.solve(g, lam).reshape(N, d)
            small = np.max(np.abs(delta)) < opts.step_tol * max(1.0, np.max(np.abs(z)))
            z_try = z - delta
            with np.errstate(all="ignore"):
                R_try = res(z_try) if np.all(np.isfinite(z_try)) else None
            cost_try = objective(z_try, R_try) if R_try is not None else np.inf
            if np.isfinite(cost_try) and cost_try <= cost:
                stalled = cost - cost_try <= opts.cost_tol * cost
                z, R, cost = z_try, R_try, cost_try
                costs.append(cost)
                break
            if small:
                # rounding-level step that does not lower the cost: keep z
                break
            lam = _LAMBDA_START if lam == 0 else lam * 10.0
            if lam > _LAMBDA_MAX:
                if not np.isfinite(cost_try) and it == 1:
                    raise DivergenceError("cost is not finite along every damped step")
                return _finish(sys, scheme, z, t0, y, opts, it, cost, costs, False)
        if small or stalled:
            converged = True
            break
    return _finish(sys, scheme, z, t0, y, opts, it, cost, costs, converged)


def _finish(sys, scheme, z, t0, y, opts, it, cost, costs, converged) -> ReconResult:
    traj = Trajectory(z, t0)
    DR = residual_jacobian(sys, scheme, traj, opts.q, opts.r, opts.obs_sum_includes_last)
    C = max(1.0, condition_number(DR, sys.dim, opts.dense_max))
    sigma = y.sigma
    reliable = bool(sigma > 0 and C / sigma <= RELIABLE_LIMIT)
    return ReconResult(traj, it, cost, C, reliable, converged, sigma, costs)


def initial_guess(sys: DynSystem, scheme: ObsScheme, y: Observations, seed, t0: int = 0,
                  burn_in: int = 1000, x0_scale: float = 1.0) -> Trajectory:
    """Free run from a random state, with observed coordinates replaced by ``y``.

    The free run is aligned so its recorded part covers time indices
    ``t0 .. t0+N-1``; time-dependent systems shorten the burn-in to fit.
    """
    rng = np.random.default_rng(seed)
    N = y.values.shape[0]
    x0 = x0_scale * rng.standard_normal(sys.dim)
    b = burn_in if sys.params.get("autonomous", True) else min(burn_in, t0)
    run = simulate(sys, x0, N, burn_in=b, t0=t0 - b)
    states = run.states.copy()
    states[:, list(scheme.indices)] = y.values
    return Trajectory(states, t0)
