"""Discrete-time network dynamics on a flat, node-major state vector.

Every system exposes a one-step map ``step(x, i)`` and its analytic
Jacobian ``jac(x, i)``; ``i`` is the absolute time index and only matters
for time-dependent systems. Continuous-time networks are discretised with
fixed-step RK4, and the Jacobian is that of the RK4 map itself.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from netobs.graph import Network

_MATRIX_CHUNK = 1024


@dataclass(frozen=True)
class DynSystem:
    """A discrete map ``x_{i+1} = step(x_i, i)`` with Jacobian ``jac``.

    ``labels[k]`` is the ``(node, variable)`` pair of flat coordinate ``k``;
    nodes are 1-based.
    """

    dim: int
    step: Callable[[np.ndarray, int], np.ndarray]
    jac: Callable[[np.ndarray, int], np.ndarray]
    labels: tuple
    family: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        labels = tuple((int(n), str(v)) for n, v in self.labels)
        if len(labels) != self.dim:
            raise ValueError(f"expected {self.dim} labels, got {len(labels)}")
        if len(set(labels)) != len(labels):
            raise ValueError("labels must be unique (node, variable) pairs")
        object.__setattr__(self, "labels", labels)

    @property
    def nodes(self) -> list[int]:
        return sorted({n for n, _ in self.labels})

    def label_strings(self) -> list[str]:
        return [f"{v}{n}" for n, v in self.labels]


@dataclass(frozen=True)
class Trajectory:
    """Time-major states; row ``i`` is the state at time index ``t0 + i``."""

    states: np.ndarray
    t0: int = 0

    @property
    def N(self) -> int:
        return self.states.shape[0]

    @property
    def dim(self) -> int:
        return self.states.shape[1]


def _per_node(value, n: int, name: str) -> np.ndarray:
    v = np.broadcast_to(np.asarray(value, dtype=float), (n,)) if np.ndim(value) == 0 \
        else np.asarray(value, dtype=float)
    if v.shape != (n,):
        raise ValueError(f"{name} has length {v.shape[0]}, network has {n} nodes")
    return v.copy()


@dataclass(frozen=True)
class HenonParams:
    a: float | Sequence[float] = 2.2
    b: float | Sequence[float] = 0.4
    c: float = 0.1


@dataclass(frozen=True)
class FhnParams:
    a: float | Sequence[float] = 0.42
    b: float | Sequence[float] = 0.8
    c: float | Sequence[float] = 0.08
    d: float | Sequence[float] = 0.01
    I: float | Sequence[float] = -0.025
    g: float = 0.1
    jitter: float = 0.05
    dt: float = 0.1
    substeps: int = 1


def henon_network(net: Network, params: HenonParams = HenonParams()) -> DynSystem:
    """Coupled Hénon-type maps, state ordered ``(x1, y1, x2, y2, ...)``.

    ``x_j' = a_j cos x_j + b_j y_j + c sum_k A_jk x_k`` and ``y_j' = x_j``.
    """
    n = net.n
    a = _per_node(params.a, n, "a")
    b = _per_node(params.b, n, "b")
    cA = params.c * net.adjacency
    ix = np.arange(0, 2 * n, 2)
    iy = ix + 1

    def step(s, i=0):
        s = np.asarray(s, dtype=float)
        if s.shape != (2 * n,):
            raise ValueError(f"state must have length {2 * n}, got {s.shape}")
        x, y = s[ix], s[iy]
        out = np.empty(2 * n)
        out[ix] = a * np.cos(x) + b * y + cA @ x
        out[iy] = x
        return out

    def jac(s, i=0):
        s = np.asarray(s, dtype=float)
        if s.shape != (2 * n,):
            raise ValueError(f"state must have length {2 * n}, got {s.shape}")
        J = np.zeros((2 * n, 2 * n))
        J[np.ix_(ix, ix)] = cA
        J[ix, ix] += -a * np.sin(s[ix])
        J[ix, iy] = b
        J[iy, ix] = 1.0
        return J

    labels = [(j + 1, v) for j in range(n) for v in ("x", "y")]
    meta = {"a": a.tolist(), "b": b.tolist(), "c": params.c}
    return DynSystem(2 * n, step, jac, labels, family="henon", params=meta)


def rk4_step(field: Callable[[np.ndarray], np.ndarray], state, h: float) -> np.ndarray:
    """One classical fourth-order Runge–Kutta step of size ``h``."""
    if h <= 0:
        raise ValueError("step size must be positive")
    x = np.asarray(state, dtype=float)
    k1 = field(x)
    k2 = field(x + 0.5 * h * k1)
    k3 = field(x + 0.5 * h * k2)
    k4 = field(x + h * k3)
    return x + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def rk4_step_jacobian(field, field_jac, state, h: float) -> np.ndarray:
    """Exact Jacobian of :func:`rk4_step` with respect to ``state``."""
    x = np.asarray(state, dtype=float)
    eye = np.eye(x.size)
    k1 = field(x)
    J1 = field_jac(x)
    x2 = x + 0.5 * h * k1
    k2 = field(x2)
    J2 = field_jac(x2) @ (eye + 0.5 * h * J1)
    x3 = x + 0.5 * h * k2
    k3 = field(x3)
    J3 = field_jac(x3) @ (eye + 0.5 * h * J2)
    J4 = field_jac(x + h * k3) @ (eye + h * J3)
    return eye + h / 6.0 * (J1 + 2 * J2 + 2 * J3 + J4)


def fhn_network(net: Network, params: FhnParams = FhnParams(), seed: int = 0) -> DynSystem:
    """FitzHugh–Nagumo neurons coupled through the fast variable.

    ``v_j' = -w_j + d_j v_j - v_j^3/3 + I_j + g sum_k A_jk v_k`` and
    ``w_j' = a_j - b_j w_j + c_j v_j``, sampled every ``dt`` by ``substeps``
    RK4 steps. Per-node parameters are the nominal values times
    ``1 + U(-jitter, jitter)``, drawn in the order a, b, c, d, I.
    """
    if params.dt <= 0:
        raise ValueError("dt must be positive")
    if params.substeps < 1:
        raise ValueError("substeps must be at least 1")
    n = net.n
    rng = np.random.default_rng(seed)
    p = {}
    for name in ("a", "b", "c", "d", "I"):
        nominal = _per_node(getattr(params, name), n, name)
        p[name] = nominal * (1.0 + rng.uniform(-params.jitter, params.jitter, n)) \
            if params.jitter > 0 else nominal
    gA = params.g * net.adjacency
    iv = np.arange(0, 2 * n, 2)
    iw = iv + 1
    h = params.dt / params.substeps

    def field(s):
        v, w = s[iv], s[iw]
        out = np.empty_like(s)
        out[iv] = -w + p["d"] * v - v ** 3 / 3.0 + p["I"] + gA @ v
        out[iw] = p["a"] - p["b"] * w + p["c"] * v
        return out

    def field_jac(s):
        J = np.zeros((2 * n, 2 * n))
        J[np.ix_(iv, iv)] = gA
        J[iv, iv] += p["d"] - s[iv] ** 2
        J[iv, iw] = -1.0
        J[iw, iv] = p["c"]
        J[iw, iw] = -p["b"]
        return J

    def check(s):
        s = np.asarray(s, dtype=float)
        if s.shape != (2 * n,):
            raise ValueError(f"state must have length {2 * n}, got {s.shape}")
        return s

    def step(s, i=0):
        s = check(s)
        for _ in range(params.substeps):
            s = rk4_step(field, s, h)
        return s

    def jac(s, i=0):
        s = check(s)
        J = np.eye(2 * n)
        for _ in range(params.substeps):
            J = rk4_step_jacobian(field, field_jac, s, h) @ J
            s = rk4_step(field, s, h)
        return J

    labels = [(j + 1, v) for j in range(n) for v in ("v", "w")]
    meta = {k: v.tolist() for k, v in p.items()}
    meta.update(g=params.g, jitter=params.jitter, dt=params.dt,
                substeps=params.substeps, param_seed=seed)
    sys = DynSystem(2 * n, step, jac, labels, family="fhn", params=meta)
    object.__setattr__(sys, "field", field)
    object.__setattr__(sys, "field_jac", field_jac)
    return sys


def linear_map(M, labels=None) -> DynSystem:
    """``x -> M x``; by default each coordinate is its own node with variable ``x``."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[0] != M.shape[1]:
        raise ValueError(f"linear map needs a square matrix, got {M.shape}")
    M = M.copy()
    M.setflags(write=False)
    d = M.shape[0]

    def step(x, i=0):
        return M @ np.asarray(x, dtype=float)

    def jac(x, i=0):
        return M.copy()

    if labels is None:
        labels = [(k + 1, "x") for k in range(d)]
    return DynSystem(d, step, jac, labels, family="linear", params={"M": M.tolist()})


def random_matrix_system(dim: int = 2, seed: int = 0, scale: float = 1.0) -> DynSystem:
    """Multiply by a fresh random matrix each step: ``x_{i+1} = M_i x_i``.

    ``M_i`` has i.i.d. normal entries with standard deviation ``scale``. The
    sequence is a pure function of ``(seed, i)``: matrices are generated in
    chunks keyed by ``i // 1024``, so access order never matters.
    """

    @lru_cache(maxsize=64)
    def chunk(k):
        ss = np.random.SeedSequence(seed, spawn_key=(k,))
        block = scale * np.random.default_rng(ss).standard_normal((_MATRIX_CHUNK, dim, dim))
        block.setflags(write=False)
        return block

    def matrix(i):
        if i < 0:
            raise IndexError("time index must be non-negative")
        return chunk(i // _MATRIX_CHUNK)[i % _MATRIX_CHUNK]

    def step(x, i=0):
        return matrix(i) @ np.asarray(x, dtype=float)

    def jac(x, i=0):
        return matrix(i).copy()

    labels = [(1, v) for v in ("x", "y")] if dim == 2 else [(1, f"x{k + 1}") for k in range(dim)]
    sys = DynSystem(dim, step, jac, labels, family="random_matrix",
                    params={"scale": scale, "matrix_seed": seed, "autonomous": False})
    object.__setattr__(sys, "matrix", matrix)
    return sys


def simulate(sys: DynSystem, x0, N: int, burn_in: int = 0, t0: int = 0) -> Trajectory:
    """Iterate from ``x0`` at time ``t0``, discard ``burn_in`` steps, record ``N`` states."""
    if N < 2:
        raise ValueError("trajectory length N must be at least 2")
    if burn_in < 0:
        raise ValueError("burn_in must be non-negative")
    x = np.asarray(x0, dtype=float)
    if x.shape != (sys.dim,):
        raise ValueError(f"initial state must have length {sys.dim}")
    t = t0
    for _ in range(burn_in):
        x = sys.step(x, t)
        t += 1
        if not np.all(np.isfinite(x)):
            raise FloatingPointError(f"non-finite state at burn-in step {t - t0}")
    states = np.empty((N, sys.dim))
    states[0] = x
    for i in range(1, N):
        states[i] = sys.step(states[i - 1], t + i - 1)
        if not np.all(np.isfinite(states[i])):
            raise FloatingPointError(f"non-finite state at trajectory step {i}")
    return Trajectory(states, t0=t)


def top_lyapunov(sys: DynSystem, x0, n_steps: int, t0: int = 0) -> float:
    """Largest Lyapunov exponent by repeated QR of tangent vectors."""
    x = np.asarray(x0, dtype=float)
    Q = np.eye(sys.dim)
    total = 0.0
    for i in range(n_steps):
        Q, R = np.linalg.qr(sys.jac(x, t0 + i) @ Q)
        total += np.log(abs(R[0, 0]))
        x = sys.step(x, t0 + i)
    return total / n_steps
