"""Coordinate-selection observation operators and noisy observations."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from netobs.dynamics import DynSystem, Trajectory


@dataclass(frozen=True)
class ObsScheme:
    """``h(x) = x[indices]``; ``labels`` are the matching (node, variable) pairs."""

    indices: tuple
    labels: tuple
    dim: int

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if not idx:
            raise ValueError("observation scheme must observe at least one coordinate")
        if len(set(idx)) != len(idx):
            raise ValueError("observed indices must be unique")
        if min(idx) < 0 or max(idx) >= self.dim:
            raise ValueError(f"observed indices must lie in [0, {self.dim})")
        object.__setattr__(self, "indices", idx)

    @property
    def obs_dim(self) -> int:
        return len(self.indices)

    @property
    def fully_observed(self) -> bool:
        return self.obs_dim == self.dim

    def h(self, x: np.ndarray) -> np.ndarray:
        """Apply the operator to one state or to a time-major stack of states."""
        return np.asarray(x)[..., list(self.indices)]

    def matrix(self) -> np.ndarray:
        H = np.zeros((self.obs_dim, self.dim))
        H[np.arange(self.obs_dim), self.indices] = 1.0
        return H


@dataclass(frozen=True)
class Observations:
    values: np.ndarray
    sigma: float
    seed: int | None = None


def select_nodes(sys: DynSystem, nodes: Iterable[int], variables: Iterable[str]) -> ObsScheme:
    """Observe ``variables`` at each node of ``nodes`` (1-based ids).

    Indices follow the system's coordinate order, which is node-major.
    """
    nodes = sorted({int(n) for n in nodes})
    variables = list(variables)
    if not nodes:
        raise ValueError("observation subset S must be nonempty")
    known_nodes = set(sys.nodes)
    for n in nodes:
        if n not in known_nodes:
            raise ValueError(f"unknown node {n}")
    known_vars = {v for _, v in sys.labels}
    for v in variables:
        if v not in known_vars:
            raise ValueError(f"unknown variable {v!r}; system has {sorted(known_vars)}")
    wanted = {(n, v) for n in nodes for v in variables}
    picked = [(k, lab) for k, lab in enumerate(sys.labels) if lab in wanted]
    missing = wanted - {lab for _, lab in picked}
    if missing:
        n, v = sorted(missing)[0]
        raise ValueError(f"node {n} has no variable {v!r}")
    return ObsScheme(tuple(k for k, _ in picked), tuple(lab for _, lab in picked), sys.dim)


def full_scheme(sys: DynSystem) -> ObsScheme:
    return ObsScheme(tuple(range(sys.dim)), sys.labels, sys.dim)


def observe(traj: Trajectory, scheme: ObsScheme, sigma: float, seed: int | np.random.SeedSequence) -> Observations:
    """``y_i = h(x_i) + eps_i`` with i.i.d. normal(0, sigma^2) noise per scalar."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if not np.all(np.isfinite(traj.states)):
        raise ValueError("trajectory contains non-finite states")
    clean = scheme.h(traj.states)
    noise = np.random.default_rng(seed).standard_normal(clean.shape)
    values = clean + sigma * noise if sigma > 0 else clean.copy()
    return Observations(values, float(sigma), seed if isinstance(seed, int) else None)


def write_observations(obs: Observations, scheme: ObsScheme, path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow([f"{v}{n}" for n, v in scheme.labels])
        for row in obs.values:
            w.writerow([repr(float(v)) for v in row])


def read_observations(path, scheme: ObsScheme, sigma: float) -> Observations:
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    header, body = rows[0], rows[1:]
    expected = [f"{v}{n}" for n, v in scheme.labels]
    if header != expected:
        raise ValueError(f"{path}: header {header} does not match scheme {expected}")
    return Observations(np.array([[float(v) for v in r] for r in body]), sigma)
