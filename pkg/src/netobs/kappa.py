"""Monte Carlo estimates of the observability condition number.

For each trial a fixed truth trajectory is observed with fresh noise, the
nearest exact trajectory is reconstructed, and the error norm at every
scalar variable is divided by the noise level. ``kappa_hat`` is the root
mean square of these ratios over trials, which is the quantity that equals
one for completely observed linear dynamics.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from netobs.assimilate import (DivergenceError, GnOptions, ReconResult, gauss_newton,
                               initial_guess, RELIABLE_LIMIT)
from netobs.dynamics import DynSystem, Trajectory, simulate
from netobs.observe import ObsScheme, full_scheme, observe

INVALID_FRACTION = 0.2
INIT_STRATEGIES = ("truth", "free_run")


class EstimateError(RuntimeError):
    """Every trial of an estimate failed."""


@dataclass(frozen=True)
class TruthSpec:
    """How the truth trajectory is generated.

    ``x0`` is drawn as ``x0_scale`` times a standard normal vector from
    ``seed``, then the map is iterated ``burn_in`` times before recording.
    With ``redraw`` set, each trial gets its own truth from a child seed.
    """

    seed: int = 0
    burn_in: int = 1000
    x0_scale: float = 0.5
    t0: int = 0
    redraw: bool = False


@dataclass
class TrialOutcome:
    trial: int
    ratios: np.ndarray | None
    iterations: int = 0
    cond_C: float = float("nan")
    reliable: bool = False
    converged: bool = False
    diverged: bool = False

    @property
    def usable(self) -> bool:
        return self.ratios is not None and self.converged


@dataclass
class KappaEstimate:
    """Per-variable estimate from one batch of trials.

    ``kappa_hat[k]`` is ``sqrt(mean_t (|e_k|_2 / sigma)^2)`` over the usable
    trials; ``std[k]`` is the standard deviation of ``|e_k|_2 / sigma``.
    ``pooled`` pools all variables, ``sqrt(mean_t |e|_2^2 / dim) / sigma``.
    """

    labels: tuple
    observed: tuple
    N: int
    sigma: float
    kappa_hat: np.ndarray
    std: np.ndarray
    n_trials: int
    excluded: int
    reliable_fraction: float
    pooled: float
    outcomes: list = field(default_factory=list, repr=False)

    @property
    def requested(self) -> int:
        return self.n_trials + self.excluded

    @property
    def valid(self) -> bool:
        return self.excluded <= INVALID_FRACTION * self.requested

    @property
    def per_variable(self) -> dict:
        return {lab: {"kappa_hat": float(k), "std": float(s), "n_trials": self.n_trials}
                for lab, k, s in zip(self.labels, self.kappa_hat, self.std)}

    def node_kappa(self) -> dict:
        """Largest ``kappa_hat`` over each node's variables."""
        out = {}
        for (node, _), k in zip(self.labels, self.kappa_hat):
            out[node] = max(out.get(node, 0.0), float(k))
        return dict(sorted(out.items()))

    def mean_kappa(self, unobserved_only: bool = False) -> float:
        mask = np.ones(len(self.labels), bool)
        if unobserved_only:
            mask[list(self.observed)] = False
        return float(np.mean(self.kappa_hat[mask]))

    def median_cond(self) -> float:
        c = [o.cond_C for o in self.outcomes if o.usable]
        return float(np.median(c)) if c else float("nan")


def noise_seed(master_seed: int, trial: int) -> np.random.SeedSequence:
    """Counter-based child seed, so a trial's noise does not depend on run order."""
    return np.random.SeedSequence(master_seed, spawn_key=(trial,))


def make_truth(sys: DynSystem, N: int, spec: TruthSpec, trial: int | None = None) -> Trajectory:
    seq = np.random.SeedSequence(spec.seed, spawn_key=(trial,)) if trial is not None \
        else np.random.SeedSequence(spec.seed)
    x0 = spec.x0_scale * np.random.default_rng(seq).standard_normal(sys.dim)
    return simulate(sys, x0, N, burn_in=spec.burn_in, t0=spec.t0)


def _trial(sys, scheme, truth, sigma, master_seed, t, opts, init, free_run_burn_in) -> TrialOutcome:
    y = observe(truth, scheme, sigma, noise_seed(master_seed, t))
    if init == "truth":
        states = truth.states.copy()
        states[:, list(scheme.indices)] = y.values
        guess = Trajectory(states, truth.t0)
    else:
        seq = np.random.SeedSequence(master_seed, spawn_key=(t, 1))
        guess = initial_guess(sys, scheme, y, seq, t0=truth.t0, burn_in=free_run_burn_in)
    try:
        res: ReconResult = gauss_newton(sys, scheme, y, guess, opts)
    except (DivergenceError, FloatingPointError):
        return TrialOutcome(t, None, diverged=True)
    err = np.linalg.norm(res.z.states - truth.states, axis=0)
    return TrialOutcome(t, err / sigma, res.iterations, res.cond_C, res.reliable, res.converged)


def estimate_kappa(sys: DynSystem, scheme: ObsScheme, N: int, sigma: float, trials: int,
                   master_seed: int, opts: GnOptions = GnOptions(), truth: TruthSpec = TruthSpec(),
                   init: str = "truth", threads: int = 1,
                   free_run_burn_in: int = 1000) -> KappaEstimate:
    """Estimate ``kappa`` for every variable of ``sys`` observed through ``scheme``.

    ``init`` selects the starting guess: ``"truth"`` starts from the truth
    with observed coordinates replaced by the data, ``"free_run"`` from an
    unrelated trajectory of the model. Trials whose reconstruction diverges
    or fails to converge are excluded and counted.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    if init not in INIT_STRATEGIES:
        raise ValueError(f"init must be one of {INIT_STRATEGIES}, got {init!r}")
    shared = None if truth.redraw else make_truth(sys, N, truth)

    def run(t):
        tr = shared if shared is not None else make_truth(sys, N, truth, trial=t)
        return _trial(sys, scheme, tr, sigma, master_seed, t, opts, init, free_run_burn_in)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(run, range(trials)))
    else:
        outcomes = [run(t) for t in range(trials)]
    outcomes.sort(key=lambda o: o.trial)
    good = [o for o in outcomes if o.usable]
    if not good:
        raise EstimateError(f"all {trials} trials failed to converge (N={N}, sigma={sigma})")
    ratios = np.array([o.ratios for o in good])
    sq = ratios ** 2
    return KappaEstimate(
        labels=sys.labels,
        observed=tuple(scheme.indices),
        N=N,
        sigma=sigma,
        kappa_hat=np.sqrt(sq.mean(axis=0)),
        std=ratios.std(axis=0, ddof=1) if len(good) > 1 else np.zeros(sys.dim),
        n_trials=len(good),
        excluded=trials - len(good),
        reliable_fraction=float(np.mean([o.reliable for o in good])),
        pooled=float(np.sqrt(sq.sum(axis=1).mean() / sys.dim)),
        outcomes=outcomes,
    )


def kappa_vs_length(sys: DynSystem, scheme: ObsScheme, lengths, sigma: float, trials: int,
                    master_seed: int, opts: GnOptions = GnOptions(), **kw) -> dict:
    """Independent estimates keyed by trajectory length."""
    lengths = list(lengths)
    if lengths != sorted(lengths) or len(set(lengths)) != len(lengths):
        raise ValueError("lengths must be strictly ascending")
    return {N: estimate_kappa(sys, scheme, N, sigma, trials, master_seed, opts, **kw)
            for N in lengths}


@dataclass
class GroupResult:
    index: int
    group: list
    mean_kappa: float
    spread: float
    estimate: KappaEstimate | None
    error: str = ""

    @property
    def valid(self) -> bool:
        return self.estimate is not None and self.estimate.valid


def subset_sweep(sys: DynSystem, groups, variables, N: int, sigma: float, trials: int,
                 master_seed: int, opts: GnOptions = GnOptions(), unobserved_only: bool = False,
                 **kw) -> list[GroupResult]:
    """Mean ``kappa`` over variables for each observation group.

    Groups that fail entirely are kept with a NaN mean and the error text.
    """
    from netobs.observe import select_nodes

    out = []
    for i, g in enumerate(groups):
        scheme = select_nodes(sys, g, variables)
        try:
            est = estimate_kappa(sys, scheme, N, sigma, trials, master_seed, opts, **kw)
        except EstimateError as exc:
            out.append(GroupResult(i + 1, list(g), float("nan"), float("nan"), None, str(exc)))
            continue
        mask = np.ones(sys.dim, bool)
        if unobserved_only:
            mask[list(scheme.indices)] = False
        vals = est.kappa_hat[mask]
        out.append(GroupResult(i + 1, list(g), float(vals.mean()), float(vals.std()), est))
    return out


@dataclass(frozen=True)
class ScanRecord:
    N: int
    sigma: float
    trial: int
    cond_C: float
    kappa_hat: float
    reliable: bool
    converged: bool


@dataclass(frozen=True)
class ScanConfig:
    """Aggregate over the trials of one ``(N, sigma)`` pair."""

    N: int
    sigma: float
    cond_C: float
    kappa_hat: float
    reliable: bool
    n_trials: int
    excluded: int


def conditioning_scan(sys: DynSystem, lengths, sigmas, trials: int, master_seed: int,
                      opts: GnOptions = GnOptions(), **kw):
    """Fully observed ``kappa`` and ``C`` over a grid of lengths and noise levels.

    Returns per-trial records for scatter plots and one aggregate per
    configuration, whose ``kappa_hat`` is the pooled estimate and whose
    ``cond_C`` is the median over usable trials.
    """
    scheme = full_scheme(sys)
    records, configs = [], []
    for sigma in sigmas:
        for N in lengths:
            try:
                est = estimate_kappa(sys, scheme, N, sigma, trials, master_seed, opts, **kw)
            except EstimateError:
                configs.append(ScanConfig(N, sigma, float("nan"), float("nan"), False, 0, trials))
                continue
            for o in est.outcomes:
                k = float(np.sqrt(np.sum(o.ratios ** 2) / sys.dim)) if o.ratios is not None else float("nan")
                records.append(ScanRecord(N, sigma, o.trial, o.cond_C, k, o.reliable, o.converged))
            C = est.median_cond()
            configs.append(ScanConfig(N, sigma, C, est.pooled, bool(C / sigma <= RELIABLE_LIMIT),
                                      est.n_trials, est.excluded))
    return records, configs
