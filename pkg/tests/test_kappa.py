import numpy as np
import pytest

from netobs.assimilate import GnOptions
from netobs.dynamics import HenonParams, henon_network, linear_map, random_matrix_system
from netobs.graph import complete_graph, path_graph
from netobs.kappa import (
    EstimateError,
    TruthSpec,
    conditioning_scan,
    estimate_kappa,
    kappa_vs_length,
    make_truth,
    noise_seed,
    subset_sweep,
)
from netobs.observe import full_scheme, observe, select_nodes
from oracles import linear_kappa_analytic, stacked_linear_lsq

CHAIN = np.array([[0.5, 0.2], [0.2, 0.5]])
# the settings the bundled Hénon configs use
HENON_OPTS = GnOptions(q=1e-2, svd_rtol=1e-5)


def paired_oracle_kappa(M, scheme, truth, sigma, trials, master_seed):
    """RMS error ratios of the stacked least-squares oracle on the estimator's own noise draws."""
    H = scheme.matrix()
    sq = []
    for t in range(trials):
        y = observe(truth, scheme, sigma, noise_seed(master_seed, t))
        z = stacked_linear_lsq(M, H, list(y.values))
        sq.append((np.linalg.norm(z - truth.states, axis=0) / sigma) ** 2)
    return np.sqrt(np.mean(sq, axis=0))


def test_scalar_fully_observed_is_one():
    sys = linear_map([[0.9]])
    est = estimate_kappa(sys, full_scheme(sys), 100, 1e-3, 100, master_seed=1,
                         opts=GnOptions(q=1e-6), truth=TruthSpec(burn_in=0, x0_scale=1.0))
    assert 0.85 <= est.kappa_hat[0] <= 1.15
    assert est.n_trials == 100 and est.excluded == 0 and est.valid
    assert est.reliable_fraction == 1.0


def test_chain_analytic_values_frozen():
    np.testing.assert_allclose(linear_kappa_analytic(CHAIN, np.array([[1.0, 0.0]]), 50),
                               [1.41421356, 3.68815672], rtol=1e-8)


def test_chain_matches_paired_oracle():
    sys = linear_map(CHAIN)
    scheme = select_nodes(sys, [1], ["x"])
    spec = TruthSpec(seed=3, burn_in=0, x0_scale=1.0)
    est = estimate_kappa(sys, scheme, 50, 1e-3, 30, master_seed=5, opts=GnOptions(q=1e-4), truth=spec)
    ref = paired_oracle_kappa(CHAIN, scheme, make_truth(sys, 50, spec), 1e-3, 30, 5)
    np.testing.assert_allclose(est.kappa_hat, ref, rtol=0.05)
    # and the Monte Carlo itself is in the neighbourhood of the analytic value
    np.testing.assert_allclose(est.kappa_hat, [1.41421356, 3.68815672], rtol=0.3)


def test_fully_observed_linear_across_lengths():
    sys = linear_map(CHAIN)
    out = kappa_vs_length(sys, full_scheme(sys), [20, 60, 120], 1e-3, 100, master_seed=2,
                          opts=GnOptions(q=1e-6), truth=TruthSpec(burn_in=0, x0_scale=1.0))
    for est in out.values():
        assert np.all(np.abs(est.kappa_hat - 1) < 0.15)
        assert abs(est.pooled - 1) < 0.15


def test_kappa_vs_length_rejects_unsorted():
    sys = linear_map([[0.5]])
    with pytest.raises(ValueError, match="ascending"):
        kappa_vs_length(sys, full_scheme(sys), [50, 20], 1e-3, 2, master_seed=0)


def henon4():
    return henon_network(path_graph(4), HenonParams(c=0.1))


def test_bit_exact_and_order_free():
    sys = henon4()
    scheme = select_nodes(sys, [1, 2], ["x"])
    kw = dict(opts=HENON_OPTS, truth=TruthSpec(seed=1, burn_in=200))
    a = estimate_kappa(sys, scheme, 40, 1e-3, 12, master_seed=9, **kw)
    b = estimate_kappa(sys, scheme, 40, 1e-3, 12, master_seed=9, threads=4, **kw)
    assert a.kappa_hat.tobytes() == b.kappa_hat.tobytes()
    assert a.std.tobytes() == b.std.tobytes()
    assert [o.trial for o in b.outcomes] == list(range(12))
    c = estimate_kappa(sys, scheme, 40, 1e-3, 12, master_seed=10, **kw)
    assert not np.array_equal(a.kappa_hat, c.kappa_hat)


def test_sigma_doubling_changes_little():
    sys = henon4()
    scheme = select_nodes(sys, [1, 2], ["x"])
    kw = dict(opts=HENON_OPTS, truth=TruthSpec(seed=1, burn_in=200))
    lo = estimate_kappa(sys, scheme, 40, 1e-4, 20, master_seed=3, **kw)
    hi = estimate_kappa(sys, scheme, 40, 2e-4, 20, master_seed=3, **kw)
    np.testing.assert_allclose(hi.kappa_hat, lo.kappa_hat, rtol=0.1)


def test_observed_below_unobserved_small_network():
    sys = henon4()
    scheme = select_nodes(sys, [1, 2], ["x"])
    est = estimate_kappa(sys, scheme, 40, 1e-3, 20, master_seed=0, opts=HENON_OPTS,
                         truth=TruthSpec(seed=2, burn_in=200))
    x = est.kappa_hat[0::2]
    assert max(x[:2]) <= min(x[2:])


def test_excluded_trial_accounting():
    sys = henon4()
    scheme = select_nodes(sys, [1, 2], ["x"])
    opts = GnOptions(q=1e-2, svd_rtol=1e-5, max_iter=5)
    est = estimate_kappa(sys, scheme, 40, 1e-3, 10, master_seed=9, opts=opts,
                         truth=TruthSpec(seed=1, burn_in=200))
    assert est.n_trials + est.excluded == est.requested == 10
    assert 0 < est.excluded < 10
    assert est.valid == (est.excluded <= 2)
    assert sum(o.usable for o in est.outcomes) == est.n_trials


def test_all_trials_failing_raises():
    sys = henon4()
    scheme = select_nodes(sys, [1], ["x"])
    with pytest.raises(EstimateError, match="all 3 trials"):
        estimate_kappa(sys, scheme, 40, 1e-2, 3, master_seed=0, init="free_run",
                       opts=GnOptions(q=1e-2, max_iter=1, step_tol=1e-15),
                       truth=TruthSpec(burn_in=200), free_run_burn_in=100)


@pytest.mark.parametrize("kw", [dict(trials=0), dict(sigma=0.0), dict(init="zero")])
def test_estimate_rejects(kw):
    sys = linear_map([[0.5]])
    args = dict(N=10, sigma=1e-3, trials=2, master_seed=0) | kw
    with pytest.raises(ValueError):
        estimate_kappa(sys, full_scheme(sys), **args)


def test_views():
    sys = henon4()
    scheme = select_nodes(sys, [1, 2], ["x"])
    est = estimate_kappa(sys, scheme, 30, 1e-3, 5, master_seed=0, opts=HENON_OPTS,
                         truth=TruthSpec(burn_in=200))
    pv = est.per_variable
    assert set(pv) == set(sys.labels)
    assert pv[(3, "y")]["n_trials"] == 5
    nk = est.node_kappa()
    assert nk[2] == max(pv[(2, "x")]["kappa_hat"], pv[(2, "y")]["kappa_hat"])
    assert est.mean_kappa(unobserved_only=True) == pytest.approx(np.delete(est.kappa_hat, [0, 2]).mean())
    assert np.all(est.kappa_hat >= 0)
    assert est.median_cond() >= 1


def test_complete_graph_symmetric_subsets():
    sys = henon_network(complete_graph(4), HenonParams(c=0.05))
    groups = [[1, 2], [3, 4]]
    res = subset_sweep(sys, groups, ["x"], 30, 1e-3, 40, master_seed=4, opts=HENON_OPTS,
                       truth=TruthSpec(seed=5, burn_in=200, redraw=True))
    a, b = (r.estimate for r in res)
    # standard error of each group mean from per-trial means over variables
    per_trial = [np.array([o.ratios.mean() for o in e.outcomes if o.usable]) for e in (a, b)]
    se = np.hypot(*(p.std(ddof=1) / np.sqrt(len(p)) for p in per_trial))
    means = [p.mean() for p in per_trial]
    assert abs(means[0] - means[1]) <= 3 * se
    assert all(r.valid for r in res)


def test_subset_sweep_reports_failed_groups():
    sys = henon4()
    res = subset_sweep(sys, [[1], [4]], ["x"], 40, 1e-2, 2, master_seed=0, init="free_run",
                       opts=GnOptions(q=1e-2, max_iter=1, step_tol=1e-15),
                       truth=TruthSpec(burn_in=200), free_run_burn_in=100)
    assert [r.index for r in res] == [1, 2]
    assert all(np.isnan(r.mean_kappa) and not r.valid and "failed" in r.error for r in res)


def test_subset_sweep_unobserved_mean():
    sys = henon4()
    kw = dict(opts=HENON_OPTS, truth=TruthSpec(burn_in=200))
    all_vars = subset_sweep(sys, [[1, 2]], ["x"], 30, 1e-3, 4, 0, **kw)[0]
    unobs = subset_sweep(sys, [[1, 2]], ["x"], 30, 1e-3, 4, 0, unobserved_only=True, **kw)[0]
    k = all_vars.estimate.kappa_hat
    assert all_vars.mean_kappa == pytest.approx(k.mean())
    assert unobs.mean_kappa == pytest.approx(np.delete(k, [0, 2]).mean())


def test_conditioning_scan_small():
    sys = random_matrix_system(seed=1)
    # each trial's pooled |e|^2 / sigma^2 has only dim = 2 degrees of freedom,
    # so 200 trials are needed for a 10% band on the RMS
    records, configs = conditioning_scan(sys, [20, 60], [1e-3, 1e-6], 200, master_seed=2,
                                         opts=GnOptions(q=1e-5),
                                         truth=TruthSpec(seed=3, burn_in=0, x0_scale=1.0))
    assert len(records) == 2 * 2 * 200 and len(configs) == 4
    for c in configs:
        assert c.n_trials + c.excluded == 200
        if c.reliable:
            assert abs(c.kappa_hat - 1) < 0.1
    by_sigma = {}
    for c in configs:
        by_sigma.setdefault(c.sigma, []).append(c.cond_C)
    for cs in by_sigma.values():
        assert cs == sorted(cs)


def test_noise_seed_is_counter_based():
    a = np.random.default_rng(noise_seed(7, 3)).standard_normal(4)
    b = np.random.default_rng(noise_seed(7, 3)).standard_normal(4)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, np.random.default_rng(noise_seed(7, 4)).standard_normal(4))
