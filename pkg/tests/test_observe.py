import numpy as np
import pytest

from netobs.dynamics import FhnParams, Trajectory, fhn_network, henon_network, linear_map, simulate
from netobs.graph import path_graph
from netobs.observe import (
    ObsScheme,
    full_scheme,
    observe,
    read_observations,
    select_nodes,
    write_observations,
)


@pytest.fixture
def henon9():
    return henon_network(path_graph(9))


def test_select_first_two_x(henon9):
    scheme = select_nodes(henon9, [1, 2], ["x"])
    assert scheme.indices == (0, 2)
    assert scheme.labels == ((1, "x"), (2, "x"))


def test_select_everything(henon9):
    scheme = select_nodes(henon9, range(1, 10), ["x", "y"])
    assert scheme.indices == tuple(range(18))
    assert scheme.fully_observed
    assert full_scheme(henon9).indices == scheme.indices


def test_select_fhn_fast_variable():
    sys = fhn_network(path_graph(8), FhnParams())
    assert select_nodes(sys, [1, 2, 3, 4], ["v"]).obs_dim == 4


def test_select_orders_by_node_then_variable(henon9):
    scheme = select_nodes(henon9, [3, 1], ["y", "x"])
    assert scheme.indices == (0, 1, 4, 5)


@pytest.mark.parametrize("nodes, variables, match", [
    ([], ["x"], "nonempty"),
    ([10], ["x"], "unknown node 10"),
    ([1], ["v"], "unknown variable 'v'"),
])
def test_select_rejects(henon9, nodes, variables, match):
    with pytest.raises(ValueError, match=match):
        select_nodes(henon9, nodes, variables)


def test_scheme_invariants():
    with pytest.raises(ValueError):
        ObsScheme((0, 0), ((1, "x"), (1, "x")), 2)
    with pytest.raises(ValueError):
        ObsScheme((2,), ((1, "x"),), 2)


def test_h_is_selection_and_linear():
    scheme = ObsScheme((2, 0), ((2, "x"), (1, "x")), 3)
    rng = np.random.default_rng(0)
    x, z = rng.standard_normal(3), rng.standard_normal(3)
    np.testing.assert_array_equal(scheme.h(x), [x[2], x[0]])
    np.testing.assert_array_equal(scheme.h(2.0 * x + 3.0 * z), 2.0 * scheme.h(x) + 3.0 * scheme.h(z))
    np.testing.assert_array_equal(scheme.matrix() @ x, scheme.h(x))


def test_zero_noise_is_exact(henon9):
    traj = simulate(henon9, 0.1 * np.ones(18), 20, burn_in=10)
    scheme = select_nodes(henon9, [1, 2], ["x"])
    y = observe(traj, scheme, 0.0, seed=1)
    np.testing.assert_array_equal(y.values, traj.states[:, [0, 2]])


def test_noise_variance():
    traj = Trajectory(np.zeros((10_000, 1)))
    y = observe(traj, full_scheme(linear_map([[1.0]])), 1e-3, seed=3)
    assert np.var(y.values) == pytest.approx(1e-6, rel=0.05)


def test_same_seed_same_noise():
    traj = Trajectory(np.zeros((50, 2)))
    scheme = full_scheme(linear_map(np.eye(2)))
    a = observe(traj, scheme, 0.1, seed=4).values
    assert np.array_equal(a, observe(traj, scheme, 0.1, seed=4).values)
    assert not np.array_equal(a, observe(traj, scheme, 0.1, seed=5).values)


def test_observe_rejects():
    scheme = full_scheme(linear_map([[1.0]]))
    with pytest.raises(ValueError, match="non-negative"):
        observe(Trajectory(np.zeros((3, 1))), scheme, -1.0, seed=0)
    with pytest.raises(ValueError, match="non-finite"):
        observe(Trajectory(np.array([[0.0], [np.nan]])), scheme, 0.1, seed=0)


def test_observations_csv_round_trip(tmp_path, henon9):
    traj = simulate(henon9, 0.1 * np.ones(18), 10)
    scheme = select_nodes(henon9, [1, 2], ["x"])
    y = observe(traj, scheme, 1e-3, seed=0)
    write_observations(y, scheme, tmp_path / "y.csv")
    assert (tmp_path / "y.csv").read_text().splitlines()[0] == "x1,x2"
    back = read_observations(tmp_path / "y.csv", scheme, 1e-3)
    np.testing.assert_array_equal(back.values, y.values)
    with pytest.raises(ValueError, match="header"):
        read_observations(tmp_path / "y.csv", select_nodes(henon9, [1, 3], ["x"]), 1e-3)
