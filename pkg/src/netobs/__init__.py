"""Observability condition numbers for dynamical networks."""

__version__ = "0.1.0"

from netobs.graph import (
    Network,
    centrality,
    erdos_renyi,
    matched_erdos_renyi,
    path_graph,
    rank_subsets,
    scale_free,
)
from netobs.dynamics import (
    DynSystem,
    FhnParams,
    HenonParams,
    Trajectory,
    fhn_network,
    henon_network,
    linear_map,
    random_matrix_system,
    rk4_step,
    simulate,
)
from netobs.observe import Observations, ObsScheme, observe, select_nodes
from netobs.assimilate import (
    GnOptions,
    ReconResult,
    gauss_newton,
    initial_guess,
    residual,
    residual_jacobian,
)
from netobs.kappa import (
    KappaEstimate,
    TruthSpec,
    conditioning_scan,
    estimate_kappa,
    kappa_vs_length,
    subset_sweep,
)
