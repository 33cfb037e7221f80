"""Run one configured experiment and write its outputs."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from netobs import __version__
from netobs.assimilate import GnOptions, gauss_newton
from netobs.dynamics import (DynSystem, FhnParams, HenonParams, Trajectory, fhn_network,
                             henon_network, linear_map, random_matrix_system)
from netobs.graph import (Network, erdos_renyi, hop_distances, matched_erdos_renyi, path_graph,
                          rank_subsets, read_adjacency, scale_free)
from netobs.kappa import (EstimateError, KappaEstimate, TruthSpec, conditioning_scan,
                          estimate_kappa, make_truth, noise_seed, subset_sweep)
from netobs.observe import ObsScheme, observe, select_nodes
from netobs.report import write_csv, write_manifest

log = logging.getLogger(__name__)

MAX_REDRAWS = 1000


class NumericalFailure(RuntimeError):
    """The experiment could not produce a result; partial outputs were kept."""


@dataclass
class RunResult:
    out_dir: Path
    files: list = field(default_factory=list)
    figures: list = field(default_factory=list)
    failed: str = ""


def build_network(cfg: dict) -> tuple[Network | None, dict]:
    spec = cfg["network"]
    if spec is None:
        return None, {}
    seed = cfg["seeds"]["network"]
    kind = spec["kind"]
    info = {}
    if kind == "explicit":
        n = spec["n"]
        a = np.zeros((n, n))
        for k, j in spec["edges"]:
            # edge k -> j: node j's dynamics reads node k
            a[j - 1, k - 1] = 1.0
            if not spec["directed"]:
                a[k - 1, j - 1] = 1.0
        net = Network(a, directed=spec["directed"])
    elif kind == "er":
        def draw(s):
            if "p" in spec:
                return erdos_renyi(spec["n"], spec["p"], s)
            return matched_erdos_renyi(spec["n"], spec["n_edges"], s)
        used = seed
        net = draw(used)
        while spec["connected"] and not is_connected(net):
            used += 1
            if used - seed > MAX_REDRAWS:
                raise NumericalFailure(f"no connected graph within {MAX_REDRAWS} redraws")
            net = draw(used)
        info["network_seed_used"] = used
    elif kind == "scale_free":
        net = scale_free(spec["n"], spec["m"], seed)
    elif kind == "path":
        net = path_graph(spec["n"])
    else:
        net = read_adjacency(spec["path"], spec.get("directed"))
    info["n_edges"] = net.n_edges
    return net, info


def is_connected(net: Network) -> bool:
    d = hop_distances(Network(np.maximum(net.adjacency, net.adjacency.T)))
    return bool(np.all(np.isfinite(d)))


def build_system(cfg: dict, net: Network | None) -> DynSystem:
    fam = cfg["system"]["family"]
    p = cfg["system"]["params"]
    if fam == "henon":
        return henon_network(net, HenonParams(a=p["a"], b=p["b"], c=p["c"]))
    if fam == "fhn":
        fp = FhnParams(**{k: p[k] for k in FhnParams.__dataclass_fields__})
        return fhn_network(net, fp, seed=cfg["seeds"]["params"])
    if fam == "linear":
        return linear_map(np.array(p["matrix"], dtype=float))
    return random_matrix_system(p["dim"], seed=cfg["seeds"]["params"], scale=p["scale"])


def _variables(sys: DynSystem, variables) -> list[str]:
    if variables == "all":
        return sorted({v for _, v in sys.labels})
    return list(variables)


def build_scheme(cfg: dict, sys: DynSystem, nodes=None) -> ObsScheme:
    obs = cfg["observation"]
    nodes = nodes if nodes is not None else obs["nodes"]
    if nodes == "all":
        nodes = sys.nodes
    return select_nodes(sys, nodes, _variables(sys, obs["variables"]))


def gn_options(cfg: dict) -> GnOptions:
    a = cfg["assimilation"]
    keys = ("q", "r", "max_iter", "step_tol", "cost_tol", "svd_rtol", "damping",
            "obs_sum_includes_last", "dense_max")
    return GnOptions(**{k: a[k] for k in keys})


def truth_spec(cfg: dict) -> TruthSpec:
    t = cfg["truth"]
    return TruthSpec(seed=cfg["seeds"]["dynamics"], burn_in=t["burn_in"], x0_scale=t["x0_scale"],
                     redraw=t["redraw"])


def metadata(cfg: dict, sys: DynSystem, extra: dict | None = None) -> dict:
    a = cfg["assimilation"]
    exp = cfg["experiment"]
    meta = {
        "netobs": __version__,
        "experiment": exp["kind"],
        "family": sys.family,
        "params": {k: v for k, v in sys.params.items() if k != "matrix"},
        "network": cfg["network"],
        "observation": cfg["observation"],
        "seeds": cfg["seeds"],
        "q": a["q"],
        "r": a["r"],
        "sigma": cfg["observation"]["sigma"] if cfg["observation"]["sigma"] is not None else exp.get("sigmas"),
    }
    for key in ("N", "lengths", "trials"):
        if key in exp:
            meta[key] = exp[key]
    meta["switches"] = {"init": a["init"], "obs_sum_includes_last": a["obs_sum_includes_last"],
                        "svd_rtol": a["svd_rtol"], "step_tol": a["step_tol"], "max_iter": a["max_iter"],
                        "truth_redraw": cfg["truth"]["redraw"], "truth_burn_in": cfg["truth"]["burn_in"],
                        "unobserved_only": exp.get("unobserved_only", False)}
    if extra:
        meta.update(extra)
    return meta


def _kappa_rows(est: KappaEstimate):
    observed = set(est.observed)
    for k, (node, var) in enumerate(est.labels):
        yield [node, var, f"{var}{node}", k in observed, est.kappa_hat[k], est.std[k], est.n_trials]


KAPPA_HEADER = ["node", "variable", "label", "observed", "kappa_hat", "std", "n_trials"]
DIAG_HEADER = ["N", "sigma", "trial", "iterations", "cond_C", "C_over_sigma", "reliable",
               "converged", "diverged", "excluded"]


def _diag_rows(est: KappaEstimate, group=None):
    for o in est.outcomes:
        row = [est.N, est.sigma, o.trial, o.iterations, o.cond_C, o.cond_C / est.sigma,
               o.reliable, o.converged, o.diverged, not o.usable]
        yield ([group] if group is not None else []) + row


def _node_rows(est: KappaEstimate, scheme: ObsScheme, sys: DynSystem):
    obs_nodes = {sys.labels[k][0] for k in scheme.indices}
    for node, k in est.node_kappa().items():
        yield [node, node in obs_nodes, k]


def _estimate_kwargs(cfg: dict, threads: int) -> dict:
    a = cfg["assimilation"]
    return {"truth": truth_spec(cfg), "init": a["init"], "threads": threads,
            "free_run_burn_in": a["free_run_burn_in"]}


def run_config(cfg: dict, out_dir: Path, threads: int = 1, figures: bool = True,
               config_name: str = "") -> RunResult:
    """Run ``cfg`` (already resolved) and write results into ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    net, net_info = build_network(cfg)
    sys = build_system(cfg, net)
    kind = cfg["experiment"]["kind"]
    result = RunResult(out_dir)
    meta = metadata(cfg, sys, net_info)
    runner = {"kappa": _run_kappa, "kappa_vs_length": _run_length, "subset_sweep": _run_sweep,
              "conditioning_scan": _run_scan, "reconstruct": _run_reconstruct}[kind]
    data = {}
    try:
        data = runner(cfg, sys, net, meta, out_dir, threads, result)
    except (EstimateError, FloatingPointError) as exc:
        result.failed = str(exc)
        log.error("numerical failure: %s", exc)
    if figures and data:
        from netobs import plotting
        result.figures = plotting.render(kind, data, out_dir)
    record = {"netobs_version": __version__, "config_name": config_name, "status":
              "failed: " + result.failed if result.failed else "ok", **net_info, "config": cfg}
    write_manifest(out_dir / "manifest.yaml", record, result.files + result.figures)
    return result


def _run_kappa(cfg, sys, net, meta, out_dir, threads, result):
    exp = cfg["experiment"]
    scheme = build_scheme(cfg, sys)
    est = estimate_kappa(sys, scheme, exp["N"], cfg["observation"]["sigma"], exp["trials"],
                         cfg["seeds"]["noise_master"], gn_options(cfg), **_estimate_kwargs(cfg, threads))
    meta = dict(meta, n_trials=est.n_trials, excluded=est.excluded, valid=est.valid,
                reliable_fraction=est.reliable_fraction)
    result.files += [
        write_csv(out_dir / "kappa.csv", meta, KAPPA_HEADER, _kappa_rows(est)),
        write_csv(out_dir / "node_kappa.csv", meta, ["node", "observed", "kappa_hat"],
                  _node_rows(est, scheme, sys)),
        write_csv(out_dir / "diagnostics.csv", meta, DIAG_HEADER, _diag_rows(est)),
    ]
    return {"estimate": est, "labels": sys.label_strings()}


def _run_length(cfg, sys, net, meta, out_dir, threads, result):
    exp = cfg["experiment"]
    scheme = build_scheme(cfg, sys)
    sigma = cfg["observation"]["sigma"]
    ests = {}
    rows, diag = [], []
    failure = None
    for N in exp["lengths"]:
        try:
            est = estimate_kappa(sys, scheme, N, sigma, exp["trials"], cfg["seeds"]["noise_master"],
                                 gn_options(cfg), **_estimate_kwargs(cfg, threads))
        except EstimateError as exc:
            failure = exc
            rows.append([N, "", "", "", float("nan"), float("nan"), 0, exp["trials"], False, float("nan")])
            continue
        ests[N] = est
        for k, (node, var) in enumerate(est.labels):
            rows.append([N, node, var, f"{var}{node}", est.kappa_hat[k], est.std[k], est.n_trials,
                         est.excluded, est.valid, est.reliable_fraction])
        diag.extend(_diag_rows(est))
    header = ["N", "node", "variable", "label", "kappa_hat", "std", "n_trials", "excluded", "valid",
              "reliable_fraction"]
    result.files.append(write_csv(out_dir / "kappa_vs_length.csv", meta, header, rows))
    if ests:
        last = ests[max(ests)]
        m = dict(meta, N=last.N, n_trials=last.n_trials, excluded=last.excluded, valid=last.valid,
                 reliable_fraction=last.reliable_fraction)
        result.files += [
            write_csv(out_dir / "kappa.csv", m, KAPPA_HEADER, _kappa_rows(last)),
            write_csv(out_dir / "node_kappa.csv", m, ["node", "observed", "kappa_hat"],
                      _node_rows(last, scheme, sys)),
        ]
    result.files.append(write_csv(out_dir / "diagnostics.csv", meta, DIAG_HEADER, diag))
    if failure is not None:
        raise failure
    return {"estimates": ests, "labels": sys.label_strings(), "observed": list(scheme.indices)}


def _run_sweep(cfg, sys, net, meta, out_dir, threads, result):
    exp = cfg["experiment"]
    groups = exp["groups"] or rank_subsets(net, exp["metric"], exp["group_size"])
    variables = _variables(sys, cfg["observation"]["variables"])
    res = subset_sweep(sys, groups, variables, exp["N"], cfg["observation"]["sigma"], exp["trials"],
                       cfg["seeds"]["noise_master"], gn_options(cfg),
                       unobserved_only=exp["unobserved_only"], **_estimate_kwargs(cfg, threads))
    meta = dict(meta, metric=exp["metric"] if not exp["groups"] else "explicit")
    rows, per_var, diag = [], [], []
    for g in res:
        e = g.estimate
        rows.append([g.index, " ".join(map(str, g.group)), g.mean_kappa, g.spread,
                     e.n_trials if e else 0, e.excluded if e else exp["trials"], g.valid,
                     e.reliable_fraction if e else 0.0, g.error])
        if e is not None:
            per_var.extend([g.index] + r for r in _kappa_rows(e))
            diag.extend(_diag_rows(e, group=g.index))
    result.files += [
        write_csv(out_dir / "subsets.csv", meta, ["group", "members", "mean_kappa", "spread", "n_trials",
                                                  "excluded", "valid", "reliable_fraction", "error"], rows),
        write_csv(out_dir / "subset_kappa.csv", meta, ["group"] + KAPPA_HEADER, per_var),
        write_csv(out_dir / "diagnostics.csv", meta, ["group"] + DIAG_HEADER, diag),
    ]
    return {"groups": res}


def _run_scan(cfg, sys, net, meta, out_dir, threads, result):
    exp = cfg["experiment"]
    records, configs = conditioning_scan(sys, exp["lengths"], exp["sigmas"], exp["trials"],
                                         cfg["seeds"]["noise_master"], gn_options(cfg),
                                         **_estimate_kwargs(cfg, threads))
    result.files += [
        write_csv(out_dir / "scan_trials.csv", meta,
                  ["N", "sigma", "trial", "cond_C", "C_over_sigma", "kappa_hat", "reliable", "converged"],
                  ([r.N, r.sigma, r.trial, r.cond_C, r.cond_C / r.sigma, r.kappa_hat, r.reliable,
                    r.converged] for r in records)),
        write_csv(out_dir / "scan_configs.csv", meta,
                  ["N", "sigma", "cond_C", "C_over_sigma", "kappa_hat", "reliable", "n_trials", "excluded"],
                  ([c.N, c.sigma, c.cond_C, c.cond_C / c.sigma, c.kappa_hat, c.reliable, c.n_trials,
                    c.excluded] for c in configs)),
    ]
    return {"records": records, "configs": configs}


def _run_reconstruct(cfg, sys, net, meta, out_dir, threads, result):
    from netobs.assimilate import initial_guess

    exp = cfg["experiment"]
    scheme = build_scheme(cfg, sys)
    sigma = cfg["observation"]["sigma"]
    truth = make_truth(sys, exp["N"], truth_spec(cfg))
    y = observe(truth, scheme, sigma, noise_seed(cfg["seeds"]["noise_master"], 0))
    if cfg["assimilation"]["init"] == "truth":
        states = truth.states.copy()
        states[:, list(scheme.indices)] = y.values
        guess = Trajectory(states, truth.t0)
    else:
        guess = initial_guess(sys, scheme, y, np.random.SeedSequence(cfg["seeds"]["noise_master"], spawn_key=(0, 1)),
                              t0=truth.t0, burn_in=cfg["assimilation"]["free_run_burn_in"])
    rec = gauss_newton(sys, scheme, y, guess, gn_options(cfg))
    labels = sys.label_strings()
    obs_labels = [labels[k] for k in scheme.indices]
    steps = truth.t0 + np.arange(truth.N)
    err = rec.z.states - truth.states

    def table(name, cols, values):
        return write_csv(out_dir / name, meta, ["step"] + cols,
                         ([int(s)] + list(v) for s, v in zip(steps, values)))

    l2 = np.linalg.norm(err, axis=0)
    ratio = l2 / sigma if sigma > 0 else np.full(sys.dim, np.nan)
    obs_set = set(scheme.indices)
    diag = rec.diagnostics()
    result.files += [
        table("truth.csv", labels, truth.states),
        table("observations.csv", obs_labels, y.values),
        table("reconstruction.csv", labels, rec.z.states),
        table("errors.csv", labels, err),
        write_csv(out_dir / "error_summary.csv", meta,
                  ["node", "variable", "label", "observed", "l2_error", "error_over_sigma", "max_abs_error",
                   "first_step_error"],
                  ([node, var, labels[k], k in obs_set, l2[k], ratio[k], np.max(np.abs(err[:, k])), err[0, k]]
                   for k, (node, var) in enumerate(sys.labels))),
        write_csv(out_dir / "diagnostics.csv", meta, list(diag), [list(diag.values())]),
    ]
    return {"truth": truth, "recon": rec.z, "labels": labels, "observed": list(scheme.indices),
            "y": y, "scheme": scheme}
