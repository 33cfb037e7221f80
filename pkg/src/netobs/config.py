"""Experiment configuration: loading, validation and default resolution.

A config file is YAML with the top-level sections ``system``, ``network``,
``observation``, ``assimilation``, ``truth``, ``experiment``, ``seeds`` and
``output``. :func:`resolve` fills every default so the returned mapping is
the complete description of a run; it is what the manifest echoes.
"""
from __future__ import annotations

import copy
import os
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

FAMILIES = ("henon", "fhn", "linear", "random_matrix")
NETWORK_KINDS = ("explicit", "er", "scale_free", "path", "file")
KINDS = ("kappa", "kappa_vs_length", "subset_sweep", "conditioning_scan", "reconstruct")
SEED_NAMES = ("dynamics", "noise_master", "network", "params")
OUTPUT_ENV = "NETOBS_OUTPUT_DIR"

FAMILY_DEFAULTS = {
    "henon": {"a": 2.2, "b": 0.4, "c": 0.1},
    "fhn": {"a": 0.42, "b": 0.8, "c": 0.08, "d": 0.01, "I": -0.025, "g": 0.1,
            "jitter": 0.05, "dt": 0.1, "substeps": 1},
    "linear": {},
    "random_matrix": {"dim": 2, "scale": 1.0},
}
ASSIM_DEFAULTS = {"q": 1e-3, "r": 1.0, "max_iter": 100, "step_tol": 1e-10, "cost_tol": 0.0,
                  "svd_rtol": 1e-12, "damping": 0.0, "obs_sum_includes_last": True,
                  "dense_max": 600, "init": "truth", "free_run_burn_in": 1000}
TRUTH_DEFAULTS = {"burn_in": 1000, "x0_scale": 0.5, "redraw": False}
EXPERIMENT_FIELDS = {
    "kappa": {"N": None, "trials": 50},
    "kappa_vs_length": {"lengths": None, "trials": 50},
    "subset_sweep": {"N": None, "trials": 50, "metric": "degree", "group_size": 4,
                     "groups": None, "unobserved_only": False},
    "conditioning_scan": {"lengths": None, "sigmas": None, "trials": 50},
    "reconstruct": {"N": None},
}


class ConfigError(ValueError):
    """Invalid configuration; ``field`` is the dotted path of the offending entry."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


def _section(raw: dict, name: str, required: bool = True) -> dict:
    if name not in raw or raw[name] is None:
        if required:
            raise ConfigError(name, "section is missing")
        return {}
    if not isinstance(raw[name], dict):
        raise ConfigError(name, "must be a mapping")
    return dict(raw[name])


def _unknown(sec: dict, allowed, prefix: str) -> None:
    for key in sec:
        if key not in allowed:
            raise ConfigError(f"{prefix}.{key}", "unknown field")


def _int(value, field: str, low: int | None = None) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
        raise ConfigError(field, f"must be an integer, got {value!r}")
    if low is not None and value < low:
        raise ConfigError(field, f"must be at least {low}, got {value}")
    return int(value)


def _float(value, field: str, positive: bool = False, nonneg: bool = False) -> float:
    if isinstance(value, bool):
        raise ConfigError(field, f"must be a number, got {value!r}")
    try:
        x = float(value)
    except (TypeError, ValueError):
        raise ConfigError(field, f"must be a number, got {value!r}") from None
    if not np.isfinite(x):
        raise ConfigError(field, "must be finite")
    if positive and x <= 0:
        raise ConfigError(field, f"must be positive, got {x}")
    if nonneg and x < 0:
        raise ConfigError(field, f"must be non-negative, got {x}")
    return x


def _bool(value, field: str) -> bool:
    if not isinstance(value, bool):
        raise ConfigError(field, f"must be true or false, got {value!r}")
    return value


def _int_list(value, field: str, low: int = 1, ascending: bool = False) -> list[int]:
    if not isinstance(value, list) or not value:
        raise ConfigError(field, "must be a non-empty list")
    out = [_int(v, f"{field}[{i}]", low) for i, v in enumerate(value)]
    if ascending and any(b <= a for a, b in zip(out, out[1:])):
        raise ConfigError(field, "must be strictly ascending")
    return out


def _system(raw) -> dict:
    sec = _section(raw, "system")
    _unknown(sec, ("family", "params"), "system")
    fam = sec.get("family")
    if fam not in FAMILIES:
        raise ConfigError("system.family", f"must be one of {', '.join(FAMILIES)}, got {fam!r}")
    params = sec.get("params") or {}
    if not isinstance(params, dict):
        raise ConfigError("system.params", "must be a mapping")
    allowed = set(FAMILY_DEFAULTS[fam]) | ({"matrix"} if fam == "linear" else set())
    _unknown(params, allowed, "system.params")
    out = dict(FAMILY_DEFAULTS[fam])
    for key, value in params.items():
        f = f"system.params.{key}"
        if key == "matrix":
            try:
                M = np.array(value, dtype=float)
            except (TypeError, ValueError):
                raise ConfigError(f, "must be a square numeric matrix") from None
            if M.ndim != 2 or M.shape[0] != M.shape[1] or M.size == 0:
                raise ConfigError(f, "must be a square numeric matrix")
            out[key] = M.tolist()
        elif key in ("dim", "substeps"):
            out[key] = _int(value, f, 1)
        elif key in ("dt", "scale"):
            out[key] = _float(value, f, positive=True)
        elif key == "jitter":
            out[key] = _float(value, f, nonneg=True)
        else:
            out[key] = _float(value, f)
    if fam == "linear" and "matrix" not in out:
        raise ConfigError("system.params.matrix", "is required for the linear family")
    return {"family": fam, "params": out}


def _network(raw, family: str, base_dir: Path | None) -> dict | None:
    if family in ("linear", "random_matrix"):
        if raw.get("network") is not None:
            raise ConfigError("network", f"is not used by the {family} family; remove it")
        return None
    sec = _section(raw, "network")
    kind = sec.get("kind")
    if kind not in NETWORK_KINDS:
        raise ConfigError("network.kind", f"must be one of {', '.join(NETWORK_KINDS)}, got {kind!r}")
    fields = {"explicit": ("n", "edges", "directed"), "er": ("n", "p", "n_edges", "connected"),
              "scale_free": ("n", "m"), "path": ("n",), "file": ("path", "directed")}[kind]
    _unknown(sec, ("kind",) + fields, "network")
    out = {"kind": kind}
    if kind != "file":
        if "n" not in sec:
            raise ConfigError("network.n", "is required")
        out["n"] = _int(sec["n"], "network.n", 1)
    if kind == "explicit":
        out["directed"] = _bool(sec.get("directed", False), "network.directed")
        edges = sec.get("edges")
        if not isinstance(edges, list):
            raise ConfigError("network.edges", "must be a list of [from, to] node pairs")
        clean = []
        for i, e in enumerate(edges):
            f = f"network.edges[{i}]"
            if not isinstance(e, list) or len(e) != 2:
                raise ConfigError(f, "must be a [from, to] pair")
            a, b = (_int(v, f, 1) for v in e)
            if a > out["n"] or b > out["n"]:
                raise ConfigError(f, f"refers to a node outside 1..{out['n']}")
            if a == b:
                raise ConfigError(f, "self-loops are not allowed")
            clean.append([a, b])
        out["edges"] = clean
    elif kind == "er":
        has_p, has_m = "p" in sec, "n_edges" in sec
        if has_p == has_m:
            raise ConfigError("network.p", "give exactly one of network.p or network.n_edges")
        if has_p:
            p = _float(sec["p"], "network.p", nonneg=True)
            if p > 1:
                raise ConfigError("network.p", "must lie in [0, 1]")
            out["p"] = p
        else:
            out["n_edges"] = _int(sec["n_edges"], "network.n_edges", 0)
        out["connected"] = _bool(sec.get("connected", False), "network.connected")
    elif kind == "scale_free":
        out["m"] = _int(sec.get("m", 2), "network.m", 1)
        if out["m"] >= out["n"]:
            raise ConfigError("network.m", "must be smaller than network.n")
    elif kind == "file":
        p = sec.get("path")
        if not isinstance(p, str):
            raise ConfigError("network.path", "must be a file path")
        path = Path(p)
        if not path.is_absolute() and base_dir is not None:
            path = base_dir / path
        if not path.is_file():
            raise ConfigError("network.path", f"file not found: {path}")
        out["path"] = str(path)
        if "directed" in sec:
            out["directed"] = _bool(sec["directed"], "network.directed")
    return out


def _experiment(raw) -> dict:
    sec = _section(raw, "experiment")
    kind = sec.get("kind")
    if isinstance(kind, list):
        raise ConfigError("experiment.kind", "exactly one experiment kind is allowed")
    if kind not in KINDS:
        raise ConfigError("experiment.kind", f"must be one of {', '.join(KINDS)}, got {kind!r}")
    spec = EXPERIMENT_FIELDS[kind]
    _unknown(sec, ("kind",) + tuple(spec), "experiment")
    out = {"kind": kind}
    for key, default in spec.items():
        f = f"experiment.{key}"
        if key not in sec:
            if default is None and key != "groups":
                raise ConfigError(f, f"is required for kind {kind}")
            out[key] = default
            continue
        v = sec[key]
        if key == "N":
            out[key] = _int(v, f, 2)
        elif key == "trials":
            out[key] = _int(v, f, 1)
        elif key == "lengths":
            out[key] = _int_list(v, f, 2, ascending=True)
        elif key == "sigmas":
            if not isinstance(v, list) or not v:
                raise ConfigError(f, "must be a non-empty list")
            out[key] = [_float(s, f"{f}[{i}]", positive=True) for i, s in enumerate(v)]
        elif key == "metric":
            if v not in ("degree", "closeness"):
                raise ConfigError(f, f"must be degree or closeness, got {v!r}")
            out[key] = v
        elif key == "group_size":
            out[key] = _int(v, f, 1)
        elif key == "groups":
            if not isinstance(v, list) or not v:
                raise ConfigError(f, "must be a non-empty list of node lists")
            out[key] = [_int_list(g, f"{f}[{i}]") for i, g in enumerate(v)]
        elif key == "unobserved_only":
            out[key] = _bool(v, f)
    return out


def _observation(raw, kind: str) -> dict:
    sec = _section(raw, "observation", required=kind != "conditioning_scan")
    _unknown(sec, ("nodes", "variables", "sigma"), "observation")
    out = {}
    nodes = sec.get("nodes", "all")
    if kind == "subset_sweep":
        out["nodes"] = None
    elif nodes == "all":
        out["nodes"] = "all"
    else:
        out["nodes"] = _int_list(nodes, "observation.nodes")
    if kind == "conditioning_scan" and out["nodes"] != "all":
        raise ConfigError("observation.nodes", "conditioning_scan observes every variable; use all")
    variables = sec.get("variables", "all")
    if variables != "all":
        if not isinstance(variables, list) or not variables or not all(isinstance(v, str) for v in variables):
            raise ConfigError("observation.variables", "must be all or a list of variable names")
    out["variables"] = variables
    if kind == "conditioning_scan":
        out["sigma"] = None
    elif "sigma" not in sec:
        raise ConfigError("observation.sigma", "is required")
    else:
        out["sigma"] = _float(sec["sigma"], "observation.sigma", nonneg=kind == "reconstruct",
                              positive=kind != "reconstruct")
    return out


def _assimilation(raw) -> dict:
    sec = _section(raw, "assimilation", required=False)
    _unknown(sec, ASSIM_DEFAULTS, "assimilation")
    out = dict(ASSIM_DEFAULTS)
    for key, value in sec.items():
        f = f"assimilation.{key}"
        if key in ("max_iter", "dense_max", "free_run_burn_in"):
            out[key] = _int(value, f, 0 if key == "free_run_burn_in" else 1)
        elif key == "obs_sum_includes_last":
            out[key] = _bool(value, f)
        elif key == "init":
            if value not in ("truth", "free_run"):
                raise ConfigError(f, f"must be truth or free_run, got {value!r}")
            out[key] = value
        elif key in ("q", "r", "step_tol"):
            out[key] = _float(value, f, positive=True)
        else:
            out[key] = _float(value, f, nonneg=True)
    if out["q"] > out["r"]:
        raise ConfigError("assimilation.q", "must not exceed assimilation.r")
    return out


def _truth(raw) -> dict:
    sec = _section(raw, "truth", required=False)
    _unknown(sec, TRUTH_DEFAULTS, "truth")
    out = dict(TRUTH_DEFAULTS)
    if "burn_in" in sec:
        out["burn_in"] = _int(sec["burn_in"], "truth.burn_in", 0)
    if "x0_scale" in sec:
        out["x0_scale"] = _float(sec["x0_scale"], "truth.x0_scale", positive=True)
    if "redraw" in sec:
        out["redraw"] = _bool(sec["redraw"], "truth.redraw")
    return out


def _seeds(raw) -> dict:
    sec = _section(raw, "seeds")
    _unknown(sec, SEED_NAMES, "seeds")
    out = {}
    for name in SEED_NAMES:
        if name not in sec:
            raise ConfigError(f"seeds.{name}", "is required (seeds are never taken from the clock)")
        out[name] = _int(sec[name], f"seeds.{name}", 0)
    return out


def _output(raw) -> dict:
    sec = _section(raw, "output", required=False)
    _unknown(sec, ("directory", "figures"), "output")
    out = {"directory": None, "figures": True}
    if sec.get("directory") is not None:
        if not isinstance(sec["directory"], str):
            raise ConfigError("output.directory", "must be a path")
        out["directory"] = sec["directory"]
    if "figures" in sec:
        out["figures"] = _bool(sec["figures"], "output.figures")
    return out


def family_variables(system: dict) -> list[str]:
    fam = system["family"]
    if fam == "henon":
        return ["x", "y"]
    if fam == "fhn":
        return ["v", "w"]
    if fam == "linear":
        return ["x"]
    dim = system["params"]["dim"]
    return ["x", "y"] if dim == 2 else [f"x{k + 1}" for k in range(dim)]


def _check_nodes(cfg: dict) -> None:
    """Referenced nodes and variables must exist in the network (or system, without one)."""
    fam = cfg["system"]["family"]
    variables = cfg["observation"]["variables"]
    if variables != "all":
        known = family_variables(cfg["system"])
        for i, v in enumerate(variables):
            if v not in known:
                raise ConfigError(f"observation.variables[{i}]",
                                  f"{fam} has no variable {v!r}; choose from {', '.join(known)}")
    net = cfg["network"]
    if net is not None and net["kind"] != "file":
        n = net["n"]
    elif fam == "linear":
        n = len(cfg["system"]["params"]["matrix"])
    elif fam == "random_matrix":
        n = 1
    else:
        return
    nodes = cfg["observation"]["nodes"]
    if isinstance(nodes, list):
        for i, j in enumerate(nodes):
            if j > n:
                raise ConfigError(f"observation.nodes[{i}]", f"node {j} does not exist (n = {n})")
    groups = cfg["experiment"].get("groups")
    for gi, g in enumerate(groups or []):
        for i, j in enumerate(g):
            if j > n:
                raise ConfigError(f"experiment.groups[{gi}][{i}]", f"node {j} does not exist (n = {n})")
    gs = cfg["experiment"].get("group_size")
    if gs is not None and gs > n:
        raise ConfigError("experiment.group_size", f"exceeds the node count {n}")


def resolve(raw: dict, base_dir: Path | None = None) -> dict:
    """Validate ``raw`` and return a new mapping with every default filled in."""
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "config must be a mapping of sections")
    known = ("system", "network", "observation", "assimilation", "truth", "experiment", "seeds", "output")
    _unknown(raw, known, "<root>")
    raw = copy.deepcopy(raw)
    system = _system(raw)
    experiment = _experiment(raw)
    cfg = {
        "system": system,
        "network": _network(raw, system["family"], base_dir),
        "observation": _observation(raw, experiment["kind"]),
        "assimilation": _assimilation(raw),
        "truth": _truth(raw),
        "experiment": experiment,
        "seeds": _seeds(raw),
        "output": _output(raw),
    }
    if experiment["kind"] == "subset_sweep" and cfg["network"] is None:
        raise ConfigError("experiment.kind", "subset_sweep needs a network")
    _check_nodes(cfg)
    return cfg


def bundled_names() -> list[str]:
    return sorted(p.name for p in resources.files("netobs.configs").iterdir() if p.name.endswith(".cfg"))


def find_config(name: str) -> Path:
    """A path as given, else a bundled config by name (with or without ``.cfg``)."""
    p = Path(name)
    if p.is_file():
        return p
    fname = name if name.endswith(".cfg") else name + ".cfg"
    bundled = resources.files("netobs.configs") / fname
    if bundled.is_file():
        return Path(str(bundled))
    raise FileNotFoundError(f"no config file {name!r} (bundled: {', '.join(bundled_names())})")


def load(name: str, seed_overrides: dict | None = None) -> tuple[dict, Path]:
    path = find_config(name)
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError("<file>", f"not valid YAML: {exc}") from None
    if isinstance(raw, dict) and seed_overrides:
        seeds = dict(raw.get("seeds") or {})
        for k, v in seed_overrides.items():
            if k not in SEED_NAMES:
                raise ConfigError(f"seeds.{k}", f"unknown seed; expected one of {', '.join(SEED_NAMES)}")
            seeds[k] = v
        raw["seeds"] = seeds
    return resolve(raw, path.parent), path


def output_dir(cfg: dict, config_path: Path, override: str | None = None) -> Path:
    """``override``, else ``output.directory``, else ``$NETOBS_OUTPUT_DIR/<stem>``, else ``./netobs-output/<stem>``."""
    if override:
        return Path(override)
    if cfg["output"]["directory"]:
        return Path(cfg["output"]["directory"])
    root = os.environ.get(OUTPUT_ENV) or "netobs-output"
    return Path(root) / config_path.stem
