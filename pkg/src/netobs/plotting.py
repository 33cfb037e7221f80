"""Figures for run outputs, drawn with the non-interactive Agg backend.

Figures are a convenience view of the CSV files written next to them; the
CSVs remain the record of a run.
"""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from netobs.assimilate import RELIABLE_LIMIT  # noqa: E402

# no version string or timestamp, so identical data gives identical files
_PNG_META = {"Software": None}


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, dpi=110, metadata=_PNG_META)
    plt.close(fig)
    return path


def plot_kappa(est, labels, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(max(4.0, 0.35 * len(labels)), 3.2))
    observed = set(est.observed)
    colors = ["tab:blue" if k in observed else "tab:orange" for k in range(len(labels))]
    ax.bar(range(len(labels)), est.kappa_hat, yerr=est.std, color=colors, capsize=2)
    ax.set_xticks(range(len(labels)), labels, rotation=90)
    ax.set_yscale("log")
    ax.set_ylabel(r"$\hat\kappa$")
    ax.set_title(f"N = {est.N}, sigma = {est.sigma:g}, {est.n_trials} trials (blue: observed)")
    return _save(fig, path)


def plot_kappa_vs_length(ests: dict, labels, observed, path: Path) -> Path:
    lengths = sorted(ests)
    k = np.array([ests[N].kappa_hat for N in lengths])
    fig, ax = plt.subplots(figsize=(5.5, 3.8))
    for j, lab in enumerate(labels):
        style = "-" if j in observed else "--"
        ax.plot(lengths, k[:, j], style, marker="o", ms=3, label=lab)
    ax.set_yscale("log")
    ax.set_xlabel("trajectory length N")
    ax.set_ylabel(r"$\hat\kappa$")
    ax.legend(fontsize=6, ncol=2 if len(labels) > 10 else 1, loc="best")
    return _save(fig, path)


def plot_subsets(groups, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.2))
    idx = [g.index for g in groups]
    ax.plot(idx, [g.mean_kappa for g in groups], "o--")
    ax.set_xticks(idx, [" ".join(map(str, g.group)) for g in groups], rotation=30, fontsize=7)
    ax.set_yscale("log")
    ax.set_xlabel("observation subset")
    ax.set_ylabel(r"mean $\hat\kappa$")
    return _save(fig, path)


def plot_scan(records, path: Path) -> Path:
    sig = np.array([r.sigma for r in records])
    C = np.array([r.cond_C for r in records])
    k = np.array([r.kappa_hat for r in records])
    ok = np.isfinite(C) & np.isfinite(k) & (k > 0)
    fig, ax = plt.subplots(figsize=(5, 3.8))
    sc = ax.scatter(sig[ok], C[ok], c=np.log10(k[ok]), cmap="viridis", s=8)
    fig.colorbar(sc, ax=ax, label=r"$\log_{10}\hat\kappa$")
    s = np.logspace(np.log10(sig.min()) - 0.5, np.log10(sig.max()) + 0.5, 10)
    ax.plot(s, RELIABLE_LIMIT * s, "k--", lw=1)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel(r"input noise $\sigma$")
    ax.set_ylabel("condition number C")
    return _save(fig, path)


def plot_reconstruction(truth, recon, labels, observed, path: Path, max_panels: int = 4) -> Path:
    unobs = [k for k in range(len(labels)) if k not in set(observed)]
    pick = (list(observed[:1]) + unobs)[:max_panels] or [0]
    fig, axes = plt.subplots(len(pick), 1, figsize=(6, 1.6 * len(pick)), sharex=True, squeeze=False)
    t = truth.t0 + np.arange(truth.N)
    for ax, j in zip(axes[:, 0], pick):
        ax.plot(t, truth.states[:, j], "k-", lw=1, label="truth")
        ax.plot(t, recon.states[:, j], "r:", lw=1, label="reconstruction")
        ax.set_ylabel(labels[j])
    axes[0, 0].legend(fontsize=7)
    axes[-1, 0].set_xlabel("step")
    return _save(fig, path)


def render(kind: str, data: dict, out_dir: Path) -> list[Path]:
    out_dir = Path(out_dir)
    if kind == "kappa":
        return [plot_kappa(data["estimate"], data["labels"], out_dir / "kappa.png")]
    if kind == "kappa_vs_length":
        ests = data["estimates"]
        if not ests:
            return []
        last = ests[max(ests)]
        return [plot_kappa_vs_length(ests, data["labels"], data["observed"], out_dir / "kappa_vs_length.png"),
                plot_kappa(last, data["labels"], out_dir / "kappa.png")]
    if kind == "subset_sweep":
        return [plot_subsets(data["groups"], out_dir / "subsets.png")]
    if kind == "conditioning_scan":
        return [plot_scan(data["records"], out_dir / "scan.png")] if data["records"] else []
    if kind == "reconstruct":
        return [plot_reconstruction(data["truth"], data["recon"], data["labels"], data["observed"],
                                    out_dir / "reconstruction.png")]
    raise ValueError(f"unknown experiment kind {kind!r}")
