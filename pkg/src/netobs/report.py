"""CSV and manifest writers.

Every CSV starts with a block of ``# key: value`` lines describing the run,
followed by a header row. Floats are written with ``repr`` so files are
reproducible byte for byte and round-trip exactly.
"""
from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np
import yaml


def fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if value is None:
        return ""
    return str(value)


def meta_value(value) -> str:
    if isinstance(value, (dict, list, tuple)):
        return json.dumps(value, sort_keys=True, separators=(",", ":"))
    return fmt(value)


def write_csv(path: Path, meta: dict, header: list[str], rows) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        for key, value in meta.items():
            fh.write(f"# {key}: {meta_value(value)}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def read_csv(path: Path) -> tuple[dict, list[dict]]:
    """Inverse of :func:`write_csv`; values are returned as strings."""
    meta, lines = {}, []
    with open(path) as fh:
        for line in fh:
            if line.startswith("# "):
                key, _, value = line[2:].rstrip("\n").partition(": ")
                meta[key] = value
            else:
                lines.append(line)
    return meta, list(csv.DictReader(lines))


def sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(path: Path, record: dict, outputs: list[Path]) -> Path:
    """YAML manifest: ``record`` plus a checksum for each output file."""
    doc = dict(record)
    doc["outputs"] = [{"file": Path(p).name, "sha256": sha256(p)} for p in outputs]
    with open(path, "w", newline="") as fh:
        yaml.safe_dump(doc, fh, sort_keys=False, default_flow_style=None, width=100)
    return Path(path)
