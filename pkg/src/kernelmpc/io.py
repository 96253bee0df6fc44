"""Export helpers: diff-stable CSV files and JSON manifests.

All floats are written with 17 significant digits so identical configurations
produce byte-identical files; manifests carry the package version and a
SHA-256 digest of the canonicalized configuration for provenance.
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from . import __version__

__all__ = [
    "fmt",
    "config_digest",
    "write_manifest",
    "write_surface_csv",
    "write_kinks_csv",
    "write_run_csv",
    "write_table_csv",
    "write_probe_csv",
]


def fmt(v) -> str:
    """Full-precision decimal rendering of a float (17 significant digits)."""
    return f"{float(v):.17g}"


def config_digest(config: dict) -> str:
    """SHA-256 of the configuration in a canonical JSON encoding."""
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def _file_digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(out_dir, command: str, config: dict, outputs, extra: dict | None = None) -> Path:
    """Write <out_dir>/manifest.json naming version, config hash and outputs."""
    out_dir = Path(out_dir)
    doc = {
        "version": __version__,
        "command": command,
        "config_sha256": config_digest(config),
        "config": config,
        "outputs": {Path(p).name: _file_digest(Path(p)) for p in outputs},
    }
    if extra:
        doc.update(extra)
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


def write_surface_csv(path, kernel) -> Path:
    """Barrier-curve samples of a fitted kernel: one row per (curve, sample),
    with family tag, curve parameter, state and costate."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["family", "tangent_speed", "t", "x1", "x2", "x3", "x4",
                    "l1", "l2", "l3", "l4"])
        for curve in kernel.curves_:
            v = curve.tangent_point[3]
            for t, x, lam in zip(curve.times, curve.states, curve.costates):
                w.writerow([curve.family.name, fmt(v), fmt(t),
                            *(fmt(c) for c in x), *(fmt(c) for c in lam)])
    return path


def write_kinks_csv(path, kernel) -> Path:
    """Kink states of a fitted kernel (one per traced curve)."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["family", "x1", "x2", "x3", "x4"])
        for curve, kink in zip(kernel.curves_, kernel.kinks_):
            w.writerow([curve.family.name, *(fmt(c) for c in kink)])
    return path


def write_run_csv(path, run) -> Path:
    """Closed-loop record: per sampling instant the state, the applied input
    and the horizon-optimal value (empty on the terminal row)."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "x1", "x2", "x3", "x4", "u1", "u2", "value"])
        n = run.n_steps
        for k, (t, x) in enumerate(zip(run.times, run.states)):
            if k < n:
                tail = [fmt(run.inputs[k, 0]), fmt(run.inputs[k, 1]), fmt(run.values[k])]
            else:
                tail = ["", "", ""]
            w.writerow([fmt(t), *(fmt(c) for c in x), *tail])
    return path


def write_table_csv(path, report: dict) -> Path:
    """Horizon-table layout: parameter rows over the swept states, then one
    minimal-horizon row per cost kind ('' marks scan-bound exhaustion)."""
    path = Path(path)
    entries = report["entries"]
    kinds = []
    for e in entries:
        if e["cost"] not in kinds:
            kinds.append(e["cost"])
    by_kind = {k: [e for e in entries if e["cost"] == k] for k in kinds}
    first = by_kind[kinds[0]]
    x0s = np.array([e["x0"] for e in first])
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        for i in range(4):
            if np.any(x0s[:, i] != 0.0) or i == 0:
                w.writerow([f"x0_{i + 1}", *(fmt(v) for v in x0s[:, i])])
        for kind in kinds:
            row = [f"n_hat_{kind}"]
            for e in by_kind[kind]:
                row.append("" if e["n_hat"] is None else str(e["n_hat"]))
            w.writerow(row)
    return path


def write_probe_csv(path, states, step_counts, dt, ratios) -> Path:
    """Cost-controllability ratios: rows are states, columns horizons."""
    path = Path(path)
    ratios = np.asarray(ratios)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x1", "x2", "x3", "x4",
                    *(f"ratio_T={fmt(n * dt)}" for n in step_counts)])
        for x, row in zip(np.atleast_2d(states), ratios):
            w.writerow([*(fmt(c) for c in x), *(fmt(r) for r in row)])
    return path
