"""CSV/JSON writers with deterministic formatting and atomic finalisation.

Floats are written with ``repr`` (shortest round-trip, always ``.`` as the
decimal mark), so identical inputs give byte-identical files.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .ensembles import LineEnsembleSpec
from .experiments import (
    INACCESSIBLE,
    AngleHistogram,
    FateMap,
    QuadraticFit,
    RecrossStats,
    SliceSweep,
    SweepTable,
    Traces,
)
from .integrator import BatchResult, Fate

__all__ = [
    "PARTIAL_SUFFIX",
    "OutputDir",
    "fmt",
    "sha256",
    "fate_label",
    "write_csv",
    "write_json",
]

PARTIAL_SUFFIX = ".partial"

FATE_RECORD_HEADER = ("traj_id", "fate", "t_exit", "x", "y", "px", "py", "energy_drift")
PATH_HEADER = ("traj_id", "t", "x", "y", "px", "py")
ENSEMBLE_HEADER = ("traj_id", "y0", "py0", "px0")
SURFACE_HEADER = ("H0", "xi", "N", "frac_recross", "frac_top", "frac_bottom", "frac_timeout")
FATEMAP_HEADER = ("iy", "ipy", "y", "py", "fate")
SLICE_SWEEP_HEADER = (
    "xi",
    "frac_recross",
    "frac_top",
    "frac_bottom",
    "frac_timeout",
    "slice_area",
)
STATS_HEADER = (
    "traj_id",
    "y0",
    "theta_dev_deg",
    "rel_dpx",
    "abs_dpy",
    "rel_dp_total",
    "t_exit",
)
HISTOGRAM_HEADER = ("bin_lo_deg", "bin_hi_deg", "count")


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return str(v)


def fate_label(code: int) -> str:
    return "INACCESSIBLE" if code == INACCESSIBLE else Fate(int(code)).label


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    return obj


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def write_json(path: Path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


class OutputDir:
    """Collects data files under ``.partial`` names until :meth:`finalize`.

    ``finalize`` renames every file to its final name and then writes
    ``manifest.json``; a run that dies earlier leaves only ``.partial``
    files and no manifest.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._pending: list[str] = []
        stale = self.root / "manifest.json"
        if stale.exists():
            stale.unlink()

    def _partial(self, name: str) -> Path:
        self._pending.append(name)
        return self.root / (name + PARTIAL_SUFFIX)

    def csv(self, name: str, header, rows) -> None:
        write_csv(self._partial(name), header, rows)

    def json(self, name: str, obj) -> None:
        write_json(self._partial(name), obj)

    def finalize(self, manifest: dict) -> dict[str, str]:
        hashes = {}
        for name in self._pending:
            final = self.root / name
            (self.root / (name + PARTIAL_SUFFIX)).replace(final)
            hashes[name] = sha256(final)
        manifest = dict(manifest, files=hashes)
        write_json(self.root / "manifest.json", manifest)
        return hashes


# --- row generators -----------------------------------------------------------


def fate_rows(batch: BatchResult):
    for k in range(len(batch)):
        e = batch.exits[k]
        yield (
            k,
            Fate(int(batch.fates[k])).label,
            e[0],
            e[1],
            e[2],
            e[3],
            e[4],
            batch.drifts[k],
        )


def ensemble_rows(states: np.ndarray):
    for k, s in enumerate(states):
        yield (k, s[1], s[3], s[2])


def ensemble_sidecar(spec: LineEnsembleSpec, width: float, n: int, pes_spec) -> dict:
    return {
        "spec": {"h0": spec.h0, "density": spec.density},
        "pes": pes_spec.to_dict(),
        "W": width,
        "N": n,
    }


def path_rows(traces: Traces):
    for k, path in enumerate(traces.paths):
        for row in path:
            yield (k, row[0], row[1], row[2], row[3], row[4])


def surface_rows(table: SweepTable):
    return table.rows()


def fatemap_rows(fmap: FateMap):
    y, py, labels = fmap.grid.y, fmap.grid.py, fmap.labels
    for iy in range(labels.shape[0]):
        for ipy in range(labels.shape[1]):
            yield (iy, ipy, y[iy], py[ipy], fate_label(labels[iy, ipy]))


def slice_sweep_rows(sweep: SliceSweep):
    for k, x in enumerate(sweep.xi):
        yield (
            x,
            sweep.frac_recross[k],
            sweep.frac_top[k],
            sweep.frac_bottom[k],
            sweep.frac_timeout[k],
            sweep.areas[k],
        )


def fit_record(fit: QuadraticFit) -> dict:
    return {"a": fit.a, "b": fit.b, "c": fit.c, "r2": fit.r2, "residuals": list(fit.residuals)}


def stats_rows(stats: RecrossStats):
    dev = stats.theta_dev_deg
    for k in range(len(stats)):
        yield (
            stats.traj_id[k],
            stats.y0[k],
            dev[k],
            stats.rel_dpx[k],
            stats.abs_dpy[k],
            stats.rel_dp_total[k],
            stats.t_exit[k],
        )


def histogram_rows(hist: AngleHistogram):
    for k, c in enumerate(hist.counts):
        yield (hist.edges[k], hist.edges[k + 1], int(c))


def fatemap_name(xi: float) -> str:
    return f"fatemap_xi{float(xi):.4f}.csv"
