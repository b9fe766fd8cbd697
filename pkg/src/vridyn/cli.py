"""Command-line entry point: one subcommand per experiment.

::

    vridyn pes-info                       # coefficients, critical points, VRI, spectrum
    vridyn line-run --h0 0.03 --xi 0.3265  # fates of the line ensemble
    vridyn sweep-surface --h0-grid 0.03 --xi-grid 0.2:0.45:0.0025
    vridyn fate-map --xi 0.5 --grid 512,512
    vridyn sweep-slice --grid 512,512
    vridyn traces --xi 0.3265              # sampled paths
    vridyn stats --xi 0.3265               # exit-angle / momentum statistics
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from importlib.metadata import PackageNotFoundError, version

from . import output as out_mod
from .config import EXPERIMENTS, RunConfig, parse_config, parse_grid_spec
from .ensembles import LineEnsembleSpec, SliceGridSpec, line_count, slice_area
from .exceptions import VridynError
from .experiments import (
    CellStats,
    angle_histogram,
    fate_map,
    recross_fraction_slice,
    run_line_experiment,
    sweep_slice,
    sweep_surface,
    trace_ensemble,
)
from .integrator import Fate
from .pes import (
    Pes,
    bottleneck_width,
    bottleneck_width_rootfind,
    coefficient_residual,
    critical_points,
    locate_vri,
    saddle_eigenvalues,
    vri_residuals,
)

logger = logging.getLogger("vridyn")

__all__ = ["main", "run", "build_parser", "pes_info"]


def _code_version() -> str:
    try:
        return version("artifact")
    except PackageNotFoundError:  # pragma: no cover
        return "unknown"


def pes_info(pes: Pes, h0: float = 0.03) -> dict:
    """Analytic summary of a surface as a JSON-ready dict."""
    vx, vy = locate_vri(pes)
    det, adj = vri_residuals(vx, vy, pes)
    spec = saddle_eigenvalues(pes)
    return {
        "pes": pes.spec.to_dict(),
        "coefficients": pes.coef._asdict(),
        "coefficient_residual": coefficient_residual(pes),
        "critical_points": [
            {
                "x": cp.position[0],
                "y": cp.position[1],
                "energy": cp.energy,
                "kind": cp.kind,
                "hessian_eigenvalues": list(cp.eigenvalues),
                "grad_norm": cp.grad_norm,
            }
            for cp in critical_points(pes)
        ],
        "vri": {
            "x": vx,
            "y": vy,
            "expected_x": pes.spec.vri_x,
            "det_residual": float(det),
            "adjugate_residual": float(adj),
        },
        "spectrum": {
            "closed_form": [complex(v) for v in spec.closed_form],
            "numeric": [complex(v) for v in spec.numeric],
            "max_abs_diff": spec.max_abs_diff,
        },
        "bottleneck": {
            "h0": h0,
            "width": bottleneck_width(pes, h0),
            "width_rootfind": bottleneck_width_rootfind(pes, h0),
            "slice_area": slice_area(pes, h0),
        },
    }


def _counts(cell) -> dict:
    return {
        "N": cell.n,
        "TOP": cell.n_top,
        "BOTTOM": cell.n_bottom,
        "RECROSS": cell.n_recross,
        "TIMEOUT": cell.n_timeout,
        "timeout_flagged": cell.flagged,
    }


def _run_experiment(cfg: RunConfig, od: out_mod.OutputDir, stdout) -> dict:
    """Write data files for ``cfg``; return the experiment part of the manifest."""
    e = cfg.experiment
    icfg = cfg.integrator
    name = e.name

    if name == "pes-info":
        info = pes_info(Pes.from_spec(cfg.pes), e.h0)
        od.json("pes_info.json", info)
        stdout.write(json.dumps(out_mod._jsonable(info), indent=2, sort_keys=True) + "\n")
        return {"grids": {}}

    pes = Pes.from_spec(cfg.pes)

    if name in ("line-run", "stats"):
        exp = run_line_experiment(pes, e.h0, e.density, icfg, cfg.workers)
        counts = _counts(exp.cell)
        if name == "line-run":
            od.csv("fates.csv", out_mod.FATE_RECORD_HEADER, out_mod.fate_rows(exp.batch))
            od.csv("ensemble.csv", out_mod.ENSEMBLE_HEADER, out_mod.ensemble_rows(exp.batch.initial))
            od.json(
                "ensemble.json",
                out_mod.ensemble_sidecar(
                    LineEnsembleSpec(e.h0, e.density),
                    bottleneck_width(pes, e.h0),
                    len(exp.batch),
                    cfg.pes,
                ),
            )
            od.json("summary.json", dict(counts, frac_recross=exp.cell.frac_recross))
        else:
            hist = angle_histogram(exp.stats, e.bin_width)
            od.csv("stats.csv", out_mod.STATS_HEADER, out_mod.stats_rows(exp.stats))
            od.csv("angle_histogram.csv", out_mod.HISTOGRAM_HEADER, out_mod.histogram_rows(hist))
            od.json(
                "angle_summary.json",
                {
                    "n_recross": len(exp.stats),
                    "bin_width_deg": e.bin_width,
                    "modal_bin_deg": hist.modal_bin,
                    "frac_within_30deg": hist.frac_within_30,
                },
            )
        stdout.write(
            f"{name}: H0={e.h0} xi={cfg.pes.vri_x} N={exp.cell.n} "
            f"recross={exp.cell.frac_recross:.4f} top={exp.cell.frac_top:.4f} "
            f"bottom={exp.cell.frac_bottom:.4f} timeout={exp.cell.frac_timeout:.4f}\n"
        )
        return {"grids": {"N": line_count(pes, LineEnsembleSpec(e.h0, e.density))}, "counts": counts}

    if name == "traces":
        tr = trace_ensemble(pes, e.h0, e.density, icfg)
        od.csv("paths.csv", out_mod.PATH_HEADER, out_mod.path_rows(tr))
        od.csv(
            "fates.csv",
            ("traj_id", "y0", "fate", "t_exit"),
            (
                (k, tr.initial[k, 1], Fate(int(f)).label, tr.paths[k][-1, 0])
                for k, f in enumerate(tr.fates)
            ),
        )
        od.csv(
            "recross_series.csv",
            ("traj_id", "t", "px", "py", "p_total", "x", "y"),
            (
                (k, *vals)
                for k in tr.recross_ids()
                for vals in zip(*(tr.component_series(k)[c] for c in ("t", "px", "py", "p_total", "x", "y")))
            ),
        )
        od.json("limiting.json", tr.limiting)
        counts = _counts(CellStats.from_fates(tr.fates))
        stdout.write(f"traces: {len(tr.paths)} paths, limiting={tr.limiting}\n")
        return {"grids": {"N": len(tr.paths)}, "counts": counts}

    if name == "sweep-surface":
        h0s, xis = e.resolved_h0_grid(), e.resolved_xi_grid()
        table = sweep_surface(cfg.pes, h0s, xis, e.density, icfg, cfg.workers)
        od.csv("surface.csv", out_mod.SURFACE_HEADER, out_mod.surface_rows(table))
        peaks = []
        for i, h in enumerate(table.h0):
            j, x = table.row_argmax(i)
            peaks.append(
                {
                    "H0": float(h),
                    "argmax_xi": x,
                    "max_frac_recross": float(table.frac_recross[i, j]),
                    "interior_max": table.has_interior_max(i),
                }
            )
        od.json(
            "peaks.json",
            {"rows": peaks, "errors": {f"{k[0]},{k[1]}": v for k, v in table.errors.items()}},
        )
        stdout.write(f"sweep-surface: {len(h0s)}x{len(xis)} cells, {len(table.errors)} failed\n")
        return {
            "grids": {"h0": list(h0s), "xi": list(xis)},
            "counts": {"cells": int(table.n.size), "failed": len(table.errors), "timeout_flagged": int(table.flagged.sum())},
        }

    if name == "fate-map":
        gspec = SliceGridSpec(e.h0, *e.grid)
        fmap = fate_map(pes, gspec, icfg, cfg.workers)
        od.csv(out_mod.fatemap_name(cfg.pes.vri_x), out_mod.FATEMAP_HEADER, out_mod.fatemap_rows(fmap))
        cell = fmap.counts()
        frac = recross_fraction_slice(fmap)
        od.json(
            "summary.json",
            dict(
                _counts(cell),
                frac_recross=frac,
                slice_area=slice_area(pes, e.h0),
                accessible_area=fmap.grid.accessible_area,
                mirror_symmetric=fmap.is_mirror_symmetric(),
            ),
        )
        stdout.write(f"fate-map: xi={cfg.pes.vri_x} recross={frac:.4f}\n")
        return {"grids": {"n_y": e.grid[0], "n_py": e.grid[1]}, "counts": _counts(cell)}

    if name == "sweep-slice":
        xis = e.resolved_xi_grid()

        def save(fmap):
            od.csv(
                out_mod.fatemap_name(fmap.pes.spec.vri_x),
                out_mod.FATEMAP_HEADER,
                out_mod.fatemap_rows(fmap),
            )

        sw = sweep_slice(cfg.pes, e.h0, xis, e.grid[0], e.grid[1], icfg, cfg.workers, on_map=save)
        od.csv("slice_sweep.csv", out_mod.SLICE_SWEEP_HEADER, out_mod.slice_sweep_rows(sw))
        od.json("fit.json", out_mod.fit_record(sw.fit))
        stdout.write(f"sweep-slice: {len(xis)} maps, quadratic R^2={sw.fit.r2:.4f}\n")
        return {
            "grids": {"xi": list(xis), "n_y": e.grid[0], "n_py": e.grid[1]},
            "counts": {f"{x!r}": _counts(c) for x, c in zip(xis, sw.cells)},
        }

    raise VridynError(f"unknown experiment {name!r}")  # pragma: no cover


def run(cfg: RunConfig, stdout=None) -> int:
    """Execute ``cfg`` and write its artifacts; return a process exit status."""
    stdout = stdout or sys.stdout
    t0 = time.perf_counter()
    try:
        od = out_mod.OutputDir(cfg.out)
        extra = _run_experiment(cfg, od, stdout)
        manifest = {
            "config": cfg.to_dict(),
            "experiment": cfg.experiment.name,
            "code_version": _code_version(),
            "wall_time_s": time.perf_counter() - t0,
            **extra,
        }
        od.finalize(manifest)
    except (VridynError, ValueError, OSError) as exc:
        sys.stderr.write(f"vridyn {cfg.experiment.name}: error: {exc}\n")
        return 1
    return 0


def _grid_pair(text: str) -> tuple[int, int]:
    try:
        ny, npy = (int(t) for t in text.replace("x", ",").split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected NY,NPY, got {text!r}")
    return ny, npy


def _grid_values(text: str) -> tuple[float, ...]:
    try:
        return parse_grid_spec(text)
    except VridynError as exc:
        raise argparse.ArgumentTypeError(str(exc))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vridyn",
        description="Trajectory experiments on a symmetric VRI potential energy surface.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="INI config or a manifest.json to replay")
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument("--workers", type=int, metavar="N", help="worker threads (0 = all cores)")
    common.add_argument("--h0", type=float, help="total energy H0")
    common.add_argument("--xi", type=float, help="x coordinate of the VRI point")
    common.add_argument("--density", type=float, help="line-ensemble trajectories per unit width")
    common.add_argument("--grid", type=_grid_pair, metavar="NY,NPY", help="fate-map resolution")
    common.add_argument("--tmax", type=float, help="integration horizon")
    common.add_argument("--radius", type=float, help="capture radius around the minima")
    common.add_argument("--rtol", type=float)
    common.add_argument("--atol", type=float)
    common.add_argument("--method", choices=("dopri5", "symplectic4"))
    common.add_argument("--step", type=float, help="step size for symplectic4")
    common.add_argument("--h0-grid", type=_grid_values, metavar="SPEC", help="start:stop:step or a,b,c")
    common.add_argument("--xi-grid", type=_grid_values, metavar="SPEC", help="start:stop:step or a,b,c")
    common.add_argument("--bin-width", type=float, help="angle histogram bin width (degrees)")
    common.add_argument("--sample-interval", type=float, help="path sampling interval (traces)")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        sub.add_parser(name, parents=[common])
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    overrides = {
        k: v
        for k, v in vars(args).items()
        if k not in ("command", "config", "verbose") and v is not None
    }
    try:
        cfg = parse_config(args.config, experiment=args.command, overrides=overrides)
    except VridynError as exc:
        sys.stderr.write(f"vridyn {args.command}: error: {exc}\n")
        return 2
    return run(cfg)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
