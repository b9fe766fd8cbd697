"""Ensemble experiments and their summary statistics."""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted, check_X_y, column_or_1d

from .ensembles import (
    LineEnsembleSpec,
    SliceGrid,
    SliceGridSpec,
    line_ensemble,
    slice_area,
    slice_grid,
)
from .exceptions import DomainError, IntegrationStalled, ValidationError, VridynError
from .integrator import (
    BatchResult,
    Fate,
    IntegratorConfig,
    integrate,
    integrate_batch,
)
from .pes import Pes, PesSpec

logger = logging.getLogger(__name__)

__all__ = [
    "INACCESSIBLE",
    "TIMEOUT_FLAG_FRACTION",
    "CellStats",
    "SweepTable",
    "FateMap",
    "RecrossStats",
    "QuadraticFit",
    "QuadraticLaw",
    "LineExperiment",
    "SliceSweep",
    "Traces",
    "AngleHistogram",
    "surface_h0_grid",
    "surface_xi_grid",
    "slice_xi_grid",
    "run_line_experiment",
    "sweep_surface",
    "fate_map",
    "recross_fraction_slice",
    "sweep_slice",
    "quadratic_fit",
    "trace_ensemble",
    "angle_histogram",
    "recross_stats",
]

INACCESSIBLE = -1
#: timeout share above which a run is flagged
TIMEOUT_FLAG_FRACTION = 0.005


def _grid(start: float, stop: float, step: float) -> np.ndarray:
    n = int(round((stop - start) / step)) + 1
    return np.round(start + step * np.arange(n), 10)


def surface_h0_grid() -> np.ndarray:
    """``0.005, 0.006, ..., 0.1``."""
    return _grid(0.005, 0.1, 0.001)


def surface_xi_grid() -> np.ndarray:
    """``0.2, 0.2025, ..., 0.45``."""
    return _grid(0.2, 0.45, 0.0025)


def slice_xi_grid() -> np.ndarray:
    """``0.025, 0.05, ..., 0.7``."""
    return _grid(0.025, 0.7, 0.025)


@dataclass(frozen=True)
class CellStats:
    """Fate tallies for one ensemble."""

    n: int
    n_top: int
    n_bottom: int
    n_recross: int
    n_timeout: int

    @classmethod
    def from_fates(cls, fates: np.ndarray) -> "CellStats":
        c = np.bincount(np.asarray(fates, dtype=np.int64), minlength=4)
        return cls(int(len(fates)), int(c[0]), int(c[1]), int(c[2]), int(c[3]))

    def _frac(self, k: int) -> float:
        return k / self.n if self.n else float("nan")

    @property
    def frac_top(self) -> float:
        return self._frac(self.n_top)

    @property
    def frac_bottom(self) -> float:
        return self._frac(self.n_bottom)

    @property
    def frac_recross(self) -> float:
        return self._frac(self.n_recross)

    @property
    def frac_timeout(self) -> float:
        return self._frac(self.n_timeout)

    @property
    def flagged(self) -> bool:
        return self.frac_timeout > TIMEOUT_FLAG_FRACTION


@dataclass
class SweepTable:
    """Recrossing statistics over an ``(H0, x_i)`` grid.

    Arrays are indexed ``[i_h0, i_xi]``; failed cells hold ``N = 0`` and NaN
    fractions, with the reason in ``errors``.
    """

    h0: np.ndarray
    xi: np.ndarray
    n: np.ndarray
    frac_recross: np.ndarray
    frac_top: np.ndarray
    frac_bottom: np.ndarray
    frac_timeout: np.ndarray
    errors: dict = field(default_factory=dict)

    @classmethod
    def empty(cls, h0: Sequence[float], xi: Sequence[float]) -> "SweepTable":
        h0, xi = np.asarray(h0, dtype=float), np.asarray(xi, dtype=float)
        shape = (h0.size, xi.size)
        nan = lambda: np.full(shape, np.nan)  # noqa: E731
        return cls(h0, xi, np.zeros(shape, dtype=np.int64), nan(), nan(), nan(), nan())

    def set_cell(self, i: int, j: int, cell: CellStats) -> None:
        self.n[i, j] = cell.n
        self.frac_recross[i, j] = cell.frac_recross
        self.frac_top[i, j] = cell.frac_top
        self.frac_bottom[i, j] = cell.frac_bottom
        self.frac_timeout[i, j] = cell.frac_timeout

    def row_argmax(self, i: int) -> tuple[int, float]:
        """Index and ``x_i`` of the largest recrossing fraction in row ``i``."""
        j = int(np.nanargmax(self.frac_recross[i]))
        return j, float(self.xi[j])

    def has_interior_max(self, i: int) -> bool:
        row = self.frac_recross[i]
        j = int(np.nanargmax(row))
        return bool(0 < j < row.size - 1 and row[j] > row[0] and row[j] > row[-1])

    @property
    def flagged(self) -> np.ndarray:
        return self.frac_timeout > TIMEOUT_FLAG_FRACTION

    def rows(self) -> Iterable[tuple]:
        for i, h in enumerate(self.h0):
            for j, x in enumerate(self.xi):
                yield (
                    float(h),
                    float(x),
                    int(self.n[i, j]),
                    float(self.frac_recross[i, j]),
                    float(self.frac_top[i, j]),
                    float(self.frac_bottom[i, j]),
                    float(self.frac_timeout[i, j]),
                )


@dataclass
class RecrossStats:
    """Exit statistics of the recrossing members of a line ensemble."""

    traj_id: np.ndarray
    y0: np.ndarray
    theta_deg: np.ndarray
    rel_dpx: np.ndarray
    abs_dpy: np.ndarray
    rel_dp_total: np.ndarray
    t_exit: np.ndarray

    def __len__(self) -> int:
        return len(self.traj_id)

    @property
    def theta_dev_deg(self) -> np.ndarray:
        """Deviation of the exit direction from the ``-x`` axis."""
        return 180.0 - self.theta_deg


def recross_stats(batch: BatchResult) -> RecrossStats:
    idx = np.flatnonzero(batch.fates == Fate.RECROSS)
    init = batch.initial[idx]
    ex = batch.exits[idx]
    px0, py0 = init[:, 2], init[:, 3]
    px1, py1 = ex[:, 3], ex[:, 4]
    theta = np.degrees(np.arctan2(py1, px1)) % 360.0
    p0 = np.hypot(px0, py0)
    p1 = np.hypot(px1, py1)
    with np.errstate(divide="ignore", invalid="ignore"):
        rel_dpx = np.where(px0 != 0, (px1 - px0) / px0, np.nan)
        rel_dp = np.where(p0 != 0, (p1 - p0) / p0, np.nan)
    return RecrossStats(
        traj_id=idx,
        y0=init[:, 1].copy(),
        theta_deg=theta,
        rel_dpx=rel_dpx,
        abs_dpy=np.abs(py1 - py0),
        rel_dp_total=rel_dp,
        t_exit=ex[:, 0] - init[:, 4],
    )


@dataclass
class LineExperiment:
    pes: Pes
    h0: float
    density: float
    cell: CellStats
    stats: RecrossStats
    batch: BatchResult


def run_line_experiment(
    pes: Pes,
    h0: float,
    density: float = 500.0,
    cfg: IntegratorConfig | None = None,
    workers: int | None = 1,
) -> LineExperiment:
    """Integrate the line ensemble at ``h0`` and tally fates."""
    states = line_ensemble(LineEnsembleSpec(h0, density), pes)
    batch = integrate_batch(states, pes, cfg, workers=workers)
    cell = CellStats.from_fates(batch.fates)
    if cell.flagged:
        logger.warning(
            "timeout fraction %.4f above %.3f at H0=%g, xi=%g",
            cell.frac_timeout,
            TIMEOUT_FLAG_FRACTION,
            h0,
            pes.spec.vri_x,
        )
    return LineExperiment(pes, h0, density, cell, recross_stats(batch), batch)


def sweep_surface(
    base: PesSpec | None = None,
    h0_grid: Sequence[float] | None = None,
    xi_grid: Sequence[float] | None = None,
    density: float = 500.0,
    cfg: IntegratorConfig | None = None,
    workers: int | None = 1,
    progress: Callable[[int, int], None] | None = None,
) -> SweepTable:
    """Recrossing fraction of the line ensemble over ``(H0, x_i)``.

    Coefficients are re-solved for every ``x_i``.  A failing cell is recorded
    in ``table.errors`` and the sweep continues.
    """
    base = base or PesSpec()
    h0_grid = surface_h0_grid() if h0_grid is None else h0_grid
    xi_grid = surface_xi_grid() if xi_grid is None else xi_grid
    table = SweepTable.empty(h0_grid, xi_grid)
    total = table.h0.size * table.xi.size
    done = 0
    for j, xi in enumerate(table.xi):
        try:
            pes = Pes.from_spec(base, vri_x=float(xi))
        except VridynError as exc:
            for i, h0 in enumerate(table.h0):
                table.errors[(float(h0), float(xi))] = str(exc)
            done += table.h0.size
            continue
        for i, h0 in enumerate(table.h0):
            try:
                exp = run_line_experiment(pes, float(h0), density, cfg, workers)
                table.set_cell(i, j, exp.cell)
            except (VridynError, ValueError) as exc:
                logger.error("cell H0=%g xi=%g failed: %s", h0, xi, exc)
                table.errors[(float(h0), float(xi))] = str(exc)
            done += 1
            if progress is not None:
                progress(done, total)
    return table


@dataclass
class FateMap:
    """Per-cell fates on the ``(y, p_y)`` slice; ``INACCESSIBLE`` marks empty cells."""

    grid: SliceGrid
    labels: np.ndarray
    pes: Pes
    max_energy_drift: float = 0.0

    @property
    def spec(self) -> SliceGridSpec:
        return self.grid.spec

    def counts(self) -> CellStats:
        return CellStats.from_fates(self.labels[self.grid.mask])

    def is_mirror_symmetric(self) -> bool:
        """Check ``(y, p_y) -> (-y, -p_y)`` with TOP and BOTTOM exchanged."""
        flipped = self.labels[::-1, ::-1]
        swapped = flipped.copy()
        swapped[flipped == Fate.TOP_WELL] = Fate.BOTTOM_WELL
        swapped[flipped == Fate.BOTTOM_WELL] = Fate.TOP_WELL
        return bool(np.array_equal(self.labels, swapped))


def fate_map(
    pes: Pes,
    grid_spec: SliceGridSpec,
    cfg: IntegratorConfig | None = None,
    workers: int | None = 1,
) -> FateMap:
    grid = slice_grid(grid_spec, pes)
    try:
        batch = integrate_batch(grid.states, pes, cfg, workers=workers)
    except IntegrationStalled as exc:
        iy, ipy = grid.index[exc.traj_id]
        raise IntegrationStalled(exc.state, traj_id=(int(iy), int(ipy))) from exc
    labels = np.full(grid.mask.shape, INACCESSIBLE, dtype=np.int8)
    labels[grid.index[:, 0], grid.index[:, 1]] = batch.fates
    drift = float(batch.drifts.max()) if len(batch) else 0.0
    return FateMap(grid=grid, labels=labels, pes=pes, max_energy_drift=drift)


def recross_fraction_slice(fmap: FateMap) -> float:
    """Recrossing share of the accessible slice area (cells are equal-area)."""
    n_acc = int(fmap.grid.mask.sum())
    if n_acc == 0:
        raise DomainError("fate map has no accessible cells")
    return int(np.sum(fmap.labels == Fate.RECROSS)) / n_acc


# --- quadratic law -----------------------------------------------------------


@dataclass(frozen=True)
class QuadraticFit:
    """Least-squares parabola ``a x^2 + b x + c``."""

    a: float
    b: float
    c: float
    residuals: np.ndarray
    r2: float

    @property
    def coefficients(self) -> tuple[float, float, float]:
        return self.a, self.b, self.c

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return (self.a * x + self.b) * x + self.c


def quadratic_fit(xs, ys) -> QuadraticFit:
    """Ordinary least squares on the Vandermonde design ``[x^2, x, 1]``.

    ``R^2 = 1 - SS_res / SS_tot`` with a mean-centred ``SS_tot``; a constant
    response gives ``R^2 = 1`` when fitted to rounding accuracy.
    """
    xs = np.asarray(xs, dtype=float).ravel()
    ys = np.asarray(ys, dtype=float).ravel()
    if xs.shape != ys.shape:
        raise ValidationError(f"xs and ys differ in length: {xs.size} vs {ys.size}")
    if np.unique(xs).size < 3:
        raise ValidationError("quadratic fit needs at least 3 distinct abscissae")
    design = np.vander(xs, 3)
    coef, _, rank, _ = np.linalg.lstsq(design, ys, rcond=None)
    if rank < 3:
        raise ValidationError("rank-deficient design matrix")
    resid = ys - design @ coef
    ss_res = float(resid @ resid)
    centred = ys - ys.mean()
    ss_tot = float(centred @ centred)
    scale = max(1.0, float(np.max(np.abs(ys))))
    if ss_tot > (1e-12 * scale) ** 2 * ys.size:
        r2 = 1.0 - ss_res / ss_tot
    else:
        # constant response: perfect unless the residuals exceed rounding noise
        r2 = 1.0 if float(np.max(np.abs(resid))) <= 1e-12 * scale else 0.0
    return QuadraticFit(float(coef[0]), float(coef[1]), float(coef[2]), resid, r2)


class QuadraticLaw(RegressorMixin, BaseEstimator):
    """Regressor form of :func:`quadratic_fit` (single feature)."""

    def fit(self, X, y):
        X, y = check_X_y(X, y, ensure_min_samples=3, y_numeric=True)
        if X.shape[1] != 1:
            raise ValueError(f"QuadraticLaw takes one feature, got {X.shape[1]}")
        self.fit_ = quadratic_fit(X[:, 0], y)
        self.coef_ = np.array(self.fit_.coefficients)
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        check_is_fitted(self, "fit_")
        X = np.asarray(X, dtype=float)
        x = column_or_1d(X[:, 0] if X.ndim == 2 else X)
        return self.fit_(x)


# --- slice sweep --------------------------------------------------------------


@dataclass
class SliceSweep:
    h0: float
    xi: np.ndarray
    cells: list
    frac_recross: np.ndarray
    frac_top: np.ndarray
    frac_bottom: np.ndarray
    frac_timeout: np.ndarray
    areas: np.ndarray
    fit: QuadraticFit
    maps: list = field(default_factory=list, repr=False)


def sweep_slice(
    base: PesSpec | None = None,
    h0: float = 0.03,
    xi_grid: Sequence[float] | None = None,
    n_y: int = 1024,
    n_py: int = 1024,
    cfg: IntegratorConfig | None = None,
    workers: int | None = 1,
    keep_maps: bool = False,
    on_map: Callable[[FateMap], None] | None = None,
) -> SliceSweep:
    """Fate maps over ``x_i`` at fixed ``h0`` plus a quadratic fit of the
    recrossing fraction against ``x_i``."""
    base = base or PesSpec()
    xi = np.asarray(slice_xi_grid() if xi_grid is None else xi_grid, dtype=float)
    cells, areas, maps = [], [], []
    for x in xi:
        pes = Pes.from_spec(base, vri_x=float(x))
        fmap = fate_map(pes, SliceGridSpec(h0, n_y, n_py), cfg, workers)
        cells.append(fmap.counts())
        areas.append(slice_area(pes, h0))
        if on_map is not None:
            on_map(fmap)
        if keep_maps:
            maps.append(fmap)
        logger.info("slice xi=%g recross=%.4f", x, cells[-1].frac_recross)
    frac_r = np.array([c.frac_recross for c in cells])
    return SliceSweep(
        h0=h0,
        xi=xi,
        cells=cells,
        frac_recross=frac_r,
        frac_top=np.array([c.frac_top for c in cells]),
        frac_bottom=np.array([c.frac_bottom for c in cells]),
        frac_timeout=np.array([c.frac_timeout for c in cells]),
        areas=np.array(areas),
        fit=quadratic_fit(xi, frac_r),
        maps=maps,
    )


# --- traces and angle statistics ---------------------------------------------


@dataclass
class Traces:
    """Sampled paths of a line ensemble.

    ``paths[k]`` has rows ``(t, x, y, px, py)`` and ends on the exit state.
    ``limiting`` maps ``"upper"``/``"lower"`` to the recrossing trajectory
    with the latest exit in that half of the line (``None`` if absent).
    """

    pes: Pes
    h0: float
    initial: np.ndarray
    fates: np.ndarray
    paths: list
    limiting: dict

    def recross_ids(self) -> np.ndarray:
        return np.flatnonzero(self.fates == Fate.RECROSS)

    def component_series(self, k: int) -> dict[str, np.ndarray]:
        p = self.paths[k]
        return {
            "t": p[:, 0],
            "px": p[:, 3],
            "py": p[:, 4],
            "p_total": np.hypot(p[:, 3], p[:, 4]),
            "x": p[:, 1],
            "y": p[:, 2],
        }


def trace_ensemble(
    pes: Pes,
    h0: float,
    density: float = 500.0,
    cfg: IntegratorConfig | None = None,
) -> Traces:
    cfg = cfg or IntegratorConfig(sample_interval=0.01)
    if not cfg.sample_interval > 0:
        cfg = dataclasses.replace(cfg, sample_interval=0.01)
    states = line_ensemble(LineEnsembleSpec(h0, density), pes)
    paths, fates, t_exit = [], [], []
    for k, s in enumerate(states):
        try:
            res = integrate(s, pes, cfg)
        except IntegrationStalled as exc:
            raise IntegrationStalled(exc.state, traj_id=k) from exc
        paths.append(res.path)
        fates.append(int(res.fate))
        t_exit.append(res.elapsed)
    fates = np.array(fates, dtype=np.int8)
    t_exit = np.array(t_exit)
    limiting = {}
    for name, sel in (("upper", states[:, 1] > 0), ("lower", states[:, 1] < 0)):
        cand = np.flatnonzero(sel & (fates == Fate.RECROSS))
        limiting[name] = int(cand[np.argmax(t_exit[cand])]) if cand.size else None
    return Traces(pes, h0, states, fates, paths, limiting)


@dataclass
class AngleHistogram:
    """Counts of exit-angle deviations in bins centred on multiples of the width."""

    edges: np.ndarray
    counts: np.ndarray
    frac_within_30: float

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    @property
    def modal_bin(self) -> tuple[float, float] | None:
        if self.counts.sum() == 0:
            return None
        k = int(np.argmax(self.counts))
        return float(self.edges[k]), float(self.edges[k + 1])

    def modal_contains(self, value: float) -> bool:
        b = self.modal_bin
        return b is not None and b[0] <= value < b[1]


def angle_histogram(stats: RecrossStats, bin_width_deg: float = 10.0) -> AngleHistogram:
    if not bin_width_deg > 0:
        raise ValidationError(f"bin width must be > 0, got {bin_width_deg!r}")
    k = math.ceil(90.0 / bin_width_deg - 0.5)
    edges = (np.arange(-k, k + 2) - 0.5) * bin_width_deg
    dev = stats.theta_dev_deg
    counts = np.histogram(dev, bins=edges)[0] if dev.size else np.zeros(edges.size - 1, int)
    within = float(np.mean(np.abs(dev) <= 30.0)) if dev.size else float("nan")
    return AngleHistogram(edges=edges, counts=counts, frac_within_30=within)
