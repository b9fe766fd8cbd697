"""Trajectory integration with fate classification.

A trajectory launched near the high saddle ends in one of four ways: captured
by a disc of radius ``R`` around the top or bottom minimum, crossing back over
``x = 0`` with ``p_x < 0`` (after first moving past ``x = X_ENTRY_MIN``), or
running out of time.
"""

from __future__ import annotations

import enum
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import _kernels as K
from ._tolerances import X_ENTRY_MIN
from .exceptions import IntegrationStalled, ValidationError
from .pes import Pes, gradient, potential

__all__ = [
    "State",
    "Fate",
    "IntegratorConfig",
    "TrajectoryResult",
    "BatchResult",
    "hamiltonian",
    "vector_field",
    "integrate",
    "integrate_batch",
    "energy_drift",
    "mirror",
]


class State(NamedTuple):
    x: float
    y: float
    px: float
    py: float
    t: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array(self, dtype=np.float64)


def mirror(s: State) -> State:
    """Reflect through the symmetry axis: ``(y, p_y) -> (-y, -p_y)``."""
    return State(s.x, -s.y, s.px, -s.py, s.t)


class Fate(enum.IntEnum):
    TOP_WELL = K.TOP_WELL
    BOTTOM_WELL = K.BOTTOM_WELL
    RECROSS = K.RECROSS
    TIMEOUT = K.TIMEOUT

    @property
    def label(self) -> str:
        return _LABELS[self]

    def swapped(self) -> "Fate":
        if self is Fate.TOP_WELL:
            return Fate.BOTTOM_WELL
        if self is Fate.BOTTOM_WELL:
            return Fate.TOP_WELL
        return self


_LABELS = {
    Fate.TOP_WELL: "TOP",
    Fate.BOTTOM_WELL: "BOTTOM",
    Fate.RECROSS: "RECROSS",
    Fate.TIMEOUT: "TIMEOUT",
}

METHODS = {"dopri5": K.METHOD_DOPRI5, "symplectic4": K.METHOD_SYMPLECTIC4}


@dataclass(frozen=True)
class IntegratorConfig:
    """Integration settings.

    ``method`` is ``"dopri5"`` (adaptive Dormand-Prince 5(4) with dense
    output, the default) or ``"symplectic4"`` (fixed-step 4th-order
    splitting, uses ``step_size``).  ``sample_interval = 0`` disables path
    recording.
    """

    method: str = "dopri5"
    rtol: float = 1e-11
    atol: float = 1e-12
    step_size: float = 1e-3
    t_max: float = 200.0
    capture_radius: float = 0.2
    sample_interval: float = 0.0
    x_entry_min: float = X_ENTRY_MIN

    def validate(self) -> "IntegratorConfig":
        if self.method not in METHODS:
            raise ValidationError(f"method must be one of {sorted(METHODS)}, got {self.method!r}")
        for name in ("rtol", "atol", "step_size", "t_max", "capture_radius"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValidationError(f"{name} must be a positive finite number, got {v!r}")
        if not (np.isfinite(self.sample_interval) and self.sample_interval >= 0):
            raise ValidationError(f"sample_interval must be >= 0, got {self.sample_interval!r}")
        if not self.x_entry_min >= 0:
            raise ValidationError(f"x_entry_min must be >= 0, got {self.x_entry_min!r}")
        return self

    def tightened(self, factor: float = 0.5) -> "IntegratorConfig":
        """Same settings with tolerances (or step) scaled by ``factor``."""
        from dataclasses import replace

        return replace(
            self,
            rtol=self.rtol * factor,
            atol=self.atol * factor,
            step_size=self.step_size * factor,
        )

    def to_dict(self) -> dict:
        from dataclasses import asdict

        return asdict(self)


@dataclass
class TrajectoryResult:
    fate: Fate
    exit_state: State
    initial_state: State
    max_energy_drift: float
    n_steps: int
    path: np.ndarray | None = field(default=None, repr=False)

    @property
    def elapsed(self) -> float:
        return self.exit_state.t - self.initial_state.t


def hamiltonian(s, pes: Pes):
    """Kinetic plus potential energy; ``s`` may be a State or an ``(..., >=4)`` array."""
    arr = np.asarray(s, dtype=float)
    x, y, px, py = arr[..., 0], arr[..., 1], arr[..., 2], arr[..., 3]
    m1, m2 = pes.spec.mass_x, pes.spec.mass_y
    return px * px / (2.0 * m1) + py * py / (2.0 * m2) + potential(x, y, pes)


def vector_field(s, pes: Pes) -> np.ndarray:
    """Time derivative ``(dx, dy, dpx, dpy)`` of Hamilton's equations."""
    arr = np.asarray(s, dtype=float)
    x, y, px, py = arr[..., 0], arr[..., 1], arr[..., 2], arr[..., 3]
    vx, vy = gradient(x, y, pes)
    return np.stack([px / pes.spec.mass_x, py / pes.spec.mass_y, -vx, -vy], axis=-1)


def _path_capacity(cfg: IntegratorConfig) -> int:
    if cfg.sample_interval <= 0:
        return 1
    return int(math.ceil(cfg.t_max / cfg.sample_interval)) + 3


def integrate(s0: State, pes: Pes, cfg: IntegratorConfig | None = None) -> TrajectoryResult:
    """Integrate one trajectory until its fate is decided.

    Raises
    ------
    IntegrationStalled
        If the adaptive step underflows.
    """
    cfg = (cfg or IntegratorConfig()).validate()
    s0 = State(*s0)
    path = np.empty((_path_capacity(cfg), 5))
    fate, ex, drift, n_steps, n_path = K._integrate_one(
        s0.as_array()[:4],
        float(s0.t),
        pes.params,
        METHODS[cfg.method],
        cfg.rtol,
        cfg.atol,
        cfg.step_size,
        cfg.t_max,
        cfg.capture_radius,
        cfg.x_entry_min,
        cfg.sample_interval,
        path,
    )
    exit_state = State(float(ex[1]), float(ex[2]), float(ex[3]), float(ex[4]), float(ex[0]))
    if fate == K.STALLED:
        raise IntegrationStalled(exit_state)
    return TrajectoryResult(
        fate=Fate(fate),
        exit_state=exit_state,
        initial_state=s0,
        max_energy_drift=float(drift),
        n_steps=int(n_steps),
        path=path[:n_path].copy() if cfg.sample_interval > 0 else None,
    )


def energy_drift(result: TrajectoryResult) -> float:
    """Largest ``|H(t) - H(0)|`` seen over the accepted steps."""
    return result.max_energy_drift


@dataclass
class BatchResult:
    """Column-oriented results for an ensemble, in input order."""

    initial: np.ndarray  # (n, 5) rows x, y, px, py, t
    fates: np.ndarray  # (n,) int8 Fate codes
    exits: np.ndarray  # (n, 5) rows t, x, y, px, py
    drifts: np.ndarray
    n_steps: np.ndarray

    def __len__(self) -> int:
        return len(self.fates)

    def counts(self) -> dict[Fate, int]:
        c = np.bincount(self.fates, minlength=4)
        return {f: int(c[f]) for f in Fate}

    def fractions(self) -> dict[Fate, float]:
        n = len(self)
        return {f: (c / n if n else float("nan")) for f, c in self.counts().items()}

    def result(self, i: int) -> TrajectoryResult:
        e = self.exits[i]
        return TrajectoryResult(
            fate=Fate(int(self.fates[i])),
            exit_state=State(e[1], e[2], e[3], e[4], e[0]),
            initial_state=State(*self.initial[i]),
            max_energy_drift=float(self.drifts[i]),
            n_steps=int(self.n_steps[i]),
        )


def resolve_workers(workers: int | None) -> int:
    """``0``/``None`` means one worker per CPU."""
    if not workers:
        return os.cpu_count() or 1
    if workers < 0:
        raise ValidationError(f"workers must be >= 0, got {workers!r}")
    return int(workers)


def as_state_array(states) -> np.ndarray:
    """Coerce states to a contiguous ``(n, 5)`` float array (``t`` defaults to 0)."""
    arr = np.asarray(states, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.shape[1] == 4:
        arr = np.column_stack([arr, np.zeros(len(arr))])
    if arr.ndim != 2 or arr.shape[1] != 5:
        raise ValueError(f"states must have 4 or 5 columns, got shape {arr.shape}")
    return np.ascontiguousarray(arr)


def integrate_batch(
    states, pes: Pes, cfg: IntegratorConfig | None = None, workers: int | None = None
) -> BatchResult:
    """Integrate many initial states in parallel.

    Output order follows input order; every trajectory is independent so
    results are identical for any ``workers``.

    Raises
    ------
    IntegrationStalled
        For the first (lowest index) stalled trajectory, with its index.
    """
    cfg = (cfg or IntegratorConfig()).validate()
    arr = as_state_array(states)
    params = pes.params
    args = (
        METHODS[cfg.method],
        cfg.rtol,
        cfg.atol,
        cfg.step_size,
        cfg.t_max,
        cfg.capture_radius,
        cfg.x_entry_min,
    )
    n_workers = min(resolve_workers(workers), max(1, len(arr)))
    if n_workers == 1:
        fates, exits, drifts, steps = K.integrate_batch(arr, params, *args)
    else:
        chunks = np.array_split(arr, n_workers * 4)
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            parts = list(pool.map(lambda c: K.integrate_batch(c, params, *args), chunks))
        fates, exits, drifts, steps = (np.concatenate(col) for col in zip(*parts))
    stalled = np.flatnonzero(fates == K.STALLED)
    if stalled.size:
        i = int(stalled[0])
        e = exits[i]
        raise IntegrationStalled(State(e[1], e[2], e[3], e[4], e[0]), traj_id=i)
    return BatchResult(initial=arr, fates=fates, exits=exits, drifts=drifts, n_steps=steps)
