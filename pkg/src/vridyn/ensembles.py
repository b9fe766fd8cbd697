"""Initial-condition families at the high-energy saddle.

Two deterministic families live on the energy shell ``H = H0`` at ``x = 0``:

* the *line* ensemble: points on the accessible segment of the ``y`` axis
  with all momentum along ``+x``;
* the *slice* grid: a uniform grid over ``(y, p_y)``, keeping the cells where
  a positive ``p_x`` closes the energy balance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .exceptions import DomainError, ValidationError
from .pes import Pes, bottleneck_width, potential

__all__ = [
    "LineEnsembleSpec",
    "SliceGridSpec",
    "SliceGrid",
    "line_ensemble",
    "line_count",
    "slice_grid",
    "slice_area",
    "symmetric_points",
]


@dataclass(frozen=True)
class LineEnsembleSpec:
    h0: float
    density: float = 500.0

    def validate(self) -> "LineEnsembleSpec":
        if not self.h0 > 0:
            raise DomainError(f"H0 must be > 0, got {self.h0!r}")
        if not self.density > 0:
            raise ValidationError(f"density must be > 0, got {self.density!r}")
        return self


@dataclass(frozen=True)
class SliceGridSpec:
    h0: float
    n_y: int = 1024
    n_py: int = 1024

    def validate(self) -> "SliceGridSpec":
        if not self.h0 > 0:
            raise DomainError(f"H0 must be > 0, got {self.h0!r}")
        if self.n_y < 2 or self.n_py < 2:
            raise ValidationError(f"grid resolutions must be >= 2, got {self.n_y}x{self.n_py}")
        return self


def symmetric_points(half_width: float, n: int, centered: bool) -> np.ndarray:
    """``n`` uniformly spaced points on ``[-half_width, half_width]``.

    With ``centered=False`` the endpoints are included; with ``centered=True``
    the points are the centres of ``n`` equal cells.  The result is exactly
    antisymmetric (``p[i] == -p[n-1-i]`` bitwise).
    """
    step = 2.0 * half_width / (n if centered else n - 1)
    offset = 0.5 if centered else 0.0
    i = np.arange(n)
    pts = -half_width + (i + offset) * step
    half = n // 2
    pts[n - half :] = -pts[:half][::-1]
    if n % 2:
        pts[half] = 0.0
    return pts


def line_count(pes: Pes, spec: LineEnsembleSpec) -> int:
    w = bottleneck_width(pes, spec.h0)
    return max(2, int(math.ceil(spec.density * w)))


def line_ensemble(spec: LineEnsembleSpec, pes: Pes) -> np.ndarray:
    """States ``(0, y, p_x, 0, 0)`` on the accessible segment of the ``y`` axis.

    Returns an ``(N, 5)`` array with ``N = ceil(density * W)`` rows ordered by
    increasing ``y``; the endpoints sit on the equipotential and carry
    ``p_x = 0``.
    """
    spec.validate()
    w = bottleneck_width(pes, spec.h0)
    n = line_count(pes, spec)
    y = symmetric_points(0.5 * w, n, centered=False)
    kin = np.maximum(spec.h0 - potential(0.0, y, pes), 0.0)
    px = np.sqrt(2.0 * pes.spec.mass_x * kin)
    zeros = np.zeros(n)
    return np.column_stack([zeros, y, px, zeros, zeros])


@dataclass
class SliceGrid:
    """Cell-centred grid over ``(y, p_y)`` at ``x = 0``.

    ``states`` holds the accessible cells in row-major ``(iy, ipy)`` order and
    ``index`` their grid indices.
    """

    spec: SliceGridSpec
    y: np.ndarray
    py: np.ndarray
    mask: np.ndarray
    states: np.ndarray
    index: np.ndarray

    @property
    def cell_area(self) -> float:
        return float((self.y[1] - self.y[0]) * (self.py[1] - self.py[0]))

    @property
    def n_accessible(self) -> int:
        return int(self.mask.sum())

    @property
    def accessible_area(self) -> float:
        return self.n_accessible * self.cell_area


def slice_grid(spec: SliceGridSpec, pes: Pes) -> SliceGrid:
    spec.validate()
    m1, m2 = pes.spec.mass_x, pes.spec.mass_y
    w = bottleneck_width(pes, spec.h0)
    y = symmetric_points(0.5 * w, spec.n_y, centered=True)
    py = symmetric_points(math.sqrt(2.0 * m2 * spec.h0), spec.n_py, centered=True)
    v = potential(0.0, y, pes)
    px2 = 2.0 * m1 * (spec.h0 - v)[:, None] - (m1 / m2) * (py * py)[None, :]
    mask = px2 > 0.0
    iy, ipy = np.nonzero(mask)
    n = iy.size
    states = np.column_stack([np.zeros(n), y[iy], np.sqrt(px2[iy, ipy]), py[ipy], np.zeros(n)])
    return SliceGrid(
        spec=spec,
        y=y,
        py=py,
        mask=mask,
        states=states,
        index=np.column_stack([iy, ipy]),
    )


def slice_area(pes: Pes, h0: float) -> float:
    """Area of ``{(y, p_y) : V(0, y) + p_y^2 / (2 m_y) <= h0}``.

    The integrand ``2 sqrt(2 m_y (h0 - V(0, y)))`` has square-root zeros at
    ``y = ±W/2``; substituting ``y = (W/2) sin(theta)`` removes them.
    """
    if not h0 > 0:
        raise DomainError(f"slice area needs H0 > 0, got {h0!r}")
    half = 0.5 * bottleneck_width(pes, h0)
    m2 = pes.spec.mass_y

    def integrand(theta):
        y = half * math.sin(theta)
        gap = max(h0 - float(potential(0.0, y, pes)), 0.0)
        return 2.0 * math.sqrt(2.0 * m2 * gap) * half * math.cos(theta)

    val, _ = quad(integrand, 0.0, 0.5 * math.pi, epsabs=0.0, epsrel=1e-12, limit=200)
    return 2.0 * val
