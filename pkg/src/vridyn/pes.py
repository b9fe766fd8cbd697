"""Symmetric two-saddle potential with a movable valley-ridge inflection point.

The surface is

.. math::

    V(x, y) = \\frac{V^\\ddagger}{x_s^4} x^2 (x^2 - 2 x_s^2)
              + A y^2 (x_i - x) + y^4 (B + C x)

with an index-1 saddle of height zero at the origin, a lower index-1 saddle at
``(x_s, 0)`` with energy ``-V‡`` and two minima at ``(x_w, ±y_w)``.  The
coefficients ``A, B, C`` are fixed by requiring the minima to sit at the
prescribed location and energy, which leaves ``x_i`` free to slide the VRI
point along the segment between the saddles.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Mapping, NamedTuple

import numpy as np
from scipy.optimize import brentq
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from ._tolerances import (
    ANALYTIC_TOL,
    LINEAR_RESIDUAL_TOL,
    NEWTON_GRAD_TOL,
    NEWTON_MAX_ITER,
    VRI_BRACKET_EPS,
)
from .exceptions import (
    DomainError,
    NewtonConvergenceError,
    SingularSystemError,
    ValidationError,
    VRINotBracketedError,
)

__all__ = [
    "PesSpec",
    "Coefficients",
    "Pes",
    "CriticalPoint",
    "SaddleSpectrum",
    "VRIPotential",
    "solve_coefficients",
    "coefficient_residual",
    "potential",
    "gradient",
    "hessian",
    "vri_residuals",
    "locate_vri",
    "critical_points",
    "saddle_eigenvalues",
    "bottleneck_width",
    "bottleneck_width_rootfind",
]


@dataclass(frozen=True)
class PesSpec:
    """Design parameters of the surface. Defaults reproduce the reference setup."""

    barrier_height: float = 0.5
    saddle_x: float = 1.0
    vri_x: float = 0.3265
    well_x: float = 1.25
    well_y: float = 1.0
    well_energy: float = -1.0
    mass_x: float = 1.0
    mass_y: float = 1.0

    def validate(self) -> "PesSpec":
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if not np.isfinite(v):
                raise ValidationError(f"{f.name} must be finite, got {v!r}")
        for name in ("barrier_height", "saddle_x", "well_x", "well_y", "mass_x", "mass_y"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"{name} must be > 0, got {getattr(self, name)!r}")
        if not 0 < self.vri_x < self.saddle_x:
            raise ValidationError(
                f"vri_x must satisfy 0 < vri_x < saddle_x = {self.saddle_x}, got {self.vri_x!r}"
            )
        if not self.saddle_x < self.well_x:
            raise ValidationError(
                f"well_x must exceed saddle_x = {self.saddle_x}, got {self.well_x!r}"
            )
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, object]) -> "PesSpec":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(mapping) - names
        if unknown:
            raise ValidationError(f"unknown PES keys: {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in mapping.items()}).validate()


class Coefficients(NamedTuple):
    A: float
    B: float
    C: float


def _coefficient_system(spec: PesSpec) -> tuple[np.ndarray, np.ndarray]:
    # rows: V(xw, yw) = Hw, dV/dx(xw, yw) = 0, dV/dy(xw, yw) = 0; unknowns (A, B, C)
    k = spec.barrier_height / spec.saddle_x**4
    xw, yw, xi = spec.well_x, spec.well_y, spec.vri_x
    matrix = np.array(
        [
            [yw**2 * (xi - xw), yw**4, xw * yw**4],
            [-(yw**2), 0.0, yw**4],
            [2.0 * yw * (xi - xw), 4.0 * yw**3, 4.0 * xw * yw**3],
        ]
    )
    rhs = np.array(
        [
            spec.well_energy - k * xw**2 * (xw**2 - 2.0 * spec.saddle_x**2),
            -4.0 * k * xw * (xw**2 - spec.saddle_x**2),
            0.0,
        ]
    )
    return matrix, rhs


def solve_coefficients(spec: PesSpec) -> Coefficients:
    """Solve the 3x3 linear system placing the minima at ``(x_w, ±y_w)``.

    Raises
    ------
    SingularSystemError
        If the system is singular (e.g. ``well_y == 0``).
    """
    matrix, rhs = _coefficient_system(spec)
    # LU with partial pivoting; the family is well conditioned so no refinement
    if not np.all(np.isfinite(matrix)) or np.linalg.cond(matrix) > 1e13:
        raise SingularSystemError(f"coefficient system singular for {spec}")
    try:
        sol = np.linalg.solve(matrix, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(f"coefficient system singular for {spec}") from exc
    return Coefficients(*(float(v) for v in sol))


@dataclass(frozen=True)
class Pes:
    """A fully determined surface: design parameters plus solved coefficients."""

    spec: PesSpec
    coef: Coefficients

    @classmethod
    def from_spec(cls, spec: PesSpec | None = None, **overrides) -> "Pes":
        spec = PesSpec() if spec is None else spec
        if overrides:
            spec = dataclasses.replace(spec, **overrides)
        spec.validate()
        return cls(spec, solve_coefficients(spec))

    def with_vri(self, vri_x: float) -> "Pes":
        return Pes.from_spec(self.spec, vri_x=vri_x)

    @property
    def params(self) -> np.ndarray:
        """Flat parameter vector consumed by the compiled kernels."""
        s, c = self.spec, self.coef
        return np.array(
            [
                s.barrier_height,
                s.saddle_x,
                s.vri_x,
                c.A,
                c.B,
                c.C,
                s.mass_x,
                s.mass_y,
                s.well_x,
                s.well_y,
            ],
            dtype=np.float64,
        )


def potential(x, y, pes: Pes):
    s, (A, B, C) = pes.spec, pes.coef
    k = s.barrier_height / s.saddle_x**4
    x = np.asarray(x, dtype=float)
    y2 = np.asarray(y, dtype=float) ** 2
    return k * x**2 * (x**2 - 2.0 * s.saddle_x**2) + A * y2 * (s.vri_x - x) + y2 * y2 * (B + C * x)


def gradient(x, y, pes: Pes):
    """Return ``(dV/dx, dV/dy)``."""
    s, (A, B, C) = pes.spec, pes.coef
    k = s.barrier_height / s.saddle_x**4
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    y2 = y * y
    vx = 4.0 * k * x * (x * x - s.saddle_x**2) - A * y2 + C * y2 * y2
    vy = 2.0 * A * y * (s.vri_x - x) + 4.0 * y * y2 * (B + C * x)
    return vx, vy


def hessian(x, y, pes: Pes) -> np.ndarray:
    """Hessian with shape ``broadcast(x, y).shape + (2, 2)``."""
    s, (A, B, C) = pes.spec, pes.coef
    k = s.barrier_height / s.saddle_x**4
    x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    y2 = y * y
    vxx = k * (12.0 * x * x - 4.0 * s.saddle_x**2)
    vxy = -2.0 * A * y + 4.0 * C * y * y2
    vyy = 2.0 * A * (s.vri_x - x) + 12.0 * y2 * (B + C * x)
    out = np.empty(x.shape + (2, 2))
    out[..., 0, 0] = vxx
    out[..., 0, 1] = vxy
    out[..., 1, 0] = vxy
    out[..., 1, 1] = vyy
    return out


def vri_residuals(x, y, pes: Pes):
    """Return ``(det Hess V, grad V^T adj(Hess V) grad V)`` at ``(x, y)``.

    Both vanish at a valley-ridge inflection point.
    """
    h = hessian(x, y, pes)
    vx, vy = gradient(x, y, pes)
    hxx, hxy, hyy = h[..., 0, 0], h[..., 0, 1], h[..., 1, 1]
    det = hxx * hyy - hxy * hxy
    # adj([[a, b], [b, d]]) = [[d, -b], [-b, a]]
    adj = hyy * vx * vx - 2.0 * hxy * vx * vy + hxx * vy * vy
    return det, adj


def _transverse_curvature(x: float, pes: Pes) -> float:
    # curvature along the direction orthogonal to grad V on the symmetry axis
    vx, vy = gradient(x, 0.0, pes)
    h = hessian(x, 0.0, pes)
    norm = np.hypot(vx, vy)
    ex, ey = -vy / norm, vx / norm
    return float(ex * ex * h[0, 0] + 2.0 * ex * ey * h[0, 1] + ey * ey * h[1, 1])


def locate_vri(pes: Pes) -> tuple[float, float]:
    """Find the VRI point on the segment between the two saddles.

    ``det Hess V`` has two zeros on ``(0, x_s)`` along ``y = 0`` (one from each
    diagonal entry), so it has no sign change over the whole segment.  The VRI
    zero is the one where the curvature transverse to the gradient changes
    sign; we bracket that factor and then confirm both VRI conditions.
    """
    xs = pes.spec.saddle_x
    lo, hi = VRI_BRACKET_EPS, xs - VRI_BRACKET_EPS
    f_lo, f_hi = _transverse_curvature(lo, pes), _transverse_curvature(hi, pes)
    if not f_lo * f_hi < 0:
        raise VRINotBracketedError(
            f"VRI not bracketed on ({lo}, {hi}): curvature {f_lo:.3e}, {f_hi:.3e}"
        )
    x = brentq(_transverse_curvature, lo, hi, args=(pes,), xtol=1e-15, rtol=1e-15, maxiter=200)
    det, adj = vri_residuals(x, 0.0, pes)
    if abs(det) > ANALYTIC_TOL or abs(adj) > ANALYTIC_TOL:
        raise VRINotBracketedError(
            f"root at x = {x} fails the VRI conditions (det={det:.3e}, adj={adj:.3e})"
        )
    return float(x), 0.0


@dataclass(frozen=True)
class CriticalPoint:
    position: tuple[float, float]
    energy: float
    kind: str
    eigenvalues: tuple[float, float]
    grad_norm: float


def _newton_critical_point(seed, pes: Pes) -> tuple[np.ndarray, float]:
    z = np.array(seed, dtype=float)
    for it in range(NEWTON_MAX_ITER + 1):
        g = np.array(gradient(z[0], z[1], pes))
        gnorm = float(np.hypot(*g))
        if gnorm <= NEWTON_GRAD_TOL:
            return z, gnorm
        if it == NEWTON_MAX_ITER:
            break
        z = z - np.linalg.solve(hessian(z[0], z[1], pes), g)
    raise NewtonConvergenceError(seed, NEWTON_MAX_ITER, gnorm)


def _classify(eigenvalues: np.ndarray) -> str:
    n_neg = int(np.sum(eigenvalues < 0))
    n_zero = int(np.sum(eigenvalues == 0))
    if n_zero:
        return "degenerate"
    return {0: "minimum", 1: "index-1 saddle", 2: "maximum"}[n_neg]


def critical_points(pes: Pes) -> list[CriticalPoint]:
    """Newton-refine the four critical points from their analytic seeds."""
    s = pes.spec
    seeds = [(0.0, 0.0), (s.saddle_x, 0.0), (s.well_x, s.well_y), (s.well_x, -s.well_y)]
    out = []
    for seed in seeds:
        z, gnorm = _newton_critical_point(seed, pes)
        eig = np.linalg.eigvalsh(hessian(z[0], z[1], pes))
        out.append(
            CriticalPoint(
                position=(float(z[0]), float(z[1])),
                energy=float(potential(z[0], z[1], pes)),
                kind=_classify(eig),
                eigenvalues=(float(eig[0]), float(eig[1])),
                grad_norm=gnorm,
            )
        )
    return out


@dataclass(frozen=True)
class SaddleSpectrum:
    """Linearised spectrum at the origin, closed form and numerical.

    Both arrays are ordered ``(+real, -real, +imag, -imag)``.
    """

    closed_form: np.ndarray
    numeric: np.ndarray

    @property
    def max_abs_diff(self) -> float:
        return float(np.max(np.abs(self.closed_form - self.numeric)))

    @property
    def real_pair(self) -> np.ndarray:
        return self.closed_form[:2]

    @property
    def imag_pair(self) -> np.ndarray:
        return self.closed_form[2:]


def _order_spectrum(ev: np.ndarray) -> np.ndarray:
    real = sorted((e for e in ev if abs(e.real) > abs(e.imag)), key=lambda e: -e.real)
    imag = sorted((e for e in ev if abs(e.real) <= abs(e.imag)), key=lambda e: -e.imag)
    return np.array(real + imag, dtype=complex)


def saddle_eigenvalues(pes: Pes) -> SaddleSpectrum:
    s, A = pes.spec, pes.coef.A
    lam = 2.0 * np.sqrt(s.barrier_height / s.mass_x) / s.saddle_x
    omega = np.sqrt(2.0 * A * s.vri_x / s.mass_y)
    closed = np.array([lam, -lam, 1j * omega, -1j * omega], dtype=complex)

    h = hessian(0.0, 0.0, pes)
    jac = np.zeros((4, 4))
    jac[0, 2] = 1.0 / s.mass_x
    jac[1, 3] = 1.0 / s.mass_y
    jac[2:, :2] = -h
    numeric = _order_spectrum(np.linalg.eigvals(jac))
    return SaddleSpectrum(closed_form=closed, numeric=numeric)


def bottleneck_width(pes: Pes, h0: float) -> float:
    """Width of the accessible channel along ``x = 0`` at energy ``h0``.

    Uses the rationalised smaller root of ``A x_i y^2 + B y^4 = h0``, which
    equals the usual closed form for ``B > 0`` and stays on the inner branch
    when ``B < 0`` (large ``x_i``).
    """
    if not h0 > 0:
        raise DomainError(f"bottleneck width needs H0 > 0, got {h0!r}")
    A, B, _ = pes.coef
    a = A * pes.spec.vri_x
    disc = a * a + 4.0 * B * h0
    if disc < 0:
        raise DomainError(f"channel at x = 0 is open at H0 = {h0}; no bounding equipotential")
    y2 = 2.0 * h0 / (a + np.sqrt(disc))
    return float(2.0 * np.sqrt(y2))


def bottleneck_width_rootfind(pes: Pes, h0: float, y_max: float = 2.0) -> float:
    """Twice the first positive root of ``V(0, y) = h0``, by bracketing."""
    if not h0 > 0:
        raise DomainError(f"bottleneck width needs H0 > 0, got {h0!r}")

    def f(y):
        return float(potential(0.0, y, pes)) - h0

    grid = np.linspace(0.0, y_max, 401)
    vals = np.array([f(y) for y in grid])
    idx = np.flatnonzero((vals[:-1] < 0) & (vals[1:] >= 0))
    if idx.size == 0:
        raise DomainError(f"no root of V(0, y) = {h0} on (0, {y_max}]")
    i = idx[0]
    root = brentq(f, grid[i], grid[i + 1], xtol=1e-15, rtol=1e-15, maxiter=200)
    return 2.0 * root


class VRIPotential(TransformerMixin, BaseEstimator):
    """Estimator wrapper around :class:`Pes`.

    ``fit`` validates the design parameters and solves for the coefficients;
    ``transform`` maps configuration points ``(x, y)`` to ``[V, dV/dx, dV/dy]``.
    Being a plain estimator, it can be cloned and re-parameterised, e.g.
    ``clone(pot).set_params(vri_x=0.1).fit()``.
    """

    def __init__(
        self,
        barrier_height=0.5,
        saddle_x=1.0,
        vri_x=0.3265,
        well_x=1.25,
        well_y=1.0,
        well_energy=-1.0,
        mass_x=1.0,
        mass_y=1.0,
    ):
        self.barrier_height = barrier_height
        self.saddle_x = saddle_x
        self.vri_x = vri_x
        self.well_x = well_x
        self.well_y = well_y
        self.well_energy = well_energy
        self.mass_x = mass_x
        self.mass_y = mass_y

    def to_spec(self) -> PesSpec:
        return PesSpec(**{k: float(v) for k, v in self.get_params().items()})

    def fit(self, X=None, y=None):
        self.pes_ = Pes.from_spec(self.to_spec())
        self.coef_ = self.pes_.coef
        residual = coefficient_residual(self.pes_)
        if residual > LINEAR_RESIDUAL_TOL:
            raise SingularSystemError(f"coefficient residual {residual:.3e} above tolerance")
        return self

    def transform(self, X):
        check_is_fitted(self, "pes_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != 2:
            raise ValueError(f"expected (n_samples, 2) positions, got shape {X.shape}")
        v = potential(X[:, 0], X[:, 1], self.pes_)
        vx, vy = gradient(X[:, 0], X[:, 1], self.pes_)
        return np.column_stack([v, vx, vy])

    def get_feature_names_out(self, input_features=None):
        return np.array(["V", "dVdx", "dVdy"], dtype=object)


def coefficient_residual(pes: Pes) -> float:
    """Largest violation of the three well conditions."""
    s = pes.spec
    v = float(potential(s.well_x, s.well_y, pes)) - s.well_energy
    vx, vy = gradient(s.well_x, s.well_y, pes)
    return max(abs(v), abs(float(vx)), abs(float(vy)))
