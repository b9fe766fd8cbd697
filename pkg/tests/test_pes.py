from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import qmc

from vridyn import (
    Pes,
    PesSpec,
    VRIPotential,
    bottleneck_width,
    critical_points,
    gradient,
    hessian,
    locate_vri,
    potential,
    saddle_eigenvalues,
    solve_coefficients,
    vri_residuals,
)
from vridyn.exceptions import DomainError, SingularSystemError, ValidationError
from vridyn.experiments import slice_xi_grid
from vridyn.pes import bottleneck_width_rootfind, coefficient_residual

XI_GRID = [round(0.025 * k, 3) for k in range(1, 29)]


def cramer_coefficients(xi, vb="0.5", xs="1", xw="1.25", yw="1", hw="-1"):
    """Exact (A, B, C) from the well conditions, by Cramer's rule over the rationals."""
    xi, vb, xs, xw, yw, hw = (Fraction(str(v)) for v in (xi, vb, xs, xw, yw, hw))
    k = vb / xs**4
    # V = Hw, dV/dx = 0, dV/dy = 0 at (xw, yw); unknowns A, B, C
    m = [
        [yw**2 * (xi - xw), yw**4, xw * yw**4],
        [-(yw**2), Fraction(0), yw**4],
        [2 * yw * (xi - xw), 4 * yw**3, 4 * xw * yw**3],
    ]
    r = [hw - k * xw**2 * (xw**2 - 2 * xs**2), -4 * k * xw * (xw**2 - xs**2), Fraction(0)]

    def det(a):
        return (
            a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
            - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
            + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
        )

    d = det(m)
    out = []
    for j in range(3):
        mj = [row[:] for row in m]
        for i in range(3):
            mj[i][j] = r[i]
        out.append(det(mj) / d)
    return out


@pytest.mark.parametrize("xi", XI_GRID + [0.3265])
def test_coefficients_match_exact_cramer(xi):
    coef = solve_coefficients(PesSpec(vri_x=xi))
    exact = cramer_coefficients(xi)
    for got, want in zip(coef, exact):
        assert got == pytest.approx(float(want), rel=1e-13, abs=1e-14)


def test_coefficients_rational_at_half():
    # A = 337/192 exactly at x_i = 1/2
    a, b, c = cramer_coefficients("0.5")
    assert a == Fraction(337, 192)
    coef = solve_coefficients(PesSpec(vri_x=0.5))
    assert coef.A == pytest.approx(337 / 192, rel=1e-15)
    assert (coef.B, coef.C) == pytest.approx((float(b), float(c)), rel=1e-14)


@pytest.mark.parametrize("xi", XI_GRID)
def test_coefficient_residual_tiny(xi):
    assert coefficient_residual(Pes.from_spec(vri_x=xi)) <= 1e-12


def test_singular_system_raises():
    with pytest.raises((SingularSystemError, ValidationError)):
        solve_coefficients(PesSpec(well_y=0.0))
    # well_y is validated positive by Pes.from_spec, so bypass validation here
    with pytest.raises(SingularSystemError):
        solve_coefficients(PesSpec(well_y=1e-300))


def test_spec_validation():
    with pytest.raises(ValidationError):
        Pes.from_spec(vri_x=1.5)
    with pytest.raises(ValidationError):
        Pes.from_spec(vri_x=0.0)
    with pytest.raises(ValidationError):
        Pes.from_spec(mass_x=-1.0)
    with pytest.raises(ValidationError):
        PesSpec.from_mapping({"bogus": 1})


def test_potential_on_axes(pes):
    A, B, C = pes.coef
    xi = pes.spec.vri_x
    y = np.linspace(-1, 1, 11)
    np.testing.assert_allclose(potential(0.0, y, pes), A * xi * y**2 + B * y**4, rtol=0, atol=1e-15)
    x = np.linspace(-1.5, 1.5, 13)
    np.testing.assert_allclose(potential(x, 0.0, pes), 0.5 * x**2 * (x**2 - 2), rtol=0, atol=1e-15)


@pytest.fixture(scope="module")
def sobol_points():
    pts = qmc.Sobol(d=2, seed=20240601).random(1024)[:1000]
    return qmc.scale(pts, [-1.0, -2.0], [2.0, 2.0])


@pytest.mark.parametrize("xi", [0.1, 0.3265, 0.5])
def test_gradient_matches_central_differences(sobol_points, xi):
    p = Pes.from_spec(vri_x=xi)
    x, y = sobol_points.T
    h = 1e-5
    fd_x = (potential(x + h, y, p) - potential(x - h, y, p)) / (2 * h)
    fd_y = (potential(x, y + h, p) - potential(x, y - h, p)) / (2 * h)
    gx, gy = gradient(x, y, p)
    for an, fd in ((gx, fd_x), (gy, fd_y)):
        assert np.all(np.abs(an - fd) <= 1e-6 * np.maximum(np.abs(an), 1.0))


@pytest.mark.parametrize("xi", [0.1, 0.3265, 0.5])
def test_hessian_matches_central_differences(sobol_points, xi):
    p = Pes.from_spec(vri_x=xi)
    x, y = sobol_points.T
    h = 1e-5
    H = hessian(x, y, p)
    gxp, gyp = gradient(x + h, y, p)
    gxm, gym = gradient(x - h, y, p)
    col_x = np.stack([(gxp - gxm), (gyp - gym)], axis=-1) / (2 * h)
    gxp, gyp = gradient(x, y + h, p)
    gxm, gym = gradient(x, y - h, p)
    col_y = np.stack([(gxp - gxm), (gyp - gym)], axis=-1) / (2 * h)
    fd = np.stack([col_x, col_y], axis=-1)
    assert np.all(np.abs(H - fd) <= 1e-6 * np.maximum(np.abs(H), 1.0))
    np.testing.assert_array_equal(H[:, 0, 1], H[:, 1, 0])


def test_hessian_at_origin(pes):
    H = hessian(0.0, 0.0, pes)
    two_a_xi = float(2 * cramer_coefficients("0.3265")[0] * Fraction("0.3265"))
    np.testing.assert_allclose(H, [[-2.0, 0.0], [0.0, two_a_xi]], rtol=0, atol=1e-14)
    assert two_a_xi == pytest.approx(0.93082109502, abs=1e-10)


def test_potential_shapes_broadcast(pes):
    x = np.zeros((3, 4))
    assert potential(x, 0.5, pes).shape == (3, 4)
    assert hessian(x, x, pes).shape == (3, 4, 2, 2)


@settings(max_examples=200, deadline=None)
@given(
    x=st.floats(-2, 2, allow_nan=False),
    y=st.floats(-2, 2, allow_nan=False),
    xi=st.sampled_from(XI_GRID),
)
def test_mirror_symmetry(x, y, xi):
    p = Pes.from_spec(vri_x=xi)
    assert potential(x, -y, p) == potential(x, y, p)
    gx, gy = gradient(x, y, p)
    mx, my = gradient(x, -y, p)
    assert (mx, my) == (gx, -gy)


def test_critical_points_default(pes):
    cps = critical_points(pes)
    expected = [((0, 0), 0.0, "index-1 saddle"), ((1, 0), -0.5, "index-1 saddle"),
                ((1.25, 1), -1.0, "minimum"), ((1.25, -1), -1.0, "minimum")]
    for cp, (pos, e, kind) in zip(cps, expected):
        assert cp.position == pytest.approx(pos, abs=1e-10)
        assert cp.energy == pytest.approx(e, abs=1e-10)
        assert cp.kind == kind
        assert cp.grad_norm <= 1e-10


@pytest.mark.parametrize("xi", XI_GRID)
def test_critical_points_across_family(xi):
    for cp in critical_points(Pes.from_spec(vri_x=xi)):
        assert cp.grad_norm <= 1e-10


@pytest.mark.parametrize("xi", XI_GRID)
def test_locate_vri(xi):
    p = Pes.from_spec(vri_x=xi)
    x, y = locate_vri(p)
    assert abs(x - xi) <= 1e-10 and y == 0.0
    det, adj = vri_residuals(x, y, p)
    assert abs(det) <= 1e-10 and abs(adj) <= 1e-10


def test_det_hessian_has_second_zero_on_axis(pes):
    # det Hess vanishes also where V_xx = 0, without the adjugate condition
    x2 = 1 / np.sqrt(3)
    det, adj = vri_residuals(x2, 0.0, pes)
    assert abs(det) < 1e-14
    assert abs(adj) > 1e-2


@pytest.mark.parametrize("xi", XI_GRID)
def test_saddle_spectrum(xi):
    sp = saddle_eigenvalues(Pes.from_spec(vri_x=xi))
    assert sp.max_abs_diff <= 1e-10
    np.testing.assert_allclose(sp.real_pair.real, [np.sqrt(2), -np.sqrt(2)], rtol=1e-15)


def test_saddle_imaginary_pair_default(pes):
    sp = saddle_eigenvalues(pes)
    omega = np.sqrt(float(2 * cramer_coefficients("0.3265")[0] * Fraction("0.3265")))
    assert sp.imag_pair.imag == pytest.approx([omega, -omega], abs=1e-12)
    assert omega == pytest.approx(0.96479070, abs=1e-8)


def bisect_width(p, h0):
    lo, hi = 0.0, 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if potential(0.0, mid, p) < h0:
            lo = mid
        else:
            hi = mid
    return 2 * lo


@pytest.mark.parametrize("xi", XI_GRID)
@pytest.mark.parametrize("h0", [0.005, 0.03, 0.1])
def test_bottleneck_width_vs_rootfind(xi, h0):
    p = Pes.from_spec(vri_x=xi)
    w = bottleneck_width(p, h0)
    assert abs(w - bottleneck_width_rootfind(p, h0)) <= 1e-10
    assert abs(w - bisect_width(p, h0)) <= 1e-12


def test_bottleneck_width_literal_formula_when_b_positive(pes):
    A, B, _ = pes.coef
    a = A * pes.spec.vri_x / (2 * B)
    literal = 2 * np.sqrt(-a + np.sqrt(a * a + 0.03 / B))
    assert bottleneck_width(pes, 0.03) == pytest.approx(literal, rel=1e-12)
    assert bottleneck_width(pes, 0.03) == pytest.approx(0.48832851114, abs=1e-10)


def test_bottleneck_width_negative_quartic_coefficient():
    p = Pes.from_spec(vri_x=0.7)
    assert p.coef.B < 0
    assert bottleneck_width(p, 0.03) == pytest.approx(bisect_width(p, 0.03), abs=1e-12)


def test_bottleneck_width_domain(pes):
    with pytest.raises(DomainError):
        bottleneck_width(pes, 0.0)
    with pytest.raises(DomainError):
        bottleneck_width(pes, -0.1)


def test_bottleneck_width_monotone(pes):
    h = np.linspace(0.005, 0.1, 20)
    w = [bottleneck_width(pes, v) for v in h]
    assert np.all(np.diff(w) > 0)
    ws = [bottleneck_width(Pes.from_spec(vri_x=x), 0.03) for x in slice_xi_grid()]
    assert np.all(np.diff(ws) < 0)


def test_vri_potential_estimator():
    est = VRIPotential(vri_x=0.5).fit()
    out = est.transform([[0.0, 0.0], [1.25, 1.0]])
    np.testing.assert_allclose(out[1], [-1.0, 0.0, 0.0], atol=1e-12)
    assert list(est.get_feature_names_out()) == ["V", "dVdx", "dVdy"]
    assert est.get_params()["vri_x"] == 0.5
    with pytest.raises(ValueError):
        VRIPotential(vri_x=1.5).fit()
