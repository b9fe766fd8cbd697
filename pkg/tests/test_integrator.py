import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vridyn import (
    Fate,
    IntegratorConfig,
    LineEnsembleSpec,
    Pes,
    State,
    gradient,
    hamiltonian,
    integrate,
    integrate_batch,
    line_ensemble,
    vector_field,
)
from vridyn import _kernels as K
from vridyn.exceptions import IntegrationStalled, ValidationError
from vridyn.integrator import mirror

WELL = np.array([1.25, 1.0])


def test_hamiltonian_values(pes):
    assert hamiltonian(State(0, 0, 0, 0), pes) == 0.0
    assert hamiltonian(State(1.25, 1.0, 0, 0), pes) == pytest.approx(-1.0, abs=1e-12)
    assert hamiltonian(State(0, 0, 0.3, 0.4), pes) == pytest.approx(0.125, abs=1e-15)


def test_vector_field_is_minus_gradient(pes):
    rng = np.random.default_rng(7)
    s = rng.uniform([-1, -2, -1, -1], [2, 2, 1, 1], size=(1000, 4))
    f = vector_field(s, pes)
    gx, gy = gradient(s[:, 0], s[:, 1], pes)
    np.testing.assert_array_equal(f[:, 2], -gx)
    np.testing.assert_array_equal(f[:, 3], -gy)
    np.testing.assert_array_equal(f[:, :2], s[:, 2:])


def test_kernel_force_agrees_with_gradient(pes):
    rng = np.random.default_rng(8)
    pts = rng.uniform([-1, -2], [2, 2], size=(500, 2))
    gx, gy = gradient(pts[:, 0], pts[:, 1], pes)
    for (x, y), ax, ay in zip(pts, gx, gy):
        fx, fy = K.force(x, y, pes.params)
        assert fx == pytest.approx(-ax, rel=1e-13, abs=1e-13)
        assert fy == pytest.approx(-ay, rel=1e-13, abs=1e-13)


def test_vector_field_zero_at_equilibria(pes):
    for pos in [(0, 0), (1, 0), (1.25, 1), (1.25, -1)]:
        assert np.max(np.abs(vector_field([*pos, 0, 0], pes))) <= 1e-12


def test_config_validation():
    with pytest.raises(ValidationError):
        IntegratorConfig(method="rk4").validate()
    with pytest.raises(ValidationError):
        IntegratorConfig(rtol=0).validate()
    with pytest.raises(ValidationError):
        IntegratorConfig(t_max=float("inf")).validate()
    tight = IntegratorConfig().tightened()
    assert (tight.rtol, tight.atol) == (0.5e-11, 0.5e-12)


def test_symmetry_axis_trajectory_recrosses(pes):
    # V(x, 0) is even in x, so the straight orbit comes back through x = 0
    s = State(0.0, 0.0, np.sqrt(0.06), 0.0)
    res = integrate(s, pes, IntegratorConfig(sample_interval=0.05))
    assert res.fate is Fate.RECROSS
    assert np.all(res.path[:, 2] == 0.0) and np.all(res.path[:, 4] == 0.0)
    assert res.exit_state.px == pytest.approx(-np.sqrt(0.06), abs=1e-9)


def test_symmetry_axis_trajectory_timeout_without_recross_event(pes):
    cfg = IntegratorConfig(sample_interval=0.5, x_entry_min=1e9, t_max=200.0)
    res = integrate(State(0.0, 0.0, np.sqrt(0.06), 0.0), pes, cfg)
    assert res.fate is Fate.TIMEOUT
    assert res.exit_state.t == 200.0
    assert np.all(res.path[:, 2] == 0.0)
    assert res.max_energy_drift <= 1e-9


def test_state_inside_capture_disc_stops_immediately(pes):
    res = integrate(State(1.25, 1.0, 0.0, 0.0), pes)
    assert res.fate is Fate.TOP_WELL
    assert res.n_steps == 0 and res.elapsed == 0.0 and res.max_energy_drift == 0.0


def test_stall_raises(pes):
    with pytest.raises(IntegrationStalled) as info:
        integrate(State(0.0, 0.1, 0.2, 0.0), pes, IntegratorConfig(rtol=1e-300, atol=1e-300))
    assert info.value.state is not None
    states = line_ensemble(LineEnsembleSpec(0.03, 20), pes)
    with pytest.raises(IntegrationStalled) as info:
        integrate_batch(states, pes, IntegratorConfig(rtol=1e-300, atol=1e-300))
    assert info.value.traj_id == 0


@pytest.fixture(scope="module")
def line_batch(pes):
    states = line_ensemble(LineEnsembleSpec(0.03), pes)
    return integrate_batch(states, pes, IntegratorConfig(), workers=1)


def test_event_localisation_residuals(line_batch):
    ex = line_batch.exits
    for code, fate in enumerate(line_batch.fates):
        t, x, y = ex[code, :3]
        if fate == Fate.RECROSS:
            assert abs(x) <= 1e-10
            assert ex[code, 3] < 0
        elif fate in (Fate.TOP_WELL, Fate.BOTTOM_WELL):
            sign = 1.0 if fate == Fate.TOP_WELL else -1.0
            d2 = (x - WELL[0]) ** 2 + (y - sign * WELL[1]) ** 2
            assert abs(d2 - 0.04) <= 1e-10


def test_energy_drift_small(line_batch):
    assert line_batch.drifts.max() <= 1e-9
    h_exit = [
        hamiltonian(e[1:], Pes.from_spec()) for e in line_batch.exits
    ]
    assert np.max(np.abs(np.array(h_exit) - 0.03)) <= 1e-9


def test_mirror_bitwise(pes):
    cfg = IntegratorConfig(sample_interval=0.02)
    states = line_ensemble(LineEnsembleSpec(0.03, 100), pes)
    for row in states[: len(states) // 2]:
        s = State(*row[:4])
        a = integrate(s, pes, cfg)
        b = integrate(mirror(s), pes, cfg)
        assert b.fate == a.fate.swapped()
        np.testing.assert_array_equal(b.path[:, [0, 1, 3]], a.path[:, [0, 1, 3]])
        np.testing.assert_array_equal(b.path[:, [2, 4]], -a.path[:, [2, 4]])


@settings(max_examples=30, deadline=None)
@given(
    y=st.floats(-0.2, 0.2),
    py=st.floats(-0.15, 0.15),
    xi=st.sampled_from([0.1, 0.3265, 0.5]),
)
def test_mirror_swaps_fate_property(y, py, xi):
    p = Pes.from_spec(vri_x=xi)
    px2 = 2 * (0.03 - float(hamiltonian([0, y, 0, py], p)))
    if px2 <= 0:
        return
    s = State(0.0, y, np.sqrt(px2), py)
    a, b = integrate(s, p), integrate(mirror(s), p)
    assert b.fate == a.fate.swapped()
    assert b.exit_state == mirror(a.exit_state)._replace(t=a.exit_state.t)


def test_time_reversal(pes, line_batch):
    idx = [i for i in np.flatnonzero(line_batch.fates == Fate.RECROSS)
           if line_batch.exits[i, 0] <= 10.0][:20]
    assert idx
    for i in idx:
        t, x, y, px, py = line_batch.exits[i]
        back = integrate(State(x, y, -px, -py), pes)
        assert back.fate is Fate.RECROSS
        s0 = line_batch.initial[i]
        got = np.array(back.exit_state[:4])
        want = np.array([0.0, s0[1], -s0[2], -s0[3]])
        assert np.max(np.abs(got - want)) <= 1e-6
        assert back.elapsed == pytest.approx(t, abs=1e-6)


def test_symplectic_drift_shrinks_with_step(pes):
    s = State(*line_ensemble(LineEnsembleSpec(0.03), pes)[100][:4])
    ref = integrate(s, pes)
    drifts = []
    for h in (0.02, 0.01, 0.005):
        r = integrate(s, pes, IntegratorConfig(method="symplectic4", step_size=h))
        assert r.fate == ref.fate
        assert r.elapsed == pytest.approx(ref.elapsed, abs=1e-4)
        drifts.append(r.max_energy_drift)
    assert drifts[0] > drifts[1] > drifts[2]
    # fourth order: halving h divides the error by about 16
    assert 8 < drifts[0] / drifts[1] < 32


def test_symplectic_and_adaptive_agree_on_fates(pes):
    states = line_ensemble(LineEnsembleSpec(0.03, 60), pes)
    a = integrate_batch(states, pes, IntegratorConfig())
    b = integrate_batch(states, pes, IntegratorConfig(method="symplectic4", step_size=0.002))
    assert np.mean(a.fates == b.fates) >= 0.95


def test_batch_matches_single(pes, line_batch):
    for i in (0, 50, 122, 200):
        r = integrate(State(*line_batch.initial[i][:4]), pes)
        assert int(r.fate) == line_batch.fates[i]
        np.testing.assert_array_equal(
            [r.exit_state.t, *r.exit_state[:4]], line_batch.exits[i]
        )


def test_batch_independent_of_workers(pes, line_batch):
    b3 = integrate_batch(line_batch.initial, pes, IntegratorConfig(), workers=3)
    np.testing.assert_array_equal(b3.fates, line_batch.fates)
    np.testing.assert_array_equal(b3.exits, line_batch.exits)
    np.testing.assert_array_equal(b3.drifts, line_batch.drifts)


def test_path_ends_at_exit_state(pes):
    s = State(*line_ensemble(LineEnsembleSpec(0.03), pes)[10][:4])
    r = integrate(s, pes, IntegratorConfig(sample_interval=0.01))
    assert r.path[0, 0] == 0.0
    np.testing.assert_array_equal(r.path[-1], [r.exit_state.t, *r.exit_state[:4]])
    assert np.all(np.diff(r.path[:, 0]) > 0)
    energies = hamiltonian(r.path[:, 1:], pes)
    assert np.max(np.abs(energies - 0.03)) <= 1e-9


def test_upper_half_ensemble_mostly_top_at_small_xi(pes_family):
    p = pes_family[0.1]
    states = line_ensemble(LineEnsembleSpec(0.03), p)
    batch = integrate_batch(states, p)
    upper = batch.fates[states[:, 1] > 0]
    lower = batch.fates[states[:, 1] < 0]
    assert np.sum(upper == Fate.TOP_WELL) == np.sum(lower == Fate.BOTTOM_WELL)
    c = batch.counts()
    assert c[Fate.TOP_WELL] == c[Fate.BOTTOM_WELL]


def test_fate_labels():
    assert [f.label for f in Fate] == ["TOP", "BOTTOM", "RECROSS", "TIMEOUT"]
    assert Fate.TOP_WELL.swapped() is Fate.BOTTOM_WELL
    assert Fate.RECROSS.swapped() is Fate.RECROSS


def test_tightened_keeps_method():
    cfg = dataclasses.replace(IntegratorConfig(), method="symplectic4").tightened()
    assert cfg.method == "symplectic4" and cfg.step_size == 0.5e-3
