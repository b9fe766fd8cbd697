"""Compiled trajectory kernels.

Everything here works on a flat parameter vector (see ``Pes.params``) and on
scalar state components, so a single trajectory never allocates in the inner
loop.  The batch driver releases the GIL so callers can run chunks on a thread
pool; each trajectory is computed independently, so results do not depend on
how the batch is split.
"""

import numpy as np
from numba import njit

# parameter vector layout
P_VB, P_XS, P_XI, P_A, P_B, P_C, P_M1, P_M2, P_XW, P_YW = range(10)

# fate codes
TOP_WELL, BOTTOM_WELL, RECROSS, TIMEOUT, STALLED = 0, 1, 2, 3, 4

METHOD_DOPRI5 = 0
METHOD_SYMPLECTIC4 = 1

# interior dense-output probes per accepted step (catch grazing passes)
N_PROBES = 4
MAX_BISECT = 200

# Dormand-Prince 5(4)
C2, C3, C4, C5 = 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0
A21 = 1.0 / 5.0
A31, A32 = 3.0 / 40.0, 9.0 / 40.0
A41, A42, A43 = 44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0
A51, A52, A53, A54 = 19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0
A61, A62, A63, A64, A65 = (
    9017.0 / 3168.0,
    -355.0 / 33.0,
    46732.0 / 5247.0,
    49.0 / 176.0,
    -5103.0 / 18656.0,
)
A71, A73, A74, A75, A76 = 35.0 / 384.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0
E1, E3, E4, E5, E6, E7 = (
    71.0 / 57600.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
)
D1, D3, D4, D5, D6, D7 = (
    -12715105075.0 / 11282082432.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
)

# Yoshida / Forest-Ruth 4th-order splitting weights
_CBRT2 = 2.0 ** (1.0 / 3.0)
W1 = 1.0 / (2.0 - _CBRT2)
W0 = -_CBRT2 / (2.0 - _CBRT2)
SC1 = 0.5 * W1
SC2 = 0.5 * (W0 + W1)


@njit(cache=True, inline="always")
def force(x, y, p):
    """Return ``(-dV/dx, -dV/dy)``."""
    xs2 = p[P_XS] * p[P_XS]
    k = 4.0 * p[P_VB] / (xs2 * xs2)
    y2 = y * y
    fx = k * x * (xs2 - x * x) + p[P_A] * y2 - p[P_C] * y2 * y2
    fy = 2.0 * p[P_A] * y * (x - p[P_XI]) - 4.0 * y * y2 * (p[P_B] + p[P_C] * x)
    return fx, fy


@njit(cache=True)
def energy(x, y, px, py, p):
    xs2 = p[P_XS] * p[P_XS]
    y2 = y * y
    v = (
        p[P_VB] / (xs2 * xs2) * x * x * (x * x - 2.0 * xs2)
        + p[P_A] * y2 * (p[P_XI] - x)
        + y2 * y2 * (p[P_B] + p[P_C] * x)
    )
    return 0.5 * px * px / p[P_M1] + 0.5 * py * py / p[P_M2] + v


@njit(cache=True)
def rhs(s, p, out):
    fx, fy = force(s[0], s[1], p)
    out[0] = s[2] / p[P_M1]
    out[1] = s[3] / p[P_M2]
    out[2] = fx
    out[3] = fy


@njit(cache=True, inline="always")
def _event_values(x, y, p, r2):
    dxw = x - p[P_XW]
    dyt = y - p[P_YW]
    dyb = y + p[P_YW]
    return dxw * dxw + dyt * dyt - r2, dxw * dxw + dyb * dyb - r2, x


@njit(cache=True)
def _dense(rc, theta, out):
    t1 = 1.0 - theta
    for i in range(4):
        out[i] = rc[0, i] + theta * (
            rc[1, i] + t1 * (rc[2, i] + theta * (rc[3, i] + t1 * rc[4, i]))
        )


@njit(cache=True)
def _event_g(which, s, p, r2):
    gt, gb, gr = _event_values(s[0], s[1], p, r2)
    if which == 0:
        return gt
    if which == 1:
        return gb
    return gr


@njit(cache=True)
def _bisect_dense(rc, which, lo, hi, p, r2, buf):
    """Shrink ``[lo, hi]`` (g(lo) > 0 >= g(hi)) to adjacent floats; return hi."""
    for _ in range(MAX_BISECT):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        _dense(rc, mid, buf)
        if _event_g(which, buf, p, r2) > 0.0:
            lo = mid
        else:
            hi = mid
    return hi


@njit(cache=True)
def _record_samples(rc, t0, h, t_hi, next_out, dt_out, t_start, path, n_path, buf):
    # write every sample time in (t0, t_hi] from the dense interpolant
    while n_path < path.shape[0] - 1 and next_out <= t_hi:
        theta = (next_out - t0) / h
        _dense(rc, theta, buf)
        path[n_path, 0] = next_out
        for i in range(4):
            path[n_path, 1 + i] = buf[i]
        n_path += 1
        next_out = t_start + n_path * dt_out
    return next_out, n_path


@njit(cache=True)
def integrate_dopri5(s0, t0, p, rtol, atol, t_max, radius, x_entry_min, dt_out, path):
    """Integrate one trajectory until capture, recross or timeout.

    Returns ``(fate, exit_state[5], max_drift, n_steps, n_path)``; ``path``
    rows ``(t, x, y, px, py)`` are filled when ``dt_out > 0``.
    """
    r2 = radius * radius
    y = s0.copy()
    h0_energy = energy(y[0], y[1], y[2], y[3], p)
    t = t0
    t_end = t0 + t_max
    exit_state = np.empty(5)
    drift = 0.0
    n_steps = 0
    n_path = 0
    next_out = t0
    if dt_out > 0.0:
        path[0, 0] = t0
        for i in range(4):
            path[0, 1 + i] = y[i]
        n_path = 1
        next_out = t0 + dt_out

    # already inside a capture circle
    gt, gb, gr = _event_values(y[0], y[1], p, r2)
    entered = y[0] >= x_entry_min
    if gt <= 0.0 or gb <= 0.0:
        fate = TOP_WELL if gt <= 0.0 else BOTTOM_WELL
        exit_state[0] = t
        for i in range(4):
            exit_state[1 + i] = y[i]
        return fate, exit_state, 0.0, 0, n_path

    k1 = np.empty(4)
    k2 = np.empty(4)
    k3 = np.empty(4)
    k4 = np.empty(4)
    k5 = np.empty(4)
    k6 = np.empty(4)
    k7 = np.empty(4)
    ys = np.empty(4)
    y1 = np.empty(4)
    rc = np.empty((5, 4))
    buf = np.empty(4)
    gprev = np.empty(3)
    gcur = np.empty(3)
    rhs(y, p, k1)

    h = 1e-2
    h_min = 1e-14
    fac_min, fac_max, safety = 0.2, 10.0, 0.9
    while True:
        if t >= t_end:
            exit_state[0] = t
            for i in range(4):
                exit_state[1 + i] = y[i]
            return TIMEOUT, exit_state, drift, n_steps, n_path
        if t + h > t_end:
            h = t_end - t
        if h < h_min * max(1.0, abs(t)):
            exit_state[0] = t
            for i in range(4):
                exit_state[1 + i] = y[i]
            return STALLED, exit_state, drift, n_steps, n_path

        for i in range(4):
            ys[i] = y[i] + h * A21 * k1[i]
        rhs(ys, p, k2)
        for i in range(4):
            ys[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i])
        rhs(ys, p, k3)
        for i in range(4):
            ys[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i])
        rhs(ys, p, k4)
        for i in range(4):
            ys[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i])
        rhs(ys, p, k5)
        for i in range(4):
            ys[i] = y[i] + h * (
                A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]
            )
        rhs(ys, p, k6)
        for i in range(4):
            y1[i] = y[i] + h * (
                A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]
            )
        rhs(y1, p, k7)

        err = 0.0
        for i in range(4):
            e = h * (
                E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]
            )
            sc = atol + rtol * max(abs(y[i]), abs(y1[i]))
            err += (e / sc) * (e / sc)
        err = np.sqrt(err / 4.0)

        if err > 1.0:
            h *= max(fac_min, safety * err ** (-0.2))
            continue

        # accepted: build the dense-output polynomial
        for i in range(4):
            dy = y1[i] - y[i]
            bspl = h * k1[i] - dy
            rc[0, i] = y[i]
            rc[1, i] = dy
            rc[2, i] = bspl
            rc[3, i] = dy - h * k7[i] - bspl
            rc[4, i] = h * (
                D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]
            )

        # event scan over N_PROBES sub-intervals of the step
        gp0, gp1, gp2 = _event_values(y[0], y[1], p, r2)
        gprev[0] = gp0
        gprev[1] = gp1
        gprev[2] = gp2
        theta_prev = 0.0
        hit = -1
        theta_hit = 2.0
        for j in range(1, N_PROBES + 1):
            if j == N_PROBES:
                theta = 1.0
                for i in range(4):
                    buf[i] = y1[i]
            else:
                theta = j / N_PROBES
                _dense(rc, theta, buf)
            gc0, gc1, gc2 = _event_values(buf[0], buf[1], p, r2)
            gcur[0] = gc0
            gcur[1] = gc1
            gcur[2] = gc2
            for ev in range(3):
                if ev == 2 and not entered:
                    continue
                if gprev[ev] > 0.0 and gcur[ev] <= 0.0:
                    th = _bisect_dense(rc, ev, theta_prev, theta, p, r2, ys)
                    if ev == 2:
                        _dense(rc, th, ys)
                        if ys[2] >= 0.0:
                            continue
                    if th < theta_hit:
                        theta_hit = th
                        hit = ev
            if hit >= 0:
                break
            if buf[0] >= x_entry_min:
                entered = True
            theta_prev = theta
            gprev[0] = gcur[0]
            gprev[1] = gcur[1]
            gprev[2] = gcur[2]

        n_steps += 1
        if hit >= 0:
            t_hit = t + theta_hit * h
            if theta_hit == 1.0:
                for i in range(4):
                    ys[i] = y1[i]
            else:
                _dense(rc, theta_hit, ys)
            if dt_out > 0.0:
                next_out, n_path = _record_samples(
                    rc, t, h, t_hit, next_out, dt_out, t0, path, n_path, buf
                )
                path[n_path, 0] = t_hit
                for i in range(4):
                    path[n_path, 1 + i] = ys[i]
                n_path += 1
            d = abs(energy(ys[0], ys[1], ys[2], ys[3], p) - h0_energy)
            if d > drift:
                drift = d
            exit_state[0] = t_hit
            for i in range(4):
                exit_state[1 + i] = ys[i]
            return hit, exit_state, drift, n_steps, n_path

        if dt_out > 0.0:
            next_out, n_path = _record_samples(
                rc, t, h, t + h, next_out, dt_out, t0, path, n_path, buf
            )
        t = t + h
        for i in range(4):
            y[i] = y1[i]
            k1[i] = k7[i]
        d = abs(energy(y[0], y[1], y[2], y[3], p) - h0_energy)
        if d > drift:
            drift = d
        fac = safety * err ** (-0.2) if err > 0.0 else fac_max
        h *= min(fac_max, max(fac_min, fac))


@njit(cache=True)
def symplectic_step(s, h, p, out):
    """One 4th-order drift-kick splitting step of length ``h``."""
    x, y, px, py = s[0], s[1], s[2], s[3]
    im1 = 1.0 / p[P_M1]
    im2 = 1.0 / p[P_M2]
    x += SC1 * h * px * im1
    y += SC1 * h * py * im2
    fx, fy = force(x, y, p)
    px += W1 * h * fx
    py += W1 * h * fy
    x += SC2 * h * px * im1
    y += SC2 * h * py * im2
    fx, fy = force(x, y, p)
    px += W0 * h * fx
    py += W0 * h * fy
    x += SC2 * h * px * im1
    y += SC2 * h * py * im2
    fx, fy = force(x, y, p)
    px += W1 * h * fx
    py += W1 * h * fy
    x += SC1 * h * px * im1
    y += SC1 * h * py * im2
    out[0] = x
    out[1] = y
    out[2] = px
    out[3] = py


@njit(cache=True)
def _bisect_substep(y, which, lo, hi, p, r2, buf):
    for _ in range(MAX_BISECT):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        symplectic_step(y, mid, p, buf)
        if _event_g(which, buf, p, r2) > 0.0:
            lo = mid
        else:
            hi = mid
    return hi


@njit(cache=True)
def integrate_symplectic(s0, t0, p, h, t_max, radius, x_entry_min, dt_out, path):
    """Fixed-step counterpart of :func:`integrate_dopri5`.

    Events are checked at step ends and localised by bisecting the length of
    a partial step taken from the last accepted state.  Path samples are
    taken at the nearest step end.
    """
    r2 = radius * radius
    y = s0.copy()
    h0_energy = energy(y[0], y[1], y[2], y[3], p)
    t = t0
    t_end = t0 + t_max
    exit_state = np.empty(5)
    drift = 0.0
    n_steps = 0
    n_path = 0
    next_out = t0
    if dt_out > 0.0:
        path[0, 0] = t0
        for i in range(4):
            path[0, 1 + i] = y[i]
        n_path = 1
        next_out = t0 + dt_out
    gt, gb, gr = _event_values(y[0], y[1], p, r2)
    entered = y[0] >= x_entry_min
    if gt <= 0.0 or gb <= 0.0:
        exit_state[0] = t
        for i in range(4):
            exit_state[1 + i] = y[i]
        return (TOP_WELL if gt <= 0.0 else BOTTOM_WELL), exit_state, 0.0, 0, n_path

    y1 = np.empty(4)
    buf = np.empty(4)
    gprev = np.empty(3)
    while True:
        if t >= t_end - 1e-12 * max(1.0, abs(t_end)):
            exit_state[0] = t
            for i in range(4):
                exit_state[1 + i] = y[i]
            return TIMEOUT, exit_state, drift, n_steps, n_path
        hs = min(h, t_end - t)
        symplectic_step(y, hs, p, y1)
        n_steps += 1
        gp0, gp1, gp2 = _event_values(y[0], y[1], p, r2)
        gprev[0] = gp0
        gprev[1] = gp1
        gprev[2] = gp2
        gc0, gc1, gc2 = _event_values(y1[0], y1[1], p, r2)
        hit = -1
        tau_hit = 2.0 * hs
        for ev in range(3):
            gc = gc0 if ev == 0 else (gc1 if ev == 1 else gc2)
            if ev == 2 and not entered:
                continue
            if gprev[ev] > 0.0 and gc <= 0.0:
                tau = _bisect_substep(y, ev, 0.0, hs, p, r2, buf)
                if ev == 2:
                    symplectic_step(y, tau, p, buf)
                    if buf[2] >= 0.0:
                        continue
                if tau < tau_hit:
                    tau_hit = tau
                    hit = ev
        if hit >= 0:
            symplectic_step(y, tau_hit, p, buf)
            t_hit = t + tau_hit
            if dt_out > 0.0 and n_path < path.shape[0]:
                path[n_path, 0] = t_hit
                for i in range(4):
                    path[n_path, 1 + i] = buf[i]
                n_path += 1
            d = abs(energy(buf[0], buf[1], buf[2], buf[3], p) - h0_energy)
            if d > drift:
                drift = d
            exit_state[0] = t_hit
            for i in range(4):
                exit_state[1 + i] = buf[i]
            return hit, exit_state, drift, n_steps, n_path
        t = t + hs
        for i in range(4):
            y[i] = y1[i]
        if y[0] >= x_entry_min:
            entered = True
        d = abs(energy(y[0], y[1], y[2], y[3], p) - h0_energy)
        if d > drift:
            drift = d
        if dt_out > 0.0 and t >= next_out - 0.5 * hs and n_path < path.shape[0] - 1:
            path[n_path, 0] = t
            for i in range(4):
                path[n_path, 1 + i] = y[i]
            n_path += 1
            next_out = t0 + n_path * dt_out


@njit(cache=True)
def _integrate_one(s0, t0, p, method, rtol, atol, h, t_max, radius, x_entry_min, dt_out, path):
    if method == METHOD_DOPRI5:
        return integrate_dopri5(s0, t0, p, rtol, atol, t_max, radius, x_entry_min, dt_out, path)
    return integrate_symplectic(s0, t0, p, h, t_max, radius, x_entry_min, dt_out, path)


@njit(cache=True, nogil=True)
def integrate_batch(states, p, method, rtol, atol, h, t_max, radius, x_entry_min):
    """Integrate rows ``(x, y, px, py, t)`` of ``states`` independently."""
    n = states.shape[0]
    fates = np.empty(n, dtype=np.int8)
    exits = np.empty((n, 5))
    drifts = np.empty(n)
    steps = np.empty(n, dtype=np.int64)
    dummy = np.empty((1, 5))
    for k in range(n):
        fate, ex, d, ns, _ = _integrate_one(
            states[k, :4].copy(), states[k, 4], p, method, rtol, atol, h, t_max,
            radius, x_entry_min, 0.0, dummy,
        )
        fates[k] = fate
        for i in range(5):
            exits[k, i] = ex[i]
        drifts[k] = d
        steps[k] = ns
    return fates, exits, drifts, steps
