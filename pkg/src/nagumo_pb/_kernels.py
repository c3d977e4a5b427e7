"""Compiled DOP853 propagator for the planar system x' = y, y' = g x - n(t) F0(x).

Only endpoints (plus optional angle bookkeeping around a reference point) are
produced here; dense trajectories go through :func:`nagumo_pb.flow.integrate`.

The weight is passed as one period of segments ``[bp[j], bp[j+1])`` on which
``n(t) = c0[j] + c1[j] * (t - bp[j])``.  Integration restarts at every
segment boundary so steps never straddle a jump of ``n``.
"""

import math

import numpy as np
from numba import njit
from scipy.integrate._ivp import dop853_coefficients as _dop

_NS = _dop.N_STAGES
_A = np.ascontiguousarray(_dop.A[:_NS, :_NS])
_B = np.ascontiguousarray(_dop.B)
_C = np.ascontiguousarray(_dop.C[:_NS])
_E3 = np.ascontiguousarray(_dop.E3)
_E5 = np.ascontiguousarray(_dop.E5)

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 10.0
_ERR_EXP = -1.0 / 8.0
_H_MIN_REL = 1e-14

# status codes
OK = 0
STEP_UNDERFLOW = 1
HIT_REFERENCE = 2
NONFINITE = 3


@njit(cache=True)
def f0_eval(s, coeffs, k0, clip):
    """F0(s) = F(clip(s, 0, 1)) + k0 * ell(s) with F given by polynomial coefficients (highest first).

    With ``clip`` false the bare polynomial is used (linear sanity systems).
    """
    d = s
    if not clip:
        acc = 0.0
        for c in coeffs:
            acc = acc * d + c
        return acc
    # F(0) = F(1) = 0, so outside [0, 1] only the ell term remains
    if s < 0.0:
        return k0 * math.exp(1.0 / s)
    if s > 1.0:
        return -k0 * math.exp(1.0 / (1.0 - s))
    acc = 0.0
    for c in coeffs:
        acc = acc * d + c
    return acc


@njit(cache=True)
def _rhs(t, x, y, g, nc0, nc1, tseg, coeffs, k0, clip):
    n = nc0 + nc1 * (t - tseg)
    return y, g * x - n * f0_eval(x, coeffs, k0, clip)


@njit(cache=True)
def _initial_step(t, x, y, fx, fy, g, nc0, nc1, tseg, coeffs, k0, clip, rtol, atol):
    sx = atol + abs(x) * rtol
    sy = atol + abs(y) * rtol
    d0 = math.sqrt(((x / sx) ** 2 + (y / sy) ** 2) / 2.0)
    d1 = math.sqrt(((fx / sx) ** 2 + (fy / sy) ** 2) / 2.0)
    if d0 < 1e-5 or d1 < 1e-5:
        h0 = 1e-6
    else:
        h0 = 0.01 * d0 / d1
    x1 = x + h0 * fx
    y1 = y + h0 * fy
    gx, gy = _rhs(t + h0, x1, y1, g, nc0, nc1, tseg, coeffs, k0, clip)
    d2 = math.sqrt((((gx - fx) / sx) ** 2 + ((gy - fy) / sy) ** 2) / 2.0) / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1.0 / 8.0)
    return min(100.0 * h0, h1)


@njit(cache=True)
def _segment(x, y, t, t_end, h, g, nc0, nc1, tseg, coeffs, k0, clip, rtol, atol,
             max_step, track, q1, q2, rho_floor, acc, rec_t, rec_j, j_seg, p_seg):
    """Integrate on one smooth segment [t, t_end].

    ``acc`` holds [theta_total, rho_min, nsteps, t_fail, xmin, xmax].
    Accepted step end times are written to ``rec_t`` (segment index and
    period to ``rec_j``) while capacity lasts.
    Returns (x, y, h_next, status).
    """
    K = np.empty((_NS + 1, 2))
    fx, fy = _rhs(t, x, y, g, nc0, nc1, tseg, coeffs, k0, clip)
    if h <= 0.0:
        h = _initial_step(t, x, y, fx, fy, g, nc0, nc1, tseg, coeffs, k0, clip, rtol, atol)
    rejected = False
    while t < t_end:
        h_min = _H_MIN_REL * max(1.0, abs(t))
        if h > max_step:
            h = max_step
        last = False
        if t + h >= t_end:
            h = t_end - t
            last = True
        if h < h_min and not last:
            acc[3] = t
            return x, y, h, STEP_UNDERFLOW
        K[0, 0] = fx
        K[0, 1] = fy
        for s in range(1, _NS):
            dx = 0.0
            dy = 0.0
            for j in range(s):
                dx += _A[s, j] * K[j, 0]
                dy += _A[s, j] * K[j, 1]
            kx, ky = _rhs(t + _C[s] * h, x + h * dx, y + h * dy,
                          g, nc0, nc1, tseg, coeffs, k0, clip)
            K[s, 0] = kx
            K[s, 1] = ky
        bx = 0.0
        by = 0.0
        for j in range(_NS):
            bx += _B[j] * K[j, 0]
            by += _B[j] * K[j, 1]
        xn = x + h * bx
        yn = y + h * by
        t_new = t_end if last else t + h
        fxn, fyn = _rhs(t_new, xn, yn, g, nc0, nc1, tseg, coeffs, k0, clip)
        K[_NS, 0] = fxn
        K[_NS, 1] = fyn
        if not (math.isfinite(xn) and math.isfinite(yn)):
            acc[3] = t
            return x, y, h, NONFINITE
        sx = atol + max(abs(x), abs(xn)) * rtol
        sy = atol + max(abs(y), abs(yn)) * rtol
        e5x = 0.0
        e5y = 0.0
        e3x = 0.0
        e3y = 0.0
        for j in range(_NS + 1):
            e5x += _E5[j] * K[j, 0]
            e5y += _E5[j] * K[j, 1]
            e3x += _E3[j] * K[j, 0]
            e3y += _E3[j] * K[j, 1]
        e5 = (e5x / sx) ** 2 + (e5y / sy) ** 2
        e3 = (e3x / sx) ** 2 + (e3y / sy) ** 2
        if e5 == 0.0 and e3 == 0.0:
            err = 0.0
        else:
            err = abs(h) * e5 / math.sqrt((e5 + 0.01 * e3) * 2.0)
        if err < 1.0:
            dth = 0.0
            if track:
                ux = x - q1
                uy = y - q2
                vx = xn - q1
                vy = yn - q2
                dth = math.atan2(ux * vy - uy * vx, ux * vx + uy * vy)
            if track and abs(dth) >= 0.5 * math.pi:
                # angle increment too coarse to unwrap reliably
                h *= 0.5
                rejected = True
                continue
            if err == 0.0:
                factor = _MAX_FACTOR
            else:
                factor = min(_MAX_FACTOR, _SAFETY * err ** _ERR_EXP)
            if rejected:
                factor = min(1.0, factor)
            rejected = False
            x = xn
            y = yn
            fx = fxn
            fy = fyn
            t = t_new
            k = int(acc[2])
            if k < rec_t.shape[0]:
                rec_t[k] = t
                rec_j[k, 0] = j_seg
                rec_j[k, 1] = p_seg
            acc[2] += 1.0
            if xn < acc[4]:
                acc[4] = xn
            if xn > acc[5]:
                acc[5] = xn
            if track:
                acc[0] += dth
                rho = math.sqrt((xn - q1) ** 2 + (yn - q2) ** 2)
                if rho < acc[1]:
                    acc[1] = rho
                if rho < rho_floor:
                    acc[3] = t
                    return x, y, h, HIT_REFERENCE
            if not last:
                h *= factor
        else:
            h *= max(_MIN_FACTOR, _SAFETY * err ** _ERR_EXP)
            rejected = True
    return x, y, h, OK


@njit(cache=True)
def propagate(x, y, t0, t1, g, beta, bp, c0, c1, coeffs, k0, clip, rtol, atol,
              max_step, track, q1, q2, rho_floor):
    """Advance (x, y) from t0 to t1 across weight segments.

    Returns (x, y, status, acc) with acc = [theta_total, rho_min, nsteps,
    t_fail, xmin, xmax].
    """
    rec_t = np.empty(0)
    rec_j = np.empty((0, 2), dtype=np.int64)
    return propagate_rec(x, y, t0, t1, g, beta, bp, c0, c1, coeffs, k0, clip, rtol,
                         atol, max_step, track, q1, q2, rho_floor, rec_t, rec_j)


@njit(cache=True)
def propagate_rec(x, y, t0, t1, g, beta, bp, c0, c1, coeffs, k0, clip, rtol, atol,
                  max_step, track, q1, q2, rho_floor, rec_t, rec_j):
    """:func:`propagate` that also records the accepted step sequence."""
    acc = np.empty(6)
    acc[0] = 0.0
    acc[1] = math.sqrt((x - q1) ** 2 + (y - q2) ** 2)
    acc[2] = 0.0
    acc[3] = math.nan
    acc[4] = x
    acc[5] = x
    if track and acc[1] < rho_floor:
        acc[3] = t0
        return x, y, HIT_REFERENCE, acc
    nseg = bp.shape[0] - 1
    p = math.floor(t0 / beta)
    local = t0 - p * beta
    j = np.searchsorted(bp, local, side="right") - 1
    if j < 0:
        j = 0
    if j >= nseg:
        j = 0
        p += 1
    t = t0
    h = -1.0
    while t < t1:
        seg_start = p * beta + bp[j]
        seg_end = p * beta + bp[j + 1]
        t_end = min(seg_end, t1)
        if t_end > t:
            x, y, h, status = _segment(
                x, y, t, t_end, h, g, c0[j], c1[j], seg_start, coeffs, k0, clip,
                rtol, atol, max_step, track, q1, q2, rho_floor, acc, rec_t, rec_j, j, p)
            if status != OK:
                return x, y, status, acc
            # fresh step-size estimate after a jump in n
            h = -1.0
        t = t_end
        j += 1
        if j >= nseg:
            j = 0
            p += 1
    return x, y, OK, acc


@njit(cache=True)
def propagate_many(xs, ys, t0, t1, g, beta, bp, c0, c1, coeffs, k0, clip, rtol,
                   atol, max_step, track, q1, q2, rho_floor):
    """Vectorised :func:`propagate`; returns (xs, ys, status, theta, rho_min)."""
    n = xs.shape[0]
    ox = np.empty(n)
    oy = np.empty(n)
    st = np.empty(n, dtype=np.int64)
    th = np.empty(n)
    rm = np.empty(n)
    for i in range(n):
        a, b, s, acc = propagate(xs[i], ys[i], t0, t1, g, beta, bp, c0, c1,
                                 coeffs, k0, clip, rtol, atol, max_step, track, q1,
                                 q2, rho_floor)
        ox[i] = a
        oy[i] = b
        st[i] = s
        th[i] = acc[0]
        rm[i] = acc[1]
    return ox, oy, st, th, rm


@njit(cache=True)
def propagate_frozen(x, y, t0, rec_t, rec_j, n_steps, g, beta, bp, c0, c1, coeffs, k0, clip):
    """Replay a recorded step sequence without error control.

    The result is a smooth function of ``(x, y)``, which is what finite
    differences need.
    """
    K = np.empty((_NS + 1, 2))
    t = t0
    for i in range(n_steps):
        t_new = rec_t[i]
        j = rec_j[i, 0]
        tseg = rec_j[i, 1] * beta + bp[j]
        h = t_new - t
        nc0 = c0[j]
        nc1 = c1[j]
        fx, fy = _rhs(t, x, y, g, nc0, nc1, tseg, coeffs, k0, clip)
        K[0, 0] = fx
        K[0, 1] = fy
        for s in range(1, _NS):
            dx = 0.0
            dy = 0.0
            for jj in range(s):
                dx += _A[s, jj] * K[jj, 0]
                dy += _A[s, jj] * K[jj, 1]
            kx, ky = _rhs(t + _C[s] * h, x + h * dx, y + h * dy,
                          g, nc0, nc1, tseg, coeffs, k0, clip)
            K[s, 0] = kx
            K[s, 1] = ky
        bx = 0.0
        by = 0.0
        for jj in range(_NS):
            bx += _B[jj] * K[jj, 0]
            by += _B[jj] * K[jj, 1]
        x = x + h * bx
        y = y + h * by
        t = t_new
    return x, y
