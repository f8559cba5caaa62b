"""Compiled DOP853 stepper specialised to the scaled equations of motion.

State vector is ``(Q, P, phi, z)`` with ``Q = q / sqrt(j)``; the parameter
vector is ``(omega, omega0, gamma, eta)``.  Butcher tableau, error weights
and the dense-output matrix are taken from scipy's DOP853 tables; the
driver below mirrors scipy's step-size control so results are comparable.
"""

import math

import numpy as np
from numba import njit
from scipy.integrate._ivp import dop853_coefficients as _co

N_STAGES = _co.N_STAGES
A = np.ascontiguousarray(_co.A, dtype=np.float64)
B = np.ascontiguousarray(_co.B, dtype=np.float64)
C = np.ascontiguousarray(_co.C, dtype=np.float64)
E3 = np.ascontiguousarray(_co.E3, dtype=np.float64)
E5 = np.ascontiguousarray(_co.E5, dtype=np.float64)
D = np.ascontiguousarray(_co.D, dtype=np.float64)

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 10.0
ERR_EXP = -1.0 / 8.0

POLE_EPS = 1e-10
TWO_PI = 2.0 * math.pi

OK = 0
POLE = 1
UNDERFLOW = 2
RECORD_FULL = 3
SECTION_FULL = 4
MAX_STEPS = 5


@njit(cache=True, nogil=True)
def rhs(y, pr, out):
    """Write d(Q, P, phi, z)/dt into ``out``; False when too close to a pole."""
    w, w0, g, eta = pr[0], pr[1], pr[2], pr[3]
    Q, P, ph, z = y[0], y[1], y[2], y[3]
    one_m = 1.0 - z * z
    if one_m < POLE_EPS:
        return False
    s = math.sqrt(one_m)
    c = math.cos(ph)
    out[0] = w * P
    out[1] = -w * Q - 2.0 * g * s * c
    out[2] = w0 + z * (eta - 2.0 * g * Q * c / s)
    out[3] = 2.0 * g * Q * s * math.sin(ph)
    return True


@njit(cache=True, nogil=True)
def energy(y, pr):
    w, w0, g, eta = pr[0], pr[1], pr[2], pr[3]
    Q, P, ph, z = y[0], y[1], y[2], y[3]
    s = math.sqrt(max(0.0, 1.0 - z * z))
    return 0.5 * w / w0 * (Q * Q + P * P) + z + 2.0 * g / w0 * Q * s * math.cos(ph) + 0.5 * eta / w0 * z * z


@njit(cache=True, nogil=True)
def _rms(v):
    acc = 0.0
    for i in range(v.shape[0]):
        acc += v[i] * v[i]
    return math.sqrt(acc / v.shape[0])


@njit(cache=True, nogil=True)
def _initial_step(y, f, pr, direction, rtol, atol):
    n = y.shape[0]
    scale = np.empty(n)
    tmp = np.empty(n)
    for i in range(n):
        scale[i] = atol + abs(y[i]) * rtol
        tmp[i] = y[i] / scale[i]
    d0 = _rms(tmp)
    for i in range(n):
        tmp[i] = f[i] / scale[i]
    d1 = _rms(tmp)
    if d0 < 1e-5 or d1 < 1e-5:
        h0 = 1e-6
    else:
        h0 = 0.01 * d0 / d1
    y1 = np.empty(n)
    for i in range(n):
        y1[i] = y[i] + h0 * direction * f[i]
    f1 = np.empty(n)
    if not rhs(y1, pr, f1):
        return h0
    for i in range(n):
        tmp[i] = (f1[i] - f[i]) / scale[i]
    d2 = _rms(tmp) / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1.0 / 8.0)
    return min(100.0 * h0, h1)


@njit(cache=True, nogil=True)
def _dense_eval(x, y_old, F, out):
    n = y_old.shape[0]
    for i in range(n):
        out[i] = 0.0
    k = 0
    for r in range(F.shape[0] - 1, -1, -1):
        for i in range(n):
            out[i] += F[r, i]
            if k % 2 == 0:
                out[i] *= x
            else:
                out[i] *= 1.0 - x
        k += 1
    for i in range(n):
        out[i] += y_old[i]


@njit(cache=True, nogil=True)
def integrate_kernel(y0, t0, t_end, pr, rtol, atol, record, t_rec, y_rec, sections, sec_buf, max_steps):
    """Integrate from t0 to t_end.

    Returns ``(status, n_rec, n_sec, t_last, y_last, max_drift)``.  When
    ``record`` is set, every accepted step is stored in ``t_rec``/``y_rec``
    (the initial point included).  When ``sections`` is set, each zero of P
    is located on the dense interpolant and stored in ``sec_buf`` as rows
    ``(t, Q, P, phi, z, direction)``.
    """
    n = 4
    K = np.zeros((16, n))
    y = y0.copy()
    y_new = np.empty(n)
    f = np.empty(n)
    dy = np.empty(n)
    ytmp = np.empty(n)
    scale = np.empty(n)
    F = np.empty((7, n))
    yi = np.empty(n)
    e0 = energy(y, pr)
    drift = 0.0
    n_rec = 0
    n_sec = 0
    t = t0
    direction = 1.0 if t_end >= t0 else -1.0

    if record:
        t_rec[0] = t
        for i in range(n):
            y_rec[0, i] = y[i]
        n_rec = 1
    if not rhs(y, pr, f):
        return POLE, n_rec, n_sec, t, y, drift
    if sections and abs(y[1]) <= 1e-12:
        sec_buf[0, 0] = t
        for i in range(n):
            sec_buf[0, 1 + i] = y[i]
        sec_buf[0, 5] = 1.0 if f[1] * direction >= 0.0 else -1.0
        n_sec = 1
    if t == t_end:
        return OK, n_rec, n_sec, t, y, drift

    h_abs = _initial_step(y, f, pr, direction, rtol, atol)
    steps = 0
    while direction * (t_end - t) > 0.0:
        steps += 1
        if steps > max_steps:
            return MAX_STEPS, n_rec, n_sec, t, y, drift
        min_step = 10.0 * abs(np.nextafter(t, direction * np.inf) - t)
        if h_abs < min_step:
            h_abs = min_step
        accepted = False
        rejected = False
        while not accepted:
            if h_abs < min_step:
                return UNDERFLOW, n_rec, n_sec, t, y, drift
            h = h_abs * direction
            t_new = t + h
            if direction * (t_new - t_end) > 0.0:
                t_new = t_end
            h = t_new - t
            h_abs = abs(h)
            # stages
            for i in range(n):
                K[0, i] = f[i]
            pole = False
            for s in range(1, N_STAGES):
                for i in range(n):
                    acc = 0.0
                    for r in range(s):
                        acc += K[r, i] * A[s, r]
                    ytmp[i] = y[i] + acc * h
                if not rhs(ytmp, pr, dy):
                    pole = True
                    break
                for i in range(n):
                    K[s, i] = dy[i]
            if not pole:
                for i in range(n):
                    acc = 0.0
                    for r in range(N_STAGES):
                        acc += K[r, i] * B[r]
                    y_new[i] = y[i] + h * acc
                if not rhs(y_new, pr, dy):
                    pole = True
            if pole:
                # shrink towards the pole; give up once the step underflows
                h_abs *= 0.25
                rejected = True
                if h_abs < min_step:
                    return POLE, n_rec, n_sec, t, y, drift
                continue
            for i in range(n):
                K[N_STAGES, i] = dy[i]
                scale[i] = atol + max(abs(y[i]), abs(y_new[i])) * rtol
            e5 = 0.0
            e3 = 0.0
            for i in range(n):
                a5 = 0.0
                a3 = 0.0
                for r in range(N_STAGES + 1):
                    a5 += K[r, i] * E5[r]
                    a3 += K[r, i] * E3[r]
                a5 /= scale[i]
                a3 /= scale[i]
                e5 += a5 * a5
                e3 += a3 * a3
            if e5 == 0.0 and e3 == 0.0:
                err = 0.0
            else:
                err = h_abs * e5 / math.sqrt((e5 + 0.01 * e3) * n)
            if err < 1.0:
                if err == 0.0:
                    factor = MAX_FACTOR
                else:
                    factor = min(MAX_FACTOR, SAFETY * err**ERR_EXP)
                if rejected:
                    factor = min(1.0, factor)
                h_abs *= factor
                accepted = True
            else:
                h_abs *= max(MIN_FACTOR, SAFETY * err**ERR_EXP)
                rejected = True

        # p = 0 crossings on the dense interpolant
        if sections and ((y[1] < 0.0 < y_new[1]) or (y[1] > 0.0 > y_new[1]) or (y_new[1] == 0.0 and y[1] != 0.0)):
            ok = True
            for s in range(N_STAGES + 1, 16):
                for i in range(n):
                    acc = 0.0
                    for r in range(s):
                        acc += K[r, i] * A[s, r]
                    ytmp[i] = y[i] + acc * h
                if not rhs(ytmp, pr, dy):
                    ok = False
                    break
                for i in range(n):
                    K[s, i] = dy[i]
            if ok:
                for i in range(n):
                    delta = y_new[i] - y[i]
                    F[0, i] = delta
                    F[1, i] = h * K[0, i] - delta
                    F[2, i] = 2.0 * delta - h * (K[N_STAGES, i] + K[0, i])
                    for r in range(4):
                        acc = 0.0
                        for c in range(16):
                            acc += D[r, c] * K[c, i]
                        F[3 + r, i] = h * acc
                lo = 0.0
                hi = 1.0
                p_lo = y[1]
                x = 1.0
                for _ in range(200):
                    x = 0.5 * (lo + hi)
                    _dense_eval(x, y, F, yi)
                    if abs(yi[1]) < 1e-13 or hi - lo < 1e-16:
                        break
                    if (yi[1] < 0.0) == (p_lo < 0.0):
                        lo = x
                        p_lo = yi[1]
                    else:
                        hi = x
                if n_sec >= sec_buf.shape[0]:
                    return SECTION_FULL, n_rec, n_sec, t, y, drift
                sec_buf[n_sec, 0] = t + x * h
                for i in range(n):
                    sec_buf[n_sec, 1 + i] = yi[i]
                sec_buf[n_sec, 3] = yi[2] - TWO_PI * math.floor(yi[2] / TWO_PI)
                sec_buf[n_sec, 5] = 1.0 if (y_new[1] - y[1]) * direction > 0.0 else -1.0
                n_sec += 1

        t = t_new
        for i in range(n):
            y[i] = y_new[i]
            f[i] = K[N_STAGES, i]
        y[2] -= TWO_PI * math.floor(y[2] / TWO_PI)
        d = abs(energy(y, pr) - e0)
        if d > drift:
            drift = d
        if record:
            if n_rec >= t_rec.shape[0]:
                return RECORD_FULL, n_rec, n_sec, t, y, drift
            t_rec[n_rec] = t
            for i in range(n):
                y_rec[n_rec, i] = y[i]
            n_rec += 1
    return OK, n_rec, n_sec, t, y, drift
