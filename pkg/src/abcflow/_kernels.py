"""Hot integration loops, written once and optionally compiled with numba.

Set ``ABCFLOW_NUMBA=0`` in the environment to run the pure-Python/numpy
fallback path instead of the jitted one.  Both paths execute the same
source; ``benchmarks/bench_backends.py`` times them against each other.
"""

import math
import os

import numpy as np

_env = os.environ.get("ABCFLOW_NUMBA", "1").strip().lower()
NUMBA_REQUESTED = _env not in ("0", "false", "off", "no")

NUMBA_ENABLED = False
if NUMBA_REQUESTED:
    try:
        from numba import njit as _njit

        NUMBA_ENABLED = True
    except ImportError:
        pass


def _jit(fn):
    if NUMBA_ENABLED:
        return _njit(cache=True, nogil=True)(fn)
    return fn


HALF_PI = math.pi / 2.0
THREE_HALF_PI = 3.0 * math.pi / 2.0

# Dormand-Prince 5(4) tableau
_A21 = 1.0 / 5.0
_A31, _A32 = 3.0 / 40.0, 9.0 / 40.0
_A41, _A42, _A43 = 44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0
_A51, _A52, _A53, _A54 = 19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0
_A61, _A62, _A63, _A64, _A65 = (
    9017.0 / 3168.0,
    -355.0 / 33.0,
    46732.0 / 5247.0,
    49.0 / 176.0,
    -5103.0 / 18656.0,
)
_B1, _B3, _B4, _B5, _B6 = 35.0 / 384.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0
# 5th-order minus embedded 4th-order weights (k7 = trailing FSAL stage)
_E1, _E3, _E4, _E5, _E6, _E7 = (
    71.0 / 57600.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
)
# Shampine's quartic interpolant: y(t0+th) = y0 + h * sum_j t^(j+1) * sum_i P[i][j]*k_i
_P = np.array(
    [
        [1.0, -8048581381.0 / 2820520608.0, 8663915743.0 / 2820520608.0, -12715105075.0 / 11282082432.0],
        [0.0, 0.0, 0.0, 0.0],
        [0.0, 131558114200.0 / 32700410799.0, -68118460800.0 / 10900136933.0, 87487479700.0 / 32700410799.0],
        [0.0, -1754552775.0 / 470086768.0, 14199869525.0 / 1410260304.0, -10690763975.0 / 1880347072.0],
        [0.0, 127303824393.0 / 49829197408.0, -318862633887.0 / 49829197408.0, 701980252875.0 / 199316789632.0],
        [0.0, -282668133.0 / 205662961.0, 2019193451.0 / 616988883.0, -1453857185.0 / 822651844.0],
        [0.0, 40617522.0 / 29380423.0, -110615467.0 / 29380423.0, 69997945.0 / 29380423.0],
    ]
)

MIN_STEP = 1e-14
SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 5.0

# _advance status codes
OK = 0
EXIT_EVENT = 1
STEP_LIMIT = 2
STEP_UNDERFLOW = 3
NO_EXIT = 4


def _vel_py(A, B, C, x, y, z):
    return (
        A * math.sin(z) + C * math.cos(y),
        B * math.sin(x) + A * math.cos(z),
        C * math.sin(y) + B * math.cos(x),
    )


_vel = _jit(_vel_py)


def _face_values_py(x, y, z):
    # positive-inside boundary functions of the prism, in face order
    # FX, FDIAG, FANTI, FZ0, FZTOP
    return (-x, x + y + HALF_PI, THREE_HALF_PI - (y - x), z, HALF_PI - z)


_face_values = _jit(_face_values_py)


def _dense_point_py(x0, y0, z0, h, q, theta):
    px = q[0, 0] + theta * (q[1, 0] + theta * (q[2, 0] + theta * q[3, 0]))
    py = q[0, 1] + theta * (q[1, 1] + theta * (q[2, 1] + theta * q[3, 1]))
    pz = q[0, 2] + theta * (q[1, 2] + theta * (q[2, 2] + theta * q[3, 2]))
    s = h * theta
    return (x0 + s * px, y0 + s * py, z0 + s * pz)


_dense_point = _jit(_dense_point_py)


def _advance_py(
    A,
    B,
    C,
    x0,
    y0,
    z0,
    t0,
    t_end,
    rtol,
    atol,
    h_init,
    h_max,
    max_steps,
    until_exit,
    grace_tol,
    horizon,
):
    """Adaptive DOPRI5(4) march with per-step dense coefficients.

    Span mode (until_exit False): run from t0 to t_end, forward or backward.
    Exit mode (until_exit True): run forward until a prism face function goes
    negative (faces initially touching the start point are ignored until they
    first clear grace_tol), or until `horizon` time has elapsed.

    Returns (status, ts, ys, qs, grace_mask) with ts of length n+1, ys of
    shape (n+1, 3) and qs of shape (n, 4, 3).
    """
    if until_exit:
        direction = 1.0
    else:
        direction = 1.0 if t_end >= t0 else -1.0

    cap = 512
    ts = np.empty(cap)
    ys = np.empty((cap, 3))
    qs = np.empty((cap, 4, 3))

    t = t0
    x, y, z = x0, y0, z0
    ts[0] = t
    ys[0, 0] = x
    ys[0, 1] = y
    ys[0, 2] = z

    grace_mask = 0
    if until_exit:
        f0, f1, f2, f3, f4 = _face_values(x, y, z)
        if f0 < grace_tol:
            grace_mask |= 1
        if f1 < grace_tol:
            grace_mask |= 2
        if f2 < grace_tol:
            grace_mask |= 4
        if f3 < grace_tol:
            grace_mask |= 8
        if f4 < grace_tol:
            grace_mask |= 16

    k1x, k1y, k1z = _vel(A, B, C, x, y, z)
    h = abs(h_init)
    if h > h_max:
        h = h_max
    n = 0
    n_attempts = 0
    status = OK

    while True:
        if n_attempts >= max_steps:
            status = STEP_LIMIT
            break
        n_attempts += 1

        if h < MIN_STEP:
            status = STEP_UNDERFLOW
            break

        hit_end = False
        if not until_exit:
            remaining = (t_end - t) * direction
            if h >= remaining:
                h = remaining
                hit_end = True

        hs = h * direction

        ax = x + hs * _A21 * k1x
        ay = y + hs * _A21 * k1y
        az = z + hs * _A21 * k1z
        k2x, k2y, k2z = _vel(A, B, C, ax, ay, az)

        ax = x + hs * (_A31 * k1x + _A32 * k2x)
        ay = y + hs * (_A31 * k1y + _A32 * k2y)
        az = z + hs * (_A31 * k1z + _A32 * k2z)
        k3x, k3y, k3z = _vel(A, B, C, ax, ay, az)

        ax = x + hs * (_A41 * k1x + _A42 * k2x + _A43 * k3x)
        ay = y + hs * (_A41 * k1y + _A42 * k2y + _A43 * k3y)
        az = z + hs * (_A41 * k1z + _A42 * k2z + _A43 * k3z)
        k4x, k4y, k4z = _vel(A, B, C, ax, ay, az)

        ax = x + hs * (_A51 * k1x + _A52 * k2x + _A53 * k3x + _A54 * k4x)
        ay = y + hs * (_A51 * k1y + _A52 * k2y + _A53 * k3y + _A54 * k4y)
        az = z + hs * (_A51 * k1z + _A52 * k2z + _A53 * k3z + _A54 * k4z)
        k5x, k5y, k5z = _vel(A, B, C, ax, ay, az)

        ax = x + hs * (_A61 * k1x + _A62 * k2x + _A63 * k3x + _A64 * k4x + _A65 * k5x)
        ay = y + hs * (_A61 * k1y + _A62 * k2y + _A63 * k3y + _A64 * k4y + _A65 * k5y)
        az = z + hs * (_A61 * k1z + _A62 * k2z + _A63 * k3z + _A64 * k4z + _A65 * k5z)
        k6x, k6y, k6z = _vel(A, B, C, ax, ay, az)

        xn = x + hs * (_B1 * k1x + _B3 * k3x + _B4 * k4x + _B5 * k5x + _B6 * k6x)
        yn = y + hs * (_B1 * k1y + _B3 * k3y + _B4 * k4y + _B5 * k5y + _B6 * k6y)
        zn = z + hs * (_B1 * k1z + _B3 * k3z + _B4 * k4z + _B5 * k5z + _B6 * k6z)
        k7x, k7y, k7z = _vel(A, B, C, xn, yn, zn)

        ex = hs * (_E1 * k1x + _E3 * k3x + _E4 * k4x + _E5 * k5x + _E6 * k6x + _E7 * k7x)
        ey = hs * (_E1 * k1y + _E3 * k3y + _E4 * k4y + _E5 * k5y + _E6 * k6y + _E7 * k7y)
        ez = hs * (_E1 * k1z + _E3 * k3z + _E4 * k4z + _E5 * k5z + _E6 * k6z + _E7 * k7z)

        sx = atol + rtol * max(abs(x), abs(xn))
        sy = atol + rtol * max(abs(y), abs(yn))
        sz = atol + rtol * max(abs(z), abs(zn))
        err = math.sqrt(((ex / sx) ** 2 + (ey / sy) ** 2 + (ez / sz) ** 2) / 3.0)

        if err <= 1.0:
            # accepted: record dense coefficients q[j] = sum_i P[i][j] * k_i
            if n + 1 >= cap:
                cap *= 2
                ts2 = np.empty(cap)
                ys2 = np.empty((cap, 3))
                qs2 = np.empty((cap, 4, 3))
                ts2[: n + 1] = ts[: n + 1]
                ys2[: n + 1] = ys[: n + 1]
                qs2[:n] = qs[:n]
                ts, ys, qs = ts2, ys2, qs2

            for j in range(4):
                qs[n, j, 0] = (
                    _P[0, j] * k1x
                    + _P[2, j] * k3x
                    + _P[3, j] * k4x
                    + _P[4, j] * k5x
                    + _P[5, j] * k6x
                    + _P[6, j] * k7x
                )
                qs[n, j, 1] = (
                    _P[0, j] * k1y
                    + _P[2, j] * k3y
                    + _P[3, j] * k4y
                    + _P[4, j] * k5y
                    + _P[5, j] * k6y
                    + _P[6, j] * k7y
                )
                qs[n, j, 2] = (
                    _P[0, j] * k1z
                    + _P[2, j] * k3z
                    + _P[3, j] * k4z
                    + _P[4, j] * k5z
                    + _P[5, j] * k6z
                    + _P[6, j] * k7z
                )

            t_new = t_end if hit_end else t + hs
            ts[n + 1] = t_new
            ys[n + 1, 0] = xn
            ys[n + 1, 1] = yn
            ys[n + 1, 2] = zn

            crossed = False
            if until_exit:
                f0, f1, f2, f3, f4 = _face_values(xn, yn, zn)
                if grace_mask & 1 and f0 > grace_tol:
                    grace_mask &= ~1
                if grace_mask & 2 and f1 > grace_tol:
                    grace_mask &= ~2
                if grace_mask & 4 and f2 > grace_tol:
                    grace_mask &= ~4
                if grace_mask & 8 and f3 > grace_tol:
                    grace_mask &= ~8
                if grace_mask & 16 and f4 > grace_tol:
                    grace_mask &= ~16

                fmin0, fmin1, fmin2, fmin3, fmin4 = f0, f1, f2, f3, f4
                for m in range(1, 4):
                    gx, gy, gz = _dense_point(x, y, z, hs, qs[n], 0.25 * m)
                    g0, g1, g2, g3, g4 = _face_values(gx, gy, gz)
                    fmin0 = min(fmin0, g0)
                    fmin1 = min(fmin1, g1)
                    fmin2 = min(fmin2, g2)
                    fmin3 = min(fmin3, g3)
                    fmin4 = min(fmin4, g4)
                if (
                    (not grace_mask & 1 and fmin0 < 0.0)
                    or (not grace_mask & 2 and fmin1 < 0.0)
                    or (not grace_mask & 4 and fmin2 < 0.0)
                    or (not grace_mask & 8 and fmin3 < 0.0)
                    or (not grace_mask & 16 and fmin4 < 0.0)
                ):
                    crossed = True

            n += 1
            t = t_new
            x, y, z = xn, yn, zn
            k1x, k1y, k1z = k7x, k7y, k7z

            if crossed:
                status = EXIT_EVENT
                break
            if not until_exit and hit_end:
                status = OK
                break
            if until_exit and t - t0 >= horizon:
                status = NO_EXIT
                break

            if err == 0.0:
                factor = MAX_FACTOR
            else:
                factor = SAFETY * err ** -0.2
                if factor > MAX_FACTOR:
                    factor = MAX_FACTOR
        else:
            factor = SAFETY * err ** -0.2
            if factor < MIN_FACTOR:
                factor = MIN_FACTOR

        h *= factor
        if h > h_max:
            h = h_max

    return status, ts[: n + 1].copy(), ys[: n + 1].copy(), qs[:n].copy(), grace_mask


_advance = _jit(_advance_py)


def _rk4_path_py(A, B, C, x0, y0, z0, h, n_steps):
    """Classical fixed-step RK4 over n_steps of size h; the independent oracle."""
    ys = np.empty((n_steps + 1, 3))
    x, y, z = x0, y0, z0
    ys[0, 0] = x
    ys[0, 1] = y
    ys[0, 2] = z
    for i in range(n_steps):
        k1x, k1y, k1z = _vel(A, B, C, x, y, z)
        k2x, k2y, k2z = _vel(A, B, C, x + 0.5 * h * k1x, y + 0.5 * h * k1y, z + 0.5 * h * k1z)
        k3x, k3y, k3z = _vel(A, B, C, x + 0.5 * h * k2x, y + 0.5 * h * k2y, z + 0.5 * h * k2z)
        k4x, k4y, k4z = _vel(A, B, C, x + h * k3x, y + h * k3y, z + h * k3z)
        x += h * (k1x + 2.0 * (k2x + k3x) + k4x) / 6.0
        y += h * (k1y + 2.0 * (k2y + k3y) + k4y) / 6.0
        z += h * (k1z + 2.0 * (k2z + k3z) + k4z) / 6.0
        ys[i + 1, 0] = x
        ys[i + 1, 1] = y
        ys[i + 1, 2] = z
    return ys


_rk4_path = _jit(_rk4_path_py)


def warm_up():
    """Trigger jit compilation of all kernels (no-op on the numpy path)."""
    _advance(1.0, 1.0, 1.0, 0.1, 0.2, 0.3, 0.0, 0.01, 1e-8, 1e-10, 1e-3, 0.1, 1000, False, 1e-9, 1e3)
    _advance(1.0, 1.0, 1.0, -HALF_PI, 0.0, 0.5, 0.0, 0.0, 1e-8, 1e-10, 1e-3, 0.1, 100000, True, 1e-9, 1e3)
    _rk4_path(1.0, 1.0, 1.0, 0.1, 0.2, 0.3, 1e-3, 10)
