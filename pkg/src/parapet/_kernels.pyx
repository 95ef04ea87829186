# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled rollout kernel. Same contract and arithmetic as ``_pykernels.advance``."""

from libc.math cimport exp, NAN
from scipy.special.cython_special cimport ndtri

cdef enum:
    DT = 0
    DECEL = 1
    STOP_LINE = 2
    SIGN_POS = 3
    MID1 = 4
    SLOPE1 = 5
    MID2 = 6
    SLOPE2 = 7
    PLACEMENT = 8
    EFF1 = 9
    EFF2 = 10
    SQRT_RHO = 11
    SQRT_1MRHO = 12
    GPS_SIGMA = 13
    RANGE_NOISE = 14
    CONF_THRESHOLD = 15
    WINDOW = 16

cdef enum:
    RUNNING = 0
    STOPPED = 1
    CROSSED = 2
    EXHAUSTED = 3


cdef inline double _logistic_tail(double a) noexcept nogil:
    if a > 700.0:
        return 0.0
    return 1.0 / (1.0 + exp(a))


def advance(Py_ssize_t start, Py_ssize_t stop, bint alert,
            const double[::1] params, const double[:, ::1] draws,
            double[::1] pos, double[::1] speed, unsigned char[::1] braking,
            unsigned char[:, ::1] det, double[:, ::1] conf, double[:, ::1] est,
            double[::1] gps, double[::1] fused, double[::1] crossing):
    cdef double dt = params[DT]
    cdef double decel = params[DECEL]
    cdef double stop_line = params[STOP_LINE]
    cdef double sign_pos = params[SIGN_POS]
    cdef Py_ssize_t window = <Py_ssize_t> params[WINDOW]
    cdef double threshold = params[CONF_THRESHOLD]
    cdef double mids[2]
    cdef double slopes[2]
    cdef double effs[2]
    cdef double placement = params[PLACEMENT]
    cdef double sr = params[SQRT_RHO]
    cdef double s1r = params[SQRT_1MRHO]
    cdef Py_ssize_t t_max = draws.shape[1]
    cdef Py_ssize_t i = start, j, j0, k
    cdef double d, u, p, thr, z, e, total, v, nv
    cdef bint brake
    cdef int status = RUNNING
    mids[0] = params[MID1]
    mids[1] = params[MID2]
    slopes[0] = params[SLOPE1]
    slopes[1] = params[SLOPE2]
    effs[0] = params[EFF1]
    effs[1] = params[EFF2]

    with nogil:
        while i < stop:
            if i + 1 >= t_max:
                status = EXHAUSTED
                break
            d = sign_pos - pos[i]
            if d < 0.0:
                d = 0.0
            u = draws[0, i]
            for k in range(2):
                p = _logistic_tail(slopes[k] * (d - mids[k])) * placement
                p = p * (1.0 - effs[k])
                thr = ndtri(p)
                z = u * sr + draws[1 + k, i] * s1r
                if z < thr:
                    det[i, k] = 1
                    conf[i, k] = p
                    e = d + params[RANGE_NOISE] * draws[4 + k, i]
                    est[i, k] = e if e > 0.0 else 0.0
                else:
                    det[i, k] = 0
                    conf[i, k] = 0.0
                    est[i, k] = NAN
            gps[i] = pos[i] + params[GPS_SIGMA] * draws[3, i]
            fused[i] = 0.5 * (conf[i, 0] + conf[i, 1])

            brake = braking[i] != 0 or alert
            if not brake:
                j0 = i - window + 1
                if j0 < 0:
                    j0 = 0
                total = 0.0
                for j in range(j0, i + 1):
                    total += fused[j]
                if total / (i + 1 - j0) >= threshold:
                    brake = True

            v = speed[i]
            pos[i + 1] = pos[i] + v * dt
            if brake:
                nv = v - decel * dt
                speed[i + 1] = nv if nv > 0.0 else 0.0
                braking[i + 1] = 1
            else:
                speed[i + 1] = v
                braking[i + 1] = 0
            i += 1
            if pos[i - 1] < stop_line and stop_line <= pos[i]:
                crossing[0] = v
                status = CROSSED
                break
            if speed[i] == 0.0:
                status = STOPPED
                break
    return i, status
