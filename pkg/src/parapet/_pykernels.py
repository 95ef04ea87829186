"""Pure-Python rollout kernel. Mirrors ``_kernels.pyx`` operation for operation."""

import math

from scipy.special import ndtri

# params layout, shared with the compiled kernel
DT, DECEL, STOP_LINE, SIGN_POS, MID1, SLOPE1, MID2, SLOPE2, PLACEMENT, EFF1, EFF2, \
    SQRT_RHO, SQRT_1MRHO, GPS_SIGMA, RANGE_NOISE, CONF_THRESHOLD, WINDOW = range(17)
N_PARAMS = 17

RUNNING, STOPPED, CROSSED, EXHAUSTED = 0, 1, 2, 3


def _logistic_tail(a):
    if a > 700.0:
        return 0.0
    return 1.0 / (1.0 + math.exp(a))


def advance(start, stop, alert, params, draws, pos, speed, braking, det, conf, est, gps, fused, crossing):
    """Advance a rollout from state ``start`` for at most ``stop - start`` steps.

    State ``i`` is sensed into frame ``i``; the planner acts on it and the
    kinematics produce state ``i + 1``. Returns ``(last_state, status)``.
    ``crossing[0]`` receives the speed at which the stop line is crossed.
    """
    dt = params[DT]
    decel = params[DECEL]
    stop_line = params[STOP_LINE]
    sign_pos = params[SIGN_POS]
    window = int(params[WINDOW])
    threshold = params[CONF_THRESHOLD]
    mids = (params[MID1], params[MID2])
    slopes = (params[SLOPE1], params[SLOPE2])
    effs = (params[EFF1], params[EFF2])
    placement = params[PLACEMENT]
    sr = params[SQRT_RHO]
    s1r = params[SQRT_1MRHO]
    t_max = draws.shape[1]
    i = start
    while i < stop:
        if i + 1 >= t_max:
            return i, EXHAUSTED
        d = sign_pos - pos[i]
        if d < 0.0:
            d = 0.0
        u = draws[0, i]
        for k in range(2):
            p = _logistic_tail(slopes[k] * (d - mids[k])) * placement
            p = p * (1.0 - effs[k])
            thr = float(ndtri(p))
            z = u * sr + draws[1 + k, i] * s1r
            if z < thr:
                det[i, k] = 1
                conf[i, k] = p
                e = d + params[RANGE_NOISE] * draws[4 + k, i]
                est[i, k] = e if e > 0.0 else 0.0
            else:
                det[i, k] = 0
                conf[i, k] = 0.0
                est[i, k] = math.nan
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
        if pos[i - 1] < stop_line <= pos[i]:
            crossing[0] = v
            return i, CROSSED
        if speed[i] == 0.0:
            return i, STOPPED
    return i, RUNNING
