# cython: language_level=3
# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: the filter-bank sweep and the divergence curve.

Both mirror the pure-Python reference implementations step for step (same
formulas, same update order, same tie breaking) so either backend can be
swapped in without changing results beyond float round-off.
"""

import numpy as np

cimport cython
cimport numpy as cnp
from libc.math cimport atan2, ceil, cos, exp, fabs, hypot, log, sin, sqrt

cnp.import_array()

from gaitfusion.errors import AnalysisError, NumericError

cdef double PI = 3.141592653589793238462643383279502884
cdef double G_STANDARD = 9.80665
cdef double R_YAW_UNOBSERVED = 1e12
cdef double GIMBAL_COS_MIN = 1e-3
cdef double FREEFALL_FRACTION = 0.5


cdef inline double _wrap(double a) noexcept:
    return a - 2.0 * PI * ceil((a - PI) / (2.0 * PI))


cdef inline void _mat3_mul(double[3][3] a, double[3][3] b,
                           double[3][3] out) noexcept:
    cdef int i, j, k
    cdef double s
    for i in range(3):
        for j in range(3):
            s = 0.0
            for k in range(3):
                s += a[i][k] * b[k][j]
            out[i][j] = s


cdef inline int _inv3(double[3][3] m, double[3][3] out) noexcept:
    """Adjugate inverse; returns 0 on a singular matrix."""
    cdef double a = m[0][0], b = m[0][1], c = m[0][2]
    cdef double d = m[1][0], e = m[1][1], f = m[1][2]
    cdef double g = m[2][0], h = m[2][1], i = m[2][2]
    cdef double c00 = e * i - f * h
    cdef double c10 = f * g - d * i
    cdef double c20 = d * h - e * g
    cdef double det = a * c00 + b * c10 + c * c20
    if det == 0.0:
        return 0
    out[0][0] = c00 / det
    out[0][1] = (c * h - b * i) / det
    out[0][2] = (b * f - c * e) / det
    out[1][0] = c10 / det
    out[1][1] = (a * i - c * g) / det
    out[1][2] = (c * d - a * f) / det
    out[2][0] = c20 / det
    out[2][1] = (b * g - a * h) / det
    out[2][2] = (a * e - b * d) / det
    return 1


cdef inline void _clip_psd2(double m00, double m01, double m10, double m11,
                            double floor, double[2][2] out) noexcept:
    cdef double a = m00
    cdef double b = 0.5 * (m01 + m10)
    cdef double c = m11
    cdef double half = 0.5 * (a - c)
    cdef double disc = hypot(half, b)
    cdef double l1 = 0.5 * (a + c) + disc
    cdef double l2 = 0.5 * (a + c) - disc
    cdef double l1c, l2c, v0, v1, w0, w1, nrm
    if l2 >= floor:
        out[0][0] = a
        out[0][1] = b
        out[1][0] = b
        out[1][1] = c
        return
    l1c = l1 if l1 > floor else floor
    l2c = l2 if l2 > floor else floor
    if disc < 1e-300:
        out[0][0] = l1c
        out[0][1] = 0.0
        out[1][0] = 0.0
        out[1][1] = l2c
        return
    if fabs(b) > fabs(half):
        v0 = b
        v1 = l1 - a
    else:
        v0 = l1 - c
        v1 = b
    nrm = hypot(v0, v1)
    v0 /= nrm
    v1 /= nrm
    w0 = -v1
    w1 = v0
    out[0][0] = l1c * v0 * v0 + l2c * w0 * w0
    out[0][1] = l1c * v0 * v1 + l2c * w0 * w1
    out[1][0] = l1c * v1 * v0 + l2c * w1 * w0
    out[1][1] = l1c * v1 * v1 + l2c * w1 * w1


@cython.boundscheck(False)
def kalman_bank_run(double[::1] t, double[:, ::1] acc, double[:, ::1] gyro,
                    double[::1] x0, double[::1] gates,
                    double q_rate, double r_nominal, double p0_sd,
                    double r_floor, int adapt_window, int adapt_min,
                    int enu_frame):
    """Full adaptive filter-bank sweep over one trial.

    Returns (angles, innovation_norm, weights, gated_steps) exactly as the
    Python reference loop produces them.
    """
    cdef Py_ssize_t n = t.shape[0]
    cdef int nf = <int>gates.shape[0]
    if nf < 1 or nf > 16:
        raise ValueError("bank size must be between 1 and 16")

    angles_arr = np.empty((n, 3))
    innov_arr = np.full(n, np.nan)
    weights_arr = np.zeros((n, nf))
    cdef double[:, ::1] angles = angles_arr
    cdef double[::1] innov = innov_arr
    cdef double[:, ::1] weights = weights_arr

    # Per-filter state blocks.
    x_arr = np.empty((nf, 3))
    P_arr = np.empty((nf, 3, 3))
    R_arr = np.zeros((nf, 3, 3))
    win_arr = np.zeros((nf, adapt_window, 2))
    cdef double[:, ::1] x = x_arr
    cdef double[:, :, ::1] P = P_arr
    cdef double[:, :, ::1] R = R_arr
    cdef double[:, :, ::1] win = win_arr
    cdef double[16] q_scale
    cdef double[16] last_d2
    cdef double[16] last_det
    cdef int[16] last_passed       # -1 no obs, 0 rejected, 1 accepted
    cdef int[16] win_len
    cdef int[16] win_pos

    cdef double p0 = p0_sd * p0_sd
    cdef double rr = r_nominal * r_nominal
    cdef double floor = r_floor * r_floor
    cdef int i, j, m, c, r_i
    for i in range(nf):
        for j in range(3):
            x[i, j] = x0[j]
            for m in range(3):
                P[i, j, m] = p0 if j == m else 0.0
        R[i, 0, 0] = rr
        R[i, 1, 1] = rr
        R[i, 2, 2] = R_YAW_UNOBSERVED
        q_scale[i] = 1.0
        last_passed[i] = -1
        win_len[i] = 0
        win_pos[i] = 0

    for j in range(3):
        angles[0, j] = x0[j]
    for i in range(nf):
        weights[0, i] = 1.0 / nf

    cdef int gated_steps = 0
    cdef double threshold = FREEFALL_FRACTION * G_STANDARD
    cdef Py_ssize_t k
    cdef double dt, gx, gy, gz, ax, ay, az
    cdef double phi, theta, cf, sf, ct, st, cp, sp, tt, q
    cdef double wx, wy, wz, u0, u1, u2
    cdef double roll_a, pitch_a, norm
    cdef double nu0, nu1, s11, s12, s22, det, i11, i12, i22, d2
    cdef double dsum, wsum, best
    cdef int any_pass, ref, obs
    cdef double z2, nuf0, nuf1, nuf2
    cdef double[3][3] S, Sinv, K, IKH, T1, T2, KR
    cdef double[3] nu3, kx
    cdef int nw, pos, start
    cdef double s0, s1, observed, mean0, mean1, dv0, dv1
    cdef double c00, c01, c10, c11, predicted
    cdef double[2][2] r2

    for k in range(1, n):
        dt = t[k] - t[k - 1]
        if dt <= 0.0:
            raise NumericError(f"non-positive dt {dt}")
        gx = gyro[k - 1, 0]
        gy = gyro[k - 1, 1]
        gz = gyro[k - 1, 2]
        for i in range(nf):
            phi = x[i, 0]
            theta = x[i, 1]
            ct = cos(theta)
            if fabs(ct) < GIMBAL_COS_MIN:
                raise NumericError(
                    f"pitch {theta:.4f} rad too close to +/-pi/2", index=k)
            cf = cos(phi)
            sf = sin(phi)
            if enu_frame:
                # Rotate gyro into the navigation frame first.
                cp = cos(x[i, 2])
                sp = sin(x[i, 2])
                st = sin(theta)
                wx = ct * cp * gx + (-cf * sp + sf * st * cp) * gy \
                    + (sf * sp + cf * st * cp) * gz
                wy = ct * sp * gx + (cf * cp + sf * st * sp) * gy \
                    + (-sf * cp + cf * st * sp) * gz
                wz = -st * gx + sf * ct * gy + cf * ct * gz
            else:
                wx = gx
                wy = gy
                wz = gz
            tt = sin(theta) / ct
            u0 = wx + sf * tt * wy + cf * tt * wz
            u1 = cf * wy - sf * wz
            u2 = (sf / ct) * wy + (cf / ct) * wz
            q = q_scale[i] * q_rate * q_rate * dt
            x[i, 0] = _wrap(x[i, 0] + dt * u0)
            x[i, 1] = _wrap(x[i, 1] + dt * u1)
            x[i, 2] = _wrap(x[i, 2] + dt * u2)
            P[i, 0, 0] += q
            P[i, 1, 1] += q
            P[i, 2, 2] += q

        ax = acc[k, 0]
        ay = acc[k, 1]
        az = acc[k, 2]
        norm = sqrt(ax * ax + ay * ay + az * az)
        obs = 1 if norm > threshold else 0
        if obs:
            roll_a = atan2(ay, az)
            pitch_a = atan2(-ax, sqrt(ay * ay + az * az))
            dsum = 0.0
            for i in range(nf):
                z2 = x[i, 2]
                nu0 = _wrap(roll_a - x[i, 0])
                nu1 = _wrap(pitch_a - x[i, 1])
                s11 = P[i, 0, 0] + R[i, 0, 0]
                s12 = P[i, 0, 1] + R[i, 0, 1]
                s22 = P[i, 1, 1] + R[i, 1, 1]
                det = s11 * s22 - s12 * s12
                if det <= 0.0:
                    raise NumericError(
                        "innovation covariance not positive definite")
                i11 = s22 / det
                i12 = -s12 / det
                i22 = s11 / det
                d2 = nu0 * (i11 * nu0 + i12 * nu1) \
                    + nu1 * (i12 * nu0 + i22 * nu1)
                if d2 <= 2.0 * gates[i] * gates[i]:
                    # Joseph-form measurement update.
                    nu3[0] = nu0
                    nu3[1] = nu1
                    nu3[2] = _wrap(z2 - x[i, 2])
                    for j in range(3):
                        for m in range(3):
                            S[j][m] = P[i, j, m] + R[i, j, m]
                    if _inv3(S, Sinv) == 0:
                        raise NumericError("singular covariance")
                    for j in range(3):
                        for m in range(3):
                            s0 = 0.0
                            for c in range(3):
                                s0 += P[i, j, c] * Sinv[c][m]
                            K[j][m] = s0
                    for j in range(3):
                        s0 = 0.0
                        for m in range(3):
                            s0 += K[j][m] * nu3[m]
                        kx[j] = s0
                    for j in range(3):
                        x[i, j] = _wrap(x[i, j] + kx[j])
                    for j in range(3):
                        for m in range(3):
                            IKH[j][m] = (1.0 if j == m else 0.0) - K[j][m]
                    # T1 = IKH @ P
                    for j in range(3):
                        for m in range(3):
                            s0 = 0.0
                            for c in range(3):
                                s0 += IKH[j][c] * P[i, c, m]
                            T1[j][m] = s0
                    # T2 = T1 @ IKH.T
                    for j in range(3):
                        for m in range(3):
                            s0 = 0.0
                            for c in range(3):
                                s0 += T1[j][c] * IKH[m][c]
                            T2[j][m] = s0
                    # KR = K @ R
                    for j in range(3):
                        for m in range(3):
                            s0 = 0.0
                            for c in range(3):
                                s0 += K[j][c] * R[i, c, m]
                            KR[j][m] = s0
                    # P = T2 + KR @ K.T
                    for j in range(3):
                        for m in range(3):
                            s0 = 0.0
                            for c in range(3):
                                s0 += KR[j][c] * K[m][c]
                            P[i, j, m] = T2[j][m] + s0
                    last_passed[i] = 1
                    last_d2[i] = d2
                    last_det[i] = det
                    # Push the gate innovation into the ring window.
                    pos = win_pos[i]
                    win[i, pos, 0] = nu0
                    win[i, pos, 1] = nu1
                    win_pos[i] = (pos + 1) % adapt_window
                    if win_len[i] < adapt_window:
                        win_len[i] += 1
                    nw = win_len[i]
                    if nw >= adapt_min:
                        predicted = P[i, 0, 0] + P[i, 1, 1] \
                            + R[i, 0, 0] + R[i, 1, 1]
                        start = win_pos[i] if nw == adapt_window else 0
                        observed = 0.0
                        mean0 = 0.0
                        mean1 = 0.0
                        for m in range(nw):
                            r_i = (start + m) % adapt_window
                            dv0 = win[i, r_i, 0]
                            dv1 = win[i, r_i, 1]
                            observed += dv0 * dv0 + dv1 * dv1
                            mean0 += dv0
                            mean1 += dv1
                        observed /= nw
                        mean0 /= nw
                        mean1 /= nw
                        c00 = 0.0
                        c01 = 0.0
                        c11 = 0.0
                        for m in range(nw):
                            r_i = (start + m) % adapt_window
                            dv0 = win[i, r_i, 0] - mean0
                            dv1 = win[i, r_i, 1] - mean1
                            c00 += dv0 * dv0
                            c01 += dv0 * dv1
                            c11 += dv1 * dv1
                        c00 /= nw - 1
                        c01 /= nw - 1
                        c11 /= nw - 1
                        c10 = c01
                        _clip_psd2(c00 - P[i, 0, 0], c01 - P[i, 0, 1],
                                   c10 - P[i, 1, 0], c11 - P[i, 1, 1],
                                   floor, r2)
                        R[i, 0, 0] = r2[0][0]
                        R[i, 0, 1] = r2[0][1]
                        R[i, 1, 0] = r2[1][0]
                        R[i, 1, 1] = r2[1][1]
                        q = observed / predicted
                        if q < 0.1:
                            q = 0.1
                        elif q > 10.0:
                            q = 10.0
                        q_scale[i] = q
                else:
                    last_passed[i] = 0
                    last_d2[i] = d2
                    last_det[i] = det
                dsum += sqrt(d2 / 2.0)
            innov[k] = dsum / nf
            any_pass = 0
            for i in range(nf):
                if last_passed[i] == 1:
                    any_pass = 1
            if not any_pass:
                gated_steps += 1
        else:
            for i in range(nf):
                last_passed[i] = -1

        # Likelihood-weighted fusion across the bank.
        any_pass = 0
        for i in range(nf):
            if last_passed[i] == 1:
                any_pass = 1
        if any_pass:
            wsum = 0.0
            for i in range(nf):
                if last_passed[i] == 1:
                    weights[k, i] = exp(-0.5 * last_d2[i]) / sqrt(last_det[i])
                    wsum += weights[k, i]
                else:
                    weights[k, i] = 0.0
            for i in range(nf):
                weights[k, i] /= wsum
        else:
            for i in range(nf):
                weights[k, i] = 1.0 / nf
        ref = 0
        best = weights[k, 0]
        for i in range(1, nf):
            if weights[k, i] > best:
                best = weights[k, i]
                ref = i
        nuf0 = 0.0
        nuf1 = 0.0
        nuf2 = 0.0
        for i in range(nf):
            if weights[k, i] > 0.0:
                nuf0 += weights[k, i] * _wrap(x[i, 0] - x[ref, 0])
                nuf1 += weights[k, i] * _wrap(x[i, 1] - x[ref, 1])
                nuf2 += weights[k, i] * _wrap(x[i, 2] - x[ref, 2])
        angles[k, 0] = _wrap(x[ref, 0] + nuf0)
        angles[k, 1] = _wrap(x[ref, 1] + nuf1)
        angles[k, 2] = _wrap(x[ref, 2] + nuf2)

    return angles_arr, innov_arr, weights_arr, gated_steps


@cython.boundscheck(False)
def divergence_curve(double[:, ::1] Y, int min_sep, int k_steps):
    """Mean log nearest-neighbour divergence over an evolution horizon.

    Same pair restrictions and tie breaking as the numpy reference: both the
    reference point and its neighbour must stay in range for the whole
    horizon, temporal neighbours within min_sep and exact duplicates are
    excluded, and the first minimal candidate wins.
    """
    cdef Py_ssize_t m = Y.shape[0]
    cdef int dim = <int>Y.shape[1]
    cdef Py_ssize_t last = m - k_steps
    if last < 2:
        raise AnalysisError("evolve_steps leaves no trackable pairs")
    nn_arr = np.empty(last, dtype=np.intp)
    cdef Py_ssize_t[::1] nn = nn_arr
    cdef Py_ssize_t j, c2, lo, hi, bi
    cdef int d
    cdef double d2, diff, best
    for j in range(last):
        lo = j - min_sep + 1
        if lo < 0:
            lo = 0
        hi = j + min_sep
        if hi > last:
            hi = last
        best = np.inf
        bi = -1
        for c2 in range(last):
            if lo <= c2 < hi:
                continue
            d2 = 0.0
            for d in range(dim):
                diff = Y[j, d] - Y[c2, d]
                d2 += diff * diff
            if d2 == 0.0:
                continue
            if d2 < best:
                best = d2
                bi = c2
        if bi < 0:
            raise AnalysisError("no admissible nearest neighbour; "
                                "min_separation too large for this series")
        nn[j] = bi
    curve_arr = np.empty(k_steps + 1)
    cdef double[::1] curve = curve_arr
    cdef Py_ssize_t i
    cdef double acc2
    for i in range(k_steps + 1):
        acc2 = 0.0
        for j in range(last):
            d2 = 0.0
            for d in range(dim):
                diff = Y[j + i, d] - Y[nn[j] + i, d]
                d2 += diff * diff
            if d2 < 1e-300:
                d2 = 1e-300
            acc2 += log(d2)
        curve[i] = 0.5 * (acc2 / last)
    return curve_arr
