# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled presentation loop; mirrors memsnn._pykernel step for step."""

from libc.math cimport exp, isnan

import numpy as np


cdef inline double tri(double s, double amp, double rise, double fall, double width) nogil:
    if s < 0.0 or s >= width:
        return 0.0
    if s < rise:
        return amp * s / rise
    return amp * (width - s) / fall


cdef inline double ipow(double y, int p) nogil:
    cdef double r = y
    cdef int k
    for k in range(1, p):
        r = r * y
    return r


def simulate(double[::1] onsets, double amp, double rise, double fall,
             double[:, ::1] w, double[:, ::1] R_on, double[:, ::1] R_off,
             double[:, ::1] VTp, double[:, ::1] VTn, unsigned char[:, ::1] stuck,
             double D, double mu_v, double i_on, double i_off, double i_0, int p,
             double w_lo, double w_hi,
             double C_m, double R_leak, double v_rest, double v_th,
             double[::1] bias, double col_gain, double[::1] latch,
             double v_plus, double v_minus, double pre_detect,
             double dt, long n_steps, int learning, int early_exit,
             double[:, ::1] trace, int trace_every,
             long[::1] ev_n, double[::1] ev_t, unsigned char[::1] ev_tie,
             double[::1] inh_edges):
    cdef Py_ssize_t m = w.shape[0]
    cdef Py_ssize_t n = w.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double width = rise + fall

    cdef double src_l = latch[0], sw_l = latch[2], a_l = exp(-dt / latch[1])
    cdef double src_e = latch[3], sw_e = latch[5], a_e = exp(-dt / latch[4])
    cdef double src_w = latch[6], sw_w = latch[8], a_w = exp(-dt / latch[7])
    cdef double src_u = latch[9], sw_u = latch[11], a_u = exp(-dt / latch[10])

    spike_np = np.zeros(n)
    vcw_np = np.full(n, src_w)
    vcu_np = np.full(n, src_u)
    vce_np = np.full(m, src_e)
    vm_np = np.full(m, v_rest)
    I_np = np.zeros(m)
    frac_np = np.ones(m)
    cdef double[::1] spike_v = spike_np
    cdef double[::1] v_cw = vcw_np
    cdef double[::1] v_cu = vcu_np
    cdef double[::1] v_ce = vce_np
    cdef double[::1] v_m = vm_np
    cdef double[::1] I = I_np
    cdef double[::1] frac = frac_np
    sbar_np = np.ones(n, dtype=np.uint8)
    pre_np = np.zeros(n, dtype=np.uint8)
    above_np = np.zeros(n, dtype=np.uint8)
    ve_np = np.ones(m, dtype=np.uint8)
    crossed_np = np.zeros(m, dtype=np.uint8)
    cdef unsigned char[::1] v_sbar = sbar_np
    cdef unsigned char[::1] pre = pre_np
    cdef unsigned char[::1] above = above_np
    cdef unsigned char[::1] v_e = ve_np
    cdef unsigned char[::1] crossed = crossed_np

    cdef double v_cinh = src_l
    cdef bint v_inh = False, was, any_bias = False, bias_on
    cdef double last_end = 0.0
    cdef bint any_spike = False
    for i in range(n):
        if not isnan(onsets[i]):
            if not any_spike or onsets[i] + width > last_end:
                last_end = onsets[i] + width
            any_spike = True
    for j in range(m):
        if bias[j] != 0.0:
            any_bias = True
    bias_on = any_bias

    cdef long n_ev = 0, n_inh = 0, comp_ties = 0, steps = 0
    cdef long max_ev = ev_n.shape[0], max_inh = inh_edges.shape[0]
    cdef long trace_rows = 0, trace_cap = trace.shape[0]
    cdef double t, s, v, x, R, cur, g, v1, v0, best, f, rate, den, kk, vu, wn
    cdef int win, n_best, n_active_rows, n_upd
    cdef bint tie

    for k in range(n_steps):
        t = k * dt
        n_active_rows = 0
        for i in range(n):
            if isnan(onsets[i]):
                spike_v[i] = 0.0
            else:
                spike_v[i] = tri(t - onsets[i], amp, rise, fall, width)
            # rising edge of the detector: one-step capacitor discharge
            pre[i] = spike_v[i] >= pre_detect and not above[i]
            above[i] = spike_v[i] >= pre_detect
            if spike_v[i] != 0.0 and v_sbar[i]:
                n_active_rows += 1

        # column currents from last step's switch state
        for j in range(m):
            cur = 0.0
            if v_e[j] and n_active_rows > 0:
                for i in range(n):
                    if v_sbar[i] and spike_v[i] != 0.0:
                        x = w[j, i] / D
                        g = 1.0 / (R_on[j, i] * x + R_off[j, i] * (1.0 - x))
                        cur = cur + g * spike_v[i]
                cur = col_gain * cur
            I[j] = cur

        # membranes
        win = -1
        tie = False
        if v_inh:
            for j in range(m):
                v_m[j] = v_rest
        else:
            for j in range(m):
                v0 = v_m[j]
                cur = I[j]
                if bias_on:
                    cur = cur + bias[j]
                v1 = v0 + dt * (cur / C_m - (v0 - v_rest) / (R_leak * C_m))
                if v1 >= v_th:
                    crossed[j] = 1
                    if v1 != v0:
                        f = (v_th - v0) / (v1 - v0)
                    else:
                        f = 1.0
                    if isnan(f) or f > 1.0:
                        f = 1.0
                    elif f < 0.0:
                        f = 0.0
                    frac[j] = f
                    v_m[j] = v_rest
                else:
                    crossed[j] = 0
                    v_m[j] = v1
            n_best = 0
            best = 2.0
            for j in range(m):
                if crossed[j]:
                    if frac[j] < best:
                        best = frac[j]
                        win = j
                        n_best = 1
                    elif frac[j] == best:
                        n_best += 1
            tie = n_best > 1
            if win >= 0:
                if n_ev < max_ev:
                    ev_n[n_ev] = win
                    ev_t[n_ev] = t + frac[win] * dt
                    ev_tie[n_ev] = tie
                n_ev += 1

        # lateral inhibition
        was = v_inh
        if win >= 0:
            v_cinh = 0.0
        else:
            v_cinh = src_l - (src_l - v_cinh) * a_l
        v_inh = v_cinh < sw_l
        if v_inh != was:
            if n_inh < max_inh:
                inh_edges[n_inh] = t + dt
            n_inh += 1
            if v_inh:
                bias_on = False

        # synapse control
        for j in range(m):
            if j == win:
                v_ce[j] = 0.0
            else:
                v_ce[j] = src_e - (src_e - v_ce[j]) * a_e
            v_e[j] = (v_ce[j] < sw_e) or not v_inh

        # dual switch control and update control
        n_upd = 0
        for i in range(n):
            if pre[i]:
                v_cw[i] = 0.0
                v_cu[i] = 0.0
            else:
                v_cw[i] = src_w - (src_w - v_cw[i]) * a_w
                v_cu[i] = src_u - (src_u - v_cu[i]) * a_u
            v_sbar[i] = not ((v_cw[i] < sw_w) and v_inh)
            if not v_sbar[i]:
                n_upd += 1

        if learning and n_upd > 0:
            for i in range(n):
                if v_sbar[i]:
                    continue
                if v_cu[i] > v_cinh:
                    vu = v_plus
                else:
                    vu = v_minus
                    if v_cu[i] == v_cinh:
                        comp_ties += 1
                for j in range(m):
                    if not v_e[j] or stuck[j, i]:
                        continue
                    x = w[j, i] / D
                    R = R_on[j, i] * x + R_off[j, i] * (1.0 - x)
                    cur = vu / R
                    f = 1.0 - ipow((2.0 * x - 1.0) * (2.0 * x - 1.0), p)
                    kk = mu_v * R_on[j, i] / D
                    rate = 0.0
                    if vu > VTp[j, i]:
                        den = cur - i_0
                        if den != 0.0:
                            rate = kk * i_off / den * f
                    elif vu < VTn[j, i]:
                        rate = kk * cur / i_on * f
                    if rate != 0.0:
                        wn = w[j, i] + rate * dt
                        if wn < w_lo:
                            wn = w_lo
                        elif wn > w_hi:
                            wn = w_hi
                        w[j, i] = wn

        if trace_cap > 0 and k % trace_every == 0 and trace_rows < trace_cap:
            trace[trace_rows, 0] = t + dt
            for j in range(m):
                trace[trace_rows, 1 + j] = v_m[j]
                trace[trace_rows, 2 + m + j] = v_e[j]
            trace[trace_rows, 1 + m] = v_inh
            for i in range(n):
                trace[trace_rows, 2 + 2 * m + i] = v_sbar[i]
            trace_rows += 1

        steps = k + 1
        if early_exit and t + dt > last_end and not v_inh and not bias_on:
            break

    return n_ev, n_inh, comp_ties, steps, trace_rows
