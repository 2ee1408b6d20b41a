"""Pure-Python presentation loop built from the :mod:`memsnn.circuit` blocks.

This is the fallback used when the compiled extension is unavailable, and the
reference the extension is checked against. Per-step work is vectorised over
rows and columns with numpy.
"""
from __future__ import annotations

import numpy as np

from .circuit import (SPIKE, UPDATE, Crossbar, LifState, RcLatch, UccParams,
                      crossbar_apply_update, crossbar_currents, dcc_step, lic_step,
                      lif_step, pick_winner, scc_step, ucc_output)
from .encoder import SpikeShape, triangle


def simulate(job, out) -> None:
    """Run one presentation described by ``job`` and fill ``out``.

    ``job`` and ``out`` are :class:`memsnn.kernel.Job` and
    :class:`memsnn.kernel.Outcome`; ``job.w`` is modified in place when
    learning is on.
    """
    n, m = job.n, job.m
    shape = SpikeShape(job.amplitude, job.rise, job.fall)
    onsets = job.onsets
    silent = np.isnan(onsets)
    last_end = np.nanmax(onsets) + shape.width if not silent.all() else 0.0

    xb = Crossbar(n, m, job.params, job.w, job.devices, job.stuck, job.col_gain)
    lif = LifState(np.full(m, job.v_rest), job.C_m, job.R_leak, job.v_rest, job.v_th)
    lic = RcLatch(job.lic[0], 1.0, job.lic[1], job.lic[2])
    scc = RcLatch(job.scc[0], 1.0, job.scc[1], job.scc[2])
    dcc = RcLatch(job.dcc[0], 1.0, job.dcc[1], job.dcc[2])
    ucc = RcLatch(job.ucc[0], 1.0, job.ucc[1], job.ucc[2])
    scc.reset(m)
    dcc.reset(n)
    ucc.reset(n)
    rails = UccParams(job.v_plus, job.v_minus)
    dt = job.dt

    above = np.zeros(n, dtype=bool)
    v_inh = False
    bias_on = bool(np.any(job.bias != 0))
    G = xb.conductance()
    g_dirty = False
    trace_row = 0

    for k in range(job.n_steps):
        t = k * dt
        spike_v = triangle(t - onsets, shape)
        spike_v = np.where(silent, 0.0, spike_v)
        level = spike_v >= job.pre_detect
        pre = level & ~above
        above = level

        if g_dirty:
            G = xb.conductance()
            g_dirty = False
        I = crossbar_currents(xb, spike_v, G)
        bias = job.bias if bias_on else 0.0
        lif, crossed, frac = lif_step(lif, I, bias, v_inh, dt)
        win, tie = pick_winner(crossed, frac)
        post = np.zeros(m, dtype=bool)
        if win >= 0:
            post[win] = True
            out.record_spike(win, t + frac[win] * dt, tie)

        was = v_inh
        v_inh, v_cinh = lic_step(lic, win >= 0, dt)
        if v_inh and not was:
            out.record_inh(t + dt)
            bias_on = False
        elif was and not v_inh:
            out.record_inh(t + dt)

        xb.col_active = scc_step(scc, post, v_inh, dt)
        v_sbar = dcc_step(dcc, pre, v_inh, dt)
        xb.row_source = np.where(v_sbar, SPIKE, UPDATE).astype(np.int8)
        ucc.step(pre, dt)

        if job.learning and not v_sbar.all():
            v_updt = ucc_output(ucc.v_c, v_cinh, rails)
            upd = ~v_sbar
            out.comparator_ties += int(np.count_nonzero(upd & (ucc.v_c == v_cinh)))
            crossbar_apply_update(xb, v_updt, dt)
            g_dirty = True

        if job.trace is not None and k % job.trace_every == 0 and trace_row < len(job.trace):
            row = job.trace[trace_row]
            row[0] = t + dt
            row[1:1 + m] = lif.v_m
            row[1 + m] = float(v_inh)
            row[2 + m:2 + 2 * m] = xb.col_active
            row[2 + 2 * m:2 + 2 * m + n] = v_sbar
            trace_row += 1

        out.steps = k + 1
        if (job.early_exit and t + dt > last_end and not v_inh and not bias_on):
            break
    out.trace_rows = trace_row
