"""Dispatch between the compiled presentation loop and the Python fallback.

The compiled extension is used when it imports; set ``MEMSNN_PURE_PYTHON=1``
to force the fallback.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from . import _pykernel
from .device import DeviceArray, MemristorParams

try:
    from . import _ckernel
except ImportError:  # extension not built
    _ckernel = None

BACKEND = "python" if (_ckernel is None or os.environ.get("MEMSNN_PURE_PYTHON") == "1") else "cython"

MAX_EVENTS = 64


@dataclass
class Job:
    onsets: np.ndarray
    amplitude: float
    rise: float
    fall: float
    w: np.ndarray
    devices: DeviceArray
    stuck: np.ndarray
    params: MemristorParams
    C_m: float
    R_leak: float
    v_rest: float
    v_th: float
    bias: np.ndarray
    col_gain: float
    # (v_src, tau, switch_v) per latch bank
    lic: tuple
    scc: tuple
    dcc: tuple
    ucc: tuple
    v_plus: float
    v_minus: float
    pre_detect: float
    dt: float
    n_steps: int
    learning: bool
    early_exit: bool = True
    trace: np.ndarray | None = None
    trace_every: int = 1

    @property
    def n(self) -> int:
        return self.w.shape[1]

    @property
    def m(self) -> int:
        return self.w.shape[0]


@dataclass
class Outcome:
    spike_neurons: list = field(default_factory=list)
    spike_times: list = field(default_factory=list)
    spike_ties: list = field(default_factory=list)
    inh_edges: list = field(default_factory=list)
    comparator_ties: int = 0
    steps: int = 0
    trace_rows: int = 0

    def record_spike(self, j: int, t: float, tie: bool) -> None:
        if len(self.spike_neurons) < MAX_EVENTS:
            self.spike_neurons.append(int(j))
            self.spike_times.append(float(t))
            self.spike_ties.append(bool(tie))

    def record_inh(self, t: float) -> None:
        if len(self.inh_edges) < 2 * MAX_EVENTS:
            self.inh_edges.append(float(t))


def simulate(job: Job, backend: str | None = None) -> Outcome:
    backend = backend or BACKEND
    out = Outcome()
    if backend == "cython":
        if _ckernel is None:
            raise RuntimeError("compiled kernel is not available")
        _run_compiled(job, out)
    elif backend == "python":
        _pykernel.simulate(job, out)
    else:
        raise ValueError(f"unknown backend {backend!r}")
    return out


def _run_compiled(job: Job, out: Outcome) -> None:
    p = job.params
    c = np.ascontiguousarray
    ev_n = np.zeros(MAX_EVENTS, dtype=np.int64)
    ev_t = np.zeros(MAX_EVENTS, dtype=np.float64)
    ev_tie = np.zeros(MAX_EVENTS, dtype=np.uint8)
    inh = np.zeros(2 * MAX_EVENTS, dtype=np.float64)
    latch = np.array([*job.lic, *job.scc, *job.dcc, *job.ucc], dtype=np.float64)
    trace = job.trace if job.trace is not None else np.zeros((0, 0))
    if not (job.w.flags.c_contiguous and job.w.dtype == np.float64):
        raise ValueError("weight matrix must be C-contiguous float64")
    d = job.devices
    res = _ckernel.simulate(
        c(job.onsets, dtype=np.float64), job.amplitude, job.rise, job.fall,
        job.w, c(d.R_on, dtype=np.float64), c(d.R_off, dtype=np.float64),
        c(d.V_T_pos, dtype=np.float64), c(d.V_T_neg, dtype=np.float64),
        c(job.stuck, dtype=np.uint8),
        p.D, p.mu_v, p.i_on, p.i_off, p.i_0, int(p.p), p.w_min, p.w_max,
        job.C_m, job.R_leak, job.v_rest, job.v_th,
        c(job.bias, dtype=np.float64), job.col_gain, latch,
        job.v_plus, job.v_minus, job.pre_detect, job.dt, int(job.n_steps),
        int(job.learning), int(job.early_exit), trace, int(job.trace_every),
        ev_n, ev_t, ev_tie, inh)
    n_ev, n_inh, out.comparator_ties, out.steps, out.trace_rows = res
    k = min(n_ev, MAX_EVENTS)
    out.spike_neurons = [int(x) for x in ev_n[:k]]
    out.spike_times = [float(x) for x in ev_t[:k]]
    out.spike_ties = [bool(x) for x in ev_tie[:k]]
    out.inh_edges = [float(x) for x in inh[:min(n_inh, 2 * MAX_EVENTS)]]
