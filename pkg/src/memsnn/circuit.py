"""Behavioural models of the crossbar and its peripheral control blocks.

Every block is an ideal switch / ideal gate / RC network advanced on a shared
timestep. Functions take and return numpy arrays so a whole row or column
bank steps at once; scalars work too.

Signal conventions (all booleans are "high"):

* ``v_inh``   lateral-inhibition pulse, high while C_inh recharges
* ``v_e[j]``  column enable, ``not (not v_post[j] and v_inh)``
* ``v_sbar[i]`` row switch control, low (UPDATE) iff ``v_pre[i] and v_inh``
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .device import DeviceArray, MemristorParams, state_rate

log = logging.getLogger(__name__)

SPIKE, UPDATE = 0, 1


@dataclass
class RcLatch:
    """Capacitor recharged from ``v_src`` through ``R``; a trigger shorts it.

    The block output is high while ``v_c`` sits below ``switch_v`` (an ideal
    inverter on the capacitor node).
    """
    v_src: float = 5.0
    R: float = 1e3
    C: float = 1.5e-6
    switch_v: float = 2.5
    v_c: np.ndarray | float = None

    def __post_init__(self):
        if self.v_c is None:
            self.v_c = self.v_src

    @property
    def tau(self) -> float:
        return self.R * self.C

    @property
    def pulse_width(self) -> float:
        """Time from a trigger until the output drops again."""
        return self.tau * math.log(self.v_src / (self.v_src - self.switch_v))

    def decay(self, dt: float) -> float:
        return math.exp(-dt / self.tau)

    def step(self, trigger, dt: float):
        """Advance one step in place; returns the new output level."""
        a = self.decay(dt)
        relaxed = self.v_src - (self.v_src - np.asarray(self.v_c)) * a
        self.v_c = np.where(trigger, 0.0, relaxed)
        return self.high

    @property
    def high(self):
        return np.asarray(self.v_c) < self.switch_v

    def reset(self, shape=()):
        self.v_c = np.full(shape, self.v_src) if shape != () else self.v_src


@dataclass(frozen=True)
class UccParams:
    v_plus: float = 1.4
    v_minus: float = -2.6


@dataclass
class LifState:
    v_m: np.ndarray
    C_m: float = 5e-6
    R_leak: float = 50e3
    v_rest: float = 0.0
    v_th: float = 1e-3
    spiked_this_step: np.ndarray = None

    def __post_init__(self):
        self.v_m = np.asarray(self.v_m, dtype=float)
        if self.spiked_this_step is None:
            self.spiked_this_step = np.zeros(self.v_m.shape, dtype=bool)


@dataclass
class Crossbar:
    """``w`` is indexed ``[column j, row i]`` like the synapse name s_{j,i}."""
    n: int
    m: int
    params: MemristorParams
    w: np.ndarray = None
    devices: DeviceArray = None
    stuck: np.ndarray = None
    col_gain: float = 1.0
    col_active: np.ndarray = None
    row_source: np.ndarray = None

    def __post_init__(self):
        shape = (self.m, self.n)
        if self.w is None:
            self.w = np.full(shape, self.params.w_max)
        if self.devices is None:
            self.devices = DeviceArray.uniform(self.params, shape)
        if self.stuck is None:
            self.stuck = np.zeros(shape, dtype=bool)
        if self.col_active is None:
            self.col_active = np.ones(self.m, dtype=bool)
        if self.row_source is None:
            self.row_source = np.full(self.n, SPIKE, dtype=np.int8)
        if self.w.shape != shape:
            raise ValueError(f"weight matrix shape {self.w.shape} != {shape}")

    def conductance(self) -> np.ndarray:
        x = self.w / self.params.D
        return 1.0 / (self.devices.R_on * x + self.devices.R_off * (1.0 - x))

    def copy(self) -> "Crossbar":
        return Crossbar(self.n, self.m, self.params, self.w.copy(), self.devices.copy(),
                        self.stuck.copy(), self.col_gain, self.col_active.copy(),
                        self.row_source.copy())


def crossbar_currents(xb: Crossbar, row_voltages, G: np.ndarray | None = None) -> np.ndarray:
    """Column currents ``col_gain * sum_i v_i G_ji`` for active columns.

    Rows switched to UPDATE carry no spike current.
    """
    v = np.where(xb.row_source == SPIKE, np.asarray(row_voltages, dtype=float), 0.0)
    if G is None:
        G = xb.conductance()
    return np.where(xb.col_active, xb.col_gain * (G @ v), 0.0)


def lif_step(st: LifState, I_in, I_bias, inhibited: bool, dt: float):
    """One Euler step of the membrane; returns ``(state, crossed, frac)``.

    ``crossed`` flags neurons whose membrane reached ``v_th`` during the step
    and ``frac`` in (0, 1] is the linearly interpolated crossing point inside
    it. Crossed neurons are reset to ``v_rest``; the caller decides which one
    counts as the spike (see :func:`pick_winner`).
    """
    v0 = st.v_m
    if inhibited:
        st.v_m = np.full_like(v0, st.v_rest)
        st.spiked_this_step = np.zeros(v0.shape, dtype=bool)
        return st, st.spiked_this_step, np.ones(v0.shape)
    I = np.asarray(I_in, dtype=float) + np.asarray(I_bias, dtype=float)
    v1 = v0 + dt * (I / st.C_m - (v0 - st.v_rest) / (st.R_leak * st.C_m))
    crossed = v1 >= st.v_th
    with np.errstate(divide="ignore", invalid="ignore"):
        frac = np.where(crossed, (st.v_th - v0) / (v1 - v0), 1.0)
    frac = np.clip(np.nan_to_num(frac, nan=1.0), 0.0, 1.0)
    st.v_m = np.where(crossed, st.v_rest, v1)
    st.spiked_this_step = crossed
    return st, crossed, frac


def pick_winner(crossed, frac) -> tuple[int, bool]:
    """Earliest crossing wins; exact ties go to the lowest index.

    Returns ``(index, tie)`` or ``(-1, False)`` when nobody crossed.
    """
    idx = np.flatnonzero(crossed)
    if idx.size == 0:
        return -1, False
    f = np.asarray(frac)[idx]
    best = f.min()
    first = idx[f == best]
    return int(first[0]), bool(first.size > 1)


def lic_step(lic: RcLatch, any_post_spike: bool, dt: float):
    """Returns ``(v_inh_high, v_C_inh)``."""
    high = lic.step(bool(any_post_spike), dt)
    return bool(high), float(lic.v_c)


def scc_step(scc: RcLatch, post_spike, v_inh_high: bool, dt: float):
    """Column enables from the per-column post latches."""
    v_post = scc.step(post_spike, dt)
    return ~(~v_post & bool(v_inh_high))


def dcc_step(dcc: RcLatch, pre_spike, v_inh_high: bool, dt: float):
    """Row switch controls; ``False`` means the row carries its update voltage."""
    v_pre = dcc.step(pre_spike, dt)
    return ~(v_pre & bool(v_inh_high))


def ucc_output(v_C_u, v_C_inh, p: UccParams = UccParams()):
    """Positive rail iff the pre-side capacitor has recharged further."""
    v_C_u = np.asarray(v_C_u, dtype=float)
    out = np.where(v_C_u > v_C_inh, p.v_plus, p.v_minus)
    return float(out) if out.ndim == 0 else out


def crossbar_apply_update(xb: Crossbar, row_update_voltages, dt: float) -> Crossbar:
    """Step every device in an active column on an UPDATE-mode row, in place."""
    rows = xb.row_source == UPDATE
    cols = xb.col_active
    if not rows.any() or not cols.any():
        return xb
    sel = np.outer(cols, rows) & ~xb.stuck
    if not sel.any():
        return xb
    v = np.broadcast_to(np.asarray(row_update_voltages, dtype=float), (xb.m, xb.n))
    d = xb.devices
    rate = state_rate(xb.w[sel], v[sel], d.R_on[sel], d.R_off[sel],
                      d.V_T_pos[sel], d.V_T_neg[sel], xb.params)
    xb.w[sel] = np.clip(xb.w[sel] + rate * dt, xb.params.w_min, xb.params.w_max)
    return xb


@dataclass
class Peripherals:
    """The four RC-latch banks with their default component values."""
    lic: RcLatch = field(default_factory=lambda: RcLatch(5.0, 1e3, 1.5e-6, 2.5))
    scc: RcLatch = field(default_factory=lambda: RcLatch(5.0, 1e3, 1.7e-6, 2.5))
    dcc: RcLatch = field(default_factory=lambda: RcLatch(5.0, 1e3, 1.5e-6, 2.5))
    ucc: RcLatch = field(default_factory=lambda: RcLatch(5.0, 1e3, 1.5e-6, 2.5))
    ucc_rails: UccParams = field(default_factory=UccParams)
