"""Voltage-controlled threshold memristor.

The device state is the doped-region width ``w`` in metres. Memristance mixes
``R_on`` and ``R_off`` linearly in ``w / D``; the state only moves when the
applied voltage leaves the ``[V_T_neg, V_T_pos]`` band.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace

import numpy as np


class RejectedInput(ValueError):
    """Raised when an operation receives physically meaningless input."""


@dataclass(frozen=True)
class MemristorParams:
    D: float = 3e-9
    mu_v: float = 3.2e-15
    R_on: float = 1e6
    R_off: float = 6e7
    V_T_pos: float = 1.2
    V_T_neg: float = -2.4
    i_on: float = 1.0
    i_off: float = 1.4e-14
    i_0: float = 3e-8
    p: int = 1
    delta_frac: float = 1e-3

    def __post_init__(self):
        if not 0 < self.R_on < self.R_off:
            raise RejectedInput(f"need 0 < R_on < R_off, got {self.R_on}, {self.R_off}")
        if not self.V_T_neg < 0 < self.V_T_pos:
            raise RejectedInput(f"need V_T_neg < 0 < V_T_pos, got {self.V_T_neg}, {self.V_T_pos}")
        if int(self.p) != self.p or self.p < 1:
            raise RejectedInput(f"p must be a positive integer, got {self.p}")
        if not 0 <= self.delta_frac < 0.5:
            raise RejectedInput(f"delta_frac must lie in [0, 0.5), got {self.delta_frac}")
        if self.D <= 0:
            raise RejectedInput("D must be positive")

    @property
    def delta(self) -> float:
        return self.delta_frac * self.D

    @property
    def w_min(self) -> float:
        return self.delta

    @property
    def w_max(self) -> float:
        return self.D - self.delta

    @property
    def G_max(self) -> float:
        return 1.0 / self.R_on

    @property
    def G_min(self) -> float:
        return 1.0 / self.R_off

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, d: dict) -> "MemristorParams":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise RejectedInput(f"unknown device fields: {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class MemristorState:
    w: float
    stuck: bool = False


def window(w, params: MemristorParams):
    """Window function ``1 - (2w/D - 1)**(2p)``; vectorises over ``w``."""
    x = 2.0 * np.asarray(w, dtype=float) / params.D - 1.0
    out = 1.0 - x ** (2 * params.p)
    return float(out) if out.ndim == 0 else out


def memristance(state: MemristorState, params: MemristorParams) -> float:
    x = state.w / params.D
    return params.R_on * x + params.R_off * (1.0 - x)


def conductance(state: MemristorState, params: MemristorParams) -> float:
    return 1.0 / memristance(state, params)


def w_for_conductance(G: float, params: MemristorParams) -> float:
    """Inverse of :func:`conductance` for a target ``G`` in ``[G_min, G_max]``."""
    R = 1.0 / G
    return params.D * (params.R_off - R) / (params.R_off - params.R_on)


def state_rate(w, v, R_on, R_off, V_T_pos, V_T_neg, params: MemristorParams):
    """dw/dt for arrays of states ``w`` under voltages ``v``.

    ``R_on``, ``R_off``, ``V_T_pos`` and ``V_T_neg`` may be per-device arrays
    (device-to-device variation); the remaining constants come from
    ``params``. Above ``V_T_pos`` the rate has a pole at ``i == i_0``; a device
    sitting exactly on it does not move.
    """
    w = np.asarray(w, dtype=float)
    v = np.broadcast_to(np.asarray(v, dtype=float), w.shape)
    x = w / params.D
    R = R_on * x + R_off * (1.0 - x)
    i = v / R
    f = 1.0 - (2.0 * x - 1.0) ** (2 * params.p)
    k = params.mu_v * R_on / params.D
    rate = np.zeros_like(w)
    pos = v > V_T_pos
    neg = v < V_T_neg
    denom = i - params.i_0
    pos_ok = pos & (denom != 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        rate = np.where(pos_ok, k * params.i_off / np.where(pos_ok, denom, 1.0) * f, rate)
    rate = np.where(neg, k * i / params.i_on * f, rate)
    return rate


def step_device(state: MemristorState, v_applied: float, dt: float,
                params: MemristorParams) -> MemristorState:
    """Advance one device by one explicit-Euler step of length ``dt``."""
    if not math.isfinite(v_applied):
        raise RejectedInput(f"non-finite voltage {v_applied!r}")
    if not (dt > 0 and math.isfinite(dt)):
        raise RejectedInput(f"dt must be positive and finite, got {dt!r}")
    if state.stuck:
        return state
    rate = float(state_rate(state.w, v_applied, params.R_on, params.R_off,
                            params.V_T_pos, params.V_T_neg, params))
    if rate == 0.0:
        return state
    w = min(max(state.w + rate * dt, params.w_min), params.w_max)
    return replace(state, w=w)


def perturb_params(params: MemristorParams, dispersion_R: float, dispersion_Vt: float,
                   rng: np.random.Generator) -> MemristorParams:
    """Draw one device's parameters with relative-standard-dispersion noise.

    Draws that break ``0 < R_on < R_off`` or ``V_T_neg < 0 < V_T_pos`` are
    redrawn.
    """
    out = perturb_array(params, (), dispersion_R, dispersion_Vt, rng)
    return replace(params, R_on=float(out.R_on), R_off=float(out.R_off),
                   V_T_pos=float(out.V_T_pos), V_T_neg=float(out.V_T_neg))


@dataclass
class DeviceArray:
    """Per-device copies of the parameters that vary between devices."""
    R_on: np.ndarray
    R_off: np.ndarray
    V_T_pos: np.ndarray
    V_T_neg: np.ndarray

    @classmethod
    def uniform(cls, params: MemristorParams, shape) -> "DeviceArray":
        return cls(np.full(shape, params.R_on), np.full(shape, params.R_off),
                   np.full(shape, params.V_T_pos), np.full(shape, params.V_T_neg))

    def copy(self) -> "DeviceArray":
        return DeviceArray(self.R_on.copy(), self.R_off.copy(),
                           self.V_T_pos.copy(), self.V_T_neg.copy())


def perturb_array(params: MemristorParams, shape, dispersion_R: float, dispersion_Vt: float,
                  rng: np.random.Generator) -> DeviceArray:
    if dispersion_R < 0 or dispersion_Vt < 0:
        raise RejectedInput("dispersions must be non-negative")
    out = DeviceArray.uniform(params, shape)
    if dispersion_R == 0 and dispersion_Vt == 0:
        return out
    R_on = np.atleast_1d(out.R_on).astype(float)
    R_off = np.atleast_1d(out.R_off).astype(float)
    Vp = np.atleast_1d(out.V_T_pos).astype(float)
    Vn = np.atleast_1d(out.V_T_neg).astype(float)
    todo = np.ones(R_on.shape, dtype=bool)
    # Rejection loop; with realistic dispersions it ends after one or two passes.
    for _ in range(1000):
        k = int(todo.sum())
        if k == 0:
            break
        R_on[todo] = params.R_on * (1.0 + rng.normal(0.0, dispersion_R, k))
        R_off[todo] = params.R_off * (1.0 + rng.normal(0.0, dispersion_R, k))
        Vp[todo] = params.V_T_pos * (1.0 + rng.normal(0.0, dispersion_Vt, k))
        Vn[todo] = params.V_T_neg * (1.0 + rng.normal(0.0, dispersion_Vt, k))
        todo = ~((R_on > 0) & (R_on < R_off) & (Vn < 0) & (Vp > 0))
    else:
        raise RuntimeError("parameter resampling did not converge")
    reshape = (lambda a: a.reshape(shape)) if shape != () else (lambda a: a[0])
    return DeviceArray(reshape(R_on), reshape(R_off), reshape(Vp), reshape(Vn))
