"""Network construction, sample presentation, training and testing."""
from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import kernel
from .circuit import Crossbar, RcLatch
from .device import DeviceArray, MemristorParams, RejectedInput
from .encoder import SpikeShape, SpikeTrain
from .metrics import Metrics, compute_metrics, rng_for

log = logging.getLogger(__name__)

SUPERVISED, UNSUPERVISED = "supervised", "unsupervised"
MODEL_SCHEMA = 1


class SimulationFailure(RuntimeError):
    """No neuron fired where a spike was required."""


@dataclass(frozen=True)
class NetworkConfig:
    n: int = 12
    m: int = 3
    T: float = 1e-3
    dt: float = 1e-7
    C_m: float = 5e-6
    R_leak: float = 50e3
    v_rest: float = 0.0
    v_th: float = 1e-3
    I_b: float = 35e-6
    col_gain: float = 1.0
    # read-out gain while testing; None reuses col_gain
    infer_gain: float | None = None
    R0: float = 95e3
    R1: float = 1e3
    R2: float = 500.0
    epochs: int = 10
    seed: int = 0
    sample_duration: float | None = None
    mode: str = SUPERVISED
    # pre-synaptic spike
    amplitude: float = 1.1
    rise: float = 1e-6
    fall: float = 1e-6
    pre_detect_v: float = 0.1
    # peripheral RC blocks: lateral inhibition, synapse, dual-switch, update control
    v_l: float = 5.0
    R_inh: float = 1e3
    C_inh: float = 1.5e-6
    v_e: float = 5.0
    R_e: float = 1e3
    C_e: float = 1.7e-6
    v_w: float = 5.0
    R_w: float = 1e3
    C_w: float = 1.5e-6
    v_u: float = 5.0
    R_u: float = 1e3
    C_u: float = 1.5e-6
    v_switch: float = 2.5
    v_plus: float = 1.4
    v_minus: float = -2.6

    def __post_init__(self):
        if self.n < 1 or self.m < 1:
            raise RejectedInput("n and m must be at least 1")
        if not 0 < self.dt <= 1e-6:
            raise RejectedInput(f"dt must lie in (0, 1 us], got {self.dt}")
        if self.T <= 0:
            raise RejectedInput("T must be positive")
        if self.mode not in (SUPERVISED, UNSUPERVISED):
            raise RejectedInput(f"unknown mode {self.mode!r}")
        if not 0 < self.pre_detect_v <= self.amplitude:
            raise RejectedInput("pre_detect_v must lie in (0, amplitude]")
        if self.sample_duration is not None and self.sample_duration <= self.T + self.refractory:
            raise RejectedInput("sample_duration must exceed T plus the refractory width")
        if self.epochs < 0:
            raise RejectedInput("epochs must be non-negative")
        if self.col_gain <= 0 or (self.infer_gain is not None and self.infer_gain <= 0):
            raise RejectedInput("column gains must be positive")

    @property
    def lic(self) -> RcLatch:
        return RcLatch(self.v_l, self.R_inh, self.C_inh, self.v_switch)

    @property
    def refractory(self) -> float:
        return self.lic.pulse_width

    @property
    def duration(self) -> float:
        if self.sample_duration is not None:
            return self.sample_duration
        return self.T + 2 * self.refractory

    @property
    def n_steps(self) -> int:
        return int(math.ceil(self.duration / self.dt - 1e-9))

    @property
    def test_gain(self) -> float:
        return self.col_gain if self.infer_gain is None else self.infer_gain

    @property
    def spike_shape(self) -> SpikeShape:
        return SpikeShape(self.amplitude, self.rise, self.fall)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise RejectedInput(f"unknown network fields: {sorted(unknown)}")
        return cls(**d)


# Network parameter rows (n, m, R0, R1, R2, C_m, I_b) per task.
PRESETS = {
    "iris": dict(n=12, m=3, R0=95e3, R1=1e3, R2=500.0, C_m=5e-6, I_b=35e-6, epochs=10),
    "bcw": dict(n=90, m=2, R0=40e3, R1=1e3, R2=500.0, C_m=7e-6, I_b=100e-6, epochs=5),
    "pattern5x3": dict(n=15, m=4, R0=50e3, R1=1e3, R2=1e3, C_m=0.3e-6, I_b=500e-6, epochs=1, col_gain=50.0),
    "digits7x3": dict(n=21, m=10, R0=50e3, R1=1e3, R2=1e3, C_m=0.3e-6, I_b=500e-6, epochs=1, col_gain=50.0),
}


def preset(name: str, **overrides) -> NetworkConfig:
    try:
        base = dict(PRESETS[name])
    except KeyError:
        raise RejectedInput(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    base.update(overrides)
    return NetworkConfig(**base)


@dataclass
class Network:
    config: NetworkConfig
    params: MemristorParams
    xb: Crossbar
    log: list = field(default_factory=list)

    @classmethod
    def build(cls, config: NetworkConfig, params: MemristorParams | None = None,
              devices: DeviceArray | None = None) -> "Network":
        params = params or MemristorParams()
        xb = Crossbar(config.n, config.m, params, devices=devices, col_gain=config.col_gain)
        return cls(config, params, xb)

    @property
    def G(self) -> np.ndarray:
        """Conductance matrix ``[column, row]`` in siemens."""
        return self.xb.conductance()

    def copy(self) -> "Network":
        return Network(self.config, self.params, self.xb.copy(), [dict(e) for e in self.log])

    def with_infer_gain(self, gain: float | None) -> "Network":
        net = self.copy()
        net.config = replace(net.config, infer_gain=gain)
        return net


@dataclass
class PresentationResult:
    winner: int | None
    spike_time: float
    tie_flag: bool
    delta_G: np.ndarray
    spikes: list = field(default_factory=list)
    inh_edges: list = field(default_factory=list)
    comparator_ties: int = 0
    steps: int = 0


def init_weights(net: Network, mode: str = SUPERVISED, rng: np.random.Generator | None = None) -> Network:
    p = net.params
    if mode == SUPERVISED:
        net.xb.w[...] = p.w_max
    elif mode == UNSUPERVISED:
        if rng is None:
            rng = rng_for(net.config.seed, "init")
        net.xb.w[...] = rng.uniform(0.9 * p.w_max, p.w_max, net.xb.w.shape)
    else:
        raise RejectedInput(f"unknown mode {mode!r}")
    return net


def make_job(net: Network, train: SpikeTrain, bias: np.ndarray, learning: bool,
             trace: np.ndarray | None = None, trace_every: int = 1) -> kernel.Job:
    """Training presentations use ``col_gain``; inference uses ``test_gain``."""
    c = net.config
    if train.n != c.n:
        raise RejectedInput(f"spike train has {train.n} rows, network has {c.n}")
    return kernel.Job(
        onsets=train.onsets, amplitude=train.shape.amplitude, rise=train.shape.rise,
        fall=train.shape.fall, w=net.xb.w, devices=net.xb.devices, stuck=net.xb.stuck,
        params=net.params, C_m=c.C_m, R_leak=c.R_leak, v_rest=c.v_rest, v_th=c.v_th,
        bias=bias, col_gain=c.col_gain if learning else c.test_gain,
        lic=(c.v_l, c.R_inh * c.C_inh, c.v_switch),
        scc=(c.v_e, c.R_e * c.C_e, c.v_switch),
        dcc=(c.v_w, c.R_w * c.C_w, c.v_switch),
        ucc=(c.v_u, c.R_u * c.C_u, c.v_switch),
        v_plus=c.v_plus, v_minus=c.v_minus, pre_detect=c.pre_detect_v,
        dt=c.dt, n_steps=c.n_steps, learning=learning,
        early_exit=trace is None, trace=trace, trace_every=trace_every)


def present_sample(net: Network, train: SpikeTrain, label: int | None = None,
                   learning: bool = False, backend: str | None = None,
                   bias: np.ndarray | None = None) -> PresentationResult:
    """Simulate one sample window; updates weights in place when learning.

    In supervised learning the bias current goes to ``LIF_label`` only. In
    testing and unsupervised learning no bias is applied. ``bias`` overrides
    the per-neuron bias vector (amps) for probing.
    """
    c = net.config
    if bias is None:
        bias = np.zeros(c.m)
        if learning and c.mode == SUPERVISED:
            if label is None:
                raise RejectedInput("supervised learning needs a label")
            bias[int(label)] = c.I_b
    G0 = net.G
    out = kernel.simulate(make_job(net, train, np.asarray(bias, dtype=float), learning), backend)
    dG = net.G - G0 if learning else np.zeros_like(G0)
    if out.spike_neurons:
        winner, t_spk, tie = out.spike_neurons[0], out.spike_times[0], out.spike_ties[0]
    else:
        winner, t_spk, tie = None, math.inf, False
    if out.comparator_ties:
        log.debug("comparator tie on %d row-steps", out.comparator_ties)
    return PresentationResult(winner, t_spk, tie, dG,
                              list(zip(out.spike_neurons, out.spike_times)),
                              out.inh_edges, out.comparator_ties, out.steps)


def trace_sample(net: Network, train: SpikeTrain, label: int | None = None,
                 learning: bool = False, every: int = 1, backend: str | None = None):
    """Per-step signal dump: returns ``(columns, rows)``; weights untouched."""
    c = net.config
    work = net.copy()
    bias = np.zeros(c.m)
    if learning and c.mode == SUPERVISED and label is not None:
        bias[int(label)] = c.I_b
    rows = (c.n_steps + every - 1) // every
    buf = np.zeros((rows, 2 + 2 * c.m + c.n))
    out = kernel.simulate(make_job(work, train, bias, learning, buf, every), backend)
    cols = (["t"] + [f"v_m{j}" for j in range(c.m)] + ["v_inh"]
            + [f"v_e{j}" for j in range(c.m)] + [f"v_sbar{i}" for i in range(c.n)])
    return cols, buf[:out.trace_rows]


def train(net: Network, trains: list[SpikeTrain], labels, epochs: int | None = None,
          backend: str | None = None) -> Network:
    """Present every sample once per epoch with learning on; logs per epoch."""
    epochs = net.config.epochs if epochs is None else epochs
    labels = list(labels) if labels is not None else [None] * len(trains)
    if len(labels) != len(trains):
        raise RejectedInput("one label per training sample required")
    for ep in range(epochs):
        hits = ties = silent = 0
        dG = 0.0
        for tr, y in zip(trains, labels):
            res = present_sample(net, tr, y, learning=True, backend=backend)
            hits += res.winner is not None and res.winner == y
            ties += res.tie_flag
            silent += res.winner is None
            dG += float(np.abs(res.delta_G).sum())
        entry = {"epoch": len(net.log) + 1, "train_accuracy": hits / max(len(trains), 1),
                 "mean_abs_dG": dG / max(len(trains) * net.config.n * net.config.m, 1),
                 "ties": ties, "no_spike": silent}
        if silent:
            log.warning("epoch %d: %d presentations produced no spike", entry["epoch"], silent)
        net.log.append(entry)
    return net


def _predict_one(args):
    net, tr, backend = args
    res = present_sample(net, tr, None, learning=False, backend=backend)
    return res.winner, res.tie_flag, res.spike_time


def predict(net: Network, trains: list[SpikeTrain], jobs: int = 1, backend: str | None = None):
    """Winners (or ``None``) per sample in inference mode, in sample order."""
    if jobs > 1 and len(trains) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            res = list(ex.map(_predict_one, [(net, tr, backend) for tr in trains],
                              chunksize=max(1, len(trains) // (4 * jobs))))
    else:
        res = [_predict_one((net, tr, backend)) for tr in trains]
    return ([r[0] for r in res], [r[1] for r in res], [r[2] for r in res])


def test(net: Network, trains: list[SpikeTrain], labels, jobs: int = 1,
         backend: str | None = None) -> Metrics:
    """Inference over a labelled set; a sample is right iff its own neuron fires first."""
    if len(trains) == 0:
        raise RejectedInput("empty test set")
    preds, ties, _ = predict(net, trains, jobs, backend)
    return compute_metrics(preds, labels, net.config.m, ties=sum(ties))


test.__test__ = False  # keep pytest from collecting this as a test


def unit_gain(net: Network) -> float:
    """Gain at which one spike through a G_max device alone reaches threshold."""
    c = net.config
    q_spike = net.params.G_max * c.amplitude * 0.5 * (c.rise + c.fall)
    return c.C_m * (c.v_th - c.v_rest) / q_spike


def calibrate_col_gain(net: Network, trains: list[SpikeTrain], lo: float = 0.25, hi: float = 0.9,
                       bounds=(1.0, 1e6), iters: int = 40, backend: str | None = None) -> float:
    """Bisect the inference gain (log scale) until the median winner spike
    time lands in ``[lo*T, hi*T]``. Silent samples count as infinitely late.

    Returns the gain; the network is not modified.
    """
    T = net.config.T
    target = 0.5 * (lo + hi) * T

    def median_time(g):
        _, _, times = predict(net.with_infer_gain(g), trains, backend=backend)
        return float(np.median(times))

    a, b = math.log(bounds[0]), math.log(bounds[1])
    if median_time(bounds[1]) > hi * T:
        raise SimulationFailure("even the largest gain leaves the median sample silent or late")
    g = math.exp(0.5 * (a + b))
    for _ in range(iters):
        g = math.exp(0.5 * (a + b))
        tm = median_time(g)
        if lo * T <= tm <= hi * T and abs(tm - target) < 0.1 * T:
            break
        if tm > target:
            a = math.log(g)
        else:
            b = math.log(g)
    return g


def select_infer_gain(net: Network, trains: list[SpikeTrain], labels, grid=None,
                      jobs: int = 1, backend: str | None = None) -> tuple[float, float]:
    """Pick the inference gain with the best accuracy on a labelled set.

    Meant for the training split. When several grid points tie, the middle
    one of the tied run is taken. Returns ``(gain, accuracy)``.
    """
    if grid is None:
        grid = unit_gain(net) * np.geomspace(0.05, 50.0, 31)
    grid = [float(g) for g in grid]
    accs = np.array([test(net.with_infer_gain(g), trains, labels, jobs, backend).accuracy
                     for g in grid])
    best = np.flatnonzero(accs == accs.max())
    k = int(best[len(best) // 2])
    return grid[k], float(accs[k])


# -- persistence -----------------------------------------------------------

def to_json(net: Network, extra: dict | None = None) -> dict:
    d = net.xb.devices
    return {
        "schema": MODEL_SCHEMA,
        "config": net.config.to_dict(),
        "device": net.params.to_dict(),
        "devices": {"R_on": d.R_on.tolist(), "R_off": d.R_off.tolist(),
                    "V_T_pos": d.V_T_pos.tolist(), "V_T_neg": d.V_T_neg.tolist()},
        "stuck": net.xb.stuck.astype(int).tolist(),
        "w": net.xb.w.tolist(),
        "log": net.log,
        "extra": extra or {},
    }


def from_json(doc: dict) -> tuple[Network, dict]:
    try:
        if doc.get("schema") != MODEL_SCHEMA:
            raise RejectedInput(f"unsupported model schema {doc.get('schema')!r}")
        config = NetworkConfig.from_dict(doc["config"])
        params = MemristorParams.from_dict(doc["device"])
        dv = doc["devices"]
        devices = DeviceArray(*(np.asarray(dv[k], dtype=float)
                                for k in ("R_on", "R_off", "V_T_pos", "V_T_neg")))
        net = Network.build(config, params, devices)
        w = np.asarray(doc["w"], dtype=float)
        if w.shape != (config.m, config.n):
            raise RejectedInput(f"weight matrix shape {w.shape} does not match config")
        net.xb.w[...] = w
        net.xb.stuck[...] = np.asarray(doc["stuck"], dtype=bool)
        net.log = list(doc.get("log", []))
    except (KeyError, TypeError, ValueError) as e:
        if isinstance(e, RejectedInput):
            raise
        raise RejectedInput(f"malformed model document: {e}") from None
    return net, doc.get("extra", {})


def save_model(net: Network, path, extra: dict | None = None) -> None:
    Path(path).write_text(json.dumps(to_json(net, extra), indent=1))


def load_model(path) -> tuple[Network, dict]:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise RejectedInput(f"{path}: not valid JSON ({e})") from None
    return from_json(doc)
