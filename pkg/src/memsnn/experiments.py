"""Evaluation campaigns: pattern tasks, noise sweeps, dataset classification,
stuck-at faults and device variation, plus heatmap export."""
from __future__ import annotations

import csv
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from importlib import resources
from pathlib import Path

import numpy as np

from . import engine
from .circuit import Crossbar
from .device import MemristorParams, RejectedInput, perturb_array
from .encoder import (GrfConfig, SpikeTrain, encode_pattern, encode_temporal, fit_minmax,
                      flip_noise, grf_expand, minmax_scale, read_dataset_csv, read_patterns)
from .engine import Network, NetworkConfig
from .metrics import Metrics, compute_metrics, rng_for

__all__ = [
    "FaultSpec", "ClassificationSetup", "FeatureEncoder", "ClassificationResult",
    "SweepRow", "CampaignSummary", "inject_stuck", "apply_faults", "stratified_split",
    "run_classification", "run_fault_campaign", "load_patterns", "pattern_trains",
    "train_patterns", "recognize", "run_noise_sweep", "export_heatmap", "write_sweep_csv",
    "compute_metrics",
]

log = logging.getLogger(__name__)

BUILTIN_PATTERNS = {"5x3": "patterns_5x3.txt", "7x3": "digits_7x3.txt"}
BUILTIN_DATASETS = {"iris": "iris.csv", "bcw": "bcw.csv"}


def _check_fraction(name: str, value: float) -> None:
    if not 0.0 <= value <= 1.0:
        raise RejectedInput(f"{name} must lie in [0, 1], got {value}")


@dataclass(frozen=True)
class FaultSpec:
    stuck_fraction: float = 0.0
    dispersion_R: float = 0.0
    dispersion_Vt: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for f in ("stuck_fraction", "dispersion_R", "dispersion_Vt"):
            _check_fraction(f, getattr(self, f))

    @property
    def is_clean(self) -> bool:
        return self.stuck_fraction == 0 and self.dispersion_R == 0 and self.dispersion_Vt == 0


def inject_stuck(xb: Crossbar, fraction: float, rng: np.random.Generator) -> Crossbar:
    """Freeze ``round(fraction*n*m)`` distinct devices at random states.

    Stuck states are drawn uniformly over the allowed ``w`` range. Works in place.
    """
    _check_fraction("stuck fraction", fraction)
    total = xb.n * xb.m
    k = int(round(fraction * total))
    if k == 0:
        return xb
    flat = rng.choice(total, size=k, replace=False)
    idx = np.unravel_index(flat, xb.w.shape)
    p = xb.params
    xb.w[idx] = rng.uniform(p.w_min, p.w_max, k)
    xb.stuck[idx] = True
    return xb


def apply_faults(config: NetworkConfig, params: MemristorParams, spec: FaultSpec,
                 repeat: int = 0) -> Network:
    """Fresh, initialised network with the variations and stuck devices of ``spec``.

    Each repeat draws from its own labelled stream, so repeats are independent.
    """
    shape = (config.m, config.n)
    devices = perturb_array(params, shape, spec.dispersion_R, spec.dispersion_Vt,
                            rng_for(spec.seed, "variation", repeat))
    net = Network.build(config, params, devices)
    engine.init_weights(net, config.mode, rng_for(spec.seed, "init", repeat))
    inject_stuck(net.xb, spec.stuck_fraction, rng_for(spec.seed, "stuck", repeat))
    return net


# -- classification --------------------------------------------------------

@dataclass(frozen=True)
class ClassificationSetup:
    """Preprocessing and protocol choices for the dataset tasks."""
    n2: int = 3
    beta: float = 3.0
    # min-max the expanded features again so every row spans [0, T]
    rescale: bool = True
    train_frac: float = 0.7
    # pick the inference gain by training-split accuracy; else keep the config's
    select_gain: bool = True

    def __post_init__(self):
        if not 0.0 < self.train_frac < 1.0:
            raise RejectedInput("train_frac must lie in (0, 1)")
        GrfConfig(self.n2, self.beta)


def stratified_split(labels, train_frac: float, rng: np.random.Generator):
    """Per-class shuffle and cut; returns sorted train and test index arrays."""
    labels = np.asarray(labels)
    tr, te = [], []
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        rng.shuffle(idx)
        k = int(round(train_frac * len(idx)))
        tr.extend(idx[:k])
        te.extend(idx[k:])
    return np.array(sorted(tr), dtype=int), np.array(sorted(te), dtype=int)


@dataclass
class FeatureEncoder:
    """Min-max, receptive-field expansion and temporal coding fitted on a training split."""
    T: float
    n2: int = 3
    beta: float = 3.0
    rescale: bool = True
    mins: np.ndarray | None = None
    maxs: np.ndarray | None = None
    mins2: np.ndarray | None = None
    maxs2: np.ndarray | None = None

    def fit(self, X) -> "FeatureEncoder":
        X = np.asarray(X, dtype=float)
        self.mins, self.maxs = fit_minmax(X)
        if self.rescale:
            self.mins2, self.maxs2 = fit_minmax(self._expand(X))
        return self

    def _expand(self, X):
        return grf_expand(minmax_scale(X, self.mins, self.maxs, self.T),
                          GrfConfig(self.n2, self.beta), self.T)

    def values(self, X) -> np.ndarray:
        if self.mins is None:
            raise RejectedInput("encoder used before fit")
        E = self._expand(np.asarray(X, dtype=float))
        if self.rescale:
            E = minmax_scale(E, self.mins2, self.maxs2, self.T)
        return E

    def transform(self, X, shape) -> list[SpikeTrain]:
        return [encode_temporal(v, shape, self.T) for v in np.atleast_2d(self.values(X))]

    @property
    def n_features(self) -> int:
        return len(self.mins)

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("mins", "maxs", "mins2", "maxs2"):
            d[k] = None if d[k] is None else np.asarray(d[k]).tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureEncoder":
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise RejectedInput(f"unknown encoder fields: {sorted(unknown)}")
        d = dict(d)
        for k in ("mins", "maxs", "mins2", "maxs2"):
            if d.get(k) is not None:
                d[k] = np.asarray(d[k], dtype=float)
        return cls(**d)


@dataclass
class ClassificationResult:
    metrics: Metrics
    train_metrics: Metrics
    net: Network
    encoder: FeatureEncoder
    infer_gain: float
    split: tuple = field(repr=False, default=None)


def _load_dataset(dataset):
    if isinstance(dataset, tuple):
        X, y = dataset
        return np.asarray(X, dtype=float), np.asarray(y, dtype=int)
    if isinstance(dataset, str) and dataset in BUILTIN_DATASETS:
        with resources.as_file(resources.files("memsnn") / "data" / BUILTIN_DATASETS[dataset]) as p:
            return read_dataset_csv(p)
    return read_dataset_csv(dataset)


def run_classification(dataset, config: NetworkConfig, split_seed: int = 0,
                       setup: ClassificationSetup = ClassificationSetup(),
                       params: MemristorParams | None = None, fault: FaultSpec | None = None,
                       repeat: int = 0, jobs: int = 1, backend: str | None = None
                       ) -> ClassificationResult:
    """Split, encode, train for ``config.epochs`` and score the held-out part.

    ``dataset`` is a CSV path, a built-in name (``iris``/``bcw``) or an
    ``(X, y)`` pair. The split and sample order come from ``split_seed``.
    """
    X, y = _load_dataset(dataset)
    params = params or MemristorParams()
    if len(np.unique(y)) < 2:
        log.warning("dataset has a single class; F1 will be degenerate")
    if y.max() >= config.m:
        raise RejectedInput(f"labels reach {y.max()} but the network has {config.m} outputs")
    if X.shape[1] * setup.n2 != config.n:
        raise RejectedInput(f"{X.shape[1]} features x {setup.n2} fields != n = {config.n}")
    tr, te = stratified_split(y, setup.train_frac, rng_for(split_seed, "split"))
    order = rng_for(split_seed, "order").permutation(tr)
    enc = FeatureEncoder(config.T, setup.n2, setup.beta, setup.rescale).fit(X[tr])
    shape = config.spike_shape
    S_tr, S_te = enc.transform(X[order], shape), enc.transform(X[te], shape)

    net = apply_faults(config, params, fault or FaultSpec(seed=config.seed), repeat)
    engine.train(net, S_tr, y[order], backend=backend)
    gain = config.test_gain
    if setup.select_gain:
        gain, _ = engine.select_infer_gain(net, S_tr, y[order], jobs=jobs, backend=backend)
        net.config = replace(net.config, infer_gain=gain)
    train_m = engine.test(net, S_tr, y[order], jobs, backend)
    m = engine.test(net, S_te, y[te], jobs, backend)
    if m.no_spike:
        log.warning("%d of %d test samples produced no spike", m.no_spike, m.n_samples)
    return ClassificationResult(m, train_m, net, enc, gain, (tr, te))


@dataclass
class CampaignSummary:
    spec: FaultSpec
    repeats: int
    accuracies: list
    f1s: list

    @property
    def mean(self) -> float:
        return float(np.mean(self.accuracies))

    @property
    def std(self) -> float:
        return float(np.std(self.accuracies))

    @property
    def f1_mean(self) -> float:
        return float(np.mean(self.f1s))


def _campaign_repeat(args):
    dataset, config, spec, setup, params, split_seed, r, backend = args
    res = run_classification(dataset, config, split_seed, setup, params, spec, r, backend=backend)
    return res.metrics.accuracy, res.metrics.f1_macro


def run_fault_campaign(dataset, config: NetworkConfig, spec: FaultSpec, repeats: int = 5,
                       split_seed: int = 0, setup: ClassificationSetup = ClassificationSetup(),
                       params: MemristorParams | None = None, jobs: int = 1,
                       backend: str | None = None) -> CampaignSummary:
    """Repeat fault injection, training and testing; the split stays fixed.

    Repeat ``r`` uses fault streams labelled with ``r``, so results do not
    depend on ``jobs`` or on completion order.
    """
    if repeats < 1:
        raise RejectedInput("repeats must be at least 1")
    if isinstance(dataset, str) and dataset not in BUILTIN_DATASETS:
        dataset = _load_dataset(dataset)  # parse once, not per worker
    params = params or MemristorParams()
    work = [(dataset, config, spec, setup, params, split_seed, r, backend) for r in range(repeats)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            out = list(ex.map(_campaign_repeat, work))
    else:
        out = [_campaign_repeat(w) for w in work]
    return CampaignSummary(spec, repeats, [a for a, _ in out], [f for _, f in out])


# -- pattern tasks ---------------------------------------------------------

def load_patterns(name_or_path):
    """Built-in sets are ``"5x3"`` (four glyphs) and ``"7x3"`` (digits 0-9)."""
    if name_or_path in BUILTIN_PATTERNS:
        with resources.as_file(resources.files("memsnn") / "data" / BUILTIN_PATTERNS[name_or_path]) as p:
            return read_patterns(p)
    return read_patterns(name_or_path)


def pattern_trains(patterns, config: NetworkConfig, lead: float = 0.5e-3) -> list[SpikeTrain]:
    return [encode_pattern(p, config.spike_shape, config.T, lead) for p in patterns]


def train_patterns(config: NetworkConfig, patterns, labels, presentations: int = 25,
                   params: MemristorParams | None = None, backend: str | None = None) -> Network:
    """Round-robin training: every pattern once per round, ``presentations`` rounds.

    ``config.epochs`` repeats the whole sequence. In unsupervised mode labels
    are ignored and no bias is applied.
    """
    patterns = np.asarray(patterns)
    if patterns[0].size != config.n:
        raise RejectedInput(f"patterns have {patterns[0].size} pixels, network has {config.n} rows")
    net = Network.build(config, params)
    engine.init_weights(net, config.mode, rng_for(config.seed, "init"))
    trains = pattern_trains(patterns, config)
    seq = [trains[k] for _ in range(presentations) for k in range(len(trains))]
    lab = [int(labels[k]) for _ in range(presentations) for k in range(len(trains))]
    if config.mode == engine.UNSUPERVISED:
        lab = [None] * len(seq)
    engine.train(net, seq, lab, backend=backend)
    return net


def recognize(net: Network, patterns, backend: str | None = None) -> list:
    preds, _, _ = engine.predict(net, pattern_trains(patterns, net.config), backend=backend)
    return preds


@dataclass
class SweepRow:
    level: float
    mean: float
    std: float
    trials: int


def _noise_trial(args):
    net, patterns, labels, level, seed, trial, backend = args
    rng = rng_for(seed, "noise", f"{level:.9g}", trial)
    noisy = [flip_noise(p, level, rng) for p in patterns]
    preds = recognize(net, noisy, backend)
    return float(np.mean([p == y for p, y in zip(preds, labels)]))


def run_noise_sweep(net: Network, patterns, labels, levels, trials: int = 50, seed: int = 0,
                    jobs: int = 1, backend: str | None = None) -> list[SweepRow]:
    """Mean recognition accuracy over ``trials`` independently flipped pattern sets."""
    if trials < 1:
        raise RejectedInput("trials must be at least 1")
    for lv in levels:
        _check_fraction("noise level", lv)
    labels = [int(v) for v in labels]
    work = [(net, patterns, labels, float(lv), seed, t, backend) for lv in levels for t in range(trials)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            accs = list(ex.map(_noise_trial, work, chunksize=max(1, len(work) // (4 * jobs))))
    else:
        accs = [_noise_trial(w) for w in work]
    rows = []
    for i, lv in enumerate(levels):
        a = np.array(accs[i * trials:(i + 1) * trials])
        rows.append(SweepRow(float(lv), float(a.mean()), float(a.std()), trials))
    return rows


def write_sweep_csv(rows: list[SweepRow], path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["level", "mean", "std", "trials"])
        for r in rows:
            w.writerow([repr(r.level), repr(r.mean), repr(r.std), r.trials])


# -- heatmaps --------------------------------------------------------------

def _pgm(img: np.ndarray, g_min: float, g_max: float) -> str:
    scaled = np.clip((img - g_min) / (g_max - g_min), 0.0, 1.0)
    px = np.rint(255 * scaled).astype(int)
    lines = ["P2", f"{px.shape[1]} {px.shape[0]}", "255"]
    lines += [" ".join(str(v) for v in row) for row in px]
    return "\n".join(lines) + "\n"


def export_heatmap(net: Network, out_dir, grid: tuple[int, int] | None = None,
                   prefix: str = "column") -> list[Path]:
    """Write each column's conductances (uS) as CSV, plus a PGM when ``grid`` is given.

    PGM grey levels map ``[G_min, G_max]`` linearly onto ``[0, 255]``, so
    bright pixels are high conductance.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise OSError(f"cannot create {out}: {e}") from e
    G = net.G
    if grid is not None and grid[0] * grid[1] != net.config.n:
        raise RejectedInput(f"grid {grid} does not cover {net.config.n} rows")
    p = net.params
    written = []
    for j in range(net.config.m):
        col = G[j] * 1e6
        img = col.reshape(grid) if grid is not None else col.reshape(-1, 1)
        path = out / f"{prefix}{j}.csv"
        with open(path, "w", newline="") as f:
            csv.writer(f).writerows([[repr(float(v)) for v in row] for row in img])
        written.append(path)
        if grid is not None:
            path = out / f"{prefix}{j}.pgm"
            path.write_text(_pgm(G[j].reshape(grid), p.G_min, p.G_max))
            written.append(path)
    return written
