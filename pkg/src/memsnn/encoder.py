"""Input preprocessing and temporal spike encoding.

Features are min-max scaled to ``[0, T]``, optionally expanded with Gaussian
receptive fields, and each resulting value ``x`` becomes a single triangular
pre-synaptic spike with onset ``T - x``.
"""
from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .device import RejectedInput

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SpikeShape:
    amplitude: float = 1.1
    rise: float = 1e-6
    fall: float = 1e-6

    def __post_init__(self):
        if self.rise <= 0 or self.fall <= 0:
            raise RejectedInput("spike rise and fall must be positive")

    @property
    def width(self) -> float:
        return self.rise + self.fall


@dataclass(frozen=True)
class SpikeTrain:
    """One spike per row; ``onsets[i]`` is ``nan`` when row ``i`` is silent."""
    onsets: np.ndarray
    shape: SpikeShape
    window_T: float

    def __post_init__(self):
        on = np.asarray(self.onsets, dtype=float)
        ok = on[~np.isnan(on)]
        if ok.size and (ok.min() < 0 or ok.max() > self.window_T * (1 + 1e-12)):
            raise RejectedInput("spike onsets must lie in [0, T]")
        object.__setattr__(self, "onsets", on)

    @property
    def n(self) -> int:
        return len(self.onsets)

    @property
    def times(self) -> list[tuple[int, float]]:
        return [(i, float(t)) for i, t in enumerate(self.onsets) if not np.isnan(t)]


@dataclass(frozen=True)
class GrfConfig:
    n2: int = 3
    beta: float = 1.5

    def __post_init__(self):
        if self.n2 < 2:
            raise RejectedInput("need at least two receptive fields")
        if self.beta <= 0:
            raise RejectedInput("beta must be positive")


def fit_minmax(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    X = np.asarray(X, dtype=float)
    return X.min(axis=0), X.max(axis=0)


def minmax_scale(x, feature_mins, feature_maxs, T: float) -> np.ndarray:
    """Affine map of each feature onto ``[0, T]``, clamped.

    Works on a single vector or a 2-D sample matrix. Degenerate features
    (``min == max``) map to ``T/2``.
    """
    x = np.asarray(x, dtype=float)
    lo = np.asarray(feature_mins, dtype=float)
    hi = np.asarray(feature_maxs, dtype=float)
    span = hi - lo
    flat = span <= 0
    if np.any(flat):
        warnings.warn(f"degenerate features {np.flatnonzero(flat).tolist()} mapped to T/2",
                      stacklevel=2)
    safe = np.where(flat, 1.0, span)
    out = np.clip((x - lo) / safe, 0.0, 1.0) * T
    return np.where(flat, T / 2, out)


def grf_centers(cfg: GrfConfig, T: float) -> tuple[np.ndarray, float]:
    mu = np.arange(cfg.n2) * T / (cfg.n2 - 1)
    sigma = T / (cfg.beta * (cfg.n2 - 1))
    return mu, sigma


def grf_expand(x_scaled, cfg: GrfConfig, T: float) -> np.ndarray:
    """Expand each value into ``n2`` Gaussian responses scaled to ``[0, T]``.

    Output order is feature-major: responses of feature 0 first.
    """
    x = np.asarray(x_scaled, dtype=float)
    mu, sigma = grf_centers(cfg, T)
    r = T * np.exp(-((x[..., None] - mu) ** 2) / (2 * sigma ** 2))
    return r.reshape(*x.shape[:-1], x.shape[-1] * cfg.n2)


def encode_temporal(values, shape: SpikeShape, T: float) -> SpikeTrain:
    v = np.clip(np.asarray(values, dtype=float), 0.0, T)
    return SpikeTrain(T - v, shape, T)


def encode_pattern(bits, shape: SpikeShape, T: float, lead: float = 0.5e-3,
                   t0: float = 0.0) -> SpikeTrain:
    """Black (1) pixels spike at ``t0``, white (0) pixels ``lead`` later."""
    b = np.asarray(bits).reshape(-1)
    if not np.isin(b, (0, 1)).all():
        raise RejectedInput("pattern bits must be 0 or 1")
    return SpikeTrain(np.where(b == 1, t0, t0 + lead).astype(float), shape, T)


def waveform_at(train: SpikeTrain, row: int, t):
    """Triangular spike voltage on ``row`` at time(s) ``t``."""
    onset = train.onsets[row]
    return triangle(np.asarray(t, dtype=float) - onset, train.shape)


def triangle(s, shape: SpikeShape):
    """Spike voltage ``s`` seconds after onset (vectorised)."""
    s = np.asarray(s, dtype=float)
    up = shape.amplitude * s / shape.rise
    down = shape.amplitude * (shape.width - s) / shape.fall
    v = np.where(s < shape.rise, up, down)
    v = np.where((s >= 0) & (s < shape.width), v, 0.0)
    v = np.nan_to_num(v, nan=0.0)
    return float(v) if v.ndim == 0 else v


def flip_noise(bits, fraction: float, rng: np.random.Generator) -> np.ndarray:
    """Invert exactly ``round(fraction * size)`` distinct pixels."""
    if not 0 <= fraction <= 1:
        raise RejectedInput(f"noise fraction must lie in [0, 1], got {fraction}")
    b = np.array(bits, copy=True)
    k = int(round(fraction * b.size))
    if k:
        idx = rng.choice(b.size, size=k, replace=False)
        flat = b.reshape(-1)
        flat[idx] = 1 - flat[idx]
    return b


# -- file formats ---------------------------------------------------------

def read_dataset_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Numeric feature columns followed by an integer ``label`` column."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise RejectedInput(f"{path}: empty file") from None
        if not header or header[-1].strip() != "label":
            raise RejectedInput(f"{path}:1: last column must be 'label'")
        X, y = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise RejectedInput(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                X.append([float(c) for c in row[:-1]])
                lab = float(row[-1])
            except ValueError as e:
                raise RejectedInput(f"{path}:{lineno}: {e}") from None
            if lab != int(lab) or lab < 0:
                raise RejectedInput(f"{path}:{lineno}: label must be a non-negative integer")
            y.append(int(lab))
    if not X:
        raise RejectedInput(f"{path}: no samples")
    return np.asarray(X, dtype=float), np.asarray(y, dtype=int)


def write_dataset_csv(path, X, y, names=None) -> None:
    X = np.asarray(X)
    names = names or [f"f{i}" for i in range(X.shape[1])]
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([*names, "label"])
        for row, lab in zip(X, y):
            w.writerow([repr(float(v)) for v in row] + [int(lab)])


def read_patterns(path) -> tuple[np.ndarray, np.ndarray]:
    """Parse ``label:`` headed 0/1 grids separated by blank lines.

    Returns ``(patterns, labels)`` with patterns shaped ``(k, r, c)``.
    """
    path = Path(path)
    pats, labels = [], []
    label, grid, start = None, [], 0

    def flush():
        if label is None and not grid:
            return
        if label is None:
            raise RejectedInput(f"{path}:{start}: grid without a 'label:' line")
        if not grid:
            raise RejectedInput(f"{path}:{start}: label {label} has no grid")
        pats.append(grid)
        labels.append(label)

    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line:
            flush()
            label, grid = None, []
            continue
        if line.startswith("label:"):
            flush()
            grid = []
            try:
                label = int(line.split(":", 1)[1])
            except ValueError:
                raise RejectedInput(f"{path}:{lineno}: bad label line {line!r}") from None
            start = lineno
            continue
        if set(line) - {"0", "1"}:
            raise RejectedInput(f"{path}:{lineno}: grid rows may only contain 0 and 1")
        if grid and len(line) != len(grid[0]):
            raise RejectedInput(f"{path}:{lineno}: ragged grid row")
        grid.append([int(ch) for ch in line])
    flush()
    if not pats:
        raise RejectedInput(f"{path}: no patterns")
    shapes = {(len(g), len(g[0])) for g in pats}
    if len(shapes) != 1:
        raise RejectedInput(f"{path}: patterns have different sizes {sorted(shapes)}")
    return np.asarray(pats, dtype=np.int8), np.asarray(labels, dtype=int)


def write_patterns(path, patterns, labels) -> None:
    chunks = []
    for p, lab in zip(patterns, labels):
        rows = "\n".join("".join(str(int(b)) for b in r) for r in np.asarray(p))
        chunks.append(f"label: {int(lab)}\n{rows}\n")
    Path(path).write_text("\n".join(chunks))
