from __future__ import annotations

import warnings
import zlib
from dataclasses import asdict, dataclass

import numpy as np

from .device import RejectedInput


@dataclass
class Metrics:
    accuracy: float
    f1_macro: float
    per_class_f1: list
    confusion: list
    ties: int = 0
    no_spike: int = 0
    n_samples: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def compute_metrics(predictions, labels, m: int | None = None, ties: int = 0) -> Metrics:
    """Accuracy, per-class and macro F1, and the confusion matrix.

    ``predictions`` may contain ``None`` or ``-1`` for "no neuron fired"; such
    samples count as wrong and are tallied in ``no_spike``. The confusion
    matrix is ``[true, predicted]`` over the ``m`` classes only.
    """
    preds = [-1 if p is None else int(p) for p in predictions]
    labels = [int(y) for y in labels]
    if len(preds) != len(labels):
        raise RejectedInput(f"{len(preds)} predictions for {len(labels)} labels")
    if not labels:
        raise RejectedInput("no samples to score")
    if m is None:
        m = max(max(labels), max(preds)) + 1
    conf = np.zeros((m, m), dtype=int)
    no_spike = 0
    for p, y in zip(preds, labels):
        if p < 0:
            no_spike += 1
        else:
            conf[y, p] += 1
    correct = sum(p == y for p, y in zip(preds, labels))
    acc = correct / len(labels)

    support = np.bincount(labels, minlength=m)
    present = (support > 0) | (conf.sum(axis=0) > 0)
    if (support > 0).sum() < 2:
        warnings.warn("fewer than two classes present; macro F1 is degenerate", stacklevel=2)
    f1 = []
    for c in range(m):
        tp = conf[c, c]
        fp = conf[:, c].sum() - tp
        fn = support[c] - tp  # no-spike samples are misses
        denom = 2 * tp + fp + fn
        f1.append(float(2 * tp / denom) if denom else 0.0)
    f1_macro = float(np.mean([f1[c] for c in range(m) if present[c]])) if present.any() else 0.0
    return Metrics(acc, f1_macro, f1, conf.tolist(), int(ties), no_spike, len(labels))


def rng_for(seed: int, *labels) -> np.random.Generator:
    """Independent generator for a labelled sub-stream of ``seed``.

    Adding a new label elsewhere never shifts an existing stream.
    """
    key = [int(seed) & 0xFFFFFFFF]
    for lab in labels:
        if isinstance(lab, (int, np.integer)):
            key.append(int(lab) & 0xFFFFFFFF)
        else:
            key.append(zlib.crc32(str(lab).encode()))
    return np.random.default_rng(np.random.SeedSequence(key))
