"""Run configuration documents for the command-line tools.

A config is a JSON object with a required ``schema_version`` and four
sections. Unknown keys anywhere are rejected with their dotted path::

    {
      "schema_version": 1,
      "task": "iris",
      "seed": 0,
      "output_dir": "out",
      "device": {"R_on": 1e6},
      "network": {"v_th": 0.001},
      "encoder": {"beta": 3.0},
      "experiment": {"trials": 50}
    }

``device`` and ``network`` override the nominal memristor parameters and the
task preset. All quantities are SI: volts, amps, ohms, farads, seconds.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field, fields
from pathlib import Path

from .device import MemristorParams, RejectedInput
from .engine import PRESETS, NetworkConfig, preset
from .experiments import ClassificationSetup, FaultSpec

SCHEMA_VERSION = 1
PATTERN_TASKS = {"pattern5x3": "5x3", "digits7x3": "7x3"}
DATASET_TASKS = ("iris", "bcw")


class ConfigError(RejectedInput):
    """Invalid configuration document; the message starts with the field path."""


@dataclass(frozen=True)
class EncoderSection:
    n2: int = 3
    beta: float = 3.0
    rescale: bool = True
    # black-to-white onset gap for binary patterns (s)
    lead: float = 0.5e-3


@dataclass(frozen=True)
class ExperimentSection:
    # CSV path for dataset tasks or pattern file for pattern tasks; None = built-in
    data: str | None = None
    train_frac: float = 0.7
    split_seed: int | None = None
    select_gain: bool = True
    presentations: int = 25
    trials: int = 50
    repeats: int = 5
    levels: list | None = None
    stuck_fraction: float = 0.0
    dispersion_R: float = 0.0
    dispersion_Vt: float = 0.0


@dataclass(frozen=True)
class RunConfig:
    schema_version: int = SCHEMA_VERSION
    task: str = "iris"
    seed: int = 0
    output_dir: str = "out"
    device: dict = field(default_factory=dict)
    network: dict = field(default_factory=dict)
    encoder: EncoderSection = EncoderSection()
    experiment: ExperimentSection = ExperimentSection()

    @property
    def is_pattern_task(self) -> bool:
        return self.task in PATTERN_TASKS

    @property
    def split_seed(self) -> int:
        s = self.experiment.split_seed
        return self.seed if s is None else s

    def network_config(self) -> NetworkConfig:
        return preset(self.task, **{**self.network, "seed": self.seed})

    def memristor_params(self) -> MemristorParams:
        return MemristorParams(**self.device)

    def setup(self) -> ClassificationSetup:
        e, x = self.encoder, self.experiment
        return ClassificationSetup(e.n2, e.beta, e.rescale, x.train_frac, x.select_gain)

    def fault(self) -> FaultSpec:
        x = self.experiment
        return FaultSpec(x.stuck_fraction, x.dispersion_R, x.dispersion_Vt, self.seed)

    def with_seed(self, seed: int) -> "RunConfig":
        return dataclasses.replace(self, seed=int(seed))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def digest(self) -> str:
        """Stable hash of the resolved configuration."""
        doc = {"run": self.to_dict(), "network": self.network_config().to_dict(),
               "device": self.memristor_params().to_dict()}
        return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()[:16]


# -- validation ------------------------------------------------------------

def _check_type(path: str, value, annotation: str):
    """Validate ``value`` against a dataclass annotation string."""
    ann = annotation.replace(" ", "")
    optional = ann.endswith("|None")
    base = ann[:-5] if optional else ann
    if value is None:
        if optional:
            return None
        raise ConfigError(f"{path}: must not be null")
    if base == "bool":
        ok = isinstance(value, bool)
    elif base == "int":
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif base == "float":
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        value = float(value) if ok else value
    elif base == "str":
        ok = isinstance(value, str)
    elif base == "list":
        ok = isinstance(value, list)
    else:
        ok = True
    if not ok:
        raise ConfigError(f"{path}: expected {base}, got {type(value).__name__}")
    return value


def _section(path: str, doc, cls, skip=()) -> dict:
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: expected an object")
    known = {f.name: f for f in fields(cls) if f.name not in skip}
    out = {}
    for key, value in doc.items():
        if key not in known:
            raise ConfigError(f"{path}.{key}: unknown key")
        out[key] = _check_type(f"{path}.{key}", value, str(known[key].type))
    return out


def parse_config(doc) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config: top level must be an object")
    if "schema_version" not in doc:
        raise ConfigError("schema_version: required")
    if doc["schema_version"] != SCHEMA_VERSION:
        raise ConfigError(f"schema_version: unsupported value {doc['schema_version']!r}")
    top = {f.name: f for f in fields(RunConfig)}
    for key in doc:
        if key not in top:
            raise ConfigError(f"{key}: unknown key")
    task = _check_type("task", doc.get("task", "iris"), "str")
    if task not in PRESETS:
        raise ConfigError(f"task: unknown task {task!r}; choose from {sorted(PRESETS)}")
    seed = _check_type("seed", doc.get("seed", 0), "int")
    out_dir = _check_type("output_dir", doc.get("output_dir", "out"), "str")
    device = _section("device", doc.get("device", {}), MemristorParams)
    network = _section("network", doc.get("network", {}), NetworkConfig, skip=("seed",))
    encoder = EncoderSection(**_section("encoder", doc.get("encoder", {}), EncoderSection))
    experiment = ExperimentSection(**_section("experiment", doc.get("experiment", {}),
                                              ExperimentSection))
    cfg = RunConfig(SCHEMA_VERSION, task, seed, out_dir, device, network, encoder, experiment)
    # build once so range errors surface now, tagged with their section
    for name, build in (("device", cfg.memristor_params), ("network", cfg.network_config),
                        ("encoder", cfg.setup), ("experiment", cfg.fault)):
        try:
            build()
        except ConfigError:
            raise
        except (RejectedInput, TypeError, ValueError) as e:
            raise ConfigError(f"{name}: {e}") from None
    return cfg


def load_config(path) -> RunConfig:
    """Read and validate a config file. I/O problems raise ``OSError``."""
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: not valid JSON ({e})") from None
    return parse_config(doc)


def default_config(task: str) -> dict:
    """A complete starting document for ``task``."""
    cfg = RunConfig(task=task)
    d = cfg.to_dict()
    if task in PATTERN_TASKS:
        d["experiment"]["levels"] = [0.0, 1 / 15, 2 / 15, 3 / 15]
    return d
