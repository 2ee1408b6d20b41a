"""Behavioural simulator for a memristive spiking network with supervised
in-situ STDP training, lateral inhibition and a refractory period."""
from .device import MemristorParams, MemristorState, RejectedInput
from .encoder import GrfConfig, SpikeShape, SpikeTrain
from .engine import Network, NetworkConfig, SimulationFailure, preset
from .kernel import BACKEND
from .metrics import Metrics, compute_metrics

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "GrfConfig", "MemristorParams", "MemristorState", "Metrics", "Network",
    "NetworkConfig", "RejectedInput", "SimulationFailure", "SpikeShape", "SpikeTrain",
    "compute_metrics", "preset",
]
