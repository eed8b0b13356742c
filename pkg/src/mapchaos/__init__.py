"""Simulation and numerical verification of Markov additive processes driven by a
Lévy modulator, their Teugels power-jump martingales and orthogonalized families."""

from .errors import MapChaosError
from .map_model import MapSpec, default_spec, spec_from_dict, spec_to_dict
from .path_sim import MapPath, simulate, simulate_batch

__all__ = [
    "MapChaosError",
    "MapPath",
    "MapSpec",
    "default_spec",
    "simulate",
    "simulate_batch",
    "spec_from_dict",
    "spec_to_dict",
]
__version__ = "0.1.0"
