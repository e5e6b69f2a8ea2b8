"""Decentralized learning under subspace constraints with quantized links.

The package simulates networks of agents that cooperatively minimize a sum of
local costs subject to the stacked parameter vector lying in a low-dimensional
subspace, while exchanging only differentially quantized, variable-rate coded
messages. It provides the quantizer family with declared noise budgets, the
ternary variable-rate codec, topology/subspace/combination-matrix construction,
the three-step learning recursion with replicated decoder state, spectral
stability analysis, and a config-driven experiment front end.
"""

__version__ = "0.1.0"

from . import analysis, codec, graphs, learning, quantizers, streams
from .analysis import gamma_bound, rate_upper_bound, spectral_report
from .graphs import build_combination, build_topology
from .learning import DataModel, RunConfig, run
from .quantizers import noise_budget, parse_spec, quantize, reconstruct

__all__ = [
    "__version__",
    "analysis", "codec", "graphs", "learning", "quantizers", "streams",
    "gamma_bound", "rate_upper_bound", "spectral_report",
    "build_combination", "build_topology",
    "DataModel", "RunConfig", "run",
    "noise_budget", "parse_spec", "quantize", "reconstruct",
]
