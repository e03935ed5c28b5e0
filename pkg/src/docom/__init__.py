"""Simulator for decentralized optimization with compressed gossip and gradient tracking."""

from .algorithms import ALGORITHMS, HyperParams, NetworkState, docom_init, docom_step
from .compression import CompressorSpec, compress, parse_compressor
from .config import ExperimentConfig, PRESETS, parse_config
from .engine import MetricsRecord, lyapunov_diagnostic, momentum_variance_probe, run
from .output import emit_csv, emit_svg, read_csv
from .sweep import run_sweep
from .theory import gamma_infinity, safe_step_sizes, theory_constants
from .topology import MixingMatrix, make_topology, ring_topology

__version__ = "0.1.0"

__all__ = [
    "ALGORITHMS", "HyperParams", "NetworkState", "docom_init", "docom_step",
    "CompressorSpec", "compress", "parse_compressor",
    "ExperimentConfig", "PRESETS", "parse_config",
    "MetricsRecord", "lyapunov_diagnostic", "momentum_variance_probe", "run",
    "emit_csv", "emit_svg", "read_csv", "run_sweep",
    "gamma_infinity", "safe_step_sizes", "theory_constants",
    "MixingMatrix", "make_topology", "ring_topology",
]
