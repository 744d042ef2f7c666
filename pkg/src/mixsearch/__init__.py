"""Quickest search for an F1 sequence using mixed (summed) observations of two sequences."""

__version__ = "0.1.0"

from .model import ConfigurationError, DensityPair, ModelParams, mixed_densities, scan_prior  # noqa: E402
from .dp import SolverSettings, solve  # noqa: E402
from .policy import BaselinePolicy, MixedPolicy  # noqa: E402
from .sim import compare_strategies, run_batch, sweep_snr  # noqa: E402

__all__ = [
    "ConfigurationError", "DensityPair", "ModelParams", "mixed_densities", "scan_prior",
    "SolverSettings", "solve", "BaselinePolicy", "MixedPolicy",
    "compare_strategies", "run_batch", "sweep_snr",
]
