"""Network loading (sub-problem 2 of the estimation loop)."""

from ._backend import DEFAULT as BACKEND, available as available_backends
from .sim import (
    ConsistencyError,
    LoadingModel,
    LoadingResult,
    MissingShareError,
    PlatformIndicators,
    SimConfig,
    Trace,
    apportion,
    assign_paths,
    delay_rates_from_trace,
    exit_bins,
)

__all__ = [
    "BACKEND",
    "available_backends",
    "ConsistencyError",
    "LoadingModel",
    "LoadingResult",
    "MissingShareError",
    "PlatformIndicators",
    "SimConfig",
    "Trace",
    "apportion",
    "assign_paths",
    "delay_rates_from_trace",
    "exit_bins",
]
