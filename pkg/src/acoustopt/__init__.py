"""Adjoint topology optimization of a sound-suppressing ceiling.

High-order multi-resolution Helmholtz FEM, per-voxel and U-net design
parametrizations, transfer-learning pretraining and 2-D optimizer benchmarks.
"""

from .config import RunConfig, parse_config, parse_text
from .errors import (
    ConfigurationError,
    DomainError,
    NumericalError,
    SingularSystemError,
    UsageError,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError",
    "DomainError",
    "NumericalError",
    "RunConfig",
    "SingularSystemError",
    "UsageError",
    "parse_config",
    "parse_text",
]
