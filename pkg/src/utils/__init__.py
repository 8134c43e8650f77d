"""
Shared utilities for the PA-Bill platform

- exceptions: the platform's error hierarchy
- rng: seeded random streams for deterministic simulation
"""

from .exceptions import (
    PABillError,
    ConfigurationError,
    EncodingError,
    KeyMismatchError,
    LedgerError,
    DuplicateEntryError,
    EquivocationError,
    EntryNotFoundError,
    LedgerPolicyError,
    LedgerFormatError,
    ProfileFormatError,
    DataValidationError,
    DegenerateSurplusError,
    LifecycleError,
)
from .rng import RandomStream, derive_seed, numpy_rng

__all__ = [
    "PABillError",
    "ConfigurationError",
    "EncodingError",
    "KeyMismatchError",
    "LedgerError",
    "DuplicateEntryError",
    "EquivocationError",
    "EntryNotFoundError",
    "LedgerPolicyError",
    "LedgerFormatError",
    "ProfileFormatError",
    "DataValidationError",
    "DegenerateSurplusError",
    "LifecycleError",
    "RandomStream",
    "derive_seed",
    "numpy_rng",
]
