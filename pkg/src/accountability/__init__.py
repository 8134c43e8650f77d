"""
Accountability Module

Referee-side zero-checks, pair verification, dispute resolution and
aggregator total verification.
"""

from .referee import (
    DisputeVerdict,
    PairCheck,
    PairReport,
    Referee,
    ReportKind,
    TotalsCheck,
    VolumeSource,
    zero_check,
)

__all__ = [
    "DisputeVerdict",
    "PairCheck",
    "PairReport",
    "Referee",
    "ReportKind",
    "TotalsCheck",
    "VolumeSource",
    "zero_check",
]
