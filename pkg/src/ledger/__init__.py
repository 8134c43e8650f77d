"""
Ledger Module

Append-only SHA3-256 hash ledger holding commitments of encrypted billing
data and the public values of each settlement cycle.
"""

from .hash_ledger import (
    PERIOD_SCOPE,
    PUBLIC_TAGS,
    HashLedger,
    LedgerAudit,
    LedgerEntry,
    LedgerSnapshot,
    LedgerTag,
    commitment_digest,
    split_records,
    verify_ledger_bytes,
    verify_ledger_file,
)

__all__ = [
    "PERIOD_SCOPE",
    "PUBLIC_TAGS",
    "HashLedger",
    "LedgerAudit",
    "LedgerEntry",
    "LedgerSnapshot",
    "LedgerTag",
    "commitment_digest",
    "split_records",
    "verify_ledger_bytes",
    "verify_ledger_file",
]
