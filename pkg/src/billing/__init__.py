"""
Billing Module

Encrypted billing rules and their plaintext reference oracle.
"""

from .billing import (
    BillingMode,
    DeviationRecord,
    StatementLedger,
    TotalDeviations,
    accumulate_statement,
    compute_statement,
    determine_mode,
    individual_deviation,
    prosumer_revenue_pool,
    settle_statement,
    supplier_balance,
    surplus_share,
    total_deviation,
)
from .oracle import BillingOracle, OracleResult

__all__ = [
    "BillingMode",
    "DeviationRecord",
    "StatementLedger",
    "TotalDeviations",
    "accumulate_statement",
    "compute_statement",
    "determine_mode",
    "individual_deviation",
    "prosumer_revenue_pool",
    "settle_statement",
    "supplier_balance",
    "surplus_share",
    "total_deviation",
    "BillingOracle",
    "OracleResult",
]
