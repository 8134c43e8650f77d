"""
Settlement Module

Supplier-side services and the billing period lifecycle.
"""

from .supplier import (
    FinalStatement,
    PeriodClose,
    PeriodState,
    SupplierBalanceRecord,
    SupplierService,
    accumulate_supplier_balance,
    apply_penalty,
    final_line_key,
    finalize_period,
    rotate_keys,
    verify_final_report,
)

__all__ = [
    "FinalStatement",
    "PeriodClose",
    "PeriodState",
    "SupplierBalanceRecord",
    "SupplierService",
    "accumulate_supplier_balance",
    "apply_penalty",
    "final_line_key",
    "finalize_period",
    "rotate_keys",
    "verify_final_report",
]
