"""
Supplier Settlement Services

Monthly key rotation, the supplier's narrow decryption interface (zero-check
differences, published totals, final statements), supplier balance
accumulation and the end-of-month release of bills and revenues.
"""

import logging
import threading
from dataclasses import dataclass, replace
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from src.billing.billing import StatementLedger
from src.crypto.he_core import Ciphertext, KeyPair, PublicKey, decrypt, keygen
from src.ledger.hash_ledger import PERIOD_SCOPE, HashLedger, LedgerTag
from src.market.market_model import SUPPLIER_ID, Role, UserId
from src.utils.exceptions import DataValidationError, EntryNotFoundError, LifecycleError

logger = logging.getLogger(__name__)

PENALTY_SINKS = ("burn", "supplier")


@dataclass(frozen=True)
class PeriodState:
    """Lifecycle state of one billing period"""

    period_id: int
    keys: KeyPair
    cycle_count: int = 0
    bal_sup_tot: int = 0
    finalized: bool = False


@dataclass(frozen=True)
class FinalStatement:
    """Decrypted monthly bill (consumer) or revenue (prosumer)"""

    user: UserId
    amount: int
    ledger_index: int
    penalty: int = 0

    @property
    def line(self) -> str:
        return f"{self.user.role.name},{self.user.ordinal},{self.amount}"


@dataclass(frozen=True)
class SupplierBalanceRecord:
    """Supplier balance released at the end of the period"""

    period_id: int
    amount: int
    penalties_total: int
    ledger_index: int

    @property
    def line(self) -> str:
        return f"SUPPLIER,balance,{self.amount}"


@dataclass(frozen=True)
class PeriodClose:
    """Outcome of finalize_period"""

    state: PeriodState
    statements: Tuple[FinalStatement, ...]
    balance: SupplierBalanceRecord

    def lines(self) -> List[str]:
        return [s.line for s in self.statements] + [self.balance.line]


class SupplierService:
    """
    The supplier as one logical entity holding SK_sup

    Decryption requests are serialized through a single lock, in arrival
    order. Only three narrow calls exist; nothing else ever sees plaintext.
    """

    def __init__(self, keys: KeyPair):
        self._keys = keys
        self._lock = threading.Lock()
        self.requests: Dict[str, int] = {"difference": 0, "total": 0, "final": 0}

    @property
    def public_key(self) -> PublicKey:
        return self._keys.public_key

    @property
    def period_id(self) -> int:
        return self._keys.period_id

    def _decrypt(self, kind: str, ct: Ciphertext) -> int:
        with self._lock:
            self.requests[kind] += 1
            return decrypt(self._keys.secret_key, ct)

    def decrypt_difference(self, ct: Ciphertext) -> int:
        """Decrypt a homomorphic difference for a referee zero-check"""
        return self._decrypt("difference", ct)

    def decrypt_total(self, ct: Ciphertext) -> int:
        """Decrypt a verified total deviation for publication"""
        return self._decrypt("total", ct)

    def decrypt_final(self, ct: Ciphertext) -> int:
        """Decrypt an accumulated monthly statement"""
        return self._decrypt("final", ct)


def rotate_keys(
    period_id: int,
    bits: int,
    previous: Optional[PeriodState] = None,
    seed: Optional[int] = None
) -> PeriodState:
    """
    Open a billing period with a fresh key pair

    Args:
        period_id: New period index
        bits: Key size
        previous: State of the preceding period, if any
        seed: Simulation seed for reproducible keys

    Returns:
        PeriodState of the new period
    """
    if previous is not None and not previous.finalized:
        raise LifecycleError(f"Period {previous.period_id} must be finalized before rotating keys")
    if previous is not None and period_id <= previous.period_id:
        raise LifecycleError(f"Period {period_id} does not follow period {previous.period_id}")

    keys = keygen(bits, period_id=period_id, seed=seed)
    logger.info(f"Opened billing period {period_id} with key {keys.fingerprint}")
    return PeriodState(period_id=period_id, keys=keys)


def accumulate_supplier_balance(state: PeriodState, cycle_balance: int) -> PeriodState:
    """Cycle 0 initialises the running total, later cycles add to it"""
    if state.finalized:
        raise LifecycleError(f"Period {state.period_id} is finalized")

    total = cycle_balance if state.cycle_count == 0 else state.bal_sup_tot + cycle_balance
    return replace(state, cycle_count=state.cycle_count + 1, bal_sup_tot=total)


def apply_penalty(user: UserId, amount: int, penalty: int) -> int:
    """Penalties raise a consumer's bill and cut a prosumer's revenue"""
    return amount + penalty if user.is_consumer else amount - penalty


def finalize_period(
    state: PeriodState,
    statement_ledger: StatementLedger,
    ledger: HashLedger,
    supplier: SupplierService,
    penalties: Optional[Mapping[UserId, int]] = None,
    penalty_sink: str = "burn"
) -> PeriodClose:
    """
    Release the month's bills, revenues and supplier balance

    Each accumulated statement is decrypted, penalties applied, and the hash
    of its canonical report line stored as FINAL_STATEMENT. The supplier
    balance line is stored as SUPPLIER_BALANCE at period scope.
    """
    if state.finalized:
        raise LifecycleError(f"Period {state.period_id} is already finalized")
    if statement_ledger.pending_disputes:
        raise LifecycleError(f"{len(statement_ledger.pending_disputes)} disputes still pending")
    if penalty_sink not in PENALTY_SINKS:
        raise LifecycleError(f"Unknown penalty sink '{penalty_sink}'")

    penalties = dict(penalties or {})
    statements = []
    for user in statement_ledger.users:
        penalty = penalties.get(user, 0)
        amount = apply_penalty(user, supplier.decrypt_final(statement_ledger.stat_tot_ct[user]), penalty)
        line = FinalStatement(user, amount, -1).line
        index = ledger.append(str(user), PERIOD_SCOPE, LedgerTag.FINAL_STATEMENT, line.encode("ascii"))
        statements.append(FinalStatement(user, amount, index, penalty))

    penalties_total = sum(penalties.values())
    balance = state.bal_sup_tot + (penalties_total if penalty_sink == "supplier" else 0)
    line = SupplierBalanceRecord(state.period_id, balance, penalties_total, -1).line
    index = ledger.append(SUPPLIER_ID, PERIOD_SCOPE, LedgerTag.SUPPLIER_BALANCE, line.encode("ascii"))

    statement_ledger.supplier_balance_tot = balance
    closed = replace(state, finalized=True)
    logger.info(
        f"Finalized period {state.period_id}: {len(statements)} statements, "
        f"supplier balance {balance}, penalties {penalties_total} ({penalty_sink})"
    )
    return PeriodClose(
        state=closed,
        statements=tuple(statements),
        balance=SupplierBalanceRecord(state.period_id, balance, penalties_total, index),
    )


def final_line_key(line: str) -> Tuple[str, LedgerTag]:
    """Ledger owner and tag of one final-report line"""
    fields = line.split(",")
    if len(fields) != 3:
        raise DataValidationError(f"Malformed final-report line '{line}'")
    if fields[0] == SUPPLIER_ID and fields[1] == "balance":
        return SUPPLIER_ID, LedgerTag.SUPPLIER_BALANCE
    try:
        user = UserId(Role[fields[0]], int(fields[1]))
        int(fields[2])
    except (KeyError, ValueError) as e:
        raise DataValidationError(f"Malformed final-report line '{line}'") from e
    return str(user), LedgerTag.FINAL_STATEMENT


def verify_final_report(ledger: HashLedger, lines: Sequence[str]) -> List[str]:
    """
    Re-hash every final-report line against its ledger entry

    Args:
        ledger: Ledger of the period
        lines: Lines of the final report, without newlines

    Returns:
        One problem description per failing line; empty when all match
    """
    problems = []
    for number, line in enumerate(lines, start=1):
        try:
            owner, tag = final_line_key(line)
            ok = ledger.verify(owner, PERIOD_SCOPE, tag, line.encode("ascii"))
        except (DataValidationError, EntryNotFoundError, UnicodeEncodeError) as e:
            problems.append(f"line {number}: {e}")
            continue
        if not ok:
            problems.append(f"line {number}: '{line}' does not match its {tag.value} ledger entry")
    return problems
