"""
Encrypted Billing

Individual and total deviations, the three-mode universal cost-splitting
statements, and the supplier balance. Modes are chosen from the published
total deviations only, so no user's own deviation sign influences its price.

Statements are signed micro-currency amounts: a bill for consumers, a
revenue for prosumers.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from functools import reduce
from typing import Dict, Iterable, Sequence, Set, Tuple

from src.crypto.he_core import Ciphertext, PublicKey, add, scalar_mul, sub, zero
from src.market.market_model import PriceSchedule, UserId
from src.utils.exceptions import DataValidationError, DegenerateSurplusError

logger = logging.getLogger(__name__)


class BillingMode(str, Enum):
    BALANCED = "BALANCED"
    DEFICIT = "DEFICIT"
    SURPLUS = "SURPLUS"


@dataclass(frozen=True)
class DeviationRecord:
    """Encrypted V^Real - V^P2P of one user in one cycle"""

    user: UserId
    cycle: int
    in_dev_ct: Ciphertext


@dataclass(frozen=True)
class TotalDeviations:
    """Published Dev_C^Tot and Dev_P^Tot in Wh"""

    dev_c_tot: int
    dev_p_tot: int

    @property
    def mode(self) -> "BillingMode":
        return determine_mode(self.dev_c_tot, self.dev_p_tot)


def individual_deviation(v_real_ct: Ciphertext, v_p2p_ct: Ciphertext, pk: PublicKey) -> Ciphertext:
    """Encrypted individual deviation V^Real - V^P2P"""
    return sub(pk, v_real_ct, v_p2p_ct)


def total_deviation(dev_cts: Sequence[Ciphertext], pk: PublicKey) -> Ciphertext:
    """Encrypted sum of the individual deviations of one role"""
    dev_cts = list(dev_cts)
    if not dev_cts:
        raise DataValidationError("Total deviation needs at least one individual deviation")
    return reduce(lambda acc, ct: add(pk, acc, ct), dev_cts[1:], dev_cts[0])


def determine_mode(dev_c_tot: int, dev_p_tot: int) -> BillingMode:
    if dev_p_tot == dev_c_tot:
        return BillingMode.BALANCED
    if dev_p_tot < dev_c_tot:
        return BillingMode.DEFICIT
    return BillingMode.SURPLUS


def round_half_away(numerator: int, denominator: int) -> int:
    """Nearest integer to numerator/denominator, ties away from zero"""
    if denominator == 0:
        raise ZeroDivisionError("denominator is zero")
    sign = -1 if (numerator < 0) != (denominator < 0) else 1
    a, b = abs(numerator), abs(denominator)
    return sign * ((2 * a + b) // (2 * b))


def prosumer_revenue_pool(totals: TotalDeviations, prices: PriceSchedule) -> int:
    """
    TotRev_P: surplus energy sold to consumers at pi_p2p, the rest to the
    supplier at pi_fit
    """
    return totals.dev_c_tot * prices.pi_p2p + (totals.dev_p_tot - totals.dev_c_tot) * prices.pi_fit


def surplus_share(totals: TotalDeviations, prices: PriceSchedule) -> int:
    """
    Per-Wh price of a prosumer deviation in surplus mode

    TotRev_P / Dev_P^Tot is public, so it is applied as an integer scalar;
    the division is rounded to the nearest unit per Wh.
    """
    if totals.dev_p_tot == 0:
        raise DegenerateSurplusError("Surplus mode with Dev_P^Tot = 0 has no proportional share")
    return round_half_away(prosumer_revenue_pool(totals, prices), totals.dev_p_tot)


def deviation_rate(user: UserId, mode: BillingMode, totals: TotalDeviations, prices: PriceSchedule) -> int:
    """Price applied to a user's individual deviation"""
    if mode is BillingMode.DEFICIT:
        return prices.pi_rt
    if mode is BillingMode.SURPLUS and not user.is_consumer:
        return surplus_share(totals, prices)
    return prices.pi_p2p


def compute_statement(
    user: UserId,
    v_p2p_ct: Ciphertext,
    in_dev_ct: Ciphertext,
    mode: BillingMode,
    totals: TotalDeviations,
    prices: PriceSchedule,
    pk: PublicKey
) -> Ciphertext:
    """
    Encrypted statement of one user for one cycle

    Args:
        user: Whose statement is computed
        v_p2p_ct: Encrypted committed volume
        in_dev_ct: Encrypted individual deviation
        mode: Billing mode from the published totals
        totals: Published total deviations
        prices: Price schedule of the cycle
        pk: Supplier public key of the period

    Returns:
        Ciphertext of V^P2P * pi_p2p + inDev * rate
    """
    if mode is not totals.mode:
        raise DataValidationError(f"Mode {mode.value} inconsistent with published totals ({totals.mode.value})")

    rate = deviation_rate(user, mode, totals, prices)
    committed_part = scalar_mul(pk, v_p2p_ct, prices.pi_p2p)
    return add(pk, committed_part, scalar_mul(pk, in_dev_ct, rate))


def is_degenerate_surplus(totals: TotalDeviations) -> bool:
    return totals.mode is BillingMode.SURPLUS and totals.dev_p_tot == 0


def settle_statement(
    user: UserId,
    v_p2p_ct: Ciphertext,
    in_dev_ct: Ciphertext,
    totals: TotalDeviations,
    prices: PriceSchedule,
    pk: PublicKey
) -> Ciphertext:
    """
    compute_statement with the degenerate-surplus fallback

    With Dev_P^Tot = 0 in surplus mode, prosumers are billed on their
    committed volume only; supplier_balance books TotRev_P instead.
    """
    try:
        return compute_statement(user, v_p2p_ct, in_dev_ct, totals.mode, totals, prices, pk)
    except DegenerateSurplusError:
        return scalar_mul(pk, v_p2p_ct, prices.pi_p2p)


def accumulate_statement(stat_tot_ct: Ciphertext, stat_ct: Ciphertext, pk: PublicKey) -> Ciphertext:
    return add(pk, stat_tot_ct, stat_ct)


def supplier_balance(dev_c_tot: int, dev_p_tot: int, prices: PriceSchedule) -> int:
    """
    Supplier balance of one cycle, computed from public data only

    Returns:
        0 when balanced, -(Dev_P - Dev_C) * pi_fit in surplus,
        (Dev_C - Dev_P) * pi_rt in deficit. A degenerate surplus
        additionally books TotRev_P to the supplier.
    """
    totals = TotalDeviations(dev_c_tot, dev_p_tot)
    mode = totals.mode

    if mode is BillingMode.BALANCED:
        return 0
    if mode is BillingMode.DEFICIT:
        return (dev_c_tot - dev_p_tot) * prices.pi_rt

    balance = -(dev_p_tot - dev_c_tot) * prices.pi_fit
    if is_degenerate_surplus(totals):
        balance += prosumer_revenue_pool(totals, prices)
    return balance


@dataclass
class StatementLedger:
    """Encrypted accumulated statements of a billing period"""

    pk: PublicKey
    stat_tot_ct: Dict[UserId, Ciphertext] = field(default_factory=dict)
    supplier_balance_tot: int = 0
    pending_disputes: Set[Tuple[int, str, str]] = field(default_factory=set)

    @classmethod
    def open(cls, pk: PublicKey, users: Iterable[UserId]) -> "StatementLedger":
        """Every statement starts at an encryption of zero"""
        return cls(pk, {user: zero(pk) for user in users})

    @property
    def users(self):
        return sorted(self.stat_tot_ct)

    def accumulate(self, user: UserId, stat_ct: Ciphertext) -> None:
        self.stat_tot_ct[user] = accumulate_statement(self.stat_tot_ct[user], stat_ct, self.pk)


if __name__ == "__main__":
    prices = PriceSchedule(pi_p2p=10, pi_rt=15, pi_fit=5)

    print("\n" + "=" * 60)
    print("BILLING RULES TEST")
    print("=" * 60 + "\n")

    for dev_c, dev_p in [(200, 200), (400, 100), (200, 500)]:
        totals = TotalDeviations(dev_c, dev_p)
        print(
            f"  Dev_C={dev_c:5d} Dev_P={dev_p:5d} -> {totals.mode.value:9s} "
            f"supplier balance {supplier_balance(dev_c, dev_p, prices):6d}"
        )

    totals = TotalDeviations(200, 500)
    print(f"\n  TotRev_P = {prosumer_revenue_pool(totals, prices)}, share = {surplus_share(totals, prices)} per Wh")
