"""
Tests for the encrypted billing rules
"""

import pytest

from src.billing.billing import (
    BillingMode,
    StatementLedger,
    TotalDeviations,
    accumulate_statement,
    compute_statement,
    determine_mode,
    individual_deviation,
    prosumer_revenue_pool,
    round_half_away,
    settle_statement,
    supplier_balance,
    surplus_share,
    total_deviation,
)
from src.crypto.he_core import decrypt
from src.market.market_model import Role, UserId
from src.utils.exceptions import DataValidationError, DegenerateSurplusError

C0, P0 = UserId(Role.CONSUMER, 0), UserId(Role.PROSUMER, 0)


@pytest.mark.parametrize("real, committed, expected", [(3200, 3000, 200), (800, 1000, -200), (500, 500, 0)])
def test_individual_deviation(pk, sk, enc, real, committed, expected):
    assert decrypt(sk, individual_deviation(enc(real), enc(committed), pk)) == expected


def test_total_deviation(pk, sk, enc):
    assert decrypt(sk, total_deviation([enc(200), enc(-50), enc(150)], pk)) == 300
    assert decrypt(sk, total_deviation([enc(-7)], pk)) == -7


def test_total_deviation_needs_input(pk):
    with pytest.raises(DataValidationError):
        total_deviation([], pk)


@pytest.mark.parametrize("dev_c, dev_p, mode", [
    (200, 200, BillingMode.BALANCED),
    (400, 100, BillingMode.DEFICIT),
    (200, 500, BillingMode.SURPLUS),
    (-300, -100, BillingMode.SURPLUS),
    (0, 0, BillingMode.BALANCED),
])
def test_mode_from_totals(dev_c, dev_p, mode):
    assert determine_mode(dev_c, dev_p) is mode
    assert TotalDeviations(dev_c, dev_p).mode is mode


@pytest.mark.parametrize("numerator, denominator, expected", [
    (7, 2, 4), (-7, 2, -4), (5, 3, 2), (3500, 500, 7), (1, 3, 0), (-5, -2, 3),
])
def test_round_half_away(numerator, denominator, expected):
    assert round_half_away(numerator, denominator) == expected


def test_revenue_pool_and_share(prices):
    totals = TotalDeviations(200, 500)
    assert prosumer_revenue_pool(totals, prices) == 3500
    assert surplus_share(totals, prices) == 7


def test_surplus_share_needs_prosumer_deviation(prices):
    with pytest.raises(DegenerateSurplusError):
        surplus_share(TotalDeviations(-100, 0), prices)


@pytest.mark.parametrize("user, committed, in_dev, totals, expected", [
    (C0, 3000, 200, TotalDeviations(200, 200), 32000),
    (P0, 3000, 200, TotalDeviations(200, 200), 32000),
    (C0, 3000, 200, TotalDeviations(400, 100), 33000),
    (P0, 3000, 200, TotalDeviations(400, 100), 33000),
    (P0, 1000, 300, TotalDeviations(200, 500), 12100),
    (C0, 1000, 200, TotalDeviations(200, 500), 12000),
    (C0, 1000, 0, TotalDeviations(400, 100), 10000),
    (P0, 1000, -100, TotalDeviations(200, 500), 9300),
])
def test_statement_matches_plaintext_rule(pk, sk, enc, prices, user, committed, in_dev, totals, expected):
    stat_ct = compute_statement(user, enc(committed), enc(in_dev), totals.mode, totals, prices, pk)
    assert decrypt(sk, stat_ct) == expected


def test_statement_rejects_inconsistent_mode(pk, enc, prices):
    with pytest.raises(DataValidationError):
        compute_statement(C0, enc(1), enc(1), BillingMode.DEFICIT, TotalDeviations(1, 1), prices, pk)


def test_degenerate_surplus_bills_committed_volume_only(pk, sk, enc, prices):
    totals = TotalDeviations(-100, 0)
    assert decrypt(sk, settle_statement(P0, enc(1000), enc(0), totals, prices, pk)) == 10000
    assert decrypt(sk, settle_statement(C0, enc(1000), enc(-100), totals, prices, pk)) == 9000


def test_accumulated_statement(pk, sk, enc):
    assert decrypt(sk, accumulate_statement(enc(32000), enc(33000), pk)) == 65000


@pytest.mark.parametrize("dev_c, dev_p, expected", [
    (200, 200, 0),
    (200, 500, -1500),
    (400, 100, 4500),
    (-100, 0, -1000),
])
def test_supplier_balance(prices, dev_c, dev_p, expected):
    assert supplier_balance(dev_c, dev_p, prices) == expected


def test_money_is_conserved_in_hand_instance(pk, sk, enc, prices):
    totals = TotalDeviations(200, 500)
    consumer = decrypt(sk, settle_statement(C0, enc(1000), enc(200), totals, prices, pk))
    prosumer = decrypt(sk, settle_statement(P0, enc(1000), enc(500), totals, prices, pk))
    balance = supplier_balance(200, 500, prices)

    assert (consumer, prosumer, balance) == (12000, 13500, -1500)
    assert consumer - prosumer - balance == 0


def test_statement_ledger_starts_at_zero(pk, sk, enc):
    statements = StatementLedger.open(pk, [P0, C0])
    assert statements.users == [C0, P0]
    assert decrypt(sk, statements.stat_tot_ct[C0]) == 0

    statements.accumulate(C0, enc(32000))
    statements.accumulate(C0, enc(33000))
    assert decrypt(sk, statements.stat_tot_ct[C0]) == 65000
    assert decrypt(sk, statements.stat_tot_ct[P0]) == 0
