"""
Shared fixtures

Keys are 1024 bits and seeded so the suite stays fast and reproducible.
"""

import pytest

from src.crypto.he_core import encrypt, keygen
from src.ledger.hash_ledger import HashLedger
from src.market.market_model import PriceSchedule
from src.settlement.supplier import SupplierService
from src.utils.rng import RandomStream

TEST_KEY_BITS = 1024


@pytest.fixture(scope="session")
def keys():
    return keygen(TEST_KEY_BITS, period_id=0, seed=7)


@pytest.fixture(scope="session")
def pk(keys):
    return keys.public_key


@pytest.fixture(scope="session")
def sk(keys):
    return keys.secret_key


@pytest.fixture(scope="session")
def other_keys():
    return keygen(TEST_KEY_BITS, period_id=1, seed=8)


@pytest.fixture
def stream():
    return RandomStream(11, "tests")


@pytest.fixture
def enc(pk, stream):
    """Encrypt under the session key with a seeded nonce stream"""

    def _enc(m: int):
        return encrypt(pk, m, stream)

    return _enc


@pytest.fixture
def prices():
    return PriceSchedule(pi_p2p=10, pi_rt=15, pi_fit=5)


@pytest.fixture
def ledger():
    return HashLedger(period_id=0)


@pytest.fixture
def supplier(keys):
    return SupplierService(keys)
