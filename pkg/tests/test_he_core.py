"""
Tests for the Paillier core
"""

import pytest

from src.crypto.he_core import (
    PLAINTEXT_LIMIT,
    Ciphertext,
    add,
    decode_signed,
    decrypt,
    deserialize,
    encode_signed,
    encrypt,
    keygen,
    scalar_mul,
    serialize,
    sub,
    zero,
)
from src.utils.exceptions import ConfigurationError, EncodingError, KeyMismatchError
from src.utils.rng import RandomStream, numpy_rng


def test_keygen_modulus_has_requested_length(keys):
    assert keys.bits == 1024
    assert keys.public_key.fingerprint == keys.secret_key.fingerprint
    assert keys.public_key.period_id == 0


def test_keygen_is_reproducible_with_seed():
    first = keygen(1024, period_id=3, seed=99)
    second = keygen(1024, period_id=3, seed=99)
    assert first.public_key.n == second.public_key.n
    assert first.fingerprint == second.fingerprint


def test_keygen_differs_per_period():
    assert keygen(1024, period_id=0, seed=99).fingerprint != keygen(1024, period_id=1, seed=99).fingerprint


def test_keygen_rejects_small_keys():
    with pytest.raises(ConfigurationError):
        keygen(512, seed=1)


@pytest.mark.parametrize("m", [0, 1, -1, 200, -200, 3000, PLAINTEXT_LIMIT - 1, -(PLAINTEXT_LIMIT - 1)])
def test_decrypt_inverts_encrypt(pk, sk, enc, m):
    assert decrypt(sk, enc(m)) == m


def test_round_trip_random_signed_values(pk, sk, stream):
    rng = numpy_rng(3, "round-trip")
    for value in rng.integers(-10**9, 10**9, size=50):
        assert decrypt(sk, encrypt(pk, int(value), stream)) == int(value)


def test_encryption_is_probabilistic(pk, sk, enc):
    a, b = enc(200), enc(200)
    assert a.value != b.value
    assert decrypt(sk, a) == decrypt(sk, b) == 200


def test_encrypt_without_stream_uses_system_randomness(pk, sk):
    assert decrypt(sk, encrypt(pk, -42)) == -42


def test_encrypt_rejects_out_of_range(pk, enc):
    with pytest.raises(EncodingError):
        enc(PLAINTEXT_LIMIT)
    with pytest.raises(EncodingError):
        enc(-PLAINTEXT_LIMIT)


@pytest.mark.parametrize("a, b, expected", [(3, 4, 7), (5, -5, 0), (-10, -20, -30)])
def test_add(pk, sk, enc, a, b, expected):
    assert decrypt(sk, add(pk, enc(a), enc(b))) == expected


@pytest.mark.parametrize("a, b, expected", [(3200, 3000, 200), (100, 300, -200), (7, 7, 0)])
def test_sub(pk, sk, enc, a, b, expected):
    assert decrypt(sk, sub(pk, enc(a), enc(b))) == expected


@pytest.mark.parametrize("k, m, expected", [(10, 200, 2000), (-1, 7, -7), (0, 123, 0), (15, -200, -3000)])
def test_scalar_mul(pk, sk, enc, k, m, expected):
    assert decrypt(sk, scalar_mul(pk, enc(m), k)) == expected


def test_homomorphic_sum_matches_plaintext_sum(pk, sk, stream):
    rng = numpy_rng(5, "pairs")
    for a, b in rng.integers(-10**6, 10**6, size=(25, 2)):
        total = add(pk, encrypt(pk, int(a), stream), encrypt(pk, int(b), stream))
        assert decrypt(sk, total) == int(a) + int(b)


def test_operations_are_deterministic(pk, enc):
    a, b = enc(10), enc(3)
    assert sub(pk, a, b) == sub(pk, a, b)
    assert scalar_mul(pk, a, 4) == scalar_mul(pk, a, 4)


def test_zero_is_additive_identity(pk, sk, enc):
    assert decrypt(sk, zero(pk)) == 0
    assert decrypt(sk, add(pk, zero(pk), enc(55))) == 55


def test_mixing_keys_is_rejected(pk, enc, other_keys):
    foreign = encrypt(other_keys.public_key, 1, RandomStream(1, "foreign"))
    with pytest.raises(KeyMismatchError):
        add(pk, enc(1), foreign)
    with pytest.raises(KeyMismatchError):
        decrypt(other_keys.secret_key, enc(1))


def test_wraparound_is_rejected(pk, enc):
    big = scalar_mul(pk, enc(1), PLAINTEXT_LIMIT - 1)
    with pytest.raises(EncodingError):
        for _ in range(8):
            big = scalar_mul(pk, big, PLAINTEXT_LIMIT - 1)


def test_signed_encoding_half_range():
    n = 1009 * 1013
    assert encode_signed(n, -200) == n - 200
    assert decode_signed(n, n - 200) == -200
    assert decode_signed(n, 200) == 200


def test_serialize_is_fixed_length(pk, enc):
    data = serialize(pk, enc(1))
    assert len(data) == pk.ciphertext_bytes
    assert len(serialize(pk, zero(pk))) == pk.ciphertext_bytes


def test_deserialize_restores_ciphertext(pk, sk, enc):
    ct = enc(-77)
    restored = deserialize(pk, serialize(pk, ct))
    assert restored == ct
    assert decrypt(sk, restored) == -77


def test_deserialize_rejects_bad_input(pk):
    with pytest.raises(EncodingError):
        deserialize(pk, b"\x01\x02")
    with pytest.raises(EncodingError):
        deserialize(pk, bytes(pk.ciphertext_bytes))


def test_ciphertext_equality_ignores_bound(pk):
    assert Ciphertext(5, pk.fingerprint, bound=1) == Ciphertext(5, pk.fingerprint, bound=99)


@pytest.mark.slow
def test_homomorphic_properties_at_scale(pk, sk, stream, other_keys):
    rng = numpy_rng(5, "property-suite")
    values = rng.integers(-10**12, 10**12, size=(10_000, 2))
    scalars = rng.integers(-10**4, 10**4, size=10_000)
    for (a, b), k in zip(values.tolist(), scalars.tolist()):
        a_ct, b_ct = encrypt(pk, a, stream), encrypt(pk, b, stream)
        assert decrypt(sk, a_ct) == a
        assert decrypt(sk, add(pk, a_ct, b_ct)) == a + b
        assert decrypt(sk, sub(pk, a_ct, b_ct)) == a - b
        assert decrypt(sk, scalar_mul(pk, a_ct, k)) == a * k
        assert encrypt(pk, a, stream).value != a_ct.value
        with pytest.raises(KeyMismatchError):
            decrypt(other_keys.secret_key, a_ct)
