"""
Paillier Homomorphic Encryption Core

Wraps python-paillier (phe) raw encryption with a signed plaintext encoding
and fingerprinted ciphertexts so that values from different billing periods
can never be combined.

Signed encoding: a plaintext m is stored as m mod n; raw values above n/2
decode as raw - n. Every plaintext must satisfy |m| < 2**128.
"""

import hashlib
import logging
from dataclasses import dataclass, field
from typing import Optional

import gmpy2
from phe import paillier

from src.utils.exceptions import ConfigurationError, EncodingError, KeyMismatchError
from src.utils.rng import RandomStream

logger = logging.getLogger(__name__)

MIN_KEY_BITS = 1024
DEFAULT_KEY_BITS = 2048
PLAINTEXT_BITS = 128
PLAINTEXT_LIMIT = 1 << PLAINTEXT_BITS


@dataclass(frozen=True)
class PublicKey:
    """Paillier public key bound to one billing period"""

    key: paillier.PaillierPublicKey = field(repr=False)
    period_id: int
    fingerprint: str

    @property
    def n(self) -> int:
        return self.key.n

    @property
    def nsquare(self) -> int:
        return self.key.nsquare

    @property
    def ciphertext_bytes(self) -> int:
        """Length of a serialized ciphertext: ceil(bitlen(n^2) / 8)"""
        return (self.key.nsquare.bit_length() + 7) // 8


@dataclass(frozen=True)
class SecretKey:
    """Paillier private key; only the supplier holds one"""

    key: paillier.PaillierPrivateKey = field(repr=False)
    period_id: int
    fingerprint: str


@dataclass(frozen=True)
class KeyPair:
    """Monthly key material of the supplier"""

    public_key: PublicKey
    secret_key: SecretKey = field(repr=False)
    period_id: int

    @property
    def fingerprint(self) -> str:
        return self.public_key.fingerprint

    @property
    def bits(self) -> int:
        return self.public_key.n.bit_length()


@dataclass(frozen=True)
class Ciphertext:
    """
    Element of Z*_{n^2} tagged with the fingerprint of its public key

    `bound` is a public upper bound on |plaintext|, tracked through the
    homomorphic operations so that wraparound past n/2 is rejected
    instead of silently producing a wrong signed decode.
    """

    value: int = field(repr=False)
    key_fingerprint: str
    bound: int = field(default=PLAINTEXT_LIMIT, compare=False, repr=False)


def _fingerprint(n: int) -> str:
    n_bytes = n.to_bytes((n.bit_length() + 7) // 8, "big")
    return hashlib.sha3_256(b"pa-bill/public-key|" + n_bytes).hexdigest()[:16]


def _random_prime(stream: RandomStream, bits: int) -> int:
    # top two bits set so that p*q has exactly the requested length
    while True:
        candidate = stream.randbits(bits) | (0b11 << (bits - 2)) | 1
        prime = int(gmpy2.next_prime(candidate))
        if prime.bit_length() == bits:
            return prime


def keygen(
    bits: int = DEFAULT_KEY_BITS,
    period_id: int = 0,
    seed: Optional[int] = None
) -> KeyPair:
    """
    Generate a Paillier key pair for one billing period

    Args:
        bits: Modulus length in bits (at least 1024)
        period_id: Billing period the keys belong to
        seed: Seed for reproducible simulations; None draws fresh randomness

    Returns:
        KeyPair whose modulus has exactly `bits` bits
    """
    if bits < MIN_KEY_BITS:
        raise ConfigurationError(f"Key size {bits} below minimum of {MIN_KEY_BITS} bits")

    stream = RandomStream(seed, "keygen", period_id, bits)
    half = bits // 2

    while True:
        p = _random_prime(stream, half)
        q = _random_prime(stream, bits - half)
        if p != q and (p * q).bit_length() == bits:
            break

    public = paillier.PaillierPublicKey(p * q)
    private = paillier.PaillierPrivateKey(public, p, q)
    fingerprint = _fingerprint(public.n)

    logger.info(f"Generated {bits}-bit key pair {fingerprint} for period {period_id}")

    return KeyPair(
        public_key=PublicKey(public, period_id, fingerprint),
        secret_key=SecretKey(private, period_id, fingerprint),
        period_id=period_id,
    )


def encode_signed(n: int, m: int) -> int:
    """Map a signed plaintext into Z_n by the half-range convention"""
    if not -PLAINTEXT_LIMIT < m < PLAINTEXT_LIMIT:
        raise EncodingError(f"Plaintext outside signed range (|m| < 2**{PLAINTEXT_BITS})")
    return m % n


def decode_signed(n: int, raw: int) -> int:
    """Inverse of encode_signed; rejects values outside the signed range"""
    value = raw - n if raw > n // 2 else raw
    if not -PLAINTEXT_LIMIT < value < PLAINTEXT_LIMIT:
        raise EncodingError(f"Decrypted value outside signed range (|m| < 2**{PLAINTEXT_BITS})")
    return value


def _check_keys(pk: PublicKey, *cts: Ciphertext) -> None:
    for ct in cts:
        if ct.key_fingerprint != pk.fingerprint:
            raise KeyMismatchError(
                f"Ciphertext key {ct.key_fingerprint} does not match public key {pk.fingerprint}"
            )


def _check_bound(pk: PublicKey, bound: int) -> int:
    if bound >= pk.n // 2:
        raise EncodingError("Homomorphic result may exceed the plaintext ring")
    return bound


def encrypt(pk: PublicKey, m: int, stream: Optional[RandomStream] = None) -> Ciphertext:
    """
    Encrypt a signed integer

    Args:
        pk: Public key
        m: Plaintext with |m| < 2**128
        stream: Nonce source; None uses phe's system randomness

    Returns:
        Fresh probabilistic ciphertext
    """
    encoded = encode_signed(pk.n, m)

    if stream is None:
        r = pk.key.get_random_lt_n()
    else:
        r = 0
        while r == 0 or gmpy2.gcd(r, pk.n) != 1:
            r = stream.randbelow(pk.n)

    value = pk.key.raw_encrypt(encoded, r_value=r)
    return Ciphertext(int(value), pk.fingerprint)


def zero(pk: PublicKey) -> Ciphertext:
    """Trivial encryption of 0, used to initialise accumulators"""
    return Ciphertext(1, pk.fingerprint, bound=0)


def add(pk: PublicKey, a: Ciphertext, b: Ciphertext) -> Ciphertext:
    """Ciphertext of decrypt(a) + decrypt(b)"""
    _check_keys(pk, a, b)
    bound = _check_bound(pk, a.bound + b.bound)
    return Ciphertext(a.value * b.value % pk.nsquare, pk.fingerprint, bound)


def sub(pk: PublicKey, a: Ciphertext, b: Ciphertext) -> Ciphertext:
    """Ciphertext of decrypt(a) - decrypt(b)"""
    _check_keys(pk, a, b)
    bound = _check_bound(pk, a.bound + b.bound)
    inverse = gmpy2.invert(b.value, pk.nsquare)
    return Ciphertext(int(a.value * inverse % pk.nsquare), pk.fingerprint, bound)


def scalar_mul(pk: PublicKey, a: Ciphertext, k: int) -> Ciphertext:
    """Ciphertext of k * decrypt(a) for a public signed integer k"""
    _check_keys(pk, a)
    if not -PLAINTEXT_LIMIT < k < PLAINTEXT_LIMIT:
        raise EncodingError(f"Scalar outside signed range (|k| < 2**{PLAINTEXT_BITS})")
    bound = _check_bound(pk, a.bound * abs(k))
    return Ciphertext(int(gmpy2.powmod(a.value, k, pk.nsquare)), pk.fingerprint, bound)


def decrypt(sk: SecretKey, c: Ciphertext) -> int:
    """Decrypt to a signed integer"""
    if c.key_fingerprint != sk.fingerprint:
        raise KeyMismatchError(
            f"Ciphertext key {c.key_fingerprint} does not match secret key {sk.fingerprint}"
        )
    raw = int(sk.key.raw_decrypt(int(c.value)))
    return decode_signed(sk.key.public_key.n, raw)


def serialize(pk: PublicKey, c: Ciphertext) -> bytes:
    """Canonical fixed-length big-endian encoding; this is what gets hashed"""
    _check_keys(pk, c)
    return c.value.to_bytes(pk.ciphertext_bytes, "big")


def deserialize(pk: PublicKey, data: bytes) -> Ciphertext:
    """Parse a canonical encoding back into a ciphertext under pk"""
    if len(data) != pk.ciphertext_bytes:
        raise EncodingError(f"Expected {pk.ciphertext_bytes} ciphertext bytes, got {len(data)}")
    value = int.from_bytes(data, "big")
    if not 0 < value < pk.nsquare or gmpy2.gcd(value, pk.n) != 1:
        raise EncodingError("Byte string is not a valid ciphertext under this key")
    return Ciphertext(value, pk.fingerprint)


if __name__ == "__main__":
    print("\n" + "=" * 60)
    print("PAILLIER CORE TEST")
    print("=" * 60 + "\n")

    keys = keygen(1024, period_id=0, seed=7)
    pk, sk = keys.public_key, keys.secret_key
    stream = RandomStream(7, "demo")

    a = encrypt(pk, 3200, stream)
    b = encrypt(pk, 3000, stream)

    print(f"Key fingerprint:   {keys.fingerprint} ({keys.bits} bits)")
    print(f"3200 - 3000      = {decrypt(sk, sub(pk, a, b))}")
    print(f"3000 - 3200      = {decrypt(sk, sub(pk, b, a))}")
    print(f"10 * (3200-3000) = {decrypt(sk, scalar_mul(pk, sub(pk, a, b), 10))}")
    print(f"Ciphertext bytes:  {len(serialize(pk, a))}")

    print("\n" + "=" * 60)
    print("TEST COMPLETE")
    print("=" * 60)
