"""
Homomorphic Encryption Module

Paillier key management, signed plaintext encoding and the encrypted
arithmetic used by the billing protocol.
"""

from .he_core import (
    DEFAULT_KEY_BITS,
    MIN_KEY_BITS,
    PLAINTEXT_LIMIT,
    Ciphertext,
    KeyPair,
    PublicKey,
    SecretKey,
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

__all__ = [
    "DEFAULT_KEY_BITS",
    "MIN_KEY_BITS",
    "PLAINTEXT_LIMIT",
    "Ciphertext",
    "KeyPair",
    "PublicKey",
    "SecretKey",
    "add",
    "decode_signed",
    "decrypt",
    "deserialize",
    "encode_signed",
    "encrypt",
    "keygen",
    "scalar_mul",
    "serialize",
    "sub",
    "zero",
]
