"""
Deterministic random streams

Every random draw in a simulation comes from a labelled sub-stream of the
configured seed, so runs with the same seed are bit-identical and the
streams used for, say, fault perturbations never shift the nonces used for
honest encryptions.
"""

import hashlib
import secrets
from typing import Optional, Union

import gmpy2
import numpy as np

Label = Union[str, int]


def derive_seed(seed: Optional[int], *labels: Label) -> int:
    """
    Derive a 128-bit sub-seed from a root seed and a label path

    Args:
        seed: Root seed. If None, a fresh random seed is drawn.
        labels: Path naming the consumer of the stream (e.g. "encrypt", 0)

    Returns:
        Non-negative integer seed
    """
    if seed is None:
        return secrets.randbits(128)

    material = "|".join(str(part) for part in (seed, *labels)).encode()
    return int.from_bytes(hashlib.sha3_256(material).digest()[:16], "big")


def numpy_rng(seed: Optional[int], *labels: Label) -> np.random.Generator:
    """numpy Generator seeded from a labelled sub-stream"""
    return np.random.default_rng(derive_seed(seed, *labels))


class RandomStream:
    """Big-integer random stream backed by a gmpy2 random state"""

    def __init__(self, seed: Optional[int] = None, *labels: Label):
        self._state = gmpy2.random_state(derive_seed(seed, *labels))

    def randbits(self, bits: int) -> int:
        """Uniform integer in [0, 2**bits)"""
        return int(gmpy2.mpz_urandomb(self._state, bits))

    def randbelow(self, upper: int) -> int:
        """Uniform integer in [0, upper)"""
        return int(gmpy2.mpz_random(self._state, upper))

    def randint(self, low: int, high: int) -> int:
        """Uniform integer in [low, high]"""
        return low + self.randbelow(high - low + 1)
