"""
Append-Only Hash Ledger

In-process stand-in for the DLT of the billing protocol. Confidential data is
only ever stored as a domain-prefixed SHA3-256 digest; public values (P2P
price, published totals, per-cycle supplier balance) are stored in the clear.
Every entry is chained to its predecessor so that any modification of a
persisted ledger file is detectable.

File format, one record per line:
    index|user_id|cycle|tag|hex(digest or plaintext)|timestamp|hex(chain_digest)
"""

import hashlib
import logging
import threading
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

from src.utils.exceptions import (
    DuplicateEntryError,
    EntryNotFoundError,
    LedgerFormatError,
    LedgerPolicyError,
)

logger = logging.getLogger(__name__)

DOMAIN_PREFIX = b"PA-BILL/ledger/v1"
GENESIS_DIGEST = bytes(32)
DIGEST_SIZE = 32

# Cycle index of entries that belong to the whole billing period
PERIOD_SCOPE = -1


class LedgerTag(str, Enum):
    P2P_VOLUME = "P2P_VOLUME"
    REAL_VOLUME = "REAL_VOLUME"
    IN_DEV = "IN_DEV"
    TOTAL_DEV_C = "TOTAL_DEV_C"
    TOTAL_DEV_P = "TOTAL_DEV_P"
    FINAL_STATEMENT = "FINAL_STATEMENT"
    SUPPLIER_BALANCE = "SUPPLIER_BALANCE"
    P2P_PRICE = "P2P_PRICE"


PUBLIC_TAGS = frozenset({
    LedgerTag.P2P_PRICE,
    LedgerTag.TOTAL_DEV_C,
    LedgerTag.TOTAL_DEV_P,
    LedgerTag.SUPPLIER_BALANCE,
})

# Who publishes each public value
PUBLISHERS = {
    LedgerTag.P2P_PRICE: "TP",
    LedgerTag.TOTAL_DEV_C: "SUPPLIER",
    LedgerTag.TOTAL_DEV_P: "SUPPLIER",
    LedgerTag.SUPPLIER_BALANCE: "REFEREE",
}


def is_public_slot(tag: LedgerTag, cycle: int) -> bool:
    """Plaintext entries are public tags at a concrete cycle"""
    return tag in PUBLIC_TAGS and cycle >= 0


def commitment_digest(user_id: str, cycle: int, tag: LedgerTag, payload: bytes) -> bytes:
    """SHA3-256(domain_prefix | user_id | cycle | tag | payload)"""
    header = f"|{user_id}|{cycle}|{LedgerTag(tag).value}|".encode()
    return hashlib.sha3_256(DOMAIN_PREFIX + header + payload).digest()


def encode_public_value(value: int) -> bytes:
    return str(int(value)).encode("ascii")


def decode_public_value(data: bytes) -> int:
    return int(data.decode("ascii"))


def _chain(previous: bytes, body: str) -> bytes:
    return hashlib.sha3_256(previous + body.encode()).digest()


@dataclass(frozen=True)
class LedgerEntry:
    """One immutable ledger record"""

    index: int
    user_id: str
    cycle: int
    tag: LedgerTag
    digest: bytes = field(repr=False)
    timestamp: int
    chain_digest: bytes = field(repr=False)

    @property
    def is_public(self) -> bool:
        return is_public_slot(self.tag, self.cycle)

    @property
    def public_value(self) -> int:
        if not self.is_public:
            raise LedgerPolicyError(f"Entry {self.index} holds a digest, not a public value")
        return decode_public_value(self.digest)

    @property
    def body(self) -> str:
        return f"{self.index}|{self.user_id}|{self.cycle}|{self.tag.value}|{self.digest.hex()}|{self.timestamp}"

    def to_line(self) -> str:
        return f"{self.body}|{self.chain_digest.hex()}"

    @classmethod
    def from_line(cls, line: str, position: int = -1) -> "LedgerEntry":
        parts = line.rstrip("\n").split("|")
        if len(parts) != 7:
            raise LedgerFormatError(f"Line {position}: expected 7 fields, got {len(parts)}", position)
        try:
            return cls(
                index=int(parts[0]),
                user_id=parts[1],
                cycle=int(parts[2]),
                tag=LedgerTag(parts[3]),
                digest=bytes.fromhex(parts[4]),
                timestamp=int(parts[5]),
                chain_digest=bytes.fromhex(parts[6]),
            )
        except ValueError as e:
            raise LedgerFormatError(f"Line {position}: {e}", position) from e


@dataclass(frozen=True)
class LedgerSnapshot:
    """Consistent prefix of the ledger"""

    entries: Tuple[LedgerEntry, ...]
    chain_digest: bytes

    def first_invalid_index(self) -> Optional[int]:
        """Position of the first entry whose chain link does not recompute"""
        previous = GENESIS_DIGEST
        for position, entry in enumerate(self.entries):
            if entry.index != position or _chain(previous, entry.body) != entry.chain_digest:
                return position
            previous = entry.chain_digest
        if previous != self.chain_digest:
            return len(self.entries)
        return None

    def is_valid(self) -> bool:
        return self.first_invalid_index() is None


@dataclass(frozen=True)
class LedgerAudit:
    """Result of re-verifying a persisted ledger"""

    ok: bool
    entries: int
    bad_index: Optional[int] = None
    reason: str = ""


class HashLedger:
    """Append-only commitment store with a single serialized writer"""

    def __init__(self, period_id: int = 0):
        self.period_id = period_id
        self._entries: List[LedgerEntry] = []
        self._keys: Dict[Tuple[str, int, LedgerTag], int] = {}
        self._chain_digest = GENESIS_DIGEST
        self._clock = 0
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self._entries)

    @property
    def chain_digest(self) -> bytes:
        return self._chain_digest

    def set_clock(self, tick: int) -> None:
        """Set the logical timestamp used for subsequent appends"""
        self._clock = tick

    def _append(self, user_id: str, cycle: int, tag: LedgerTag, digest: bytes) -> int:
        key = (str(user_id), int(cycle), LedgerTag(tag))
        with self._lock:
            if key in self._keys:
                raise DuplicateEntryError(
                    f"Entry for ({key[0]}, {key[1]}, {key[2].value}) already exists at index {self._keys[key]}"
                )
            index = len(self._entries)
            entry = LedgerEntry(index, key[0], key[1], key[2], digest, self._clock, b"")
            chain_digest = _chain(self._chain_digest, entry.body)
            entry = LedgerEntry(index, key[0], key[1], key[2], digest, self._clock, chain_digest)

            self._entries.append(entry)
            self._keys[key] = index
            self._chain_digest = chain_digest
        return index

    def append(self, user_id: str, cycle: int, tag: LedgerTag, payload_bytes: bytes) -> int:
        """
        Commit the hash of a payload

        Args:
            user_id: Owner of the data (user id or system id)
            cycle: Settlement cycle, or PERIOD_SCOPE
            tag: What the payload is
            payload_bytes: Canonical bytes of the committed value

        Returns:
            Index of the new entry
        """
        digest = commitment_digest(user_id, cycle, tag, payload_bytes)
        return self._append(user_id, cycle, tag, digest)

    def publish_plaintext(
        self,
        tag: LedgerTag,
        cycle: int,
        value: int,
        user_id: Optional[str] = None
    ) -> int:
        """Store a public value in the clear"""
        tag = LedgerTag(tag)
        if tag not in PUBLIC_TAGS:
            raise LedgerPolicyError(f"Tag {tag.value} is confidential and cannot be published")
        if cycle < 0:
            raise LedgerPolicyError("Public values belong to a concrete settlement cycle")
        publisher = user_id or PUBLISHERS[tag]
        return self._append(publisher, cycle, tag, encode_public_value(value))

    def get(self, user_id: str, cycle: int, tag: LedgerTag) -> LedgerEntry:
        key = (str(user_id), int(cycle), LedgerTag(tag))
        index = self._keys.get(key)
        if index is None:
            raise EntryNotFoundError(f"No entry for ({key[0]}, {key[1]}, {key[2].value})")
        return self._entries[index]

    def contains(self, user_id: str, cycle: int, tag: LedgerTag) -> bool:
        return (str(user_id), int(cycle), LedgerTag(tag)) in self._keys

    def verify(self, user_id: str, cycle: int, tag: LedgerTag, payload_bytes: bytes) -> bool:
        """True iff the payload hashes to the stored commitment"""
        entry = self.get(user_id, cycle, tag)
        if entry.is_public:
            return entry.digest == payload_bytes
        return entry.digest == commitment_digest(user_id, cycle, tag, payload_bytes)

    def read_public(self, tag: LedgerTag, cycle: int, user_id: Optional[str] = None) -> int:
        """Read a value stored by publish_plaintext"""
        tag = LedgerTag(tag)
        return self.get(user_id or PUBLISHERS[tag], cycle, tag).public_value

    def entries(self) -> Tuple[LedgerEntry, ...]:
        with self._lock:
            return tuple(self._entries)

    def snapshot(self) -> LedgerSnapshot:
        with self._lock:
            return LedgerSnapshot(tuple(self._entries), self._chain_digest)

    def count(self, tag: LedgerTag, cycle: Optional[int] = None) -> int:
        tag = LedgerTag(tag)
        return sum(
            1 for entry in self.entries()
            if entry.tag == tag and (cycle is None or entry.cycle == cycle)
        )

    def save(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        lines = [entry.to_line() for entry in self.entries()]
        path.write_text("".join(f"{line}\n" for line in lines), encoding="ascii")
        logger.info(f"Wrote {len(lines)} ledger entries to {path}")
        return path

    @classmethod
    def load(cls, path: Union[str, Path], period_id: int = 0) -> "HashLedger":
        """Rebuild a ledger from file, rejecting any broken chain link"""
        return cls.from_bytes(Path(path).read_bytes(), period_id)

    @classmethod
    def from_bytes(cls, raw: bytes, period_id: int = 0) -> "HashLedger":
        audit = verify_ledger_bytes(raw)
        if not audit.ok:
            raise LedgerFormatError(f"Ledger failed verification: {audit.reason}", audit.bad_index or -1)

        ledger = cls(period_id)
        for line in split_records(raw.decode("ascii")):
            entry = LedgerEntry.from_line(line)
            ledger._entries.append(entry)
            ledger._keys[(entry.user_id, entry.cycle, entry.tag)] = entry.index
            ledger._chain_digest = entry.chain_digest
        return ledger


# Bytes allowed inside a record; only "\n" separates records
_RECORD_CHARS = frozenset(chr(c) for c in range(0x20, 0x7F))


def split_records(text: str, terminated: bool = True) -> List[str]:
    """
    Split newline-separated records

    Only a newline ends a record; any other control character inside a record
    is a format error. With terminated=True the text must be empty or end
    with a newline. Otherwise one trailing newline is optional and blank
    records are dropped.

    Raises:
        LedgerFormatError: Missing terminator or a stray control character
    """
    if not text:
        return []
    if text.endswith("\n"):
        text = text[:-1]
    elif terminated:
        raise LedgerFormatError("truncated final line", text.count("\n"))

    records = text.split("\n")
    for position, record in enumerate(records):
        if not _RECORD_CHARS.issuperset(record):
            raise LedgerFormatError(f"Line {position}: control character inside record", position)
    return records if terminated else [record for record in records if record.strip()]


def verify_ledger_file(path: Union[str, Path]) -> LedgerAudit:
    """
    Re-verify every line and chain link of a persisted ledger

    Returns:
        LedgerAudit naming the first bad index, if any
    """
    try:
        raw = Path(path).read_bytes()
    except OSError as e:
        return LedgerAudit(False, 0, 0, f"unreadable ledger file: {e}")
    return verify_ledger_bytes(raw)


def verify_ledger_bytes(raw: bytes) -> LedgerAudit:
    """Line-by-line verification of ledger file contents"""
    try:
        text = raw.decode("ascii")
    except UnicodeDecodeError as e:
        return LedgerAudit(False, 0, 0, f"ledger is not ASCII: {e}")

    try:
        lines = split_records(text)
    except LedgerFormatError as e:
        return LedgerAudit(False, text.count("\n") + 1, e.index, str(e))

    previous = GENESIS_DIGEST
    seen = set()

    for position, line in enumerate(lines):
        try:
            entry = LedgerEntry.from_line(line, position)
        except LedgerFormatError as e:
            return LedgerAudit(False, len(lines), position, str(e))

        if entry.to_line() != line:
            return LedgerAudit(False, len(lines), position, "non-canonical encoding")
        if entry.index != position:
            return LedgerAudit(False, len(lines), position, f"index {entry.index} out of sequence")
        if not entry.is_public and len(entry.digest) != DIGEST_SIZE:
            return LedgerAudit(False, len(lines), position, "digest is not 32 bytes")
        if entry.is_public:
            try:
                decode_public_value(entry.digest)
            except (UnicodeDecodeError, ValueError):
                return LedgerAudit(False, len(lines), position, "public value is not an integer")

        key = (entry.user_id, entry.cycle, entry.tag)
        if key in seen:
            return LedgerAudit(False, len(lines), position, "duplicate (user, cycle, tag)")
        seen.add(key)

        if _chain(previous, entry.body) != entry.chain_digest:
            return LedgerAudit(False, len(lines), position, "chain digest mismatch")
        previous = entry.chain_digest

    return LedgerAudit(True, len(lines))
