"""
Tests for the append-only hash ledger
"""

import pytest

from src.crypto.he_core import serialize
from src.ledger.hash_ledger import (
    PERIOD_SCOPE,
    HashLedger,
    LedgerTag,
    commitment_digest,
    split_records,
    verify_ledger_bytes,
    verify_ledger_file,
)
from src.utils.exceptions import (
    DuplicateEntryError,
    EntryNotFoundError,
    LedgerFormatError,
    LedgerPolicyError,
)


@pytest.fixture
def filled(ledger, pk, enc):
    ledger.set_clock(3)
    ledger.publish_plaintext(LedgerTag.P2P_PRICE, 0, 150)
    ledger.append("C0", 0, LedgerTag.P2P_VOLUME, serialize(pk, enc(1000)))
    ledger.append("P0", 0, LedgerTag.REAL_VOLUME, serialize(pk, enc(1200)))
    ledger.publish_plaintext(LedgerTag.TOTAL_DEV_C, 0, -35)
    return ledger


def test_append_returns_sequential_indices(ledger):
    assert ledger.append("C3", 17, LedgerTag.REAL_VOLUME, b"payload") == 0
    assert ledger.append("C3", 18, LedgerTag.REAL_VOLUME, b"payload") == 1
    assert len(ledger) == 2


def test_get_returns_digest_of_payload(ledger):
    ledger.append("C3", 17, LedgerTag.REAL_VOLUME, b"ct-bytes")
    entry = ledger.get("C3", 17, LedgerTag.REAL_VOLUME)
    assert entry.digest == commitment_digest("C3", 17, LedgerTag.REAL_VOLUME, b"ct-bytes")
    assert len(entry.digest) == 32


def test_verify_detects_single_byte_change(ledger, pk, enc):
    data = serialize(pk, enc(500))
    ledger.append("P1", 2, LedgerTag.P2P_VOLUME, data)
    assert ledger.verify("P1", 2, LedgerTag.P2P_VOLUME, data)

    tampered = bytearray(data)
    tampered[10] ^= 0x01
    assert not ledger.verify("P1", 2, LedgerTag.P2P_VOLUME, bytes(tampered))


def test_digest_is_bound_to_slot():
    payload = b"same bytes"
    assert commitment_digest("C0", 0, LedgerTag.IN_DEV, payload) != commitment_digest(
        "C0", 1, LedgerTag.IN_DEV, payload
    )
    assert commitment_digest("C0", 0, LedgerTag.IN_DEV, payload) != commitment_digest(
        "C0", 0, LedgerTag.REAL_VOLUME, payload
    )


def test_duplicate_slot_is_rejected(ledger):
    ledger.append("C0", 0, LedgerTag.IN_DEV, b"a")
    with pytest.raises(DuplicateEntryError):
        ledger.append("C0", 0, LedgerTag.IN_DEV, b"b")
    assert len(ledger) == 1


def test_missing_entry(ledger):
    with pytest.raises(EntryNotFoundError):
        ledger.get("C9", 0, LedgerTag.IN_DEV)
    with pytest.raises(EntryNotFoundError):
        ledger.verify("C9", 0, LedgerTag.IN_DEV, b"x")


def test_public_values_round_trip(filled):
    assert filled.read_public(LedgerTag.P2P_PRICE, 0) == 150
    assert filled.read_public(LedgerTag.TOTAL_DEV_C, 0) == -35
    assert filled.get("TP", 0, LedgerTag.P2P_PRICE).is_public


def test_confidential_tags_cannot_be_published(ledger):
    with pytest.raises(LedgerPolicyError):
        ledger.publish_plaintext(LedgerTag.IN_DEV, 0, 5)
    with pytest.raises(LedgerPolicyError):
        ledger.publish_plaintext(LedgerTag.SUPPLIER_BALANCE, PERIOD_SCOPE, 5)


def test_digest_entry_has_no_public_value(filled):
    with pytest.raises(LedgerPolicyError):
        filled.get("C0", 0, LedgerTag.P2P_VOLUME).public_value


def test_entries_carry_logical_clock(filled):
    assert {entry.timestamp for entry in filled.entries()} == {3}


def test_snapshot_is_valid_prefix(filled):
    snapshot = filled.snapshot()
    assert snapshot.is_valid()
    filled.publish_plaintext(LedgerTag.TOTAL_DEV_P, 0, 10)
    assert len(snapshot.entries) == 4
    assert snapshot.chain_digest != filled.chain_digest


def test_count_by_tag(filled):
    assert filled.count(LedgerTag.P2P_VOLUME) == 1
    assert filled.count(LedgerTag.TOTAL_DEV_C, cycle=0) == 1
    assert filled.count(LedgerTag.TOTAL_DEV_C, cycle=1) == 0


def test_save_load_preserves_chain(filled, tmp_path):
    path = filled.save(tmp_path / "ledger.txt")
    loaded = HashLedger.load(path)
    assert loaded.entries() == filled.entries()
    assert loaded.chain_digest == filled.chain_digest
    assert loaded.read_public(LedgerTag.TOTAL_DEV_C, 0) == -35


def test_verify_file_accepts_untouched_ledger(filled, tmp_path):
    audit = verify_ledger_file(filled.save(tmp_path / "ledger.txt"))
    assert audit.ok
    assert audit.entries == 4


def test_verify_file_names_first_tampered_line(filled, tmp_path):
    path = filled.save(tmp_path / "ledger.txt")
    lines = path.read_text().splitlines()
    fields = lines[2].split("|")
    fields[4] = ("0" if fields[4][0] != "0" else "1") + fields[4][1:]
    lines[2] = "|".join(fields)
    path.write_text("\n".join(lines) + "\n")

    audit = verify_ledger_file(path)
    assert not audit.ok
    assert audit.bad_index == 2


def test_verify_detects_reordered_lines(filled, tmp_path):
    raw = filled.save(tmp_path / "ledger.txt").read_text().splitlines()
    raw[1], raw[2] = raw[2], raw[1]
    audit = verify_ledger_bytes(("\n".join(raw) + "\n").encode())
    assert not audit.ok
    assert audit.bad_index == 1


def test_verify_detects_truncated_line(filled, tmp_path):
    raw = filled.save(tmp_path / "ledger.txt").read_bytes()
    audit = verify_ledger_bytes(raw[:-5])
    assert not audit.ok
    assert audit.bad_index == 3


def test_verify_missing_file(tmp_path):
    audit = verify_ledger_file(tmp_path / "absent.txt")
    assert not audit.ok


def test_empty_ledger_verifies():
    assert verify_ledger_bytes(b"").ok


def test_load_rejects_tampered_file(filled, tmp_path):
    path = filled.save(tmp_path / "ledger.txt")
    # public values are stored hex-encoded: "-35" -> 2d3335
    path.write_text(path.read_text().replace("|2d3335|", "|2d3336|"))
    with pytest.raises(LedgerFormatError):
        HashLedger.load(path)


def flip_bit(raw: bytes, position: int, bit: int) -> bytes:
    return raw[:position] + bytes([raw[position] ^ (1 << bit)]) + raw[position + 1:]


def test_every_single_bit_flip_is_detected(filled, tmp_path):
    raw = filled.save(tmp_path / "ledger.txt").read_bytes()
    missed = [
        (position, bit)
        for position in range(len(raw))
        for bit in range(8)
        if verify_ledger_bytes(flip_bit(raw, position, bit)).ok
    ]
    assert missed == []


def test_vertical_tab_does_not_separate_lines(filled, tmp_path):
    raw = filled.save(tmp_path / "ledger.txt").read_bytes()
    tampered = raw.replace(b"\n", b"\x0b", 1)

    audit = verify_ledger_bytes(tampered)
    assert not audit.ok
    assert audit.bad_index == 0
    with pytest.raises(LedgerFormatError):
        HashLedger.from_bytes(tampered)


def test_split_records_only_splits_on_newline():
    assert split_records("") == []
    assert split_records("a|b\nc|d\n") == ["a|b", "c|d"]
    with pytest.raises(LedgerFormatError):
        split_records("a|b\x0bc|d\n")
    with pytest.raises(LedgerFormatError):
        split_records("a|b\r\n")
    with pytest.raises(LedgerFormatError):
        split_records("a|b\nc|d")


def test_split_records_unterminated_drops_blank_lines():
    assert split_records("x,1\n\ny,2", terminated=False) == ["x,1", "y,2"]
    assert split_records("x,1\n", terminated=False) == ["x,1"]
    with pytest.raises(LedgerFormatError):
        split_records("x,1\x1cy,2", terminated=False)
