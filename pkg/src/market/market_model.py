"""
Market Data Model

Users, prices and per-cycle volumes, plus the two data producers of the
billing protocol: the trading platform (committed P2P volumes and price) and
the sealed smart meters (metered volumes). Both encrypt under the supplier's
monthly key, deliver ciphertexts to the owner and its matched users, and
commit the ciphertext hashes to the ledger.

Units: energy in integer Wh, prices in integer micro-currency per Wh,
money in integer micro-currency.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.crypto.he_core import Ciphertext, PublicKey, encrypt, serialize
from src.ledger.hash_ledger import HashLedger, LedgerTag
from src.utils.exceptions import (
    ConfigurationError,
    DataValidationError,
    DuplicateEntryError,
    EquivocationError,
    ProfileFormatError,
)
from src.utils.rng import RandomStream, numpy_rng

logger = logging.getLogger(__name__)

PROFILE_COLUMNS = ["cycle", "user_role", "user_ordinal", "committed_wh", "real_wh"]

# System identities used on the ledger and in verdicts
TP_ID = "TP"
SUPPLIER_ID = "SUPPLIER"
REFEREE_ID = "REFEREE"
SYSTEM_ID = "SYSTEM"


class Role(str, Enum):
    CONSUMER = "C"
    PROSUMER = "P"

    @property
    def other(self) -> "Role":
        return Role.PROSUMER if self is Role.CONSUMER else Role.CONSUMER


@dataclass(frozen=True, order=True)
class UserId:
    """Consumer c_i or prosumer p_j"""

    role: Role
    ordinal: int

    def __str__(self) -> str:
        return f"{self.role.value}{self.ordinal}"

    @property
    def is_consumer(self) -> bool:
        return self.role is Role.CONSUMER

    @classmethod
    def parse(cls, text: str) -> "UserId":
        """Parse the "C3" / "P0" form produced by str()"""
        text = text.strip().upper()
        try:
            return cls(Role(text[0]), int(text[1:]))
        except (ValueError, IndexError) as e:
            raise DataValidationError(f"Invalid user id '{text}'") from e


def consumers(n_c: int) -> List[UserId]:
    return [UserId(Role.CONSUMER, i) for i in range(n_c)]


def prosumers(n_p: int) -> List[UserId]:
    return [UserId(Role.PROSUMER, j) for j in range(n_p)]


class PriceSchedule(BaseModel):
    """Feed-in, P2P and retail prices in micro-currency per Wh"""

    model_config = ConfigDict(frozen=True)

    pi_p2p: int = Field(150, gt=0, description="P2P trading price")
    pi_rt: int = Field(280, gt=0, description="Retail price")
    pi_fit: int = Field(40, gt=0, description="Feed-in tariff")

    @model_validator(mode="after")
    def check_ordering(self) -> "PriceSchedule":
        if not self.pi_fit < self.pi_p2p < self.pi_rt:
            raise ValueError(
                f"Prices must satisfy pi_fit < pi_p2p < pi_rt (got {self.pi_fit}, {self.pi_p2p}, {self.pi_rt})"
            )
        return self


@dataclass
class VolumeRecord:
    """Encrypted committed and metered volume of one user in one cycle"""

    user: UserId
    cycle: int
    v_p2p_ct: Optional[Ciphertext] = None
    v_real_ct: Optional[Ciphertext] = None


@dataclass
class CycleInput:
    """Plaintext volumes of one settlement cycle (simulation ground truth)"""

    cycle: int
    committed: Dict[UserId, int]
    real: Dict[UserId, int]
    prices: Optional[PriceSchedule] = None

    @property
    def users(self) -> List[UserId]:
        return sorted(self.committed)

    @property
    def consumer_ids(self) -> List[UserId]:
        return [u for u in self.users if u.is_consumer]

    @property
    def prosumer_ids(self) -> List[UserId]:
        return [u for u in self.users if not u.is_consumer]

    def deviation(self, user: UserId) -> int:
        return self.real[user] - self.committed[user]

    def validate(self) -> "CycleInput":
        """Check market balance, matching key sets and non-negative volumes"""
        if set(self.committed) != set(self.real):
            raise DataValidationError(f"Cycle {self.cycle}: committed and real volumes cover different users")
        if not self.consumer_ids or not self.prosumer_ids:
            raise DataValidationError(f"Cycle {self.cycle}: both consumers and prosumers are required")
        if any(v < 0 for v in self.committed.values()) or any(v < 0 for v in self.real.values()):
            raise DataValidationError(f"Cycle {self.cycle}: volumes must be non-negative magnitudes")

        supply = sum(self.committed[u] for u in self.prosumer_ids)
        demand = sum(self.committed[u] for u in self.consumer_ids)
        if supply != demand:
            raise DataValidationError(
                f"Cycle {self.cycle}: market imbalance, consumers committed {demand} Wh "
                f"but prosumers committed {supply} Wh"
            )
        return self


Deliver = Callable[[UserId, UserId, int, LedgerTag, Ciphertext], None]


def profiles_to_frame(inputs: Sequence[CycleInput]) -> pd.DataFrame:
    """Flatten cycle inputs into the profile-file column layout"""
    records = []
    for cycle_input in inputs:
        for user in cycle_input.users:
            records.append({
                "cycle": cycle_input.cycle,
                "user_role": user.role.name,
                "user_ordinal": user.ordinal,
                "committed_wh": cycle_input.committed[user],
                "real_wh": cycle_input.real[user],
            })
    return pd.DataFrame(records, columns=PROFILE_COLUMNS)


def frame_to_profiles(df: pd.DataFrame) -> List[CycleInput]:
    """Validate a profile frame and group it into cycle inputs"""
    if df.empty:
        raise ProfileFormatError("Profile contains no records")

    try:
        roles = df["user_role"].astype(str).str.strip().str.upper().map(
            lambda r: Role.CONSUMER if r in ("C", "CONSUMER") else Role.PROSUMER if r in ("P", "PROSUMER") else None
        )
        numeric = df[["cycle", "user_ordinal", "committed_wh", "real_wh"]].apply(
            lambda col: pd.to_numeric(col, errors="raise")
        )
    except (ValueError, TypeError, KeyError) as e:
        raise ProfileFormatError(f"Malformed profile record: {e}") from e

    if roles.isna().any():
        bad = df.loc[roles.isna(), "user_role"].iloc[0]
        raise ProfileFormatError(f"Unknown user role '{bad}'")
    if not all(np.issubdtype(dtype, np.integer) for dtype in numeric.dtypes):
        raise ProfileFormatError("Cycle, ordinal and volumes must be integers")

    frame = numeric.assign(role=roles)
    if frame.duplicated(subset=["cycle", "role", "user_ordinal"]).any():
        raise ProfileFormatError("Duplicate (cycle, user) record")

    cycles = sorted(frame["cycle"].unique())
    if cycles != list(range(len(cycles))):
        raise ProfileFormatError("Cycles must be numbered 0..S-1 without gaps")

    inputs = []
    expected_users = None
    for cycle, group in frame.groupby("cycle", sort=True):
        committed, real = {}, {}
        for row in group.itertuples(index=False):
            user = UserId(row.role, int(row.user_ordinal))
            committed[user] = int(row.committed_wh)
            real[user] = int(row.real_wh)

        if expected_users is None:
            expected_users = set(committed)
        elif set(committed) != expected_users:
            raise DataValidationError(f"Cycle {cycle}: user population differs from cycle 0")

        inputs.append(CycleInput(int(cycle), committed, real).validate())

    return inputs


def read_profile_frame(source, name: str = "profile") -> pd.DataFrame:
    """Parse profile records from a path or text buffer into string columns"""
    try:
        df = pd.read_csv(
            source, header=None, names=PROFILE_COLUMNS, index_col=False,
            comment="#", dtype=str, skipinitialspace=True
        )
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise ProfileFormatError(f"Could not parse {name}: {e}") from e

    if not df.empty and str(df.iloc[0]["cycle"]).strip() == "cycle":
        df = df.iloc[1:]
    if df.isna().any().any():
        raise ProfileFormatError(f"{name}: every record needs {len(PROFILE_COLUMNS)} fields")
    return df.reset_index(drop=True)


def load_profiles(path: Union[str, Path]) -> List[CycleInput]:
    """
    Load and validate a profile file

    Args:
        path: Text file with `cycle,user_role,user_ordinal,committed_wh,real_wh`
            records, one per line; a header line and `#` comments are allowed

    Returns:
        Cycle inputs ordered by cycle
    """
    path = Path(path)
    if not path.exists():
        raise ProfileFormatError(f"Profile file {path} does not exist")

    inputs = frame_to_profiles(read_profile_frame(path, str(path)))
    logger.info(f"Loaded {len(inputs)} cycles for {len(inputs[0].users)} users from {path}")
    return inputs


def write_profiles(inputs: Sequence[CycleInput], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    profiles_to_frame(inputs).to_csv(path, index=False, lineterminator="\n")
    return path


def synthesize_profiles(
    n_c: int,
    n_p: int,
    cycles: int,
    seed: int,
    deviation_ratio: float = 0.1,
    mean_demand_wh: int = 800
) -> List[CycleInput]:
    """
    Generate balanced synthetic cycle inputs

    Consumer demand follows a daily shape (24 cycles per day); prosumers
    split the total demand multinomially, so every cycle is balanced.
    Real volumes deviate from commitments by at most deviation_ratio.

    Args:
        n_c: Number of consumers
        n_p: Number of prosumers
        cycles: Number of settlement cycles
        seed: Generator seed
        deviation_ratio: Maximum relative deviation of real from committed
        mean_demand_wh: Average committed consumer volume per cycle

    Returns:
        List of validated CycleInput
    """
    if n_c < 1 or n_p < 1:
        raise ConfigurationError("Need at least one consumer and one prosumer")
    if cycles < 1:
        raise ConfigurationError("Need at least one cycle")
    if not 0.0 <= deviation_ratio <= 1.0:
        raise ConfigurationError("deviation_ratio must lie in [0, 1]")

    rng = numpy_rng(seed, "profiles")
    c_ids, p_ids = consumers(n_c), prosumers(n_p)

    base_load = rng.uniform(0.5, 1.5, size=n_c)
    capacity = rng.uniform(0.5, 1.5, size=n_p)
    hours = np.arange(cycles) % 24
    daily_shape = 1.0 + 0.4 * np.sin((hours - 6) / 24.0 * 2 * np.pi)

    inputs = []
    for s in range(cycles):
        demand = rng.poisson(mean_demand_wh * base_load * daily_shape[s]).astype(np.int64)
        total = int(demand.sum())
        supply = rng.multinomial(total, capacity / capacity.sum()).astype(np.int64)

        committed = np.concatenate([demand, supply])
        spread = rng.uniform(-deviation_ratio, deviation_ratio, size=committed.size)
        real = np.maximum(np.rint(committed * (1.0 + spread)).astype(np.int64), 0)

        ids = c_ids + p_ids
        inputs.append(CycleInput(
            cycle=s,
            committed={u: int(v) for u, v in zip(ids, committed)},
            real={u: int(v) for u, v in zip(ids, real)},
        ).validate())

    logger.info(f"Synthesized {cycles} cycles for {n_c} consumers and {n_p} prosumers (seed {seed})")
    return inputs


def _publish_volumes(
    cycle_input: CycleInput,
    pk: PublicKey,
    ledger: HashLedger,
    match_map,
    tag: LedgerTag,
    volumes: Dict[UserId, int],
    stream: Optional[RandomStream],
    deliver: Optional[Deliver],
) -> Dict[UserId, VolumeRecord]:
    records = {}
    for user in cycle_input.users:
        ct = encrypt(pk, volumes[user], stream)
        try:
            ledger.append(str(user), cycle_input.cycle, tag, serialize(pk, ct))
        except DuplicateEntryError as e:
            raise EquivocationError(str(e)) from e

        if deliver is not None:
            for recipient in [user, *match_map.matches(user)]:
                deliver(recipient, user, cycle_input.cycle, tag, ct)

        if tag is LedgerTag.P2P_VOLUME:
            records[user] = VolumeRecord(user, cycle_input.cycle, v_p2p_ct=ct)
        else:
            records[user] = VolumeRecord(user, cycle_input.cycle, v_real_ct=ct)
    return records


def tp_publish(
    cycle_input: CycleInput,
    pk: PublicKey,
    ledger: HashLedger,
    match_map,
    prices: Optional[PriceSchedule] = None,
    stream: Optional[RandomStream] = None,
    deliver: Optional[Deliver] = None
) -> Dict[UserId, VolumeRecord]:
    """
    Trading platform output for one cycle

    Publishes the P2P price, encrypts each committed volume, delivers it to
    the owner and its matched users and commits its hash (P2P_VOLUME).
    """
    prices = cycle_input.prices or prices or PriceSchedule()
    try:
        ledger.publish_plaintext(LedgerTag.P2P_PRICE, cycle_input.cycle, prices.pi_p2p)
    except DuplicateEntryError as e:
        raise EquivocationError(str(e)) from e
    return _publish_volumes(
        cycle_input, pk, ledger, match_map, LedgerTag.P2P_VOLUME, cycle_input.committed, stream, deliver
    )


def meter_read(
    cycle_input: CycleInput,
    pk: PublicKey,
    ledger: HashLedger,
    match_map,
    stream: Optional[RandomStream] = None,
    deliver: Optional[Deliver] = None
) -> Dict[UserId, VolumeRecord]:
    """
    Smart meter output for one cycle

    Encrypts each metered volume, keeps it with the owner, sends it to the
    matched users and commits its hash (REAL_VOLUME).
    """
    return _publish_volumes(
        cycle_input, pk, ledger, match_map, LedgerTag.REAL_VOLUME, cycle_input.real, stream, deliver
    )
