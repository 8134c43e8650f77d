"""
Fault Injection Plans

A FaultPlan lists which household misbehaves in which cycle and how. The
households apply the faults themselves; the orchestrator only records the
faults that actually took effect.
"""

from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Sequence, Tuple

from src.market.market_model import UserId
from src.utils.exceptions import ConfigurationError, DataValidationError
from src.utils.rng import numpy_rng


class FaultKind(str, Enum):
    CORRUPT_INDEV = "CORRUPT_INDEV"          # wrong individual deviations reported
    CORRUPT_STATEMENT = "CORRUPT_STATEMENT"  # wrong statements reported
    SUBSTITUTE_DATA = "SUBSTITUTE_DATA"      # own metered ciphertext swapped for a forged one
    CORRUPT_TOTAL = "CORRUPT_TOTAL"          # wrong total when selected as aggregator
    WITHHOLD_REPORT = "WITHHOLD_REPORT"      # nothing reported this cycle


@dataclass(frozen=True, order=True)
class Fault:
    cycle: int
    user: UserId
    kind: FaultKind
    delta: int = 1

    def to_text(self) -> str:
        return f"{self.cycle}:{self.user}:{self.kind.value}:{self.delta}"

    @classmethod
    def parse(cls, text: str) -> "Fault":
        """Parse `cycle:user:KIND[:delta]`"""
        parts = [part.strip() for part in text.split(":")]
        if len(parts) not in (3, 4):
            raise ConfigurationError(f"Fault '{text}' must look like cycle:user:KIND[:delta]")
        try:
            fault = cls(
                cycle=int(parts[0]),
                user=UserId.parse(parts[1]),
                kind=FaultKind(parts[2].upper()),
                delta=int(parts[3]) if len(parts) == 4 else 1,
            )
        except (ValueError, DataValidationError) as e:
            raise ConfigurationError(f"Invalid fault '{text}': {e}") from e

        if fault.cycle < 0:
            raise ConfigurationError(f"Invalid fault '{text}': negative cycle")
        if fault.delta == 0 and fault.kind is not FaultKind.WITHHOLD_REPORT:
            raise ConfigurationError(f"Invalid fault '{text}': a zero delta changes nothing")
        return fault


@dataclass(frozen=True)
class FaultPlan:
    """
    Scheduled misbehaviour of one billing period

    A saturated plan is generated per cycle instead of being listed: every
    consumer corrupts its deviations and statements, and every user
    corrupts its total whenever it is selected as aggregator. Aggregator
    deltas differ per user so corrupted totals never agree by accident.
    """

    faults: Tuple[Fault, ...] = ()
    saturated: bool = False

    def __bool__(self) -> bool:
        return self.saturated or bool(self.faults)

    def for_cycle(self, cycle: int, users: Sequence[UserId] = ()) -> List[Fault]:
        faults = [fault for fault in self.faults if fault.cycle == cycle]
        if self.saturated:
            for user in users:
                if user.is_consumer:
                    faults.append(Fault(cycle, user, FaultKind.CORRUPT_INDEV, 1))
                    faults.append(Fault(cycle, user, FaultKind.CORRUPT_STATEMENT, 1))
                faults.append(Fault(cycle, user, FaultKind.CORRUPT_TOTAL, user.ordinal + 1))
        return sorted(faults)

    def validate_for(self, n_c: int, n_p: int, cycles: int) -> "FaultPlan":
        for fault in self.faults:
            population = n_c if fault.user.is_consumer else n_p
            if fault.cycle >= cycles:
                raise ConfigurationError(f"Fault {fault.to_text()} is scheduled after the last cycle")
            if fault.user.ordinal >= population:
                raise ConfigurationError(f"Fault {fault.to_text()} names an unknown user")
        return self

    def to_text(self) -> str:
        if self.saturated:
            return "SATURATED"
        return ";".join(fault.to_text() for fault in self.faults)

    @classmethod
    def parse(cls, text: Optional[str]) -> "FaultPlan":
        """
        Parse a FAULT_PLAN value

        Entries are `cycle:user:KIND[:delta]` separated by `;`, for example
        `5:C2:CORRUPT_INDEV;7:P0:CORRUPT_STATEMENT:-100`. The single word
        SATURATED selects the worst-case plan.
        """
        text = (text or "").strip()
        if not text:
            return cls()
        if text.upper() == "SATURATED":
            return cls.saturated_plan()
        faults = [Fault.parse(entry) for entry in text.split(";") if entry.strip()]
        return cls(tuple(sorted(faults)))

    @classmethod
    def saturated_plan(cls) -> "FaultPlan":
        return cls(saturated=True)

    @classmethod
    def random_campaign(
        cls,
        n_c: int,
        n_p: int,
        cycles: int,
        count: int,
        seed: int,
        kinds: Sequence[FaultKind] = tuple(FaultKind)
    ) -> "FaultPlan":
        """
        Random faults at distinct cycles, one misbehaving household each

        Args:
            n_c: Number of consumers
            n_p: Number of prosumers
            cycles: Number of cycles in the period
            count: Number of faults, at most one per cycle
            seed: Campaign seed
            kinds: Fault kinds to draw from

        Returns:
            FaultPlan with `count` faults
        """
        if count > cycles:
            raise ConfigurationError(f"Cannot place {count} faults in {cycles} cycles")

        rng = numpy_rng(seed, "fault-campaign")
        users = [UserId.parse(f"C{i}") for i in range(n_c)] + [UserId.parse(f"P{j}") for j in range(n_p)]
        faults = []
        for cycle in sorted(rng.choice(cycles, size=count, replace=False).tolist()):
            magnitude = int(rng.integers(1, 101))
            sign = 1 if rng.random() < 0.5 else -1
            faults.append(Fault(
                cycle=int(cycle),
                user=users[int(rng.integers(len(users)))],
                kind=FaultKind(kinds[int(rng.integers(len(kinds)))]),
                delta=sign * magnitude,
            ))
        return cls(tuple(faults))
