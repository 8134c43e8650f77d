"""
Household Agents

Each household holds the supplier's public key, its own ciphertexts and
those of its matched users. It computes deviations and statements for
itself and its matches, sums a role's deviations when selected as
aggregator, and answers the referee's data requests. Scheduled faults are
applied here, with a separate random stream so honest data stays
bit-identical between honest and faulted runs.
"""

import logging
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple

from src.billing.billing import TotalDeviations, individual_deviation, settle_statement, total_deviation
from src.crypto.he_core import Ciphertext, PublicKey, add, encrypt, serialize
from src.ledger.hash_ledger import HashLedger, LedgerTag
from src.market.market_model import PriceSchedule, Role, UserId
from src.simulation.faults import Fault, FaultKind
from src.utils.exceptions import KeyMismatchError
from src.utils.rng import RandomStream

logger = logging.getLogger(__name__)

Volumes = Tuple[Optional[Ciphertext], Optional[Ciphertext]]


class Household:
    """
    A consumer or prosumer taking part in the billing protocol

    Attributes:
        user: Identity of the household
        rejected: Number of received ciphertexts that failed ledger verification
        applied: Faults that took effect in the current cycle
    """

    def __init__(self, user: UserId, pk: PublicKey, ledger: HashLedger, seed: Optional[int] = None):
        self.user = user
        self.pk = pk
        self.ledger = ledger
        self.rejected = 0
        self.applied: Set[Fault] = set()
        self._fault_stream = RandomStream(seed, "faults", pk.fingerprint, str(user))
        self._inbox: Dict[Tuple[UserId, int, LedgerTag], Ciphertext] = {}
        self._faults: Dict[FaultKind, Fault] = {}
        self._forged: Dict[int, Ciphertext] = {}
        self._cycle = -1

    def begin_cycle(self, cycle: int, faults: Iterable[Fault] = ()) -> None:
        """Forget earlier cycles and arm this cycle's faults"""
        self._cycle = cycle
        self.applied = set()
        self._inbox = {key: ct for key, ct in self._inbox.items() if key[1] >= cycle}
        self._forged = {c: ct for c, ct in self._forged.items() if c >= cycle}
        self._faults = {fault.kind: fault for fault in faults if fault.user == self.user and fault.cycle == cycle}

    def receive(self, subject: UserId, cycle: int, tag: LedgerTag, ct: Ciphertext) -> bool:
        """Store a delivered ciphertext if it matches its ledger commitment"""
        try:
            ok = self.ledger.verify(str(subject), cycle, tag, serialize(self.pk, ct))
        except KeyMismatchError:
            ok = False
        if not ok:
            self.rejected += 1
            logger.warning(f"{self.user}: received {tag.value} of {subject} for cycle {cycle} fails ledger verification")
            return False
        self._inbox[(subject, cycle, tag)] = ct
        return True

    def holds(self, subject: UserId, cycle: int, tag: LedgerTag) -> bool:
        return (subject, cycle, tag) in self._inbox

    def _fault(self, kind: FaultKind) -> Optional[Fault]:
        return self._faults.get(kind)

    def _perturb(self, ct: Ciphertext, fault: Fault) -> Ciphertext:
        self.applied.add(fault)
        return add(self.pk, ct, encrypt(self.pk, fault.delta, self._fault_stream))

    def _withholding(self) -> bool:
        fault = self._fault(FaultKind.WITHHOLD_REPORT)
        if fault is not None:
            self.applied.add(fault)
            return True
        return False

    def _real_volume(self, subject: UserId, cycle: int) -> Ciphertext:
        real_ct = self._inbox[(subject, cycle, LedgerTag.REAL_VOLUME)]
        fault = self._fault(FaultKind.SUBSTITUTE_DATA)
        if subject != self.user or fault is None:
            return real_ct
        if cycle not in self._forged:
            self._forged[cycle] = self._perturb(real_ct, fault)
        return self._forged[cycle]

    def compute_deviations(self, cycle: int, subjects: Sequence[UserId]) -> Dict[UserId, Optional[Ciphertext]]:
        """
        Individual deviations of the given subjects (itself and its matches)

        Returns:
            Subject -> encrypted deviation, or None for every subject when
            the household withholds its reports
        """
        if self._withholding():
            return {subject: None for subject in subjects}

        fault = self._fault(FaultKind.CORRUPT_INDEV)
        reports = {}
        for subject in subjects:
            p2p_ct = self._inbox[(subject, cycle, LedgerTag.P2P_VOLUME)]
            dev_ct = individual_deviation(self._real_volume(subject, cycle), p2p_ct, self.pk)
            reports[subject] = dev_ct if fault is None else self._perturb(dev_ct, fault)
        return reports

    def aggregate(self, cycle: int, role: Role, members: Sequence[UserId]) -> Optional[Ciphertext]:
        """Encrypted total deviation of one role, computed as a selected aggregator"""
        if self._withholding():
            return None

        total_ct = total_deviation(
            [self._inbox[(member, cycle, LedgerTag.IN_DEV)] for member in sorted(members)], self.pk
        )
        fault = self._fault(FaultKind.CORRUPT_TOTAL)
        if fault is not None:
            logger.debug(f"{self.user}: corrupting {role.name.lower()} total of cycle {cycle}")
            total_ct = self._perturb(total_ct, fault)
        return total_ct

    def compute_statements(
        self,
        cycle: int,
        subjects: Sequence[UserId],
        totals: TotalDeviations,
        prices: PriceSchedule
    ) -> Dict[UserId, Optional[Ciphertext]]:
        """Cycle statements of the given subjects from the verified deviations"""
        if self._withholding():
            return {subject: None for subject in subjects}

        fault = self._fault(FaultKind.CORRUPT_STATEMENT)
        reports = {}
        for subject in subjects:
            stat_ct = settle_statement(
                subject,
                self._inbox[(subject, cycle, LedgerTag.P2P_VOLUME)],
                self._inbox[(subject, cycle, LedgerTag.IN_DEV)],
                totals,
                prices,
                self.pk,
            )
            reports[subject] = stat_ct if fault is None else self._perturb(stat_ct, fault)
        return reports

    def submit_volumes(self, subject: UserId, cycle: int) -> Volumes:
        """Hand the referee the committed and metered ciphertexts of a subject"""
        p2p_ct = self._inbox.get((subject, cycle, LedgerTag.P2P_VOLUME))
        if (subject, cycle, LedgerTag.REAL_VOLUME) not in self._inbox:
            return p2p_ct, None
        return p2p_ct, self._real_volume(subject, cycle)


class MessageRouter:
    """
    In-memory delivery between entities

    Channels are assumed secure and authentic; the router only counts
    traffic.
    """

    def __init__(self, households: Mapping[UserId, Household]):
        self.households = households
        self.delivered = 0
        self.rejected = 0

    def deliver(self, recipient: UserId, subject: UserId, cycle: int, tag: LedgerTag, ct: Ciphertext) -> None:
        self.delivered += 1
        if not self.households[recipient].receive(subject, cycle, tag, ct):
            self.rejected += 1

    def broadcast(self, recipients: Iterable[UserId], subject: UserId, cycle: int, tag: LedgerTag, ct: Ciphertext):
        for recipient in recipients:
            self.deliver(recipient, subject, cycle, tag, ct)

    def applied_faults(self) -> List[Fault]:
        return sorted(fault for household in self.households.values() for fault in household.applied)
