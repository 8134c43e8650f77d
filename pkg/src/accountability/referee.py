"""
Referee Verification and Dispute Resolution

The referee cross-checks every value a matched pair computes about each
other, using the supplier to decrypt homomorphic differences (zero-checks).
When two reports disagree or a report is missing, it requests the raw
encrypted volumes from both parties, checks them against the ledger,
recomputes the disputed value itself and names whoever submitted a wrong
value, withheld a report, or handed over data that does not match its
ledger commitment.

Decrypted differences never leave this module; only booleans are logged.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, List, Mapping, Optional, Protocol, Sequence, Set, Tuple

from src.billing.billing import (
    TotalDeviations,
    individual_deviation,
    is_degenerate_surplus,
    settle_statement,
    supplier_balance,
    total_deviation,
)
from src.crypto.he_core import Ciphertext, serialize, sub
from src.ledger.hash_ledger import HashLedger, LedgerTag
from src.market.market_model import REFEREE_ID, SUPPLIER_ID, SYSTEM_ID, PriceSchedule, Role, UserId
from src.settlement.supplier import SupplierService
from src.utils.exceptions import DataValidationError, KeyMismatchError

logger = logging.getLogger(__name__)

Volumes = Tuple[Optional[Ciphertext], Optional[Ciphertext]]
Archive = Callable[[UserId, int], Volumes]


class ReportKind(str, Enum):
    IN_DEV = "IN_DEV"
    STATEMENT = "STATEMENT"
    TOTAL_DEV_C = "TOTAL_DEV_C"
    TOTAL_DEV_P = "TOTAL_DEV_P"


@dataclass(frozen=True)
class PairReport:
    """One party's encrypted result about a member of its pair"""

    subject: UserId
    reporter: UserId
    value_ct: Optional[Ciphertext]
    kind: ReportKind
    cycle: int

    @property
    def withheld(self) -> bool:
        return self.value_ct is None

    @property
    def is_self_report(self) -> bool:
        return self.subject == self.reporter


@dataclass(frozen=True)
class DisputeVerdict:
    """Outcome of a dispute: corrected values and who is to blame"""

    cycle: int
    kind: ReportKind
    pair: Tuple[str, ...]
    corrected: Dict[UserId, Ciphertext] = field(compare=False)
    responsible: Tuple[str, ...]
    penalty: int
    evidence: Tuple[int, ...]

    @property
    def is_false_alarm(self) -> bool:
        return self.responsible == (SYSTEM_ID,)

    @property
    def corrected_ct(self) -> Optional[Ciphertext]:
        if len(self.corrected) != 1:
            return None
        return next(iter(self.corrected.values()))

    def penalties(self) -> Dict[str, int]:
        """Penalty owed by each responsible user"""
        if self.is_false_alarm:
            return {}
        return {party: self.penalty for party in self.responsible}

    def to_line(self) -> str:
        return "|".join([
            str(self.cycle),
            self.kind.value,
            "-".join(self.pair),
            "+".join(self.responsible),
            str(self.penalty),
            ",".join(str(i) for i in self.evidence),
        ])


@dataclass(frozen=True)
class PairCheck:
    ok: bool
    accepted: Dict[UserId, Ciphertext]
    verdict: Optional[DisputeVerdict] = None


@dataclass(frozen=True)
class TotalsCheck:
    total: int
    ledger_index: int
    verdict: Optional[DisputeVerdict] = None


class VolumeSource(Protocol):
    """Anything that can hand the referee a subject's encrypted volumes"""

    def submit_volumes(self, subject: UserId, cycle: int) -> Volumes:
        ...


def zero_check(a_ct: Ciphertext, b_ct: Ciphertext, supplier: SupplierService) -> bool:
    """
    Equality test on two ciphertexts

    The supplier decrypts the homomorphic difference; only whether it is
    zero is returned.
    """
    difference = sub(supplier.public_key, a_ct, b_ct)
    equal = supplier.decrypt_difference(difference) == 0
    logger.debug(f"Zero-check result: {equal}")
    return equal


def _pair_label(pair: Sequence[UserId]) -> Tuple[str, ...]:
    return tuple(str(user) for user in pair)


class Referee:
    """
    Semi-honest referee of one billing period

    Keeps the accepted (verified or corrected) deviations and statements of
    the current cycle. Deviations are committed to the ledger once per user
    and cycle, the first time they are accepted.
    """

    def __init__(
        self,
        supplier: SupplierService,
        ledger: HashLedger,
        penalty: int = 0,
        archive: Optional[Archive] = None,
        pending: Optional[Set[Tuple[int, str, str]]] = None
    ):
        """
        Args:
            supplier: Decryption service of the period
            ledger: Period ledger
            penalty: Flat penalty per responsible party and verdict
            archive: Trusted copy of the published volumes, used only when
                no party submits data that matches the ledger
            pending: Shared set of disputes still being resolved
        """
        self.supplier = supplier
        self.ledger = ledger
        self.penalty = penalty
        self.archive = archive
        self.pending = pending if pending is not None else set()
        self._accepted: Dict[Tuple[ReportKind, int], Dict[UserId, Ciphertext]] = {}

    @property
    def pk(self):
        return self.supplier.public_key

    def begin_cycle(self, cycle: int) -> None:
        """Drop the accepted values of earlier cycles"""
        self._accepted = {key: values for key, values in self._accepted.items() if key[1] >= cycle}
        self._accepted.setdefault((ReportKind.IN_DEV, cycle), {})
        self._accepted.setdefault((ReportKind.STATEMENT, cycle), {})

    def _accepted_for(self, kind: ReportKind, cycle: int) -> Dict[UserId, Ciphertext]:
        return self._accepted.setdefault((kind, cycle), {})

    def accepted_deviations(self, cycle: int) -> Dict[UserId, Ciphertext]:
        return dict(self._accepted_for(ReportKind.IN_DEV, cycle))

    def accepted_statements(self, cycle: int) -> Dict[UserId, Ciphertext]:
        return dict(self._accepted_for(ReportKind.STATEMENT, cycle))

    def _zero_check(self, a_ct: Ciphertext, b_ct: Ciphertext) -> bool:
        return zero_check(a_ct, b_ct, self.supplier)

    # ------------------------------------------------------------------
    # Ledger-backed recomputation
    # ------------------------------------------------------------------

    def _matches_ledger(self, subject: UserId, cycle: int, tag: LedgerTag, ct: Optional[Ciphertext]) -> bool:
        if ct is None:
            return False
        try:
            return self.ledger.verify(str(subject), cycle, tag, serialize(self.pk, ct))
        except KeyMismatchError:
            return False

    def _verified_volumes(
        self,
        subject: UserId,
        cycle: int,
        parties: Mapping[UserId, VolumeSource],
        evidence: List[int]
    ) -> Tuple[Ciphertext, Ciphertext, Set[str]]:
        """Collect volumes from the parties and keep the first set matching the ledger"""
        evidence.append(self.ledger.get(str(subject), cycle, LedgerTag.P2P_VOLUME).index)
        evidence.append(self.ledger.get(str(subject), cycle, LedgerTag.REAL_VOLUME).index)

        verified = None
        faulty = set()
        for party in sorted(parties):
            p2p_ct, real_ct = parties[party].submit_volumes(subject, cycle)
            if (self._matches_ledger(subject, cycle, LedgerTag.P2P_VOLUME, p2p_ct)
                    and self._matches_ledger(subject, cycle, LedgerTag.REAL_VOLUME, real_ct)):
                verified = verified or (p2p_ct, real_ct)
            else:
                logger.warning(f"Cycle {cycle}: volumes of {subject} submitted by {party} fail ledger verification")
                faulty.add(str(party))

        if verified is None and self.archive is not None:
            p2p_ct, real_ct = self.archive(subject, cycle)
            if (self._matches_ledger(subject, cycle, LedgerTag.P2P_VOLUME, p2p_ct)
                    and self._matches_ledger(subject, cycle, LedgerTag.REAL_VOLUME, real_ct)):
                verified = (p2p_ct, real_ct)

        if verified is None:
            raise DataValidationError(f"Cycle {cycle}: no ledger-verified volumes available for {subject}")
        return verified[0], verified[1], faulty

    def published_totals(self, cycle: int, evidence: Optional[List[int]] = None) -> TotalDeviations:
        """Read Dev_C^Tot and Dev_P^Tot of a cycle from the ledger"""
        values = []
        for tag in (LedgerTag.TOTAL_DEV_C, LedgerTag.TOTAL_DEV_P):
            entry = self.ledger.get(SUPPLIER_ID, cycle, tag)
            if evidence is not None:
                evidence.append(entry.index)
            values.append(entry.public_value)
        return TotalDeviations(*values)

    def _recompute(
        self,
        kind: ReportKind,
        subject: UserId,
        cycle: int,
        p2p_ct: Ciphertext,
        real_ct: Ciphertext,
        prices: Optional[PriceSchedule],
        evidence: List[int]
    ) -> Ciphertext:
        if kind is ReportKind.IN_DEV:
            return individual_deviation(real_ct, p2p_ct, self.pk)

        in_dev_ct = self._accepted_for(ReportKind.IN_DEV, cycle).get(subject)
        if in_dev_ct is None or not self._matches_ledger(subject, cycle, LedgerTag.IN_DEV, in_dev_ct):
            raise DataValidationError(f"Cycle {cycle}: no verified deviation of {subject} to recompute from")
        evidence.append(self.ledger.get(str(subject), cycle, LedgerTag.IN_DEV).index)

        totals = self.published_totals(cycle, evidence)
        return settle_statement(subject, p2p_ct, in_dev_ct, totals, prices, self.pk)

    # ------------------------------------------------------------------
    # Disputes
    # ------------------------------------------------------------------

    def resolve_dispute(
        self,
        pair: Sequence[UserId],
        kind: ReportKind,
        cycle: int,
        reports: Sequence[PairReport],
        parties: Mapping[UserId, VolumeSource],
        prices: Optional[PriceSchedule] = None
    ) -> DisputeVerdict:
        """
        Recompute every disputed value and name the parties at fault

        Args:
            pair: The matched consumer and prosumer
            kind: IN_DEV or STATEMENT
            cycle: Settlement cycle
            reports: The reports under dispute
            parties: Data sources of the pair members
            prices: Price schedule of the cycle (statements only)

        Returns:
            DisputeVerdict naming SYSTEM when nobody was at fault
        """
        if kind is ReportKind.STATEMENT and prices is None:
            raise DataValidationError(f"Cycle {cycle}: statement disputes need the cycle's price schedule")

        label = _pair_label(pair)
        key = (cycle, kind.value, "-".join(label))
        self.pending.add(key)

        responsible: Set[str] = set()
        corrected: Dict[UserId, Ciphertext] = {}
        evidence: List[int] = []

        for subject in sorted({report.subject for report in reports}):
            p2p_ct, real_ct, faulty = self._verified_volumes(subject, cycle, parties, evidence)
            responsible |= faulty

            expected = self._recompute(kind, subject, cycle, p2p_ct, real_ct, prices, evidence)
            corrected[subject] = expected

            for report in reports:
                if report.subject != subject:
                    continue
                if report.withheld:
                    logger.warning(f"Cycle {cycle}: {report.reporter} withheld its {kind.value} report on {subject}")
                    responsible.add(str(report.reporter))
                elif not self._zero_check(report.value_ct, expected):
                    responsible.add(str(report.reporter))

        self.pending.discard(key)

        if responsible:
            named = tuple(sorted(responsible, key=UserId.parse))
            penalty = self.penalty
            logger.warning(f"Cycle {cycle} {kind.value} dispute on {'-'.join(label)}: responsible {'+'.join(named)}")
        else:
            named = (SYSTEM_ID,)
            penalty = 0
            logger.info(f"Cycle {cycle} {kind.value} dispute on {'-'.join(label)}: false alarm")

        return DisputeVerdict(
            cycle=cycle,
            kind=kind,
            pair=label,
            corrected=corrected,
            responsible=named,
            penalty=penalty,
            evidence=tuple(sorted(set(evidence))),
        )

    def _verify_pair(
        self,
        kind: ReportKind,
        pair: Sequence[UserId],
        cycle: int,
        reports: Sequence[PairReport],
        parties: Mapping[UserId, VolumeSource],
        prices: Optional[PriceSchedule] = None
    ) -> PairCheck:
        members = set(pair)
        for report in reports:
            if report.subject not in members or report.reporter not in members:
                raise DataValidationError(f"Report on {report.subject} by {report.reporter} is outside pair {pair}")
            if report.kind is not kind or report.cycle != cycle:
                raise DataValidationError(f"Expected {kind.value} reports for cycle {cycle}")

        accepted = self._accepted_for(kind, cycle)
        # A subject already settled through an earlier pair is only checked on the cross report
        reports = [r for r in reports if not (r.is_self_report and r.subject in accepted)]

        # Reports that never arrived count as withheld
        seen = {(r.subject, r.reporter) for r in reports}
        for subject in pair:
            for reporter in pair:
                if reporter == subject and subject in accepted:
                    continue
                if (subject, reporter) not in seen:
                    reports.append(PairReport(subject, reporter, None, kind, cycle))

        agree = True
        for subject in pair:
            subject_reports = [r for r in reports if r.subject == subject]
            if subject in accepted:
                reference = accepted[subject]
            else:
                own = [r for r in subject_reports if r.is_self_report]
                if not own or own[0].withheld:
                    agree = False
                    continue
                reference = own[0].value_ct
            cross = [r for r in subject_reports if not r.is_self_report]
            if not cross or any(r.withheld or not self._zero_check(r.value_ct, reference) for r in cross):
                agree = False

        verdict = None
        if not agree:
            verdict = self.resolve_dispute(pair, kind, cycle, reports, parties, prices)

        settled = {}
        for subject in pair:
            if subject in accepted:
                settled[subject] = accepted[subject]
                continue
            if verdict is not None:
                value = verdict.corrected[subject]
            else:
                value = next(r.value_ct for r in reports if r.subject == subject and r.is_self_report)
            accepted[subject] = value
            settled[subject] = value
            if kind is ReportKind.IN_DEV:
                self.ledger.append(str(subject), cycle, LedgerTag.IN_DEV, serialize(self.pk, value))

        return PairCheck(ok=verdict is None, accepted=settled, verdict=verdict)

    def verify_pair_indev(
        self,
        pair: Sequence[UserId],
        cycle: int,
        reports: Sequence[PairReport],
        parties: Mapping[UserId, VolumeSource]
    ) -> PairCheck:
        """
        Cross-check the individual deviations of a matched pair

        Each member reports its own deviation and its match's. When every
        cross report equals the corresponding self report, the deviations
        are accepted and committed (IN_DEV). Otherwise the dispute is
        resolved and the corrected values are committed instead.
        """
        return self._verify_pair(ReportKind.IN_DEV, pair, cycle, reports, parties)

    def verify_pair_statements(
        self,
        pair: Sequence[UserId],
        cycle: int,
        reports: Sequence[PairReport],
        parties: Mapping[UserId, VolumeSource],
        prices: PriceSchedule
    ) -> PairCheck:
        """Cross-check the cycle statements of a matched pair"""
        return self._verify_pair(ReportKind.STATEMENT, pair, cycle, reports, parties, prices)

    # ------------------------------------------------------------------
    # Totals and balance
    # ------------------------------------------------------------------

    def _recompute_total(self, role: Role, cycle: int, evidence: List[int]) -> Ciphertext:
        deviations = {
            user: ct for user, ct in self._accepted_for(ReportKind.IN_DEV, cycle).items() if user.role is role
        }
        for user in sorted(deviations):
            if not self._matches_ledger(user, cycle, LedgerTag.IN_DEV, deviations[user]):
                raise DataValidationError(f"Cycle {cycle}: accepted deviation of {user} no longer matches the ledger")
            evidence.append(self.ledger.get(str(user), cycle, LedgerTag.IN_DEV).index)
        return total_deviation([deviations[user] for user in sorted(deviations)], self.pk)

    def verify_totals(
        self,
        candidates: Mapping[UserId, Optional[Ciphertext]],
        role: Role,
        cycle: int
    ) -> TotalsCheck:
        """
        Verify the aggregators' total deviation for one role and publish it

        Candidates are zero-checked pairwise. Unless at least two agree and
        none is missing, the referee recomputes the sum from the committed
        deviations and blames every aggregator whose candidate differs.
        """
        tag = LedgerTag.TOTAL_DEV_C if role is Role.CONSUMER else LedgerTag.TOTAL_DEV_P
        kind = ReportKind(tag.value)
        aggregators = sorted(candidates)
        values = [candidates[a] for a in aggregators]

        unanimous = (
            len(values) >= 2
            and all(v is not None for v in values)
            and all(self._zero_check(values[0], v) for v in values[1:])
        )

        verdict = None
        if unanimous:
            verified = values[0]
        else:
            evidence: List[int] = []
            verified = self._recompute_total(role, cycle, evidence)
            deviating = [
                a for a in aggregators
                if candidates[a] is None or not self._zero_check(candidates[a], verified)
            ]
            if deviating:
                verdict = DisputeVerdict(
                    cycle=cycle,
                    kind=kind,
                    pair=_pair_label(aggregators),
                    corrected={},
                    responsible=_pair_label(deviating),
                    penalty=self.penalty,
                    evidence=tuple(sorted(evidence)),
                )
                logger.warning(
                    f"Cycle {cycle} {kind.value}: aggregators {'+'.join(verdict.responsible)} "
                    f"disagree with the recomputed total"
                )

        total = self.supplier.decrypt_total(verified)
        index = self.ledger.publish_plaintext(tag, cycle, total)
        return TotalsCheck(total=total, ledger_index=index, verdict=verdict)

    def publish_balance(self, cycle: int, prices: PriceSchedule) -> int:
        """Compute the cycle's supplier balance from the published totals and publish it"""
        totals = self.published_totals(cycle)
        if is_degenerate_surplus(totals):
            logger.warning(f"Cycle {cycle}: surplus with Dev_P^Tot = 0, TotRev_P booked to the supplier")
        balance = supplier_balance(totals.dev_c_tot, totals.dev_p_tot, prices)
        self.ledger.publish_plaintext(LedgerTag.SUPPLIER_BALANCE, cycle, balance, user_id=REFEREE_ID)
        return balance
