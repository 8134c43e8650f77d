"""
Billing Period Orchestrator

Runs one billing month end to end: key rotation, matching, the per-cycle
protocol steps (publish, meter, individual deviations, totals, statements,
supplier balance) and finalization. Phases are strict barriers; per-user
work inside a phase may run on a thread pool without changing results.
"""

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, TypeVar

import pandas as pd

from src.accountability.referee import DisputeVerdict, PairReport, Referee, ReportKind
from src.billing.billing import BillingMode, StatementLedger, TotalDeviations, is_degenerate_surplus
from src.crypto.he_core import Ciphertext
from src.ledger.hash_ledger import HashLedger, LedgerTag
from src.market.market_model import (
    SUPPLIER_ID,
    CycleInput,
    Role,
    UserId,
    load_profiles,
    meter_read,
    synthesize_profiles,
    tp_publish,
)
from src.market.matching import MatchMap, match_users, select_aggregators
from src.settlement.supplier import (
    PeriodClose,
    PeriodState,
    SupplierService,
    accumulate_supplier_balance,
    finalize_period,
    rotate_keys,
)
from src.simulation.config import SimConfig
from src.simulation.faults import Fault
from src.simulation.household import Household, MessageRouter, Volumes
from src.utils.exceptions import ConfigurationError, LifecycleError
from src.utils.rng import RandomStream

logger = logging.getLogger(__name__)

PHASES = ("publish", "meter", "individual_deviations", "total_deviations", "bills_and_revenues", "balance")
TIMED_PHASES = ("individual_deviations", "total_deviations", "bills_and_revenues")

T = TypeVar("T")


def logical_tick(cycle: int, phase: str) -> int:
    """Ledger timestamp of a protocol phase"""
    return cycle * len(PHASES) + PHASES.index(phase)


@dataclass
class CycleOutcome:
    cycle: int
    totals: TotalDeviations
    supplier_balance: int
    verdicts: List[DisputeVerdict] = field(default_factory=list)
    faults: List[Fault] = field(default_factory=list)
    timings: Dict[str, float] = field(default_factory=dict)
    flags: List[str] = field(default_factory=list)

    @property
    def mode(self) -> BillingMode:
        return self.totals.mode


@dataclass
class RunReport:
    """Everything a billing period produced"""

    config: SimConfig
    period_id: int
    key_fingerprint: str
    n_c: int
    n_p: int
    match_map: MatchMap
    outcomes: List[CycleOutcome]
    close: PeriodClose
    penalties: Dict[UserId, int]
    residual: int
    rounding_bound: int
    ledger: HashLedger
    rejected_deliveries: int = 0
    ledger_path: Optional[Path] = None

    @property
    def cycles(self) -> int:
        return len(self.outcomes)

    @property
    def verdicts(self) -> List[DisputeVerdict]:
        return [verdict for outcome in self.outcomes for verdict in outcome.verdicts]

    @property
    def dispute_count(self) -> int:
        return len(self.verdicts)

    @property
    def faults(self) -> List[Fault]:
        return [fault for outcome in self.outcomes for fault in outcome.faults]

    @property
    def flags(self) -> List[str]:
        return [f"cycle {outcome.cycle}: {flag}" for outcome in self.outcomes for flag in outcome.flags]

    @property
    def supplier_balance(self) -> int:
        return self.close.balance.amount

    @property
    def conservation_ok(self) -> bool:
        return abs(self.residual) <= self.rounding_bound

    def final_amounts(self) -> Dict[UserId, int]:
        return {statement.user: statement.amount for statement in self.close.statements}

    def amounts_before_penalties(self) -> Dict[UserId, int]:
        """Final amounts with the penalty adjustment undone"""
        return {
            s.user: s.amount - s.penalty if s.user.is_consumer else s.amount + s.penalty
            for s in self.close.statements
        }

    def final_lines(self) -> List[str]:
        return self.close.lines()

    def mode_counts(self) -> Dict[str, int]:
        counts = {mode.value: 0 for mode in BillingMode}
        for outcome in self.outcomes:
            counts[outcome.mode.value] += 1
        return counts

    def verdict_users(self, cycle: Optional[int] = None) -> List[str]:
        """Users named responsible, optionally for one cycle"""
        named = {
            party
            for verdict in self.verdicts
            if cycle is None or verdict.cycle == cycle
            for party in verdict.penalties()
        }
        return sorted(named)

    def timings_frame(self) -> pd.DataFrame:
        """Per-cycle wall-clock seconds of the timed phases"""
        records = [{"cycle": outcome.cycle, **outcome.timings} for outcome in self.outcomes]
        return pd.DataFrame.from_records(records, columns=["cycle", *TIMED_PHASES]).set_index("cycle")

    def mean_timings_ms(self) -> pd.Series:
        return self.timings_frame().mean() * 1000.0


@dataclass
class World:
    """Entities and mutable state of an open billing period"""

    state: PeriodState
    supplier: SupplierService
    ledger: HashLedger
    match_map: MatchMap
    statements: StatementLedger
    referee: Referee
    households: Dict[UserId, Household]
    router: MessageRouter
    stream: RandomStream
    consumer_ids: List[UserId]
    prosumer_ids: List[UserId]
    archive: Dict[Tuple[UserId, int], Volumes] = field(default_factory=dict)
    penalties: Dict[UserId, int] = field(default_factory=dict)
    outcomes: List[CycleOutcome] = field(default_factory=list)

    @property
    def users(self) -> List[UserId]:
        return self.consumer_ids + self.prosumer_ids

    def archived_volumes(self, subject: UserId, cycle: int) -> Volumes:
        return self.archive.get((subject, cycle), (None, None))


class Simulator:
    """
    Multi-entity simulation of one billing period

    Example:
        >>> config = SimConfig(n_c=2, n_p=2, cycles=24, key_bits=1024, seed=7)
        >>> report = Simulator(config).run_period()
        >>> report.dispute_count
        0
    """

    def __init__(self, config: SimConfig, inputs: Optional[Sequence[CycleInput]] = None):
        self.config = config
        self._inputs = list(inputs) if inputs is not None else None
        self.world: Optional[World] = None

    def load_inputs(self) -> List[CycleInput]:
        """Profiles from PROFILE_PATH, or synthesized from the config"""
        if self._inputs is None:
            if self.config.profile_path is not None:
                self._inputs = load_profiles(self.config.profile_path)
            else:
                self._inputs = synthesize_profiles(
                    self.config.n_c,
                    self.config.n_p,
                    self.config.cycles,
                    self.config.seed,
                    self.config.deviation_ratio,
                )
        if not self._inputs:
            raise ConfigurationError("No settlement cycles to simulate")
        return self._inputs

    def _per_user(self, fn: Callable[[UserId], T], users: Sequence[UserId]) -> Dict[UserId, T]:
        if self.config.workers <= 1:
            return {user: fn(user) for user in users}
        with ThreadPoolExecutor(max_workers=self.config.workers) as executor:
            return dict(zip(users, executor.map(fn, users)))

    def open_period(self, inputs: Sequence[CycleInput]) -> World:
        """Generate the month's keys, match users and set up every entity"""
        first = inputs[0]
        consumer_ids, prosumer_ids = first.consumer_ids, first.prosumer_ids
        self.config.fault_plan.validate_for(len(consumer_ids), len(prosumer_ids), len(inputs))

        config = self.config
        state = rotate_keys(config.period_id, config.key_bits, seed=config.seed)
        supplier = SupplierService(state.keys)
        pk = supplier.public_key
        ledger = HashLedger(config.period_id)
        match_map = match_users(consumer_ids, prosumer_ids, config.seed, config.period_id)
        statements = StatementLedger.open(pk, consumer_ids + prosumer_ids)

        households = {user: Household(user, pk, ledger, config.seed) for user in consumer_ids + prosumer_ids}
        world = World(
            state=state,
            supplier=supplier,
            ledger=ledger,
            match_map=match_map,
            statements=statements,
            referee=None,
            households=households,
            router=MessageRouter(households),
            stream=RandomStream(config.seed, "encryption", config.period_id),
            consumer_ids=consumer_ids,
            prosumer_ids=prosumer_ids,
        )
        world.referee = Referee(
            supplier,
            ledger,
            penalty=config.penalty,
            archive=world.archived_volumes,
            pending=statements.pending_disputes,
        )
        self.world = world
        logger.info(
            f"Period {config.period_id}: {len(consumer_ids)} consumers, {len(prosumer_ids)} prosumers, "
            f"{len(inputs)} cycles, fault plan '{config.fault_plan.to_text() or 'none'}'"
        )
        return world

    def _pair_reports(
        self,
        pair: Tuple[UserId, UserId],
        results: Dict[UserId, Dict[UserId, Optional[Ciphertext]]],
        kind: ReportKind,
        cycle: int
    ) -> List[PairReport]:
        return [
            PairReport(subject, reporter, results[reporter].get(subject), kind, cycle)
            for subject in pair
            for reporter in pair
        ]

    def run_cycle(self, cycle_input: CycleInput) -> CycleOutcome:
        """
        Execute the protocol steps of one settlement cycle

        Args:
            cycle_input: Ground-truth volumes of the cycle

        Returns:
            CycleOutcome with published totals, supplier balance, verdicts,
            applied faults and phase timings
        """
        w = self.world
        if w is None:
            raise LifecycleError("Open a period before running cycles")
        if w.state.finalized:
            raise LifecycleError(f"Period {w.state.period_id} is finalized")

        cycle = cycle_input.cycle
        prices = cycle_input.prices or self.config.prices
        pk = w.supplier.public_key
        users = w.users
        matches = w.match_map.matches

        def parties(pair):
            return {user: w.households[user] for user in pair}

        faults = self.config.fault_plan.for_cycle(cycle, users)
        for household in w.households.values():
            household.begin_cycle(cycle, faults)
        w.referee.begin_cycle(cycle)
        verdicts: List[DisputeVerdict] = []
        timings: Dict[str, float] = {}

        # Trading platform and smart meters
        w.ledger.set_clock(logical_tick(cycle, "publish"))
        committed = tp_publish(cycle_input, pk, w.ledger, w.match_map, prices, w.stream, w.router.deliver)
        w.ledger.set_clock(logical_tick(cycle, "meter"))
        metered = meter_read(cycle_input, pk, w.ledger, w.match_map, w.stream, w.router.deliver)
        w.archive = {(user, cycle): (committed[user].v_p2p_ct, metered[user].v_real_ct) for user in users}

        # Individual deviations, cross-checked per matched pair
        start = time.perf_counter()
        w.ledger.set_clock(logical_tick(cycle, "individual_deviations"))
        deviations = self._per_user(
            lambda user: w.households[user].compute_deviations(cycle, [user, *matches(user)]), users
        )
        for pair in w.match_map.pairs():
            check = w.referee.verify_pair_indev(
                pair, cycle, self._pair_reports(pair, deviations, ReportKind.IN_DEV, cycle), parties(pair)
            )
            if check.verdict is not None:
                verdicts.append(check.verdict)
        accepted = w.referee.accepted_deviations(cycle)
        for subject in sorted(accepted):
            w.router.broadcast([subject, *matches(subject)], subject, cycle, LedgerTag.IN_DEV, accepted[subject])
        timings["individual_deviations"] = time.perf_counter() - start

        # Total deviations by the selected aggregators
        start = time.perf_counter()
        w.ledger.set_clock(logical_tick(cycle, "total_deviations"))
        aggregators = select_aggregators(w.consumer_ids, w.prosumer_ids, cycle, self.config.seed)
        # each role's total is summed by the selected users of the other role
        for role, members, population in (
            (Role.CONSUMER, aggregators.prosumers, w.consumer_ids),
            (Role.PROSUMER, aggregators.consumers, w.prosumer_ids),
        ):
            for aggregator in members:
                for subject in population:
                    w.router.deliver(aggregator, subject, cycle, LedgerTag.IN_DEV, accepted[subject])
            candidates = {a: w.households[a].aggregate(cycle, role, population) for a in members}
            check = w.referee.verify_totals(candidates, role, cycle)
            if check.verdict is not None:
                verdicts.append(check.verdict)
        totals = TotalDeviations(
            w.ledger.read_public(LedgerTag.TOTAL_DEV_C, cycle, SUPPLIER_ID),
            w.ledger.read_public(LedgerTag.TOTAL_DEV_P, cycle, SUPPLIER_ID),
        )
        timings["total_deviations"] = time.perf_counter() - start

        # Bills and revenues, cross-checked per matched pair
        start = time.perf_counter()
        w.ledger.set_clock(logical_tick(cycle, "bills_and_revenues"))
        statements = self._per_user(
            lambda user: w.households[user].compute_statements(cycle, [user, *matches(user)], totals, prices),
            users,
        )
        for pair in w.match_map.pairs():
            check = w.referee.verify_pair_statements(
                pair,
                cycle,
                self._pair_reports(pair, statements, ReportKind.STATEMENT, cycle),
                parties(pair),
                prices,
            )
            if check.verdict is not None:
                verdicts.append(check.verdict)
        settled = w.referee.accepted_statements(cycle)
        for user in sorted(settled):
            w.statements.accumulate(user, settled[user])
        timings["bills_and_revenues"] = time.perf_counter() - start

        # Supplier balance
        w.ledger.set_clock(logical_tick(cycle, "balance"))
        balance = w.referee.publish_balance(cycle, prices)
        w.state = accumulate_supplier_balance(w.state, balance)

        flags = []
        if is_degenerate_surplus(totals):
            flags.append("degenerate surplus, TotRev_P booked to supplier")
        if totals.mode is BillingMode.SURPLUS and totals.dev_c_tot < 0:
            flags.append("surplus with negative consumer total deviation")

        for verdict in verdicts:
            for party, amount in verdict.penalties().items():
                user = UserId.parse(party)
                w.penalties[user] = w.penalties.get(user, 0) + amount

        outcome = CycleOutcome(
            cycle=cycle,
            totals=totals,
            supplier_balance=balance,
            verdicts=verdicts,
            faults=w.router.applied_faults(),
            timings=timings,
            flags=flags,
        )
        w.outcomes.append(outcome)
        logger.debug(
            f"Cycle {cycle}: {totals.mode.value} (Dev_C={totals.dev_c_tot}, Dev_P={totals.dev_p_tot}), "
            f"balance {balance}, {len(verdicts)} verdicts"
        )
        return outcome

    def _rounding_bound(self, inputs: Sequence[CycleInput]) -> int:
        """Largest conservation residual the rounded surplus share can cause"""
        bound = 0
        for cycle_input, outcome in zip(inputs, self.world.outcomes):
            if outcome.mode is BillingMode.SURPLUS and not is_degenerate_surplus(outcome.totals):
                spread = sum(abs(cycle_input.deviation(user)) for user in cycle_input.prosumer_ids)
                bound += (spread + 1) // 2
        return bound

    def close_period(self) -> RunReport:
        """Finalize the period and assemble the run report"""
        w = self.world
        if w is None:
            raise LifecycleError("No open period to close")

        w.ledger.set_clock(len(w.outcomes) * len(PHASES))
        close = finalize_period(
            w.state, w.statements, w.ledger, w.supplier, w.penalties, self.config.penalty_sink
        )
        w.state = close.state

        consumer_total = sum(s.amount for s in close.statements if s.user.is_consumer)
        prosumer_total = sum(s.amount for s in close.statements if not s.user.is_consumer)
        burned = sum(w.penalties.values()) if self.config.penalty_sink == "burn" else 0
        residual = consumer_total - prosumer_total - close.balance.amount - burned

        report = RunReport(
            config=self.config,
            period_id=close.state.period_id,
            key_fingerprint=close.state.keys.fingerprint,
            n_c=len(w.consumer_ids),
            n_p=len(w.prosumer_ids),
            match_map=w.match_map,
            outcomes=list(w.outcomes),
            close=close,
            penalties=dict(sorted(w.penalties.items())),
            residual=residual,
            rounding_bound=self._rounding_bound(self._inputs or []),
            ledger=w.ledger,
            rejected_deliveries=w.router.rejected,
        )
        if not report.conservation_ok:
            logger.warning(f"Conservation residual {residual} exceeds rounding bound {report.rounding_bound}")
        logger.info(
            f"Period {report.period_id} closed: {report.cycles} cycles, {report.dispute_count} disputes, "
            f"supplier balance {report.supplier_balance}, residual {residual}"
        )
        return report

    def run_period(self) -> RunReport:
        """Key generation, matching, every cycle, finalization"""
        inputs = self.load_inputs()
        self.open_period(inputs)
        for cycle_input in inputs:
            self.run_cycle(cycle_input)
        return self.close_period()


def run_period(config: SimConfig, inputs: Optional[Sequence[CycleInput]] = None) -> RunReport:
    return Simulator(config, inputs).run_period()
