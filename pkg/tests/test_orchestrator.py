"""
End-to-end tests of a simulated billing period
"""

import pytest

from src.accountability.referee import ReportKind
from src.billing.oracle import BillingOracle
from src.crypto.he_core import serialize
from src.ledger.hash_ledger import PERIOD_SCOPE, HashLedger, LedgerTag
from src.market.market_model import CycleInput, Role, UserId, synthesize_profiles, write_profiles
from src.settlement.supplier import verify_final_report
from src.simulation.config import SimConfig
from src.simulation.faults import FaultPlan
from src.simulation.orchestrator import PHASES, TIMED_PHASES, Simulator, logical_tick, run_period
from src.simulation.report import format_report
from src.utils.exceptions import LifecycleError

CYCLES = 8
C0, C1 = UserId(Role.CONSUMER, 0), UserId(Role.CONSUMER, 1)
P0, P1 = UserId(Role.PROSUMER, 0), UserId(Role.PROSUMER, 1)


def small_config(**overrides) -> SimConfig:
    fields = dict(n_c=2, n_p=2, cycles=CYCLES, key_bits=1024, seed=7, deviation_ratio=0.2)
    fields.update(overrides)
    return SimConfig(**fields)


@pytest.fixture(scope="module")
def honest():
    return run_period(small_config())


@pytest.fixture(scope="module")
def saturated():
    return run_period(small_config(fault_plan="SATURATED"))


def test_honest_run_has_no_disputes(honest):
    assert honest.dispute_count == 0
    assert honest.faults == []
    assert honest.penalties == {}
    assert honest.cycles == CYCLES
    assert honest.rejected_deliveries == 0


def test_honest_finals_match_plaintext_oracle(honest):
    inputs = synthesize_profiles(2, 2, CYCLES, seed=7, deviation_ratio=0.2)
    oracle = BillingOracle(honest.config.prices).run(inputs)

    assert honest.final_amounts() == oracle.final_amounts()
    assert honest.supplier_balance == oracle.supplier_balance_tot
    assert honest.final_lines() == oracle.final_lines()


def test_honest_run_conserves_money(honest):
    assert honest.conservation_ok
    assert abs(honest.residual) <= honest.rounding_bound


def test_ledger_holds_every_commitment(honest):
    ledger = honest.ledger
    assert ledger.snapshot().is_valid()
    for cycle in range(CYCLES):
        assert ledger.count(LedgerTag.P2P_PRICE, cycle) == 1
        assert ledger.count(LedgerTag.P2P_VOLUME, cycle) == 4
        assert ledger.count(LedgerTag.REAL_VOLUME, cycle) == 4
        assert ledger.count(LedgerTag.IN_DEV, cycle) == 4
        assert ledger.count(LedgerTag.TOTAL_DEV_C, cycle) == 1
        assert ledger.count(LedgerTag.TOTAL_DEV_P, cycle) == 1
        assert ledger.count(LedgerTag.SUPPLIER_BALANCE, cycle) == 1
    assert ledger.count(LedgerTag.FINAL_STATEMENT, PERIOD_SCOPE) == 4
    assert len(ledger) == 16 * CYCLES + 5


def test_final_report_matches_ledger(honest):
    assert verify_final_report(honest.ledger, honest.final_lines()) == []


def test_ledger_timestamps_follow_phases(honest):
    entry = honest.ledger.get("SUPPLIER", 3, LedgerTag.TOTAL_DEV_C)
    assert entry.timestamp == logical_tick(3, "total_deviations")
    assert honest.ledger.get("C0", PERIOD_SCOPE, LedgerTag.FINAL_STATEMENT).timestamp == CYCLES * len(PHASES)


def test_mode_counts_and_timings(honest):
    assert sum(honest.mode_counts().values()) == CYCLES
    frame = honest.timings_frame()
    assert list(frame.columns) == list(TIMED_PHASES)
    assert len(frame) == CYCLES
    assert (frame >= 0).all().all()


def test_corrupt_indev_gives_one_verdict(honest):
    report = run_period(small_config(fault_plan="5:C1:CORRUPT_INDEV"))

    assert report.dispute_count == 1
    verdict = report.verdicts[0]
    assert (verdict.cycle, verdict.kind, verdict.responsible) == (5, ReportKind.IN_DEV, ("C1",))
    assert report.verdict_users(5) == ["C1"]
    assert report.penalties == {C1: 1000}
    assert report.amounts_before_penalties() == honest.final_amounts()
    assert report.final_amounts()[C1] == honest.final_amounts()[C1] + 1000
    assert report.conservation_ok


def test_corrupt_statement_is_corrected(honest):
    report = run_period(small_config(fault_plan="2:P1:CORRUPT_STATEMENT:-100"))

    assert [v.kind for v in report.verdicts] == [ReportKind.STATEMENT]
    assert report.verdict_users() == ["P1"]
    assert report.final_amounts()[P1] == honest.final_amounts()[P1] - 1000
    assert report.amounts_before_penalties() == honest.final_amounts()


def test_substituted_meter_data_is_caught(honest):
    report = run_period(small_config(fault_plan="4:C0:SUBSTITUTE_DATA:25"))

    assert report.verdict_users() == ["C0"]
    assert report.amounts_before_penalties() == honest.final_amounts()


def test_withheld_reports_are_penalized_per_phase(honest):
    report = run_period(small_config(fault_plan="2:P0:WITHHOLD_REPORT:0"))

    assert {v.kind for v in report.verdicts} == {ReportKind.IN_DEV, ReportKind.TOTAL_DEV_C, ReportKind.STATEMENT}
    assert report.verdict_users(2) == ["P0"]
    assert report.penalties == {P0: 3000}
    assert report.amounts_before_penalties() == honest.final_amounts()


def test_corrupt_total_names_the_aggregator(honest):
    report = run_period(small_config(fault_plan="1:C0:CORRUPT_TOTAL:9"))

    assert [v.kind for v in report.verdicts] == [ReportKind.TOTAL_DEV_P]
    assert report.verdicts[0].responsible == ("C0",)
    assert report.outcomes[1].totals == honest.outcomes[1].totals


def test_saturated_run_corrects_everything(honest, saturated):
    assert saturated.dispute_count == 6 * CYCLES
    assert saturated.amounts_before_penalties() == honest.final_amounts()
    assert saturated.supplier_balance == honest.supplier_balance
    assert saturated.conservation_ok
    assert set(saturated.verdict_users()) == {"C0", "C1", "P0", "P1"}


def test_penalties_paid_to_supplier(honest):
    report = run_period(small_config(fault_plan="5:C1:CORRUPT_INDEV", penalty_sink="supplier", penalty=250))
    assert report.supplier_balance == honest.supplier_balance + 250
    assert report.conservation_ok


def test_thread_pool_gives_identical_results(honest):
    threaded = run_period(small_config(workers=4))
    assert threaded.final_lines() == honest.final_lines()
    assert threaded.ledger.chain_digest == honest.ledger.chain_digest


def test_runs_are_reproducible(honest):
    assert format_report(run_period(small_config())) == format_report(honest)


def test_unequal_populations():
    report = run_period(small_config(n_c=3, n_p=5, cycles=4))
    assert report.dispute_count == 0
    assert len(report.match_map.pairs()) == 5
    assert report.conservation_ok


def test_profile_file_run(tmp_path):
    path = write_profiles(synthesize_profiles(2, 3, 3, seed=5), tmp_path / "profiles.csv")
    report = run_period(small_config(profile_path=path))
    assert (report.n_c, report.n_p, report.cycles) == (2, 3, 3)


def test_degenerate_surplus_is_flagged():
    inputs = [
        CycleInput(0, {C0: 1000, C1: 1000, P0: 1000, P1: 1000}, {C0: 900, C1: 1000, P0: 1000, P1: 1000}),
        CycleInput(1, {C0: 500, C1: 500, P0: 400, P1: 600}, {C0: 550, C1: 500, P0: 420, P1: 600}),
    ]
    report = run_period(small_config(cycles=2), inputs)

    assert any("degenerate" in flag for flag in report.flags)
    # -(100 Wh * pi_fit) plus the negative revenue pool booked to the supplier
    assert report.outcomes[0].supplier_balance == -15000
    assert report.residual == 0


def test_lifecycle_is_enforced():
    simulator = Simulator(small_config(cycles=1))
    inputs = simulator.load_inputs()
    with pytest.raises(LifecycleError):
        simulator.run_cycle(inputs[0])

    simulator.open_period(inputs)
    simulator.run_cycle(inputs[0])
    simulator.close_period()
    with pytest.raises(LifecycleError):
        simulator.run_cycle(inputs[0])


@pytest.mark.slow
def test_acceptance_scale_campaign():
    report = run_period(small_config(n_c=10, n_p=10, cycles=48, fault_plan="SATURATED"))
    assert report.conservation_ok
    assert report.dispute_count == (2 * 10 + 2) * 48


def assert_campaign_sound(report, honest):
    for outcome in report.outcomes:
        faulted = sorted({str(fault.user) for fault in outcome.faults})
        assert report.verdict_users(outcome.cycle) == faulted
    assert report.amounts_before_penalties() == honest.final_amounts()
    assert report.conservation_ok


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_random_fault_campaign_names_exactly_the_faulted(honest, seed):
    plan = FaultPlan.random_campaign(2, 2, CYCLES, count=3, seed=seed)
    assert_campaign_sound(run_period(small_config(fault_plan=plan)), honest)


@pytest.mark.slow
def test_random_fault_campaigns_at_scale(honest):
    for seed in range(100):
        plan = FaultPlan.random_campaign(2, 2, CYCLES, count=4, seed=1000 + seed)
        assert_campaign_sound(run_period(small_config(fault_plan=plan)), honest)


EVIDENCE_FAULTS = (
    "1:C0:CORRUPT_TOTAL:9;2:C1:CORRUPT_INDEV;3:P1:CORRUPT_STATEMENT:-100;"
    "4:C0:SUBSTITUTE_DATA:25;5:P0:WITHHOLD_REPORT:0"
)


def test_verdict_evidence_reverifies_after_reload(tmp_path):
    simulator = Simulator(small_config(fault_plan=EVIDENCE_FAULTS))
    inputs = simulator.load_inputs()
    world = simulator.open_period(inputs)
    pk = world.supplier.public_key

    # payloads the referee saw, keyed like ledger entries
    payloads = {}
    for cycle_input in inputs:
        simulator.run_cycle(cycle_input)
        for (user, cycle), (p2p_ct, real_ct) in world.archive.items():
            payloads[(str(user), cycle, LedgerTag.P2P_VOLUME)] = serialize(pk, p2p_ct)
            payloads[(str(user), cycle, LedgerTag.REAL_VOLUME)] = serialize(pk, real_ct)
        for user, dev_ct in world.referee.accepted_deviations(cycle_input.cycle).items():
            payloads[(str(user), cycle_input.cycle, LedgerTag.IN_DEV)] = serialize(pk, dev_ct)
    report = simulator.close_period()

    reloaded = HashLedger.load(report.ledger.save(tmp_path / "ledger.txt"))
    entries = reloaded.entries()
    kinds = {verdict.kind for verdict in report.verdicts}
    assert kinds == set(ReportKind)

    for verdict in report.verdicts:
        assert verdict.evidence
        for index in verdict.evidence:
            entry = entries[index]
            assert entry.cycle == verdict.cycle
            if verdict.kind is ReportKind.TOTAL_DEV_C:
                assert entry.tag is LedgerTag.IN_DEV and entry.user_id.startswith("C")
            elif verdict.kind is ReportKind.TOTAL_DEV_P:
                assert entry.tag is LedgerTag.IN_DEV and entry.user_id.startswith("P")
            elif entry.tag in (LedgerTag.TOTAL_DEV_C, LedgerTag.TOTAL_DEV_P):
                assert verdict.kind is ReportKind.STATEMENT
                assert entry.public_value == reloaded.read_public(entry.tag, entry.cycle)
                continue
            else:
                assert entry.tag in (LedgerTag.P2P_VOLUME, LedgerTag.REAL_VOLUME, LedgerTag.IN_DEV)
                assert entry.user_id in verdict.pair
            key = (entry.user_id, entry.cycle, entry.tag)
            assert reloaded.verify(*key, payloads[key])
