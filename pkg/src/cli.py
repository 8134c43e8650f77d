"""
PA-Bill command line

    python -m src.cli simulate --config config/example.cfg --out runs/run1
    python -m src.cli synth --n-c 250 --n-p 250 --cycles 720 --seed 7 --out profiles.csv
    python -m src.cli verify-ledger runs/run1/ledger.txt --finals runs/run1/finals.txt
    python -m src.cli oracle --profiles profiles.csv
    python -m src.cli bench --config config/example.cfg

Exit codes: 0 success, 2 configuration or usage error, 3 verification failure.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

import pandas as pd

from src.billing.oracle import BillingOracle
from src.ledger.hash_ledger import HashLedger, split_records, verify_ledger_file
from src.market.market_model import load_profiles, synthesize_profiles, write_profiles
from src.settlement.supplier import verify_final_report
from src.simulation.config import SimConfig, load_config
from src.simulation.faults import FaultPlan
from src.simulation.orchestrator import TIMED_PHASES, run_period
from src.simulation.report import format_timings, write_run
from src.utils.exceptions import (
    ConfigurationError,
    DataValidationError,
    LedgerFormatError,
    PABillError,
    ProfileFormatError,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_VERIFY = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pabill",
        description="Privacy-preserving, accountable billing for P2P energy markets",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="Debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    simulate = sub.add_parser("simulate", help="Run one billing period")
    simulate.add_argument("--config", type=Path, help="KEY=VALUE config file")
    simulate.add_argument("--out", type=Path, required=True, help="Output directory")
    simulate.add_argument("--seed", type=int, help="Override SEED")
    simulate.add_argument("--profiles", type=Path, help="Override PROFILE_PATH")
    simulate.add_argument("--faults", help="Override FAULT_PLAN")
    simulate.add_argument("--plot", action="store_true", help="Also write timings.png")

    synth = sub.add_parser("synth", help="Write a synthetic profile file")
    synth.add_argument("--config", type=Path, help="Take counts, cycles and seed from a config file")
    synth.add_argument("--n-c", type=int, help="Number of consumers")
    synth.add_argument("--n-p", type=int, help="Number of prosumers")
    synth.add_argument("--cycles", type=int, help="Number of settlement cycles")
    synth.add_argument("--seed", type=int, help="Generator seed")
    synth.add_argument("--deviation-ratio", type=float, help="Maximum relative deviation")
    synth.add_argument("--out", type=Path, required=True, help="Profile file to write")

    verify = sub.add_parser("verify-ledger", help="Re-verify a ledger file")
    verify.add_argument("ledger", type=Path, help="Ledger file")
    verify.add_argument("--finals", type=Path, help="Final report to check against the ledger")

    oracle = sub.add_parser("oracle", help="Plaintext reference billing of a profile file")
    oracle.add_argument("--profiles", type=Path, required=True, help="Profile file")
    oracle.add_argument("--config", type=Path, help="Config file with prices")
    oracle.add_argument("--exact", action="store_true", help="Exact fractions instead of rounded surplus shares")
    oracle.add_argument("--out", type=Path, help="Write final lines here instead of stdout")

    bench = sub.add_parser("bench", help="Best-case and worst-case phase timings")
    bench.add_argument("--config", type=Path, help="KEY=VALUE config file")
    bench.add_argument("--seed", type=int, help="Override SEED")

    return parser


def _print_summary(report) -> None:
    print("\n" + "=" * 60)
    print("BILLING PERIOD SUMMARY")
    print("=" * 60)
    print(f"Users:              {report.n_c} consumers, {report.n_p} prosumers")
    print(f"Cycles:             {report.cycles}")
    print(f"Modes:              {report.mode_counts()}")
    print(f"Disputes:           {report.dispute_count}")
    print(f"Penalties:          {sum(report.penalties.values())}")
    print(f"Supplier balance:   {report.supplier_balance}")
    print(f"Residual / bound:   {report.residual} / {report.rounding_bound}")
    print(format_timings(report))


def cmd_simulate(args) -> int:
    config = load_config(args.config, overrides={
        "seed": args.seed,
        "profile_path": args.profiles,
        "fault_plan": args.faults,
    })
    report = run_period(config)
    paths = write_run(report, args.out, plot=args.plot)

    _print_summary(report)
    print(f"\nArtefacts written to {args.out}: {', '.join(p.name for p in paths.values())}")

    if not report.conservation_ok:
        logger.error(f"Conservation residual {report.residual} exceeds bound {report.rounding_bound}")
        return EXIT_VERIFY
    return EXIT_OK


def cmd_synth(args) -> int:
    config = load_config(args.config, overrides={
        "n_c": args.n_c,
        "n_p": args.n_p,
        "cycles": args.cycles,
        "seed": args.seed,
        "deviation_ratio": args.deviation_ratio,
    })
    seed = config.seed if config.seed is not None else 0
    inputs = synthesize_profiles(config.n_c, config.n_p, config.cycles, seed, config.deviation_ratio)
    write_profiles(inputs, args.out)
    print(f"Wrote {len(inputs)} cycles for {config.n_c + config.n_p} users to {args.out}")
    return EXIT_OK


def cmd_verify_ledger(args) -> int:
    audit = verify_ledger_file(args.ledger)
    if not audit.ok:
        print(f"Ledger verification FAILED at index {audit.bad_index}: {audit.reason}")
        return EXIT_VERIFY
    print(f"Ledger OK: {audit.entries} entries")

    if args.finals is not None:
        if not args.finals.exists():
            raise ConfigurationError(f"Final report {args.finals} does not exist")
        ledger = HashLedger.load(args.ledger)
        try:
            lines = split_records(args.finals.read_bytes().decode("ascii"), terminated=False)
        except (UnicodeDecodeError, LedgerFormatError) as e:
            print(f"Final report verification FAILED: {e}")
            return EXIT_VERIFY
        problems = verify_final_report(ledger, lines)
        if problems:
            print("Final report verification FAILED:")
            for problem in problems:
                print(f"  {problem}")
            return EXIT_VERIFY
        print(f"Final report OK: {len(lines)} lines match the ledger")
    return EXIT_OK


def cmd_oracle(args) -> int:
    config = load_config(args.config) if args.config else SimConfig()
    inputs = load_profiles(args.profiles)
    result = BillingOracle(config.prices, rounding="exact" if args.exact else "nearest").run(inputs)
    text = "".join(f"{line}\n" for line in result.final_lines())
    if args.out:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(text, encoding="ascii")
        print(f"Wrote {len(result.finals)} final statements to {args.out}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_bench(args) -> int:
    config = load_config(args.config, overrides={"seed": args.seed})
    if config.seed is None:
        config = config.model_copy(update={"seed": 0})

    best = run_period(config.model_copy(update={"fault_plan": FaultPlan()}))
    worst = run_period(config.model_copy(update={"fault_plan": FaultPlan.saturated_plan()}))

    table = pd.DataFrame({
        "best_case_ms": best.mean_timings_ms(),
        "worst_case_ms": worst.mean_timings_ms(),
    }).reindex(list(TIMED_PHASES))

    print("\n" + "=" * 60)
    print(f"EXECUTION TIME PER SETTLEMENT CYCLE ({best.n_c + best.n_p} users, {best.cycles} cycles)")
    print("=" * 60)
    print(table.round(2).to_string())
    print(f"\nWorst-case disputes: {worst.dispute_count}")

    if best.final_amounts() != worst.amounts_before_penalties():
        print("Worst-case finals differ from the honest run")
        return EXIT_VERIFY
    print("Worst-case finals match the honest run (penalties aside)")
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "synth": cmd_synth,
    "verify-ledger": cmd_verify_ledger,
    "oracle": cmd_oracle,
    "bench": cmd_bench,
}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_CONFIG

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )

    try:
        return COMMANDS[args.command](args)
    except (ConfigurationError, ProfileFormatError, DataValidationError) as e:
        logger.error(str(e))
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except PABillError as e:
        logger.error(str(e))
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_VERIFY


if __name__ == "__main__":
    sys.exit(main())
