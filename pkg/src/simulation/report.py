"""
Run Report Writer

Writes the artefacts of a billing period into an output directory:

    report.txt    deterministic run summary (no timings)
    finals.txt    final statements and supplier balance, one line each
    ledger.txt    the period ledger
    timings.csv   per-cycle phase timings
    timings.png   optional chart of the timings
"""

import logging
from pathlib import Path
from typing import Dict, Union

import pandas as pd

from src.simulation.orchestrator import TIMED_PHASES, RunReport

logger = logging.getLogger(__name__)

REPORT_FILE = "report.txt"
FINALS_FILE = "finals.txt"
LEDGER_FILE = "ledger.txt"
TIMINGS_FILE = "timings.csv"
CHART_FILE = "timings.png"


def format_report(report: RunReport) -> str:
    """Deterministic text rendering of a run"""
    config = report.config
    prices = config.prices
    snapshot = report.ledger.snapshot()

    lines = [
        "PA-BILL RUN REPORT",
        "=" * 60,
        f"period_id={report.period_id}",
        f"key_fingerprint={report.key_fingerprint}",
        f"key_bits={config.key_bits}",
        f"consumers={report.n_c}",
        f"prosumers={report.n_p}",
        f"cycles={report.cycles}",
        f"seed={config.seed}",
        f"prices=p2p:{prices.pi_p2p},rt:{prices.pi_rt},fit:{prices.pi_fit}",
        f"penalty={config.penalty}",
        f"penalty_sink={config.penalty_sink}",
        f"fault_plan={config.fault_plan.to_text() or 'none'}",
        "",
        "modes=" + ",".join(f"{mode}:{count}" for mode, count in report.mode_counts().items()),
        f"disputes={report.dispute_count}",
        f"penalties_total={sum(report.penalties.values())}",
        f"supplier_balance={report.supplier_balance}",
        f"conservation_residual={report.residual}",
        f"rounding_bound={report.rounding_bound}",
        f"conservation_ok={report.conservation_ok}",
        f"rejected_deliveries={report.rejected_deliveries}",
        f"ledger_entries={len(snapshot.entries)}",
        f"ledger_chain_digest={snapshot.chain_digest.hex()}",
        "",
        "[match_map]",
        *report.match_map.dump_lines(),
        "",
        "[faults_applied]",
        *(fault.to_text() for fault in report.faults),
        "",
        "[verdicts]",
        *(verdict.to_line() for verdict in report.verdicts),
        "",
        "[penalties]",
        *(f"{user},{amount}" for user, amount in report.penalties.items()),
        "",
        "[flags]",
        *report.flags,
        "",
        "[finals]",
        *report.final_lines(),
    ]
    return "\n".join(lines) + "\n"


def format_timings(report: RunReport) -> str:
    """Human-readable per-phase means; kept out of report.txt"""
    means = report.mean_timings_ms()
    lines = ["Mean execution time per cycle:"]
    for phase in TIMED_PHASES:
        lines.append(f"  {phase.replace('_', ' '):24s} {means[phase]:10.2f} ms")
    return "\n".join(lines)


def plot_timings(frame: pd.DataFrame, path: Union[str, Path]) -> Path:
    """Render per-cycle phase timings with matplotlib"""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(10, 5))
    (frame * 1000.0).plot(ax=ax, linewidth=1)
    ax.set_xlabel("Settlement cycle")
    ax.set_ylabel("Execution time (ms)")
    ax.set_title("Per-phase execution time per settlement cycle")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def write_run(report: RunReport, out_dir: Union[str, Path], plot: bool = False) -> Dict[str, Path]:
    """
    Write all artefacts of a run

    Args:
        report: Result of run_period
        out_dir: Output directory, created if missing
        plot: Also render timings.png

    Returns:
        Mapping of artefact name to path
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    paths = {
        "report": out_dir / REPORT_FILE,
        "finals": out_dir / FINALS_FILE,
        "ledger": out_dir / LEDGER_FILE,
        "timings": out_dir / TIMINGS_FILE,
    }
    report.ledger.save(paths["ledger"])
    report.ledger_path = paths["ledger"]
    paths["report"].write_text(format_report(report), encoding="ascii")
    paths["finals"].write_text("".join(f"{line}\n" for line in report.final_lines()), encoding="ascii")
    report.timings_frame().to_csv(paths["timings"], float_format="%.6f", lineterminator="\n")

    if plot:
        paths["chart"] = plot_timings(report.timings_frame(), out_dir / CHART_FILE)

    logger.info(f"Wrote run artefacts to {out_dir}")
    return paths

