"""
FastAPI REST API for the PA-Bill audit service

Request/response endpoints for auditors: re-verify ledgers and final
reports, run the plaintext billing oracle, and run small simulations.
"""

from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel, Field
from typing import List, Optional, Dict
from datetime import datetime
import io
import logging
import sys
import os

# Add parent directory to path
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from src.billing import BillingOracle
from src.ledger import HashLedger, split_records, verify_ledger_bytes
from src.market.market_model import PriceSchedule, frame_to_profiles, read_profile_frame
from src.settlement import verify_final_report
from src.simulation import build_config, run_period
from src.utils.exceptions import (
    ConfigurationError,
    DataValidationError,
    LedgerFormatError,
    PABillError,
    ProfileFormatError,
)

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)

MAX_API_CYCLES = 48
MAX_API_USERS_PER_ROLE = 20

app = FastAPI(
    title="PA-Bill Audit API",
    description="Ledger verification and reference billing for P2P energy markets",
    version="1.0.0"
)

# Enable CORS
app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)


# Pydantic models
class PriceInput(BaseModel):
    pi_p2p: int = Field(150, gt=0, description="P2P trading price (micro-currency per Wh)")
    pi_rt: int = Field(280, gt=0, description="Retail price")
    pi_fit: int = Field(40, gt=0, description="Feed-in tariff")


class LedgerVerifyInput(BaseModel):
    ledger_text: str = Field(..., description="Contents of a ledger file")
    finals_text: Optional[str] = Field(None, description="Contents of a final report to check")


class LedgerVerifyResponse(BaseModel):
    ok: bool
    entries: int
    bad_index: Optional[int]
    reason: str
    finals_checked: int
    finals_problems: List[str]
    timestamp: datetime


class OracleInput(BaseModel):
    profile_text: str = Field(..., description="Profile records: cycle,user_role,user_ordinal,committed_wh,real_wh")
    prices: PriceInput = Field(default_factory=PriceInput)
    exact: bool = Field(False, description="Exact fractions instead of rounded surplus shares")


class OracleResponse(BaseModel):
    cycles: int
    users: int
    modes: Dict[str, int]
    supplier_balance: int
    final_lines: List[str]
    timestamp: datetime


class SimulateInput(BaseModel):
    n_c: int = Field(2, ge=1, le=MAX_API_USERS_PER_ROLE)
    n_p: int = Field(2, ge=1, le=MAX_API_USERS_PER_ROLE)
    cycles: int = Field(24, ge=1, le=MAX_API_CYCLES)
    key_bits: int = Field(1024, ge=1024, le=2048)
    seed: int = Field(0, ge=0)
    deviation_ratio: float = Field(0.1, ge=0.0, le=1.0)
    penalty: int = Field(1000, ge=0)
    fault_plan: str = Field("", description="cycle:user:KIND[:delta] entries separated by ';'")
    prices: PriceInput = Field(default_factory=PriceInput)


class SimulateResponse(BaseModel):
    key_fingerprint: str
    cycles: int
    modes: Dict[str, int]
    disputes: int
    verdicts: List[str]
    penalties: Dict[str, int]
    supplier_balance: int
    conservation_residual: int
    rounding_bound: int
    final_lines: List[str]
    ledger_entries: int
    mean_timings_ms: Dict[str, float]
    timestamp: datetime


def _client_error(e: PABillError) -> HTTPException:
    status = 422 if isinstance(e, (ConfigurationError, DataValidationError, ProfileFormatError)) else 400
    return HTTPException(status_code=status, detail=str(e))


# API Endpoints

@app.get("/")
async def root():
    """API root endpoint"""
    return {
        "message": "PA-Bill Audit API",
        "version": "1.0.0",
        "endpoints": {
            "health": "/health",
            "ledger_verify": "/api/v1/ledger/verify",
            "oracle": "/api/v1/oracle",
            "simulate": "/api/v1/simulate"
        }
    }


@app.get("/health")
async def health_check():
    """Health check endpoint"""
    return {
        "status": "healthy",
        "timestamp": datetime.now().isoformat(),
        "limits": {
            "max_cycles": MAX_API_CYCLES,
            "max_users_per_role": MAX_API_USERS_PER_ROLE
        }
    }


@app.post("/api/v1/ledger/verify", response_model=LedgerVerifyResponse)
async def verify_ledger(body: LedgerVerifyInput):
    """
    Re-verify a ledger and, optionally, a final report against it

    A failed verification is a normal response with ok=false.
    """
    try:
        raw = body.ledger_text.encode("ascii")
    except UnicodeEncodeError:
        raise HTTPException(status_code=422, detail="Ledger text must be ASCII")

    try:
        audit = verify_ledger_bytes(raw)
        problems: List[str] = []
        checked = 0

        if audit.ok and body.finals_text is not None:
            try:
                lines = split_records(body.finals_text, terminated=False)
            except LedgerFormatError as e:
                problems = [f"final report: {e}"]
            else:
                problems = verify_final_report(HashLedger.from_bytes(raw), lines)
                checked = len(lines)

        return LedgerVerifyResponse(
            ok=audit.ok and not problems,
            entries=audit.entries,
            bad_index=audit.bad_index,
            reason=audit.reason,
            finals_checked=checked,
            finals_problems=problems,
            timestamp=datetime.now()
        )
    except PABillError as e:
        raise _client_error(e)
    except Exception as e:
        raise HTTPException(status_code=500, detail=f"Error verifying ledger: {str(e)}")


@app.post("/api/v1/oracle", response_model=OracleResponse)
async def run_oracle(body: OracleInput):
    """Plaintext reference billing of a profile"""
    try:
        prices = PriceSchedule(**body.prices.model_dump())
    except ValueError as e:
        raise HTTPException(status_code=422, detail=str(e))

    try:
        inputs = frame_to_profiles(read_profile_frame(io.StringIO(body.profile_text)))
        result = BillingOracle(prices, rounding="exact" if body.exact else "nearest").run(inputs)

        return OracleResponse(
            cycles=len(inputs),
            users=len(result.finals),
            modes={mode: int(count) for mode, count in result.cycles["mode"].value_counts().items()},
            supplier_balance=result.supplier_balance_tot,
            final_lines=result.final_lines(),
            timestamp=datetime.now()
        )
    except PABillError as e:
        raise _client_error(e)
    except Exception as e:
        raise HTTPException(status_code=500, detail=f"Error running oracle: {str(e)}")


@app.post("/api/v1/simulate", response_model=SimulateResponse)
async def simulate(body: SimulateInput):
    """
    Run a small billing period end to end

    Sizes are capped; use the command line for full-scale runs.
    """
    try:
        config = build_config({
            "n_c": body.n_c,
            "n_p": body.n_p,
            "cycles": body.cycles,
            "key_bits": body.key_bits,
            "seed": body.seed,
            "deviation_ratio": body.deviation_ratio,
            "penalty": body.penalty,
            "fault_plan": body.fault_plan,
            **body.prices.model_dump(),
        })
        report = run_period(config)

        return SimulateResponse(
            key_fingerprint=report.key_fingerprint,
            cycles=report.cycles,
            modes=report.mode_counts(),
            disputes=report.dispute_count,
            verdicts=[verdict.to_line() for verdict in report.verdicts],
            penalties={str(user): amount for user, amount in report.penalties.items()},
            supplier_balance=report.supplier_balance,
            conservation_residual=report.residual,
            rounding_bound=report.rounding_bound,
            final_lines=report.final_lines(),
            ledger_entries=len(report.ledger),
            mean_timings_ms={phase: float(ms) for phase, ms in report.mean_timings_ms().items()},
            timestamp=datetime.now()
        )
    except PABillError as e:
        raise _client_error(e)
    except Exception as e:
        logger.error(f"Simulation failed: {e}")
        raise HTTPException(status_code=500, detail=f"Error running simulation: {str(e)}")


if __name__ == "__main__":
    import uvicorn
    uvicorn.run(app, host="0.0.0.0", port=8000)
