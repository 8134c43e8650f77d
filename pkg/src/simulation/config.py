"""
Simulation Configuration

SimConfig is loaded from a KEY=VALUE text file with python-dotenv;
PABILL_<KEY> environment variables override file values.
"""

import logging
import os
from pathlib import Path
from typing import Dict, Literal, Optional, Union

from dotenv import dotenv_values, load_dotenv
from pydantic import BaseModel, ConfigDict, Field, InstanceOf, ValidationError, field_validator, model_validator

from src.crypto.he_core import DEFAULT_KEY_BITS, MIN_KEY_BITS
from src.market.market_model import PriceSchedule
from src.simulation.faults import FaultPlan
from src.utils.exceptions import ConfigurationError

logger = logging.getLogger(__name__)

ENV_PREFIX = "PABILL_"

# Config-file key -> SimConfig field
CONFIG_KEYS = {
    "N_C": "n_c",
    "N_P": "n_p",
    "CYCLES": "cycles",
    "KEY_BITS": "key_bits",
    "PI_P2P": "pi_p2p",
    "PI_RT": "pi_rt",
    "PI_FIT": "pi_fit",
    "SEED": "seed",
    "DEVIATION_RATIO": "deviation_ratio",
    "PENALTY": "penalty",
    "PENALTY_SINK": "penalty_sink",
    "FAULT_PLAN": "fault_plan",
    "PROFILE_PATH": "profile_path",
    "PERIOD_ID": "period_id",
    "WORKERS": "workers",
}

PRICE_KEYS = {"pi_p2p", "pi_rt", "pi_fit"}


class SimConfig(BaseModel):
    """Parameters of one simulated billing period"""

    model_config = ConfigDict(frozen=True)

    n_c: int = Field(2, ge=1, description="Number of consumers")
    n_p: int = Field(2, ge=1, description="Number of prosumers")
    cycles: int = Field(720, ge=1, description="Settlement cycles in the period")
    key_bits: int = Field(DEFAULT_KEY_BITS, ge=MIN_KEY_BITS, description="Paillier modulus size")
    prices: PriceSchedule = Field(default_factory=PriceSchedule)
    seed: Optional[int] = Field(None, ge=0, description="Master seed; None draws a random one")
    deviation_ratio: float = Field(0.1, ge=0.0, le=1.0)
    fault_plan: InstanceOf[FaultPlan] = Field(default_factory=FaultPlan)
    penalty: int = Field(1000, ge=0, description="Flat penalty per responsible party and verdict")
    penalty_sink: Literal["burn", "supplier"] = "burn"
    profile_path: Optional[Path] = None
    period_id: int = Field(0, ge=0)
    workers: int = Field(1, ge=1, description="Threads for per-user work inside a phase")

    @field_validator("fault_plan", mode="before")
    @classmethod
    def parse_fault_plan(cls, value):
        if value is None or isinstance(value, str):
            return FaultPlan.parse(value)
        return value

    @model_validator(mode="after")
    def check_fault_plan(self) -> "SimConfig":
        if self.profile_path is None:
            self.fault_plan.validate_for(self.n_c, self.n_p, self.cycles)
        return self

    @property
    def is_seeded(self) -> bool:
        return self.seed is not None

    def summary(self) -> Dict[str, object]:
        return {
            "n_c": self.n_c,
            "n_p": self.n_p,
            "cycles": self.cycles,
            "key_bits": self.key_bits,
            "prices": self.prices.model_dump(),
            "seed": self.seed,
            "deviation_ratio": self.deviation_ratio,
            "penalty": self.penalty,
            "penalty_sink": self.penalty_sink,
            "fault_plan": self.fault_plan.to_text(),
            "profile_path": str(self.profile_path) if self.profile_path else None,
            "period_id": self.period_id,
        }


def _to_fields(values: Dict[str, Optional[str]], source: str) -> Dict[str, str]:
    fields = {}
    for key, value in values.items():
        name = CONFIG_KEYS.get(key.strip().upper())
        if name is None:
            raise ConfigurationError(f"Unknown configuration key '{key}' in {source}")
        if value is None or value.strip() == "":
            continue
        fields[name] = value.strip()
    return fields


def build_config(fields: Dict[str, object]) -> SimConfig:
    """Validate raw field values, folding the three prices into a PriceSchedule"""
    fields = dict(fields)
    prices = {name: fields.pop(name) for name in list(fields) if name in PRICE_KEYS}
    try:
        if prices:
            fields["prices"] = PriceSchedule(**prices)
        return SimConfig(**fields)
    except ValidationError as e:
        raise ConfigurationError(f"Invalid configuration: {e}") from e
    except ConfigurationError:
        raise
    except ValueError as e:
        raise ConfigurationError(f"Invalid configuration: {e}") from e


def load_config(
    path: Optional[Union[str, Path]] = None,
    overrides: Optional[Dict[str, object]] = None,
    env_file: Optional[Union[str, Path]] = None
) -> SimConfig:
    """
    Load a simulation config

    Args:
        path: KEY=VALUE config file; None uses defaults
        overrides: Field values that win over file and environment (CLI flags)
        env_file: Optional .env file exporting PABILL_* variables

    Returns:
        Validated SimConfig
    """
    fields: Dict[str, object] = {}

    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigurationError(f"Config file {path} does not exist")
        fields.update(_to_fields(dotenv_values(path), str(path)))
        logger.info(f"Loaded configuration from {path}")

        if "profile_path" in fields and not Path(str(fields["profile_path"])).is_absolute():
            fields["profile_path"] = str(path.parent / str(fields["profile_path"]))

    if env_file is not None:
        load_dotenv(env_file, override=False)

    env = {key[len(ENV_PREFIX):]: value for key, value in os.environ.items() if key.startswith(ENV_PREFIX)}
    env = {key: value for key, value in env.items() if key in CONFIG_KEYS}
    if env:
        logger.info(f"Environment overrides: {', '.join(sorted(env))}")
        fields.update(_to_fields(env, "environment"))

    fields.update({key: value for key, value in (overrides or {}).items() if value is not None})
    return build_config(fields)
