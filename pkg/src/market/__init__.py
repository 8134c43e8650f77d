"""
Market Module

Domain model of the P2P energy market, the data producers feeding the
billing protocol, and the referee's monthly user matching.
"""

from .market_model import (
    REFEREE_ID,
    SUPPLIER_ID,
    SYSTEM_ID,
    TP_ID,
    CycleInput,
    PriceSchedule,
    Role,
    UserId,
    VolumeRecord,
    consumers,
    load_profiles,
    meter_read,
    profiles_to_frame,
    prosumers,
    read_profile_frame,
    synthesize_profiles,
    tp_publish,
    write_profiles,
)
from .matching import AggregatorSet, MatchMap, match_users, select_aggregators

__all__ = [
    "REFEREE_ID",
    "SUPPLIER_ID",
    "SYSTEM_ID",
    "TP_ID",
    "CycleInput",
    "PriceSchedule",
    "Role",
    "UserId",
    "VolumeRecord",
    "consumers",
    "load_profiles",
    "meter_read",
    "profiles_to_frame",
    "prosumers",
    "read_profile_frame",
    "synthesize_profiles",
    "tp_publish",
    "write_profiles",
    "AggregatorSet",
    "MatchMap",
    "match_users",
    "select_aggregators",
]
