"""
User Matching

Monthly random pairing of consumers with prosumers (the M(u_k) map) and the
per-cycle choice of the users that compute total deviations.

Matching shuffles the larger role and deals it round-robin to the smaller
role: every user of the larger role gets exactly one partner, list lengths
of the smaller role differ by at most one.
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import pandas as pd

from src.utils.exceptions import ConfigurationError
from src.utils.rng import numpy_rng

from .market_model import UserId

logger = logging.getLogger(__name__)

AGGREGATORS_PER_ROLE = 3


@dataclass(frozen=True)
class MatchMap:
    """M(u_k) for every user of one billing period"""

    forward: Dict[UserId, Tuple[UserId, ...]]
    period_id: int = 0

    def matches(self, user: UserId) -> Tuple[UserId, ...]:
        return self.forward.get(user, ())

    def pairs(self) -> List[Tuple[UserId, UserId]]:
        """Matched (consumer, prosumer) pairs, each listed once"""
        return sorted(
            (user, partner)
            for user, partners in self.forward.items() if user.is_consumer
            for partner in partners
        )

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [{"user": str(u), "matches": " ".join(str(m) for m in self.forward[u])} for u in sorted(self.forward)]
        )

    def dump_lines(self) -> List[str]:
        return [f"{u}:{','.join(str(m) for m in self.forward[u])}" for u in sorted(self.forward)]


@dataclass(frozen=True)
class AggregatorSet:
    """Users chosen to sum the other role's deviations in one cycle"""

    consumers: Tuple[UserId, ...]
    prosumers: Tuple[UserId, ...]
    cycle: int

    @property
    def members(self) -> Tuple[UserId, ...]:
        return self.consumers + self.prosumers


def _check_roles(consumer_ids: Sequence[UserId], prosumer_ids: Sequence[UserId]) -> None:
    if not consumer_ids or not prosumer_ids:
        raise ConfigurationError("Matching needs at least one consumer and one prosumer")
    if any(not u.is_consumer for u in consumer_ids) or any(u.is_consumer for u in prosumer_ids):
        raise ConfigurationError("Consumer and prosumer lists contain users of the wrong role")


def match_users(
    consumer_ids: Sequence[UserId],
    prosumer_ids: Sequence[UserId],
    seed: int,
    period_id: int = 0
) -> MatchMap:
    """
    Randomly pair consumers with prosumers for one billing period

    Args:
        consumer_ids: All consumers
        prosumer_ids: All prosumers
        seed: Referee seed
        period_id: Billing period (re-matching happens monthly)

    Returns:
        MatchMap with role-pure, covering, balanced lists
    """
    _check_roles(consumer_ids, prosumer_ids)

    if len(prosumer_ids) >= len(consumer_ids):
        larger, smaller = sorted(prosumer_ids), sorted(consumer_ids)
    else:
        larger, smaller = sorted(consumer_ids), sorted(prosumer_ids)

    rng = numpy_rng(seed, "matching", period_id)
    order = rng.permutation(len(larger))

    forward: Dict[UserId, List[UserId]] = {u: [] for u in smaller}
    reverse: Dict[UserId, List[UserId]] = {}
    for position, index in enumerate(order):
        user = larger[int(index)]
        partner = smaller[position % len(smaller)]
        forward[partner].append(user)
        reverse[user] = [partner]

    forward.update(reverse)
    match_map = MatchMap({u: tuple(sorted(v)) for u, v in forward.items()}, period_id)

    logger.info(
        f"Matched {len(consumer_ids)} consumers with {len(prosumer_ids)} prosumers "
        f"for period {period_id} ({len(match_map.pairs())} pairs)"
    )
    return match_map


def select_aggregators(
    consumer_ids: Sequence[UserId],
    prosumer_ids: Sequence[UserId],
    cycle: int,
    seed: int
) -> AggregatorSet:
    """Draw up to three consumers and three prosumers without replacement"""
    _check_roles(consumer_ids, prosumer_ids)

    rng = numpy_rng(seed, "aggregators", cycle)

    def draw(population: Sequence[UserId]) -> Tuple[UserId, ...]:
        population = sorted(population)
        size = min(AGGREGATORS_PER_ROLE, len(population))
        picked = rng.choice(len(population), size=size, replace=False)
        return tuple(sorted(population[int(i)] for i in picked))

    return AggregatorSet(consumers=draw(consumer_ids), prosumers=draw(prosumer_ids), cycle=cycle)


if __name__ == "__main__":
    from .market_model import consumers, prosumers

    print("\n" + "=" * 60)
    print("MATCHING TEST")
    print("=" * 60 + "\n")

    match_map = match_users(consumers(3), prosumers(7), seed=11)
    for line in match_map.dump_lines():
        print(f"  {line}")

    aggregators = select_aggregators(consumers(3), prosumers(7), cycle=0, seed=11)
    print(f"\nAggregators for cycle 0: {[str(u) for u in aggregators.members]}")
