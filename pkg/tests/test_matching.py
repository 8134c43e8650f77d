"""
Tests for monthly matching and aggregator selection
"""

import pytest

from src.market.market_model import consumers, prosumers
from src.market.matching import AGGREGATORS_PER_ROLE, match_users, select_aggregators
from src.utils.exceptions import ConfigurationError


@pytest.mark.parametrize("n_c, n_p", [(1, 1), (3, 7), (7, 3), (5, 5), (250, 250)])
def test_match_map_is_role_pure_and_covering(n_c, n_p):
    match_map = match_users(consumers(n_c), prosumers(n_p), seed=11)

    for user, partners in match_map.forward.items():
        assert partners
        assert all(partner.role is user.role.other for partner in partners)
        for partner in partners:
            assert user in match_map.matches(partner)

    assert set(match_map.forward) == set(consumers(n_c)) | set(prosumers(n_p))


@pytest.mark.parametrize("n_c, n_p", [(3, 7), (7, 3), (4, 10)])
def test_match_lists_are_balanced(n_c, n_p):
    match_map = match_users(consumers(n_c), prosumers(n_p), seed=3)
    smaller = consumers(n_c) if n_c <= n_p else prosumers(n_p)
    larger = prosumers(n_p) if n_c <= n_p else consumers(n_c)

    sizes = [len(match_map.matches(u)) for u in smaller]
    assert max(sizes) - min(sizes) <= 1
    assert all(len(match_map.matches(u)) == 1 for u in larger)


def test_equal_populations_pair_one_to_one():
    match_map = match_users(consumers(4), prosumers(4), seed=5)
    assert len(match_map.pairs()) == 4
    assert all(len(match_map.matches(u)) == 1 for u in match_map.forward)


def test_matching_is_seeded_and_monthly():
    a = match_users(consumers(6), prosumers(6), seed=1, period_id=0)
    b = match_users(consumers(6), prosumers(6), seed=1, period_id=0)
    assert a.forward == b.forward
    others = [match_users(consumers(6), prosumers(6), seed=1, period_id=p).forward for p in range(1, 6)]
    assert any(forward != a.forward for forward in others)


def test_matching_rejects_empty_or_mixed_roles():
    with pytest.raises(ConfigurationError):
        match_users([], prosumers(2), seed=1)
    with pytest.raises(ConfigurationError):
        match_users(prosumers(2), prosumers(2), seed=1)


def test_dump_lines_are_sorted():
    lines = match_users(consumers(2), prosumers(2), seed=2).dump_lines()
    assert [line.split(":")[0] for line in lines] == ["C0", "C1", "P0", "P1"]


def test_aggregators_are_distinct_and_capped():
    chosen = select_aggregators(consumers(10), prosumers(2), cycle=4, seed=8)
    assert len(chosen.consumers) == AGGREGATORS_PER_ROLE
    assert len(set(chosen.consumers)) == AGGREGATORS_PER_ROLE
    assert len(chosen.prosumers) == 2
    assert all(u.is_consumer for u in chosen.consumers)
    assert chosen.members == chosen.consumers + chosen.prosumers


def test_aggregators_are_reproducible_per_cycle():
    assert select_aggregators(consumers(9), prosumers(9), 3, seed=1) == select_aggregators(
        consumers(9), prosumers(9), 3, seed=1
    )
