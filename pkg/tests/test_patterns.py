import math
from itertools import combinations

import pytest

from vflbandit.patterns import (
    count_patterns,
    format_pattern,
    index_to_pattern,
    parse_pattern,
    pattern_to_index,
    validate_pattern,
)


class TestCountPatterns:
    def test_seven_choose_two(self):
        assert count_patterns(7, 2) == 21

    def test_sixteen_choose_three(self):
        assert count_patterns(16, 3) == 560

    def test_empty_budget(self):
        assert count_patterns(9, 0) == 1

    def test_budget_larger_than_clients_rejected(self):
        with pytest.raises(ValueError):
            count_patterns(3, 4)

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            count_patterns(5, -1)


class TestRanking:
    def test_known_arm_indices_for_seven_clients(self):
        # Anchor triple for the 21-arm enumeration of 2-of-7 patterns.
        assert pattern_to_index((1, 2), 7) == 0
        assert pattern_to_index((1, 7), 7) == 5
        assert pattern_to_index((6, 7), 7) == 20

    def test_full_seven_client_enumeration_is_lexicographic(self):
        expected = list(combinations(range(1, 8), 2))
        for index, pattern in enumerate(expected):
            assert pattern_to_index(pattern, 7) == index
            assert index_to_pattern(index, 7, 2) == pattern

    def test_four_client_example(self):
        order = [(1, 2), (1, 3), (1, 4), (2, 3), (2, 4), (3, 4)]
        assert [pattern_to_index(p, 4) for p in order] == list(range(6))

    def test_singleton_patterns(self):
        assert pattern_to_index((4,), 5) == 3

    def test_monotone_in_lexicographic_order(self):
        patterns = list(combinations(range(1, 11), 3))
        ranks = [pattern_to_index(p, 10) for p in patterns]
        assert ranks == sorted(ranks)
        assert ranks == list(range(len(patterns)))

    def test_invalid_patterns_rejected(self):
        with pytest.raises(ValueError):
            pattern_to_index((2, 1), 7)  # not increasing
        with pytest.raises(ValueError):
            pattern_to_index((0, 1), 7)  # below 1
        with pytest.raises(ValueError):
            pattern_to_index((1, 8), 7)  # above n_clients
        with pytest.raises(ValueError):
            pattern_to_index((3, 3), 7)  # repeated


class TestUnranking:
    def test_inverse_anchors(self):
        assert index_to_pattern(0, 7, 2) == (1, 2)
        assert index_to_pattern(5, 7, 2) == (1, 7)
        assert index_to_pattern(20, 7, 2) == (6, 7)

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            index_to_pattern(21, 7, 2)
        with pytest.raises(ValueError):
            index_to_pattern(-1, 7, 2)

    def test_round_trip_exhaustive_small(self):
        for n_clients in range(1, 17):
            for budget in range(0, min(3, n_clients) + 1):
                for index in range(math.comb(n_clients, budget)):
                    pattern = index_to_pattern(index, n_clients, budget)
                    assert pattern_to_index(pattern, n_clients) == index

    def test_round_trip_sampled_28_choose_3(self):
        assert count_patterns(28, 3) == 3276
        for index in range(0, 3276, 97):
            assert pattern_to_index(index_to_pattern(index, 28, 3), 28) == index


class TestTextForm:
    def test_format(self):
        assert format_pattern((1, 7)) == "{1,7}"
        assert format_pattern(()) == "{}"

    def test_parse_round_trip(self):
        for pattern in [(1, 7), (2, 3, 9), (), (4,)]:
            assert parse_pattern(format_pattern(pattern)) == pattern

    def test_parse_rejects_garbage(self):
        for text in ["1,7", "{1,7", "{a,b}", "{1;7}"]:
            with pytest.raises(ValueError):
                parse_pattern(text)

    def test_validate_returns_tuple(self):
        assert validate_pattern([2, 5], 6) == (2, 5)
