import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cvqrng.detector import (
    TmdConfig,
    brute_force_occupancy,
    build_tmd_povm,
    occupancy_fraction,
    occupancy_probability,
    occupancy_tail_cap,
    read_povm,
    stirling2,
    write_povm,
)
from cvqrng.errors import BudgetExceededError, InvalidParameterError
from cvqrng.fock import TailKind, povm_completeness_check
from helpers import set_partitions, stirling2_alternating


class TestStirling:
    def test_edge_conventions(self):
        assert stirling2(0, 0) == 1
        assert all(stirling2(n, 0) == 0 for n in range(1, 10))
        assert all(stirling2(n, 1) == 1 for n in range(1, 10))
        assert all(stirling2(n, n) == 1 for n in range(0, 10))
        assert stirling2(3, 5) == 0

    @pytest.mark.parametrize("n", range(0, 8))
    def test_against_partition_enumeration(self, n):
        counts = {}
        for part in set_partitions(range(n)):
            counts[len(part)] = counts.get(len(part), 0) + 1
        for j in range(n + 1):
            assert stirling2(n, j) == counts.get(j, 0)

    def test_small_values(self):
        assert stirling2(3, 2) == 3
        assert stirling2(4, 2) == 7
        assert stirling2(10, 5) == 42525

    @pytest.mark.parametrize("n", [5, 20, 60, 120])
    def test_against_alternating_sum(self, n):
        for j in range(n + 1):
            assert Fraction(stirling2(n, j)) == stirling2_alternating(n, j)

    def test_no_wraparound_for_large_arguments(self):
        # S(200, 100) has far more than 64 bits
        assert stirling2(200, 100).bit_length() > 64
        assert Fraction(stirling2(200, 100)) == stirling2_alternating(200, 100)

    def test_negative_rejected(self):
        with pytest.raises(InvalidParameterError):
            stirling2(-1, 0)


class TestOccupancy:
    def test_examples(self):
        assert occupancy_probability(1, 1, 7) == 1.0
        assert occupancy_fraction(2, 1, 2) == Fraction(1, 2)
        assert occupancy_fraction(2, 2, 2) == Fraction(1, 2)
        assert occupancy_fraction(0, 0, 5) == 1
        assert occupancy_fraction(3, 1, 2) == Fraction(2, 8)
        assert occupancy_fraction(3, 2, 2) == Fraction(6, 8)

    def test_bad_click_count(self):
        with pytest.raises(InvalidParameterError):
            occupancy_probability(3, 5, 4)

    @pytest.mark.parametrize("n_modes", [2, 3, 4, 8])
    def test_matches_brute_force(self, n_modes):
        for n in range(7):
            for j in range(min(n, n_modes) + 1):
                assert occupancy_fraction(n, j, n_modes) == brute_force_occupancy(n, j, n_modes)

    @pytest.mark.parametrize("n_modes", [1, 2, 5, 32])
    def test_normalization(self, n_modes):
        for n in range(41):
            total = sum(occupancy_probability(n, j, n_modes) for j in range(n_modes + 1))
            assert abs(total - 1.0) <= 1e-12

    def test_zero_when_more_clicks_than_photons(self):
        for n in range(6):
            for j in range(n + 1, 9):
                assert occupancy_probability(n, j, 8) == 0.0

    @pytest.mark.parametrize("n_modes", [2, 4, 32])
    def test_geometric_bound(self, n_modes):
        for j in range(1, n_modes + 1):
            for n in range(61):
                bound = Fraction(math.comb(n_modes, j) * j**n, n_modes**n)
                assert occupancy_fraction(n, j, n_modes) <= bound

    def test_tail_cap_dominates_later_entries(self):
        for j in range(1, 9):
            cap = occupancy_tail_cap(j, 32, 40)
            assert all(occupancy_probability(n, j, 32) <= cap for n in range(41, 120))

    def test_alternating_form_with_mode_binomial(self):
        # the closed form with C(n_modes, j) normalizes; with C(n, j) it does not
        n, K = 5, 4
        with_modes = sum(math.comb(K, j) * math.factorial(j) * stirling2_alternating(n, j)
                         for j in range(K + 1)) / Fraction(K**n)
        with_photons = sum(math.comb(n, j) * math.factorial(j) * stirling2_alternating(n, j)
                           for j in range(K + 1)) / Fraction(K**n)
        assert with_modes == 1
        assert with_photons != 1


class TestBruteForce:
    def test_examples(self):
        assert brute_force_occupancy(2, 2, 2) == Fraction(2, 4)
        assert brute_force_occupancy(4, 1, 3) == Fraction(3, 81)
        assert brute_force_occupancy(0, 0, 3) == 1
        assert brute_force_occupancy(3, 0, 3) == 0

    def test_budget(self):
        with pytest.raises(BudgetExceededError):
            brute_force_occupancy(12, 3, 8)


class TestPovm:
    def test_small_povm(self):
        povm = build_tmd_povm(TmdConfig(n_modes=2, n_outcomes=3, n_store=5))
        np.testing.assert_array_equal(povm[0].diag, [1, 0, 0, 0, 0])
        np.testing.assert_array_equal(povm[1].diag, [0, 1, 1 / 2, 1 / 4, 1 / 8])
        np.testing.assert_array_equal(povm[2].diag, [0, 0, 1 / 2, 3 / 4, 7 / 8])
        assert povm[0].tail is TailKind.ZERO
        assert povm[1].tail is TailKind.EXPLICIT
        assert povm[2].tail is TailKind.CONSERVATIVE_UNIT
        assert povm[1].entry(9) == 2 * 0.5**9

    @pytest.mark.parametrize("cfg", [TmdConfig(2, 3, 5), TmdConfig(32, 10, 20),
                                     TmdConfig(8, 2, 3), TmdConfig(4, 5, 0)])
    def test_complete(self, cfg):
        assert povm_completeness_check(build_tmd_povm(cfg), 30, 1e-12)

    def test_default_detector(self):
        povm = build_tmd_povm(TmdConfig(n_modes=32, n_outcomes=10, n_store=20))
        assert len(povm) == 10
        assert all(op.n_store == 20 for op in povm)
        # 9 or more clicks needs at least 9 photons
        assert np.all(povm[9].diag[:9] == 0)

    def test_too_many_outcomes(self):
        with pytest.raises(InvalidParameterError):
            TmdConfig(n_modes=4, n_outcomes=6)
        TmdConfig(n_modes=4, n_outcomes=5)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(1, 12), st.integers(2, 13), st.integers(0, 25))
    def test_entries_in_unit_interval(self, modes, m, store):
        if m > modes + 1:
            return
        povm = build_tmd_povm(TmdConfig(modes, m, store))
        theta = povm.matrix(store + 5)
        assert theta.min() >= 0 and theta.max() <= 1

    def test_export_round_trip(self, tmp_path):
        povm = build_tmd_povm(TmdConfig(32, 10, 20))
        path = write_povm(povm, tmp_path / "povm.jsonl")
        lines = path.read_text().splitlines()
        assert len(lines) == 10
        back = read_povm(path)
        for a, b in zip(povm, back):
            np.testing.assert_array_equal(a.diag, b.diag)
        assert back[0].tail is TailKind.ZERO
        # closed-form tails degrade to the conservative kind
        assert back[1].tail is TailKind.CONSERVATIVE_UNIT
        assert povm_completeness_check(back, 19, 1e-12)
