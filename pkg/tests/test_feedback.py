import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bitarq import InvalidParameterError, SearchExhaustedError
from bitarq.feedback import (
    CombinadicMessage,
    PermutationMessage,
    combinadic_decode,
    combinadic_encode,
    expected_idle_periods,
    feedback_bit_width,
    feedback_error_tolerance,
    mean_report_delay,
    optimal_c1,
    optimal_c1_from_mean,
    pack_bits,
    permutation_at,
    permutation_recover,
    permutation_search,
    simulate_permutation_search,
    throughput_one_retx,
    unpack_bits,
)


class TestCombinadic:
    def test_first_subset(self):
        msg = combinadic_encode([0, 1], 4)
        assert msg.rank == 0
        assert msg.bit_width == 3

    def test_last_subset(self):
        assert combinadic_encode([2, 3], 4).rank == 5

    def test_segment_width(self):
        assert feedback_bit_width(532, 3) == 25

    def test_colex_order_is_exhaustive_bijection(self):
        for n in (4, 9):
            for w in range(1, n + 1):
                seen = []
                for subset in itertools.combinations(range(n), w):
                    msg = combinadic_encode(subset, n)
                    assert msg.rank < math.comb(n, w)
                    assert combinadic_decode(msg, n, w) == subset
                    seen.append(msg.rank)
                assert sorted(seen) == list(range(math.comb(n, w)))

    def test_decode_rejects_large_rank(self):
        msg = CombinadicMessage(6, 3)
        with pytest.raises(InvalidParameterError):
            combinadic_decode(msg, 4, 2)

    def test_encode_validation(self):
        with pytest.raises(InvalidParameterError):
            combinadic_encode([1, 1], 4)
        with pytest.raises(InvalidParameterError):
            combinadic_encode([4], 4)
        with pytest.raises(InvalidParameterError):
            combinadic_encode([], 4)

    @settings(max_examples=200, deadline=None)
    @given(data=st.data())
    def test_random_round_trip(self, data):
        n = data.draw(st.integers(2, 64))
        w = data.draw(st.integers(1, n))
        subset = tuple(sorted(data.draw(
            st.lists(st.integers(0, n - 1), min_size=w, max_size=w, unique=True)
        )))
        msg = combinadic_encode(subset, n)
        assert combinadic_decode(msg, n, w) == subset

    def test_width_lower_bound(self):
        # information-theoretic sanity: C >= w*log2(n/w) - O(w)
        for n, w in [(64, 8), (256, 16), (1024, 4)]:
            width = feedback_bit_width(n, w)
            assert width >= w * math.log2(n / w) - 2 * w


class TestBitPacking:
    def test_exact_width_big_endian(self):
        data = pack_bits(0b10110, 5)
        assert data == bytes([0b10110000])
        assert unpack_bits(data, 5) == 0b10110

    def test_multi_byte(self):
        msg = combinadic_encode([3, 141, 500], 532)
        data = msg.to_bytes()
        assert len(data) == (msg.bit_width + 7) // 8
        assert unpack_bits(data, msg.bit_width) == msg.rank

    def test_width_checks(self):
        with pytest.raises(InvalidParameterError):
            pack_bits(8, 3)
        with pytest.raises(InvalidParameterError):
            unpack_bits(b"\x00\x00", 3)


class TestPermutationStream:
    def test_jump_equals_sequence(self):
        seed = 77
        chunked = [permutation_at(seed, i, 10) for i in range(6)]
        for i, perm in enumerate(chunked):
            assert (permutation_at(seed, i, 10) == perm).all()

    def test_distinct_indexes_give_distinct_permutations(self):
        a = permutation_at(5, 0, 16)
        b = permutation_at(5, 1, 16)
        assert not (a == b).all()

    def test_whole_packet_window_hits_first_permutation(self):
        msg = permutation_search(range(8), 8, 8, 3, rng_seed=99)
        assert msg.stream_index == 1
        assert msg.idle_periods == 0
        assert msg.residual == 1

    def test_round_trip(self):
        targets = (2, 9, 13)
        msg = permutation_search(targets, 16, 3, 9, rng_seed=1234)
        assert permutation_recover(msg, 16, 3, rng_seed=1234) == targets

    def test_round_trip_many(self):
        rng = np.random.default_rng(3)
        for trial in range(25):
            targets = tuple(sorted(rng.choice(24, size=4, replace=False).tolist()))
            msg = permutation_search(targets, 24, 4, 7, rng_seed=1000 + trial)
            assert permutation_recover(msg, 24, 4, rng_seed=1000 + trial) == targets

    def test_index_decomposition(self):
        msg = PermutationMessage(residual=5, idle_periods=3, bit_width=4)
        assert msg.stream_index == 3 * 16 + 5
        assert unpack_bits(msg.to_bytes(), 4) == 5

    def test_search_cap(self):
        with pytest.raises(SearchExhaustedError):
            permutation_search((0, 2, 4), 16, 3, 4, rng_seed=1, max_tries=3)

    def test_exact_window_size_required(self):
        with pytest.raises(InvalidParameterError):
            permutation_search((0, 1), 16, 3, 4, rng_seed=1)

    def test_mean_search_length(self):
        ks, _ = simulate_permutation_search(16, 3, 9, trials=2000, seed=5)
        assert ks.mean() == pytest.approx(math.comb(16, 3), rel=0.10)


class TestDelayModel:
    def test_idle_periods_closed_form(self):
        # against direct expectation over the geometric search length
        n, w, c1 = 12, 2, 4
        p = 1.0 / math.comb(n, w)
        m = 1 << c1
        direct = sum((k // m) * p * (1 - p) ** (k - 1) for k in range(1, 200_000))
        assert expected_idle_periods(n, w, c1) == pytest.approx(direct, rel=1e-8)

    def test_optimal_c1_examples(self):
        assert optimal_c1(16, 3) == 9
        assert optimal_c1_from_mean(30) == 4
        assert optimal_c1_from_mean(45) == 5
        assert optimal_c1_from_mean(2) == 1

    def test_optimal_c1_minimizes_model_delay(self):
        n, w = 64, 2
        star = optimal_c1(n, w)
        delays = {c1: mean_report_delay(n, w, c1) for c1 in range(star - 2, star + 3)}
        assert min(delays, key=delays.get) == star

    def test_throughput_division(self):
        assert throughput_one_retx(64, 1.0) == 64.0
        with pytest.raises(InvalidParameterError):
            throughput_one_retx(64, 0.0)


class TestErrorTolerance:
    def test_single_bit(self):
        assert feedback_error_tolerance(1) == pytest.approx(1e-3, abs=1e-15)

    def test_long_message(self):
        assert feedback_error_tolerance(36) == pytest.approx(2.78e-5, abs=1e-7)

    def test_monotone_to_zero(self):
        values = [feedback_error_tolerance(c) for c in (1, 2, 8, 64, 1024)]
        assert all(a > b for a, b in zip(values, values[1:]))
        assert values[-1] < 1e-6

    def test_bound_is_tight(self):
        # intact-message probability equals the floor exactly at the bound
        for c in (1, 5, 36):
            pr = feedback_error_tolerance(c, p_min=0.999)
            assert (1 - pr) ** c == pytest.approx(0.999, rel=1e-12)
