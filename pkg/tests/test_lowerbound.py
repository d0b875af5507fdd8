import math

import numpy as np
import pytest

from tvsaddle.exceptions import InvalidParameter
from tvsaddle.graphs import Graph, adversarial_taab_sequence, path_graph, static_sequence
from tvsaddle.lowerbound import (
    PLAIN,
    greedy_transfer_rounds,
    lower_bound_curve,
    node_roles,
    simulate_bbp_span,
)
from tvsaddle.problems import q_root


class TestSpan:
    def test_initial_prefix_only_on_v2(self):
        seq = adversarial_taab_sequence(3)
        hist = simulate_bbp_span(seq, 0)
        y = hist.prefix[0, :, 1]
        for m in range(seq.vertex_count):
            assert y[m] == (1 if m in seq.v2 else 0)
        assert hist.final_prefix == 1

    @pytest.mark.parametrize("d", range(2, 7))
    def test_no_crossing_before_d_rounds(self, d):
        prefix = simulate_bbp_span(adversarial_taab_sequence(d), d - 1).global_prefix
        assert prefix.max() <= 1

    @pytest.mark.parametrize("d", range(2, 7))
    def test_three_d_rounds(self, d):
        assert simulate_bbp_span(adversarial_taab_sequence(d), 3 * d).final_prefix <= 3

    @pytest.mark.parametrize("d", range(2, 7))
    def test_prefix_limited_by_fastest_transfer(self, d):
        seq = adversarial_taab_sequence(d)
        t_min = min(greedy_transfer_rounds(seq, seq.v1, seq.v2, start=s) for s in range(seq.period))
        prefix = simulate_bbp_span(seq, 10 * d).global_prefix
        for K, p in enumerate(prefix):
            assert p <= 1 + K // t_min

    @pytest.mark.parametrize("d", range(2, 7))
    def test_prefix_within_one_of_floor_k_over_d(self, d):
        prefix = simulate_bbp_span(adversarial_taab_sequence(d), 10 * d).global_prefix
        assert all(p <= 1 + K // d for K, p in enumerate(prefix))

    def test_monotone_and_more_local_steps_do_not_help(self):
        seq = adversarial_taab_sequence(4)
        one = simulate_bbp_span(seq, 30).global_prefix
        many = simulate_bbp_span(seq, 30, local_steps_between_rounds=5).global_prefix
        assert np.all(np.diff(one) >= 0)
        np.testing.assert_array_equal(one, many)

    def test_plain_roles_never_progress(self):
        seq = adversarial_taab_sequence(2)
        roles = np.full(seq.vertex_count, PLAIN)
        assert simulate_bbp_span(seq, 20, roles=roles).final_prefix == 0
        assert set(np.unique(node_roles(seq))) == {0, 1, 2}

    def test_invalid(self):
        with pytest.raises(InvalidParameter):
            simulate_bbp_span(adversarial_taab_sequence(2), -1)


class TestTransfer:
    def test_direct_neighbours(self):
        assert greedy_transfer_rounds(static_sequence(path_graph(4)), [0], [1]) == 1

    @pytest.mark.parametrize("length", [1, 3, 6])
    def test_static_path_distance(self, length):
        seq = static_sequence(path_graph(length + 1))
        assert greedy_transfer_rounds(seq, [0], [length]) == length

    def test_adversarial_d2_from_start(self):
        seq = adversarial_taab_sequence(2)
        assert greedy_transfer_rounds(seq, seq.v1, seq.v2) >= 2

    def test_tree_diameter_caps_transfer(self):
        seq = adversarial_taab_sequence(6)
        times = [greedy_transfer_rounds(seq, seq.v1, seq.v2, start=s) for s in range(seq.period)]
        assert min(times) == 4

    def test_unreachable(self):
        class Split:
            vertex_count = 3

            def graph_at(self, k):
                return Graph(3, [(0, 1)])

        seq = Split()
        assert greedy_transfer_rounds(seq, [0], [2], max_rounds=5) is None

    def test_overlap_rejected(self):
        with pytest.raises(InvalidParameter):
            greedy_transfer_rounds(static_sequence(path_graph(3)), [0, 1], [1])


class TestCurve:
    def test_zero_rounds(self):
        assert lower_bound_curve(4.0, 1.0, 10.0, 0, 3.2, d=3).q_power == pytest.approx(3.2 / 16)

    def test_frozen_value(self):
        q = (3 - math.sqrt(5)) / 2
        c = lower_bound_curve(2.0, 1.0, 8.0, 8, 16.0, d=4)
        assert c.q_power == pytest.approx(q**4, rel=1e-13)
        assert q**4 == pytest.approx(0.0213, abs=5e-5)

    def test_non_increasing(self):
        vals = [lower_bound_curve(10.0, 1.0, 30.0, K, 1.0, d=4).q_power for K in range(50)]
        assert all(a >= b for a, b in zip(vals, vals[1:]))

    def test_q_power_dominates_exponential(self):
        for ratio in (1.5, 2.0, 10.0, 100.0):
            for d in (2, 5):
                for chi in (1.0, 4.0 * d, 8.0 * d):
                    for K in (0, 7, 40):
                        c = lower_bound_curve(ratio, 1.0, chi, K, 1.0, d=d)
                        assert c.q_power >= c.exponential * (1 - 1e-12)

    def test_d_from_chi(self):
        assert lower_bound_curve(4.0, 1.0, 33.7, 5, 1.0).d == 5
        assert lower_bound_curve(4.0, 1.0, 33.7, 5, 1.0).q_power == pytest.approx(q_root(4.0, 1.0) ** 2 / 16)
