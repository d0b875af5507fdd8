import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tvsaddle.exceptions import DegenerateChain, DisconnectedGraph, VertexMismatch
from tvsaddle.graphs import (
    GossipMatrix,
    Graph,
    adversarial_taab_sequence,
    complete_graph,
    condition_number,
    edge_change_count,
    format_edge_list,
    laplacian,
    markov_sequence,
    mixing_time_estimate,
    path_graph,
    ring_graph,
    skeleton_sequence,
    star_graph,
    static_sequence,
    taab_layout,
)


def brute_laplacian(M, edges):
    W = np.zeros((M, M))
    for i, j in edges:
        W[i, i] += 1
        W[j, j] += 1
        W[i, j] -= 1
        W[j, i] -= 1
    return W


@pytest.mark.parametrize(
    "graph, eigs, chi",
    [
        (complete_graph(3), [0, 3, 3], 1.0),
        (path_graph(3), [0, 1, 3], 3.0),
        (star_graph(4), [0, 1, 1, 4], 4.0),
    ],
)
def test_small_graph_spectra(graph, eigs, chi):
    w = laplacian(graph)
    np.testing.assert_allclose(np.linalg.eigvalsh(w.matrix), eigs, atol=1e-12)
    assert condition_number(w) == pytest.approx(chi, rel=1e-12)


def test_ring_spectrum_matches_closed_form():
    M = 9
    w = laplacian(ring_graph(M))
    expected = sorted(2 - 2 * np.cos(2 * np.pi * np.arange(M) / M))
    np.testing.assert_allclose(np.linalg.eigvalsh(w.matrix), expected, atol=1e-12)
    assert w.lambda_min_plus == pytest.approx(2 - 2 * np.cos(2 * np.pi / M), rel=1e-12)


def test_condition_number_scale_invariant():
    w = laplacian(path_graph(6))
    scaled = GossipMatrix.from_matrix(3.7 * w.matrix)
    assert scaled.chi == pytest.approx(w.chi, rel=1e-12)


def test_disconnected_graph_rejected():
    g = Graph(4, [(0, 1), (2, 3)])
    assert not g.is_connected()
    with pytest.raises(DisconnectedGraph):
        laplacian(g)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 10), st.data())
def test_laplacian_properties(M, data):
    pairs = list(itertools.combinations(range(M), 2))
    edges = data.draw(st.lists(st.sampled_from(pairs), unique=True))
    W = Graph(M, edges).laplacian_matrix()
    np.testing.assert_array_equal(W, brute_laplacian(M, edges))
    np.testing.assert_allclose(W @ np.ones(M), 0.0)
    assert np.linalg.eigvalsh(W)[0] > -1e-10


def test_edge_change_count_basics():
    g = ring_graph(5)
    assert edge_change_count(g, g) == 0
    moved = Graph(5, [e for e in g.edges if e != (0, 1)] + [(0, 2)])
    assert edge_change_count(g, moved) == 1
    with pytest.raises(VertexMismatch):
        edge_change_count(g, ring_graph(6))


def test_format_edge_list():
    assert format_edge_list(3, path_graph(3)) == "3: (0,1) (1,2)"


class TestSkeleton:
    def test_no_failures_is_static(self):
        seq = skeleton_sequence(ring_graph(6), [(0, 3), (1, 4)], 0.0, seed=1)
        full = ring_graph(6).union([(0, 3), (1, 4)])
        assert all(seq.graph_at(k) == full for k in range(50))

    def test_certain_failure_leaves_skeleton(self):
        seq = skeleton_sequence(ring_graph(6), [(0, 3), (1, 4)], 1.0, seed=1)
        assert seq.graph_at(0) == ring_graph(6).union([(0, 3), (1, 4)])
        assert all(seq.graph_at(k) == ring_graph(6) for k in range(1, 20))

    def test_alive_set_shrinks_and_contains_ring(self):
        ring = ring_graph(8)
        seq = skeleton_sequence(ring, [(0, 4), (1, 5), (2, 6), (3, 7)], 0.1, seed=3)
        prev = seq.graph_at(0).edges
        for k in range(1, 200):
            cur = seq.graph_at(k).edges
            assert cur <= prev
            assert ring.edges <= cur
            prev = cur

    def test_chi_uses_skeleton_gap(self):
        seq = skeleton_sequence(ring_graph(8), [(0, 4)], 0.2, seed=0)
        lam_max, lam_min = seq.spectral_bounds()
        assert lam_min == pytest.approx(laplacian(ring_graph(8)).lambda_min_plus)
        assert lam_max == pytest.approx(laplacian(ring_graph(8).union([(0, 4)])).lambda_max)


class TestMarkov:
    def test_half_flip_has_unit_mixing_time(self):
        assert mixing_time_estimate(0.5) == 1

    def test_mixing_time_formula(self):
        # |1 - 2p| = 1/2 at p = 1/4: one round halves the deviation
        assert mixing_time_estimate(0.25) == 1
        assert mixing_time_estimate(0.05) == 7

    def test_empty_candidates_static(self):
        seq = markov_sequence(ring_graph(6), [], 0.25, seed=1)
        assert seq.rho == 0.0
        np.testing.assert_allclose(seq.stationary_mean.matrix, laplacian(ring_graph(6)).matrix)
        assert all(seq.graph_at(k) == ring_graph(6) for k in range(10))

    def test_degenerate_flip_prob(self):
        for p in (0.0, 1.0):
            with pytest.raises(DegenerateChain):
                markov_sequence(ring_graph(6), [(0, 3)], p, seed=1)

    def test_empirical_mean_laplacian(self):
        chords = [(0, 3), (1, 4), (2, 5)]
        seq = markov_sequence(ring_graph(6), chords, 0.25, seed=11)
        rounds = 100_000
        mean = seq.laplacian_sum(0, rounds) / rounds
        wbar = seq.stationary_mean.matrix
        assert np.linalg.norm(mean - wbar, 2) <= 0.02 * np.linalg.norm(wbar, 2)

    def test_edge_presence_frequency(self):
        seq = markov_sequence(ring_graph(6), [(0, 3)], 0.25, seed=5)
        rounds = 100_000
        freq = seq.edge_states(0, rounds).mean()
        # consecutive states are correlated; the binomial sigma is inflated by
        # sqrt((1 + r) / (1 - r)) with lag-one correlation r = 1 - 2p
        r = 0.5
        sigma = np.sqrt(0.25 / rounds * (1 + r) / (1 - r))
        assert abs(freq - 0.5) <= 3 * sigma

    def test_rho_bound_dominates_exact(self):
        seq = markov_sequence(ring_graph(7), [(0, 3), (1, 5), (2, 6)], 0.3, seed=2)
        assert seq.rho <= seq.rho_bound + 1e-12
        assert seq.rho > 0


class TestAdversarial:
    def test_first_graph_shape(self):
        seq = adversarial_taab_sequence(2)
        assert seq.vertex_count == 7
        assert seq.partition_sizes(0) == (3, 1)

    @pytest.mark.parametrize("d", range(2, 7))
    def test_trees_and_two_edge_property(self, d):
        seq = adversarial_taab_sequence(d)
        M = seq.vertex_count
        assert M == taab_layout(d).vertex_count
        for k in range(seq.period + 1):
            g = seq.graph_at(k)
            assert g.is_connected() and len(g) == M - 1
            assert edge_change_count(g, seq.graph_at(k + 1)) <= 2
        assert seq.graph_at(seq.period) == seq.graph_at(0)

    def test_period_max_change_d3(self):
        seq = adversarial_taab_sequence(3)
        changes = [edge_change_count(seq.graph_at(k), seq.graph_at(k + 1)) for k in range(seq.period)]
        assert max(changes) <= 2


def test_static_sequence_iteration():
    seq = static_sequence(ring_graph(4))
    first = [next(seq) for _ in range(3)]
    assert all(g == ring_graph(4) for g in first)
    seq.reset()
    assert seq.cursor == 0
