"""Undirected communication graphs, their Laplacian gossip matrices, and
seeded time-varying graph sequences.

Vertices are labelled ``0 .. M-1``. Every sequence is pull-based: ``graph_at(k)``
returns the graph active at communication round ``k`` and ``next()`` walks an
internal cursor.
"""
from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

import numpy as np
from scipy.sparse.csgraph import connected_components

from .exceptions import (
    DegenerateChain,
    DisconnectedGraph,
    InvalidParameter,
    OverlapError,
    VertexMismatch,
)

# eigenvalues below this fraction of lambda_max count as zero
EIG_RTOL = 1e-9

SEQUENCE_KINDS = ("static", "skeleton_nonrecoverable", "markovian", "adversarial_taab")


def _normalize_edges(vertex_count, edges):
    out = set()
    for e in edges:
        i, j = (int(v) for v in e)
        if i == j:
            raise InvalidParameter(f"self-loop at vertex {i}")
        if not (0 <= i < vertex_count and 0 <= j < vertex_count):
            raise InvalidParameter(f"edge ({i}, {j}) outside 0..{vertex_count - 1}")
        out.add((min(i, j), max(i, j)))
    return frozenset(out)


@dataclass(frozen=True)
class Graph:
    """Simple undirected graph on ``vertex_count`` labelled vertices."""

    vertex_count: int
    edges: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if int(self.vertex_count) < 1:
            raise InvalidParameter("vertex_count must be positive")
        object.__setattr__(self, "vertex_count", int(self.vertex_count))
        object.__setattr__(self, "edges", _normalize_edges(self.vertex_count, self.edges))

    def __len__(self):
        return len(self.edges)

    def sorted_edges(self):
        return sorted(self.edges)

    def neighbors(self, i):
        return frozenset(b if a == i else a for a, b in self.edges if i in (a, b))

    def adjacency(self):
        A = np.zeros((self.vertex_count, self.vertex_count), dtype=bool)
        for i, j in self.edges:
            A[i, j] = A[j, i] = True
        return A

    def laplacian_matrix(self):
        return _laplacian_cached(self).copy()

    def n_components(self):
        if self.vertex_count == 1:
            return 1
        n, _ = connected_components(self.adjacency(), directed=False)
        return int(n)

    def is_connected(self):
        return self.n_components() == 1

    def union(self, edges):
        return Graph(self.vertex_count, self.edges | _normalize_edges(self.vertex_count, edges))


def _weighted_laplacian(vertex_count, edges, weights=None):
    W = np.zeros((vertex_count, vertex_count))
    if weights is None:
        weights = itertools.repeat(1.0)
    for (i, j), w in zip(edges, weights):
        W[i, j] -= w
        W[j, i] -= w
        W[i, i] += w
        W[j, j] += w
    return W


@functools.lru_cache(maxsize=8192)
def _laplacian_cached(g):
    W = _weighted_laplacian(g.vertex_count, g.sorted_edges())
    W.setflags(write=False)
    return W


# -- graph builders ---------------------------------------------------------

def ring_graph(M):
    if M < 3:
        raise InvalidParameter("a ring needs at least 3 vertices")
    return Graph(M, [(i, (i + 1) % M) for i in range(M)])


def path_graph(M):
    return Graph(M, [(i, i + 1) for i in range(M - 1)])


def complete_graph(M):
    return Graph(M, itertools.combinations(range(M), 2))


def star_graph(M):
    return Graph(M, [(0, i) for i in range(1, M)])


def random_extra_edges(base: Graph, count: int, rng) -> frozenset:
    """Draw ``count`` distinct non-edges of ``base`` uniformly at random."""
    pool = [e for e in itertools.combinations(range(base.vertex_count), 2) if e not in base.edges]
    if count > len(pool):
        raise InvalidParameter(f"only {len(pool)} non-edges available, asked for {count}")
    rng = np.random.default_rng(rng)
    picked = rng.choice(len(pool), size=count, replace=False) if count else []
    return frozenset(pool[int(i)] for i in picked)


BUILDERS = {
    "ring": ring_graph,
    "path": path_graph,
    "complete": complete_graph,
    "star": star_graph,
}


# -- gossip matrices ----------------------------------------------------------

def positive_spectrum(W):
    """Return ``(lambda_max, lambda_min_plus, kernel_dim)`` of a symmetric PSD matrix."""
    eigs = np.linalg.eigvalsh(W)
    lam_max = float(eigs[-1])
    if lam_max <= 0.0:
        return 0.0, 0.0, len(eigs)
    tol = EIG_RTOL * lam_max
    positive = eigs[eigs > tol]
    return lam_max, float(positive[0]), int(len(eigs) - len(positive))


@dataclass(frozen=True)
class GossipMatrix:
    matrix: np.ndarray
    lambda_max: float
    lambda_min_plus: float

    @property
    def chi(self):
        return self.lambda_max / self.lambda_min_plus

    @classmethod
    def from_matrix(cls, W):
        W = np.asarray(W, dtype=float)
        if W.shape == (1, 1):
            # single node: consensus is trivial; unit spectrum keeps chi = 1
            return cls(W, 1.0, 1.0)
        lam_max, lam_min, kernel = positive_spectrum(W)
        if kernel != 1 or lam_min <= 0.0:
            raise DisconnectedGraph(f"gossip matrix kernel has dimension {kernel}, expected 1")
        return cls(W, lam_max, lam_min)


def laplacian(g: Graph) -> GossipMatrix:
    """Unweighted Laplacian of a connected graph with its extreme eigenvalues."""
    if not g.is_connected():
        raise DisconnectedGraph(f"graph has {g.n_components()} components")
    return GossipMatrix.from_matrix(g.laplacian_matrix())


def condition_number(w: GossipMatrix) -> float:
    return w.lambda_max / w.lambda_min_plus


def edge_change_count(g1: Graph, g2: Graph) -> int:
    """Number of edge changes between two graphs, one change = one removal
    paired with one addition."""
    if g1.vertex_count != g2.vertex_count:
        raise VertexMismatch(f"{g1.vertex_count} vs {g2.vertex_count} vertices")
    return max(len(g1.edges - g2.edges), len(g2.edges - g1.edges))


def format_edge_list(k, g):
    return f"{k}: " + " ".join(f"({i},{j})" for i, j in g.sorted_edges())


# -- sequences ----------------------------------------------------------------

class GraphSequence:
    """Base class for time-varying graph sequences on a fixed vertex set."""

    kind = None

    def __init__(self, vertex_count, seed=None, parameters=None):
        self.vertex_count = int(vertex_count)
        self.seed = seed
        self.parameters = dict(parameters or {})
        self.cursor = 0

    def graph_at(self, k: int) -> Graph:
        raise NotImplementedError

    def laplacian_at(self, k):
        return _laplacian_cached(self.graph_at(k))

    def laplacian_sum(self, start, stop):
        """Sum of the round Laplacians for rounds ``start .. stop-1``."""
        total = np.zeros((self.vertex_count, self.vertex_count))
        for k in range(start, stop):
            total += self.laplacian_at(k)
        return total

    def spectral_bounds(self):
        """``(lambda_max, lambda_min_plus)`` valid for every round."""
        raise NotImplementedError

    def chi(self):
        lam_max, lam_min = self.spectral_bounds()
        return lam_max / lam_min

    def __iter__(self):
        return self

    def __next__(self):
        g = self.graph_at(self.cursor)
        self.cursor += 1
        return g

    next = __next__

    def reset(self):
        self.cursor = 0

    def graphs(self, count, start=0):
        return [self.graph_at(k) for k in range(start, start + count)]

    def __repr__(self):
        return f"{type(self).__name__}(M={self.vertex_count}, seed={self.seed}, {self.parameters})"


class StaticSequence(GraphSequence):
    kind = "static"

    def __init__(self, graph: Graph):
        super().__init__(graph.vertex_count, None, {"edges": graph.sorted_edges()})
        self.graph = graph
        self._gossip = laplacian(graph)

    def graph_at(self, k):
        return self.graph

    def laplacian_sum(self, start, stop):
        return (stop - start) * self._gossip.matrix

    def spectral_bounds(self):
        return self._gossip.lambda_max, self._gossip.lambda_min_plus


class SkeletonSequence(GraphSequence):
    """Connected skeleton plus volatile edges that fail for good.

    Each alive volatile edge fails independently with probability
    ``fail_prob`` between consecutive rounds; a failed edge never returns.
    Failure rounds are drawn up front, so ``graph_at`` is pure.
    """

    kind = "skeleton_nonrecoverable"

    def __init__(self, skeleton: Graph, volatile_edges, fail_prob, seed=None):
        volatile = _normalize_edges(skeleton.vertex_count, volatile_edges)
        if not skeleton.is_connected():
            raise DisconnectedGraph("skeleton must be connected")
        if volatile & skeleton.edges:
            raise OverlapError(f"volatile edges overlap skeleton: {sorted(volatile & skeleton.edges)}")
        if not 0.0 <= fail_prob <= 1.0:
            raise InvalidParameter("fail_prob must lie in [0, 1]")
        super().__init__(
            skeleton.vertex_count,
            seed,
            {"skeleton": skeleton.sorted_edges(), "volatile": sorted(volatile), "fail_prob": fail_prob},
        )
        self.skeleton = skeleton
        self.volatile_edges = tuple(sorted(volatile))
        rng = np.random.default_rng(seed)
        if fail_prob == 0.0:
            self._death = np.full(len(self.volatile_edges), np.inf)
        else:
            # first round at which the edge is gone, support {1, 2, ...}
            self._death = rng.geometric(fail_prob, size=len(self.volatile_edges)).astype(float)
        self._skeleton_gossip = laplacian(skeleton)
        self._full_gossip = laplacian(skeleton.union(self.volatile_edges))

    def alive_edges(self, k):
        return frozenset(e for e, t in zip(self.volatile_edges, self._death) if k < t)

    def graph_at(self, k):
        if k < 0:
            raise InvalidParameter("round index must be non-negative")
        return Graph(self.vertex_count, self.skeleton.edges | self.alive_edges(k))

    def spectral_bounds(self):
        return self._full_gossip.lambda_max, self._skeleton_gossip.lambda_min_plus


class MarkovSequence(GraphSequence):
    """Base graph plus candidate edges driven by independent two-state chains.

    Every candidate edge flips present/absent with probability ``flip_prob``
    per round. Round 0 is drawn from the stationary law (each candidate
    present with probability 1/2), so the chain of gossip matrices is
    stationary. States are generated lazily in fixed-size chunks.
    """

    kind = "markovian"
    _CHUNK = 4096

    def __init__(self, base: Graph, candidate_edges, flip_prob, seed=None, require_ergodic=True):
        cand = _normalize_edges(base.vertex_count, candidate_edges)
        if not base.is_connected():
            raise DisconnectedGraph("base graph must be connected")
        if cand & base.edges:
            raise OverlapError(f"candidate edges overlap base: {sorted(cand & base.edges)}")
        if not 0.0 <= flip_prob <= 1.0:
            raise InvalidParameter("flip_prob must lie in [0, 1]")
        if require_ergodic and flip_prob in (0.0, 1.0):
            raise DegenerateChain(f"flip_prob={flip_prob} gives a non-ergodic chain")
        super().__init__(
            base.vertex_count,
            seed,
            {"base": base.sorted_edges(), "candidates": sorted(cand), "flip_prob": flip_prob},
        )
        self.base = base
        self.candidate_edges = tuple(sorted(cand))
        self.flip_prob = float(flip_prob)
        self._rng = np.random.default_rng(seed)
        n_cand = len(self.candidate_edges)
        self._states = np.zeros((self._CHUNK, n_cand), dtype=bool)
        self._states[0] = self._rng.random(n_cand) < 0.5
        self._n = 1

        M = self.vertex_count
        self._base_lap = base.laplacian_matrix()
        self._edge_laps = np.array(
            [_weighted_laplacian(M, [e]) for e in self.candidate_edges]
        ).reshape(n_cand, M, M)
        cand_lap = self._edge_laps.sum(axis=0) if n_cand else np.zeros((M, M))
        self.stationary_mean = GossipMatrix.from_matrix(self._base_lap + 0.5 * cand_lap)
        self.rho_bound = float(np.linalg.norm(0.5 * cand_lap, 2)) if n_cand else 0.0
        self.rho = self._exact_rho() if n_cand <= 12 else self.rho_bound
        self.tau = mixing_time_estimate(self.flip_prob)
        self._full_gossip = laplacian(base.union(self.candidate_edges))

    def _exact_rho(self):
        # L(G) - Wbar = sum_e (s_e - 1/2) L_e over all 2^|E| presence patterns
        best = 0.0
        for signs in itertools.product((-0.5, 0.5), repeat=len(self.candidate_edges)):
            D = np.tensordot(np.array(signs), self._edge_laps, axes=1)
            best = max(best, float(np.linalg.norm(D, 2)))
        return best

    def _ensure(self, upto):
        while self._n < upto:
            if self._n + self._CHUNK > len(self._states):
                grown = np.zeros((2 * len(self._states) + self._CHUNK, self._states.shape[1]), dtype=bool)
                grown[: self._n] = self._states[: self._n]
                self._states = grown
            flips = self._rng.random((self._CHUNK, self._states.shape[1])) < self.flip_prob
            parity = (np.cumsum(flips, axis=0) % 2).astype(bool)
            self._states[self._n : self._n + self._CHUNK] = self._states[self._n - 1] ^ parity
            self._n += self._CHUNK

    def edge_states(self, start, stop):
        """Boolean presence matrix of shape ``(stop - start, n_candidates)``."""
        if start < 0:
            raise InvalidParameter("round index must be non-negative")
        self._ensure(stop)
        return self._states[start:stop]

    def graph_at(self, k):
        alive = self.edge_states(k, k + 1)[0]
        return Graph(self.vertex_count, self.base.edges | {e for e, a in zip(self.candidate_edges, alive) if a})

    def laplacian_sum(self, start, stop):
        counts = self.edge_states(start, stop).sum(axis=0).astype(float)
        total = (stop - start) * self._base_lap
        if len(counts):
            total = total + np.tensordot(counts, self._edge_laps, axes=1)
        return total

    def spectral_bounds(self):
        return self._full_gossip.lambda_max, laplacian(self.base).lambda_min_plus


def mixing_time_estimate(flip_prob):
    """Per-edge mixing-time estimate ``ceil(1 / log2(1 / |1 - 2 p|))``, at least 1."""
    r = abs(1.0 - 2.0 * flip_prob)
    if r == 0.0:
        return 1
    if r >= 1.0:
        raise DegenerateChain("flip chain does not mix")
    return max(1, math.ceil(1.0 / math.log2(1.0 / r)))


class TaabLayout(NamedTuple):
    d: int
    left_root: int
    right_root: int
    v1: tuple
    v2: tuple
    movable: tuple  # last entry is the initial central root

    @property
    def vertex_count(self):
        return 2 * self.d + 3


def taab_layout(d: int) -> TaabLayout:
    """Vertex roles of the adversarial tree sequence on ``2d + 3`` vertices."""
    if int(d) != d or d < 2:
        raise InvalidParameter("d must be an integer >= 2")
    d = int(d)
    h = d // 2
    return TaabLayout(
        d=d,
        left_root=0,
        right_root=1,
        v1=tuple(range(2, 2 + h)),
        v2=tuple(range(2 + h, 2 + 2 * h)),
        movable=tuple(range(2 + 2 * h, 2 * d + 3)),
    )


def taab_graph(layout: TaabLayout, left, right, central) -> Graph:
    edges = [(layout.left_root, v) for v in (*layout.v1, *left)]
    edges += [(layout.right_root, v) for v in (*layout.v2, *right)]
    edges += [(layout.left_root, central), (layout.right_root, central)]
    return Graph(layout.vertex_count, edges)


class AdversarialTaabSequence(GraphSequence):
    """Periodic sequence of ``T_{a,b}`` trees whose central root sweeps
    left-to-right and back.

    Phase one: the central root becomes a right leaf and the smallest-index
    movable left leaf becomes the new central root; phase two mirrors it.
    The initial central root is the largest movable index, which makes the
    smallest-index rule return to the starting labelling after one period.
    """

    kind = "adversarial_taab"

    def __init__(self, d: int):
        self.layout = taab_layout(d)
        super().__init__(self.layout.vertex_count, None, {"d": self.layout.d})
        self.d = self.layout.d
        h = self.d // 2
        self.half_period = 2 * self.d - 2 * h
        self.period = 2 * self.half_period
        self._graphs, self._sizes = self._build_period()
        bounds = [laplacian(g) for g in self._graphs]
        self._bounds = (max(b.lambda_max for b in bounds), min(b.lambda_min_plus for b in bounds))

    @property
    def v1(self):
        return self.layout.v1

    @property
    def v2(self):
        return self.layout.v2

    def _build_period(self):
        lay = self.layout
        left = sorted(lay.movable[:-1])
        right = []
        central = lay.movable[-1]
        graphs, sizes = [], []
        for step in range(self.period):
            graphs.append(taab_graph(lay, left, right, central))
            sizes.append((len(lay.v1) + len(left), len(lay.v2) + len(right)))
            src, dst = (left, right) if step < self.half_period else (right, left)
            new_central = min(src)
            src.remove(new_central)
            dst.append(central)
            dst.sort()
            central = new_central
        assert taab_graph(lay, left, right, central) == graphs[0], "sequence is not periodic"
        return graphs, sizes

    def graph_at(self, k):
        if k < 0:
            raise InvalidParameter("round index must be non-negative")
        return self._graphs[k % self.period]

    def partition_sizes(self, k):
        """``(a, b)``: leaves attached to the left and right roots at round ``k``."""
        return self._sizes[k % self.period]

    def phase(self, k):
        """1 while the central root moves rightwards, 2 on the way back."""
        return 1 if k % self.period < self.half_period else 2

    def central_root(self, k):
        g = self.graph_at(k)
        lay = self.layout
        both = g.neighbors(lay.left_root) & g.neighbors(lay.right_root)
        (c,) = both
        return c

    def spectral_bounds(self):
        return self._bounds


# -- factories mirroring the public operations ---------------------------------

def static_sequence(graph: Graph) -> StaticSequence:
    return StaticSequence(graph)


def skeleton_sequence(skeleton: Graph, volatile_edges: Iterable, fail_prob: float, seed=None) -> SkeletonSequence:
    return SkeletonSequence(skeleton, volatile_edges, fail_prob, seed)


def markov_sequence(base: Graph, candidate_edges: Iterable, flip_prob: float, seed=None) -> MarkovSequence:
    return MarkovSequence(base, candidate_edges, flip_prob, seed)


def adversarial_taab_sequence(d: int) -> AdversarialTaabSequence:
    return AdversarialTaabSequence(d)
