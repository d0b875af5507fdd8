"""Information-propagation bookkeeping and error floors for the hard instance.

Node memories of a black-box procedure are tracked by the length of their
possibly-non-zero coordinate prefix. On the hard instance only the prefix
frontier can move:

* ``A1`` nodes (with the ``e1`` term) turn an even ``x`` prefix ``p`` into a
  ``y`` prefix ``p + 1`` and always reach ``y`` prefix 1 on their own;
* ``A2`` nodes turn an odd ``x`` prefix ``p`` into a ``y`` prefix ``p + 1``;
* everyone copies the ``y`` prefix into ``x`` through the unit diagonal;
* plain quadratic nodes never create coordinates.
"""
from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from .exceptions import InvalidParameter
from .problems import q_root

PLAIN, EVEN_TO_ODD, ODD_TO_EVEN = 0, 1, 2


class SpanHistory(NamedTuple):
    """``prefix[t, m] = (x_prefix, y_prefix)`` after round ``t`` (row 0: before any round)."""

    prefix: np.ndarray

    @property
    def global_prefix(self):
        return self.prefix.max(axis=(1, 2))

    @property
    def final_prefix(self):
        return int(self.global_prefix[-1])


def _local_step(x, y, role):
    gain = np.where(
        (role == EVEN_TO_ODD) & (x > 0) & (x % 2 == 0) | (role == ODD_TO_EVEN) & (x % 2 == 1),
        x + 1,
        x,
    )
    y_new = np.maximum(y, gain)
    y_new = np.where(role == EVEN_TO_ODD, np.maximum(y_new, 1), y_new)
    x_new = np.maximum(x, y)
    return x_new, y_new


def node_roles(seq):
    role = np.full(seq.vertex_count, PLAIN)
    role[list(seq.v2)] = EVEN_TO_ODD
    role[list(seq.v1)] = ODD_TO_EVEN
    return role


def simulate_bbp_span(seq, K: int, local_steps_between_rounds: int = 1, roles=None) -> SpanHistory:
    """Most favourable prefix growth of any black-box procedure over ``K`` rounds.

    Each round is a communication (every node takes the maximum prefix over
    itself and its current neighbours) followed by ``local_steps_between_rounds``
    local computations; the same number of local steps runs before round 0.
    """
    if K < 0 or local_steps_between_rounds < 1:
        raise InvalidParameter("need K >= 0 and at least one local step")
    role = node_roles(seq) if roles is None else np.asarray(roles)
    M = seq.vertex_count
    x = np.zeros(M, dtype=int)
    y = np.zeros(M, dtype=int)
    out = np.zeros((K + 1, M, 2), dtype=int)

    def local(x, y):
        for _ in range(local_steps_between_rounds):
            x, y = _local_step(x, y, role)
        return x, y

    x, y = local(x, y)
    out[0, :, 0], out[0, :, 1] = x, y
    for k in range(K):
        A = seq.graph_at(k).adjacency() | np.eye(M, dtype=bool)
        x = np.where(A, x[None, :], 0).max(axis=1)
        y = np.where(A, y[None, :], 0).max(axis=1)
        x, y = local(x, y)
        out[k + 1, :, 0], out[k + 1, :, 1] = x, y
    return SpanHistory(out)


def greedy_transfer_rounds(seq, from_set, to_set, start: int = 0, max_rounds: int = 10_000):
    """Fewest rounds for information held by ``from_set`` at round ``start`` to
    reach any vertex of ``to_set``; breadth-first search over the time-expanded
    graph. Returns ``None`` if ``max_rounds`` are exhausted."""
    src, dst = set(from_set), set(to_set)
    if not src or not dst or src & dst:
        raise InvalidParameter("need non-empty disjoint vertex sets")
    informed = np.zeros(seq.vertex_count, dtype=bool)
    informed[list(src)] = True
    target = np.zeros_like(informed)
    target[list(dst)] = True
    for r in range(max_rounds):
        A = seq.graph_at(start + r).adjacency()
        informed = informed | A[:, informed].any(axis=1)
        if np.any(informed & target):
            return r + 1
    return None


class FloorCurve(NamedTuple):
    exponential: float
    q_power: float
    d: int


def lower_bound_curve(L, mu, chi, K, y0_dist_sq, d=None) -> FloorCurve:
    """Error floor after ``K`` rounds in both of its forms.

    ``q_power = q^(2K/d) |y0 - y*|^2 / 16`` and
    ``exponential = exp(-32 mu / (L - mu) K / chi) |y0 - y*|^2 / 16``.
    Without an explicit ``d`` it is recovered as ``ceil(chi / 8)``.
    """
    if not L > mu > 0:
        raise InvalidParameter(f"need L > mu > 0, got L={L}, mu={mu}")
    if chi < 1 or K < 0:
        raise InvalidParameter("need chi >= 1 and K >= 0")
    if d is None:
        d = max(1, math.ceil(chi / 8.0))
    q = q_root(L, mu)
    q_power = q ** (2.0 * K / d) * y0_dist_sq / 16.0
    exponential = math.exp(-32.0 * mu / (L - mu) * K / chi) * y0_dist_sq / 16.0
    if chi <= 8 * d:
        assert q_power >= exponential * (1.0 - 1e-12), (q_power, exponential)
    return FloorCurve(exponential, q_power, int(d))


def floor_series(problem, seq, record, y0=None):
    """``(K, floor, measured)`` triples for a solver run on the hard instance.

    ``measured`` is the squared distance of the node average to the solution,
    the floor uses the exact ``d`` of the sequence and the measured ``chi``.
    """
    y_star = problem.reference_solution[problem.dim_x :]
    y0 = np.zeros(problem.dim_y) if y0 is None else np.asarray(y0, dtype=float)
    y0_dist_sq = float(np.sum((y0 - y_star) ** 2))
    chi = seq.chi()
    rows = []
    for cp in record.checkpoints:
        curve = lower_bound_curve(problem.nominal_L, problem.mu, max(chi, 1.0), cp.K, y0_dist_sq, d=seq.d)
        rows.append((cp.K, curve.q_power, cp.dist_sq))
    return rows
