"""Self-check suite behind the ``verify`` command.

Each group returns the number of individual checks, the number of violations
and a short detail string. Everything is seeded, so repeated runs agree
bit for bit.
"""
from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from .consensus import acc_gossip_non_recoverable, contraction_bound, gossip_params
from .graphs import (
    BUILDERS,
    adversarial_taab_sequence,
    edge_change_count,
    random_extra_edges,
    skeleton_sequence,
    static_sequence,
)
from .lowerbound import greedy_transfer_rounds, simulate_bbp_span
from .problems import make_lower_bound_problem, q_root
from .states import consensus_error

ROUNDOFF = 1e-12


class GroupResult(NamedTuple):
    group: str
    checks: int
    violations: int
    detail: str

    @property
    def passed(self):
        return self.violations == 0


def random_consensus_case(seed):
    """Seeded ``(sequence, states)`` pair: static on even seeds, skeleton on odd ones."""
    rng = np.random.default_rng(seed)
    M = int(rng.integers(4, 17))
    base = BUILDERS[("ring", "path", "star")[seed % 3]](M)
    extra = random_extra_edges(base, int(rng.integers(0, M)), rng)
    if seed % 2 == 0:
        seq = static_sequence(base.union(extra))
    else:
        seq = skeleton_sequence(base, extra, float(rng.uniform(0.02, 0.3)), seed=int(rng.integers(2**31)))
    Z = rng.standard_normal((M, int(rng.integers(1, 5))))
    return seq, Z


def contraction_cases(n_cases=50):
    """Ratio and bound for every ``(case, H)`` with ``H = 1 .. ceil(5 sqrt(chi))``."""
    rows = []
    for seed in range(n_cases):
        seq, Z = random_consensus_case(seed)
        lam_max, lam_min = seq.spectral_bounds()
        chi = lam_max / lam_min
        err0 = consensus_error(Z)
        for H in range(1, math.ceil(5.0 * math.sqrt(chi)) + 1):
            out, _ = acc_gossip_non_recoverable(Z, seq, 0, gossip_params(lam_max, lam_min, H))
            rows.append((seed, H, consensus_error(out) / err0, contraction_bound(chi, H)))
    return rows


def check_contraction(n_cases=50):
    rows = contraction_cases(n_cases)
    bad = sum(ratio > bound + ROUNDOFF for _, _, ratio, bound in rows)
    worst = max(ratio / bound for _, _, ratio, bound in rows if bound > 0)
    return GroupResult("gossip_contraction", len(rows), bad, f"worst ratio/bound {worst:.3g}")


def span_violations(ds=range(2, 7)):
    """``(d, K, prefix)`` wherever the final prefix exceeds ``floor(K / d)``."""
    out = []
    for d in ds:
        seq = adversarial_taab_sequence(d)
        prefix = simulate_bbp_span(seq, 10 * d).global_prefix
        out.extend((d, K, int(prefix[K])) for K in range(10 * d + 1) if prefix[K] > K // d)
    return out


def transfer_violations(ds=range(2, 7)):
    """``(d, start, rounds)`` wherever a transfer from V1 to V2 beats ``d`` rounds."""
    out = []
    for d in ds:
        seq = adversarial_taab_sequence(d)
        for start in range(seq.period):
            t = greedy_transfer_rounds(seq, seq.v1, seq.v2, start=start)
            if t is None or t < d:
                out.append((d, start, t))
    return out


def check_bbp_span():
    ds = range(2, 7)
    span = span_violations(ds)
    transfer = transfer_violations(ds)
    checks = sum(10 * d + 1 + adversarial_taab_sequence(d).period for d in ds)
    detail = f"prefix above floor(K/d) at {len(span)} points, transfer below d at {len(transfer)} start rounds"
    return GroupResult("bbp_span", checks, len(span) + len(transfer), detail)


def check_two_edge(ds=range(2, 7)):
    checks = bad = worst = 0
    for d in ds:
        seq = adversarial_taab_sequence(d)
        for k in range(seq.period):
            c = edge_change_count(seq.graph_at(k), seq.graph_at(k + 1))
            worst = max(worst, c)
            checks += 1
            bad += c > 2
    return GroupResult("two_edge", checks, bad, f"max edge changes {worst}")


def check_aggregation_identity(points=100, seed=0):
    rng = np.random.default_rng(seed)
    checks = bad = 0
    worst = 0.0
    for d, ratio, n in ((2, 2.0, 6), (3, 4.0, 9), (4, 10.0, 12)):
        p = make_lower_bound_problem(d, ratio, 1.0, n)
        for _ in range(points):
            z = rng.standard_normal(p.dim_z) * rng.uniform(0.1, 10.0)
            x, y = p.split(z)
            lhs = float(np.mean([p.node_value(m, z) for m in range(p.node_count)]))
            rhs = p.global_value(x, y)
            rel = abs(lhs - rhs) / max(abs(rhs), 1.0)
            worst = max(worst, rel)
            checks += 1
            bad += rel > 1e-10
    return GroupResult("aggregation_identity", checks, bad, f"max relative gap {worst:.3g}")


def check_q_root():
    ratios = np.geomspace(1.0 + 1e-6, 1e6, 200)
    worst = 0.0
    bad = 0
    for r in ratios:
        q = q_root(float(r), 1.0)
        alpha = 4.0 / float(r) ** 2
        res = abs(q * q - (2.0 + alpha) * q + 1.0)
        worst = max(worst, res)
        bad += res > 1e-12 or not 0.0 < q < 1.0
    return GroupResult("q_root_residual", len(ratios), bad, f"max residual {worst:.3g}")


GROUPS = (check_contraction, check_bbp_span, check_two_edge, check_aggregation_identity, check_q_root)


def run_suite():
    return [g() for g in GROUPS]
