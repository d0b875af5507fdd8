"""Acceptance gate: one test per criterion, each printing a single PASS/FAIL line."""
import math
import time

import numpy as np
import pytest

from tvsaddle.cli import main
from tvsaddle.consensus import acogwmc, acogwmc_envelope, mlmc_direction, sample_level, theorem3_defaults
from tvsaddle.graphs import adversarial_taab_sequence, edge_change_count, markov_sequence, random_extra_edges, ring_graph, static_sequence
from tvsaddle.harness import preset, run_experiment
from tvsaddle.invariants import contraction_cases
from tvsaddle.lowerbound import floor_series, greedy_transfer_rounds, simulate_bbp_span
from tvsaddle.problems import (
    approx_solution_y,
    error_bound,
    hard_instance_dimension,
    make_bilinear_problem,
    make_lower_bound_problem,
    q_root,
)
from tvsaddle.solver import SolverConfig, desm_run, resolve
from tvsaddle.states import consensus_error


def finish(report, number, ok, detail, started, budget):
    elapsed = time.perf_counter() - started
    ok = bool(ok) and elapsed < budget
    report(number, ok, f"{detail} [{elapsed:.1f}s / {budget:g}s]")
    return ok


def test_criterion_01_gossip_contraction(report):
    t0 = time.perf_counter()
    rows = contraction_cases(50)
    bad = [r for r in rows if r[2] > r[3] + 1e-12]
    worst = max(r[2] / r[3] for r in rows)
    assert finish(report, 1, not bad, f"{len(rows)} checks, {len(bad)} violations, worst ratio/bound {worst:.3g}", t0, 30)


def bilinear_case(seed):
    return make_bilinear_problem(5, 4, seed=seed, L=10.0, mu=1.0), static_sequence(ring_graph(5))


def test_criterion_02_consensus_tolerance(report):
    t0 = time.perf_counter()
    worst = {}
    ok = True
    for eps0 in (1e-2, 1e-4):
        worst[eps0] = 0.0
        for seed in range(5):
            p, seq = bilinear_case(seed)
            assert seq.chi() <= 50
            rec = desm_run(p, seq, SolverConfig(N=100, eps0=eps0))
            err = rec.column("consensus_err").max()
            worst[eps0] = max(worst[eps0], err)
            ok &= bool(err <= eps0)
    detail = ", ".join(f"eps0={e:g}: max err {w:.2e}" for e, w in worst.items())
    assert finish(report, 2, ok, detail, t0, 60)


def test_criterion_03_linear_rate(report):
    t0 = time.perf_counter()
    ratios, r2s = [], []
    for seed in range(20):
        p, seq = bilinear_case(seed)
        cfg = SolverConfig(N=300, eps=1e-8, metrics_every=5)
        rec = desm_run(p, seq, cfg)
        H = resolve(p, seq, cfg, np.zeros(p.dim_z))["H"]
        K, dist = rec.column("K"), rec.column("dist_sq")
        tail = slice(len(K) // 5, None)
        slope, icpt = np.polyfit(K[tail], np.log(dist[tail]), 1)
        fit = slope * K[tail] + icpt
        resid = np.log(dist[tail]) - fit
        centred = np.log(dist[tail]) - np.log(dist[tail]).mean()
        r2s.append(1 - resid @ resid / (centred @ centred))
        ratios.append(-slope / (p.mu / (8 * p.L * H)))
    r2, ratio = float(np.median(r2s)), float(np.median(ratios))
    ok = r2 >= 0.95 and 1 / 8 <= ratio <= 8
    assert finish(report, 3, ok, f"median R^2 {r2:.5f}, median fitted/predicted exponent {ratio:.2f}", t0, 120)


def test_criterion_04_two_edge(report):
    t0 = time.perf_counter()
    worst, checks = 0, 0
    for d in range(2, 7):
        seq = adversarial_taab_sequence(d)
        for k in range(seq.period):
            worst = max(worst, edge_change_count(seq.graph_at(k), seq.graph_at(k + 1)))
            checks += 1
    assert finish(report, 4, worst <= 2, f"{checks} consecutive pairs, max change {worst}", t0, 1)


def test_criterion_05_span_lemma(report):
    t0 = time.perf_counter()
    span_bad, transfer_bad = [], []
    for d in range(2, 7):
        seq = adversarial_taab_sequence(d)
        prefix = simulate_bbp_span(seq, 10 * d).global_prefix
        span_bad += [(d, K, int(prefix[K])) for K in range(10 * d + 1) if prefix[K] > K // d]
        for start in range(seq.period):
            t = greedy_transfer_rounds(seq, seq.v1, seq.v2, start=start)
            if t is None or t < d:
                transfer_bad.append((d, start, t))
    detail = (
        f"prefix > floor(K/d) at {len(span_bad)} (d,K) points, e.g. {span_bad[:3]}; "
        f"transfer < d at {len(transfer_bad)} start rounds, e.g. {transfer_bad[:2]}"
    )
    assert finish(report, 5, not span_bad and not transfer_bad, detail, t0, 5)


@pytest.mark.parametrize("consensus", ["plain", "acc_gossip_nonrecoverable"])
def test_criterion_06_floor(report, consensus):
    t0 = time.perf_counter()
    d, H, N = 3, 3, 60
    checked, bad = 0, 0
    for ratio in (2.0, 10.0):
        n = hard_instance_dimension(ratio, 1.0, 2 * N * H)
        p = make_lower_bound_problem(d, ratio, 1.0, n)
        seq = adversarial_taab_sequence(d)
        rec = desm_run(p, seq, SolverConfig(N=N, H=H, consensus_kind=consensus))
        rows = floor_series(p, seq, rec)
        checked += len(rows)
        bad += sum(measured < floor for _, floor, measured in rows)
    assert finish(report, 6, bad == 0, f"{consensus}: {checked} checkpoints, {bad} below floor", t0, 120)


def test_criterion_07_geometric_approximation(report):
    t0 = time.perf_counter()
    n, gaps = 20, []
    ok = True
    for ratio in (2.0, 4.0, 10.0):
        p = make_lower_bound_problem(2, ratio, 1.0, n)
        A = np.eye(n) - np.eye(n, k=1)
        G = np.block([[np.eye(n), 0.5 * ratio * A], [-0.5 * ratio * A.T, np.eye(n)]])
        rhs = np.zeros(2 * n)
        rhs[n] = ratio**2 / 4
        y_star = np.linalg.solve(G, rhs)[n:]
        assert np.allclose(y_star, p.y_star, atol=1e-10)
        q = q_root(ratio, 1.0)
        gap = np.linalg.norm(approx_solution_y(q, n) - y_star)
        bound = error_bound(q, 4 / ratio**2, n)
        gaps.append(f"L/mu={ratio:g}: {gap:.2e} <= {bound:.2e}")
        ok &= bool(gap <= bound)
    assert finish(report, 7, ok, "; ".join(gaps), t0, 1)


def test_criterion_08_markov_consensus(report):
    t0 = time.perf_counter()
    ring = ring_graph(10)
    errs, envs = [], []
    for seed in range(20):
        cands = random_extra_edges(ring, 4, np.random.default_rng(seed))
        seq = markov_sequence(ring, cands, 0.25, seed=seed)
        w = seq.stationary_mean
        prm = theorem3_defaults(w.lambda_max, w.lambda_min_plus, seq.rho, seq.tau, seq.tau, N=200, seed=seed)
        Z = np.random.default_rng(1000 + seed).standard_normal((10, 3))
        r0 = 0.5 * np.sum(Z * (w.matrix @ Z)) / 10
        out, _ = acogwmc(Z, seq, prm)
        errs.append(consensus_error(out))
        envs.append(acogwmc_envelope(200, prm, w.lambda_min_plus, consensus_error(Z), r0, C=10.0))
    med_err, med_env = float(np.median(errs)), float(np.median(envs))

    # unbiasedness of the multilevel direction over independent chains
    cands = [(0, 5), (1, 6), (2, 7), (3, 8)]
    zg = np.random.default_rng(7).standard_normal((10, 1))
    rng = np.random.default_rng(8)
    S, B = 2.0**6, 1
    draws = np.empty((10_000, 10))
    for r in range(draws.shape[0]):
        seq = markov_sequence(ring, cands, 0.25, seed=50_000 + r)
        draws[r] = mlmc_direction(seq, 0, zg, sample_level(rng), B, S)[:, 0]
    target = (markov_sequence(ring, cands, 0.25, seed=0).stationary_mean.matrix @ zg)[:, 0]
    sigma = draws.std(axis=0, ddof=1) / math.sqrt(draws.shape[0])
    gap = np.abs(draws.mean(axis=0) - target)
    # nodes whose edges never flip give a deterministic component: exact match
    random_part = sigma > 1e-12 * (1 + np.abs(target))
    worst_z = float(np.max(gap[random_part] / sigma[random_part]))
    exact = bool(np.all(gap[~random_part] <= 1e-12 * (1 + np.abs(target[~random_part]))))

    ok = med_err < med_env and worst_z <= 3.0 and exact
    detail = (
        f"median error {med_err:.3e} vs envelope {med_env:.3e}; "
        f"estimator max |z| {worst_z:.2f} over {random_part.sum()} random components, "
        f"{(~random_part).sum()} deterministic components exact: {exact}"
    )
    assert finish(report, 8, ok, detail, t0, 180)


def fd_check(p, rng, points=5):
    worst = 0.0
    for _ in range(points):
        z = rng.standard_normal(p.dim_z)
        h = 1e-6 * (1 + np.linalg.norm(z))
        for m in range(p.node_count):
            fd = np.empty(p.dim_z)
            for i in range(p.dim_z):
                e = np.zeros(p.dim_z)
                e[i] = h
                fd[i] = (p.node_value(m, z + e) - p.node_value(m, z - e)) / (2 * h)
            fd[p.dim_x :] *= -1
            F = p.eval_operator(m, z)
            worst = max(worst, np.linalg.norm(F - fd) / max(1.0, np.linalg.norm(F)))
    return worst


def test_criterion_09_operator_certificates(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    ok, parts = True, []
    for name, p in (
        ("bilinear", make_bilinear_problem(5, 4, seed=1, L=10.0, mu=1.0)),
        ("lower_bound", make_lower_bound_problem(3, 4.0, 1.0, 10)),
    ):
        fd = fd_check(p, rng)
        mono = lips = 0
        for _ in range(100):
            z1, z2 = rng.standard_normal((2, p.dim_z)) * 3
            d = z1 - z2
            dF = p.operator(z1) - p.operator(z2)
            mono += p.mu * d @ d > dF @ d + 1e-10
            lips += np.linalg.norm(dF) > p.L * np.linalg.norm(d) * (1 + 1e-12)
            for m in range(p.node_count):
                dFm = p.eval_operator(m, z1) - p.eval_operator(m, z2)
                lips += np.linalg.norm(dFm) > p.L_max * np.linalg.norm(d) * (1 + 1e-12)
        ok &= fd <= 1e-5 and mono == 0 and lips == 0
        parts.append(f"{name}: fd {fd:.1e}, monotone/lipschitz violations {mono}/{lips}")
    assert finish(report, 9, ok, "; ".join(parts), t0, 10)


def test_criterion_10_determinism(report, tmp_path):
    t0 = time.perf_counter()
    for tag in ("a", "b"):
        main(["verify", "--quiet", "--output", str(tmp_path / f"verify_{tag}")])
        run_experiment(preset("lowerbound-demo"), out_dir=tmp_path / f"run_{tag}")
    same = (tmp_path / "verify_a" / "verify.csv").read_bytes() == (tmp_path / "verify_b" / "verify.csv").read_bytes()
    for name in ("seed_42.csv", "aggregate.csv", "floor.csv", "summary.txt"):
        same &= (tmp_path / "run_a" / name).read_bytes() == (tmp_path / "run_b" / name).read_bytes()
    assert finish(report, 10, same, "verify.csv and preset CSVs byte-identical across two runs", t0, 60)
