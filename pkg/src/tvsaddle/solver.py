"""Decentralized extra-step method with a pluggable consensus subroutine."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from typing import NamedTuple

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .consensus import CONSENSUS_KINDS, required_H
from .exceptions import InvalidParameter, NonFiniteIterate
from .graphs import MarkovSequence
from .states import check_vector, consensus_error, replicate

CSV_HEADER = ("k", "K", "oracle_calls", "consensus_err", "dist_sq")


class Checkpoint(NamedTuple):
    k: int
    K: int
    oracle_calls: int
    consensus_err: float
    dist_sq: float


@dataclass
class RunRecord:
    checkpoints: list = field(default_factory=list)
    final_states: np.ndarray | None = None
    aborted: str | None = None

    def append(self, cp: Checkpoint):
        if self.checkpoints:
            last = self.checkpoints[-1]
            assert cp.K >= last.K and cp.oracle_calls >= last.oracle_calls
        self.checkpoints.append(cp)

    def column(self, name):
        return np.array([getattr(c, name) for c in self.checkpoints])

    @property
    def final_mean(self):
        return self.final_states.mean(axis=0)

    @property
    def total_rounds(self):
        return self.checkpoints[-1].K

    @property
    def oracle_calls(self):
        return self.checkpoints[-1].oracle_calls

    def __len__(self):
        return len(self.checkpoints)


@dataclass(frozen=True)
class SolverConfig:
    """Solver settings; ``None`` fields are resolved from the problem and graph.

    ``eps`` is the target accuracy used for the default consensus tolerance
    ``eps0 = eps * mu / (10 L_max)``.
    """

    gamma: float | None = None
    H: int | None = None
    N: int = 100
    consensus_kind: str = "acc_gossip_nonrecoverable"
    consensus_params: dict = field(default_factory=dict)
    metrics_every: int = 1
    eps: float = 1e-6
    eps0: float | None = None
    divergence_threshold: float = 1e12

    def __post_init__(self):
        if self.consensus_kind not in CONSENSUS_KINDS:
            raise InvalidParameter(f"unknown consensus kind {self.consensus_kind!r}")
        if self.N < 0 or self.metrics_every < 1:
            raise InvalidParameter("need N >= 0 and metrics_every >= 1")
        if self.gamma is not None and self.gamma <= 0:
            raise InvalidParameter("gamma must be positive")


def default_markov_budget(seq: MarkovSequence, eps):
    """ACOGWMC iterations ``ceil(tau (sqrt(chi) + rho^2 / lambda_min^2 ln(1/eps)))``."""
    w = seq.stationary_mean
    return int(math.ceil(seq.tau * (math.sqrt(w.chi) + seq.rho ** 2 / w.lambda_min_plus ** 2 * math.log(1.0 / eps))))


def resolve(problem, seq, cfg: SolverConfig, z0):
    """Fill in step size, consensus tolerance and budget; returns a dict."""
    gamma = 1.0 / (4.0 * problem.L_max) if cfg.gamma is None else cfg.gamma
    eps0 = cfg.eps * problem.mu / (10.0 * problem.L_max) if cfg.eps0 is None else cfg.eps0
    consensus = CONSENSUS_KINDS[cfg.consensus_kind](**cfg.consensus_params).fit(seq)
    H = cfg.H
    if H is None:
        if cfg.consensus_kind == "exact" or problem.node_count == 1:
            H = 0
        elif cfg.consensus_kind == "acogwmc":
            H = default_markov_budget(seq, cfg.eps)
        else:
            dist0 = float(np.sum((z0 - problem.reference_solution) ** 2))
            Q_sq = problem.solution_q_sq()
            tiny = np.finfo(float).tiny
            H = required_H(consensus.chi_, eps0, max(dist0, tiny), max(Q_sq, tiny), problem.L_max)
    return {"gamma": gamma, "eps0": eps0, "H": int(H), "consensus": consensus}


def desm_run(problem, seq, cfg: SolverConfig, z0=None) -> RunRecord:
    """Run ``cfg.N`` extra-step iterations with two consensus calls each.

    Every node starts at ``z0`` (default: zero, projected). Checkpoints are
    recorded at ``k = 0``, every ``metrics_every`` iterations, and at ``N``.
    """
    z0, settings = _prepare(problem, seq, cfg, z0)
    return _extra_step_loop(problem, cfg, settings, replicate(z0, problem.node_count))


def _prepare(problem, seq, cfg, z0):
    if seq.vertex_count != problem.node_count:
        raise InvalidParameter(f"graph has {seq.vertex_count} vertices, problem has {problem.node_count} nodes")
    z0 = problem.project(np.zeros(problem.dim_z) if z0 is None else check_vector(z0, problem.dim_z))
    return z0, resolve(problem, seq, cfg, z0)


def _extra_step_loop(problem, cfg, settings, Z):
    gamma, H, consensus = settings["gamma"], settings["H"], settings["consensus"]
    z_star = problem.reference_solution
    record = RunRecord()
    K = 0
    calls = 0

    def checkpoint(k):
        dist = float(np.sum((Z.mean(axis=0) - z_star) ** 2)) if z_star is not None else float("nan")
        record.append(Checkpoint(k, K, calls, consensus_error(Z), dist))

    checkpoint(0)
    for k in range(cfg.N):
        Zh = Z - gamma * problem.node_operators(Z)
        Zt, used = consensus.apply(Zh, K, H)
        K += used
        Z_half = problem.project(Zt)
        Zh = Z - gamma * problem.node_operators(Z_half)
        Zt, used = consensus.apply(Zh, K, H)
        K += used
        Z = problem.project(Zt)
        calls += 2
        if not np.all(np.abs(Z) <= cfg.divergence_threshold):
            checkpoint(k + 1)
            record.final_states = Z
            record.aborted = f"iterate exceeded {cfg.divergence_threshold:g} at k={k + 1}"
            raise NonFiniteIterate(record.aborted, record)
        if (k + 1) % cfg.metrics_every == 0 or k + 1 == cfg.N:
            checkpoint(k + 1)
    record.final_states = Z
    return record


class DecentralizedExtraStep(BaseEstimator):
    """Estimator front-end for the decentralized extra-step method.

    ``fit(problem, sequence)`` runs the method; the result is exposed through
    ``z_`` (final node average), ``states_``, ``record_``, ``n_rounds_`` and
    ``n_oracle_calls_``. Constructor parameters mirror :class:`SolverConfig`.
    """

    def __init__(
        self,
        gamma=None,
        H=None,
        N=100,
        consensus_kind="acc_gossip_nonrecoverable",
        consensus_params=None,
        metrics_every=1,
        eps=1e-6,
        eps0=None,
        divergence_threshold=1e12,
    ):
        self.gamma = gamma
        self.H = H
        self.N = N
        self.consensus_kind = consensus_kind
        self.consensus_params = consensus_params
        self.metrics_every = metrics_every
        self.eps = eps
        self.eps0 = eps0
        self.divergence_threshold = divergence_threshold

    def config(self) -> SolverConfig:
        kw = {f.name: getattr(self, f.name) for f in fields(SolverConfig)}
        kw["consensus_params"] = dict(self.consensus_params or {})
        return SolverConfig(**kw)

    def fit(self, problem, sequence, z0=None):
        cfg = self.config()
        z0, settings = _prepare(problem, sequence, cfg, z0)
        self.gamma_ = settings["gamma"]
        self.H_ = settings["H"]
        self.eps0_ = settings["eps0"]
        self.consensus_ = settings["consensus"]
        self.record_ = _extra_step_loop(problem, cfg, settings, replicate(z0, problem.node_count))
        self.states_ = self.record_.final_states
        self.z_ = self.record_.final_mean
        self.n_rounds_ = self.record_.total_rounds
        self.n_oracle_calls_ = self.record_.oracle_calls
        return self

    def score(self, problem, sequence=None):
        """Negative squared distance of the final average to the reference solution."""
        check_is_fitted(self)
        return -float(np.sum((self.z_ - problem.reference_solution) ** 2))


class Predictions(NamedTuple):
    communications: float
    oracle_calls: float
    markov_communications: float | None


def complexity_predicates(L, mu, chi, eps, tau=None, rho=None, lambda_min=None) -> Predictions:
    """Leading-order complexity expressions evaluated with unit constants."""
    if not (L > 0 and mu > 0 and chi >= 1 and 0 < eps < 1):
        raise InvalidParameter("need L, mu > 0, chi >= 1, eps in (0, 1)")
    log_eps = math.log(1.0 / eps)
    cond = L / mu
    comm = math.sqrt(chi) * math.log(chi) * cond * log_eps ** 2
    oracle = cond * log_eps
    markov = None
    if tau is not None:
        extra = 0.0 if not rho else rho ** 2 / lambda_min ** 2
        markov = tau * (math.sqrt(chi) + extra) * cond * log_eps ** 2
    return Predictions(comm, oracle, markov)
