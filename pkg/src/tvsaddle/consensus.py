"""Consensus subroutines over time-varying graphs.

Node states are stacked row-wise, ``Z[m]`` being node ``m``'s vector; one
multiplication by a round's Laplacian is one communication round.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .exceptions import InvalidParameter, SequenceExhausted
from .graphs import MarkovSequence
from .states import check_states


@dataclass(frozen=True)
class ConsensusParams:
    eta: float
    beta: float
    H: int

    def __post_init__(self):
        if self.eta <= 0 or self.beta < 0 or self.H < 0:
            raise InvalidParameter(f"invalid consensus parameters {self}")


def gossip_params(lambda_max, lambda_min_plus, H):
    """Step ``1/lambda_max`` and momentum ``(sqrt(chi) - 1)/(sqrt(chi) + 1)``."""
    sq = math.sqrt(lambda_max / lambda_min_plus)
    return ConsensusParams(eta=1.0 / lambda_max, beta=(sq - 1.0) / (sq + 1.0), H=int(H))


def contraction_bound(chi, H):
    """Upper bound ``2 chi (1 - 1/sqrt(chi))^H`` on the consensus-error ratio."""
    return 2.0 * chi * (1.0 - 1.0 / math.sqrt(chi)) ** H


def _check_horizon(seq, stop):
    horizon = getattr(seq, "horizon", None)
    if horizon is not None and stop > horizon:
        raise SequenceExhausted(f"sequence provides {horizon} rounds, {stop} requested")


def effective_adjacencies(seq, k0, H):
    """Yield the shrinking adjacency used at each accelerated-gossip step.

    Node ``i`` starts from its round-``k0`` neighbours and drops every neighbour
    that is absent at some later round; the result at step ``k`` is the
    intersection of the adjacencies of rounds ``k0 .. k0 + k``.
    """
    if H <= 0:
        return
    A = seq.graph_at(k0).adjacency()
    for k in range(H):
        A = A & seq.graph_at(k0 + k).adjacency()
        yield A


def acc_gossip_non_recoverable(Z, seq, k0, params: ConsensusParams):
    """Accelerated gossip with non-recoverable links.

    Returns ``(Z_out, rounds_used)`` with ``rounds_used = H``.
    """
    Z = check_states(Z, seq.vertex_count, copy=True)
    _check_horizon(seq, k0 + params.H)
    u_prev = Z
    z = Z
    for A in effective_adjacencies(seq, k0, params.H):
        deg = A.sum(axis=1, keepdims=True)
        u = z - params.eta * (deg * z - A.astype(float) @ z)
        z = (1.0 + params.beta) * u - params.beta * u_prev
        u_prev = u
    return z, params.H


def plain_gossip(Z, seq, k0, H, eta):
    """Unaccelerated baseline ``z <- z - eta W^k z`` on the raw round graphs."""
    Z = check_states(Z, seq.vertex_count, copy=True)
    if eta <= 0:
        raise InvalidParameter("eta must be positive")
    _check_horizon(seq, k0 + H)
    for k in range(H):
        Z = Z - eta * (seq.laplacian_at(k0 + k) @ Z)
    return Z


def required_H(chi, eps0, dist0_sq, Q_sq, L_max):
    """Consensus rounds per call that keep every node within ``eps0`` of the mean.

    ``ceil(sqrt(chi) * ln(chi * (4 + (dist0_sq/2 + Q_sq/(2 L_max^2)) / eps0^2)))``
    """
    if chi < 1:
        raise InvalidParameter("chi must be >= 1")
    for name, v in (("eps0", eps0), ("dist0_sq", dist0_sq), ("Q_sq", Q_sq), ("L_max", L_max)):
        if not v > 0:
            raise InvalidParameter(f"{name} must be positive, got {v}")
    ratio = (0.5 * dist0_sq + Q_sq / (2.0 * L_max * L_max)) / (eps0 * eps0)
    return int(math.ceil(math.sqrt(chi) * math.log(chi * (4.0 + ratio))))


# -- Markovian networks ----------------------------------------------------------

@dataclass(frozen=True)
class AcogwmcParams:
    gamma: float
    theta: float
    eta: float
    beta: float
    p: float
    S: float
    B: int
    N: int
    seed: int | None = None
    b: int = 1

    def __post_init__(self):
        if not (self.gamma > 0 and self.B >= 1 and self.S >= 2 and self.N >= 0):
            raise InvalidParameter(f"invalid ACOGWMC parameters {self}")

    def with_iterations(self, N, seed=None):
        return AcogwmcParams(self.gamma, self.theta, self.eta, self.beta, self.p, self.S, self.B,
                             int(N), self.seed if seed is None else seed, self.b)


def admissible_gamma(lambda_max, lambda_min_plus, rho, tau, b):
    """Upper end of the admissible step interval."""
    first = 3.0 / (4.0 * lambda_max)
    if rho == 0:
        return first
    denom = 1800.0 * rho * rho * (tau / b + tau * tau / (b * b))
    return min(first, lambda_min_plus ** 3 / denom ** 2)


def theorem3_defaults(lambda_max, lambda_min_plus, rho, tau, b, mu_like=None, N=0, seed=None):
    """Accelerated-consensus parameters with ``gamma`` at half the admissible bound.

    ``mu_like`` is the modulus inside the momentum formulas; it defaults to
    ``lambda_min_plus``.
    """
    for name, v in (("lambda_max", lambda_max), ("lambda_min_plus", lambda_min_plus), ("tau", tau), ("b", b)):
        if not v > 0:
            raise InvalidParameter(f"{name} must be positive, got {v}")
    if rho < 0:
        raise InvalidParameter("rho must be non-negative")
    mu = lambda_min_plus if mu_like is None else mu_like
    gamma = 0.5 * admissible_gamma(lambda_max, lambda_min_plus, rho, tau, b)
    if not (gamma > 0 and math.isfinite(gamma)):
        raise InvalidParameter("admissible step interval is empty at working precision")
    p = 0.25
    beta = math.sqrt(4.0 * p * p * mu * gamma / 3.0)
    eta = math.sqrt(12.0 / (mu * gamma))
    if not math.isclose(eta, 3.0 * beta / (p * mu * gamma), rel_tol=1e-10):
        raise ArithmeticError("momentum formulas disagree")
    theta = (p / eta - 1.0) / (beta * p / eta - 1.0)
    S = max(2.0, math.sqrt(0.25 * (1.0 + 2.0 / beta)))
    B = max(1, math.ceil(b * math.log2(S)))
    return AcogwmcParams(gamma, theta, eta, beta, p, S, B, int(N), seed, int(b))


def sample_level(rng):
    """Geometric level on ``{0, 1, ...}`` with ``P(J = j) = 2^-(j+1)``."""
    return int(rng.geometric(0.5)) - 1


def mlmc_direction(seq, start, zg, J, B, S):
    """Randomized multilevel estimate of ``Wbar zg`` from rounds ``start ...``."""
    g0 = seq.laplacian_sum(start, start + B) @ zg / B
    if J == 0 or 2 ** J > S:
        return g0
    nJ = 2 ** J * B
    gJ = seq.laplacian_sum(start, start + nJ) @ zg / nJ
    gJm1 = seq.laplacian_sum(start, start + nJ // 2) @ zg / (nJ // 2)
    return g0 + 2 ** J * (gJ - gJm1)


def acogwmc(Z, seq, params: AcogwmcParams, k0=0):
    """Accelerated consensus over a Markovian graph sequence.

    All nodes share one generator for the levels ``J_k``. A step whose batch
    exceeds ``S`` still consumes its ``2^J B`` rounds.

    Returns ``(Z_out, rounds_used)``.
    """
    Z = check_states(Z, seq.vertex_count, copy=True)
    rng = np.random.default_rng(params.seed)
    p, gamma, eta, beta = params.p, params.gamma, params.eta, params.beta
    # Same recursion as zg = theta zf + (1-theta) z and
    # z+ = eta zf+ + (p-eta) zf + ..., regrouped so that no coefficient grows
    # with eta (eta ~ gamma^-1/2 is huge for small admissible steps).
    a = p / eta
    one_minus_theta = a * (1.0 - beta) / (1.0 - a * beta)
    eta_omt = p * (1.0 - beta) / (1.0 - a * beta)
    z = Z
    zf = Z
    T = 0
    for _ in range(params.N):
        zg = zf + one_minus_theta * (z - zf)
        J = sample_level(rng)
        batch = 2 ** J * params.B
        _check_horizon(seq, k0 + T + batch)
        g = mlmc_direction(seq, k0 + T, zg, J, params.B, params.S)
        z_next = (
            eta_omt * (z - zf)
            - eta * p * gamma * g
            + p * zf
            + (1.0 - p) * (1.0 - beta) * z
            + (1.0 - p) * beta * zg
        )
        zf = zg - p * gamma * g
        z = z_next
        T += batch
    return z, T


def acogwmc_envelope(N, params: AcogwmcParams, lambda_min_plus, dist0_sq, r0, C=1.0):
    """``C exp(-N sqrt(p^2 lambda_min gamma / 3)) (dist0_sq + 24 r0 / lambda_min)``."""
    rate = math.sqrt(params.p ** 2 * lambda_min_plus * params.gamma / 3.0)
    return C * math.exp(-N * rate) * (dist0_sq + 24.0 / lambda_min_plus * r0)


# -- estimator front-ends used by the solver --------------------------------------

class AccGossip(BaseEstimator):
    """Accelerated gossip with non-recoverable links; ``fit`` resolves the step
    and momentum from the sequence's spectral bounds unless given."""

    def __init__(self, eta=None, beta=None):
        self.eta = eta
        self.beta = beta

    def fit(self, sequence):
        lam_max, lam_min = sequence.spectral_bounds()
        defaults = gossip_params(lam_max, lam_min, 0)
        self.eta_ = defaults.eta if self.eta is None else float(self.eta)
        self.beta_ = defaults.beta if self.beta is None else float(self.beta)
        self.chi_ = lam_max / lam_min
        self.sequence_ = sequence
        return self

    def apply(self, Z, k0, budget):
        check_is_fitted(self)
        return acc_gossip_non_recoverable(Z, self.sequence_, k0, ConsensusParams(self.eta_, self.beta_, int(budget)))


class PlainGossip(BaseEstimator):
    def __init__(self, eta=None):
        self.eta = eta

    def fit(self, sequence):
        lam_max, lam_min = sequence.spectral_bounds()
        self.eta_ = 1.0 / lam_max if self.eta is None else float(self.eta)
        self.chi_ = lam_max / lam_min
        self.sequence_ = sequence
        return self

    def apply(self, Z, k0, budget):
        check_is_fitted(self)
        return plain_gossip(Z, self.sequence_, k0, int(budget), self.eta_), int(budget)


class Acogwmc(BaseEstimator):
    """Accelerated consensus for Markovian sequences.

    ``budget`` passed to :meth:`apply` is the iteration count ``N``; every call
    draws its levels from a fresh stream spawned from ``random_state``.
    """

    def __init__(self, b=None, mu_like=None, gamma=None, random_state=None):
        self.b = b
        self.mu_like = mu_like
        self.gamma = gamma
        self.random_state = random_state

    def fit(self, sequence):
        if not isinstance(sequence, MarkovSequence):
            raise InvalidParameter("ACOGWMC needs a markovian sequence")
        wbar = sequence.stationary_mean
        b = sequence.tau if self.b is None else int(self.b)
        params = theorem3_defaults(wbar.lambda_max, wbar.lambda_min_plus, sequence.rho, sequence.tau, b, self.mu_like)
        if self.gamma is not None:
            mu = wbar.lambda_min_plus if self.mu_like is None else self.mu_like
            g = float(self.gamma)
            beta = math.sqrt(4.0 * params.p ** 2 * mu * g / 3.0)
            eta = math.sqrt(12.0 / (mu * g))
            theta = (params.p / eta - 1.0) / (beta * params.p / eta - 1.0)
            S = max(2.0, math.sqrt(0.25 * (1.0 + 2.0 / beta)))
            params = AcogwmcParams(g, theta, eta, beta, params.p, S, max(1, math.ceil(b * math.log2(S))), 0, None, b)
        self.params_ = params
        self.chi_ = wbar.chi
        self.sequence_ = sequence
        self._seeds = np.random.SeedSequence(self.random_state)
        return self

    def apply(self, Z, k0, budget):
        check_is_fitted(self)
        seed = int(self._seeds.spawn(1)[0].generate_state(1)[0])
        return acogwmc(Z, self.sequence_, self.params_.with_iterations(budget, seed), k0)


class ExactAverage(BaseEstimator):
    """Ablation: replaces consensus by the exact node average, no rounds used."""

    def fit(self, sequence):
        self.sequence_ = sequence
        self.chi_ = 1.0
        return self

    def apply(self, Z, k0, budget):
        Z = check_states(Z, copy=True)
        Z[:] = Z.mean(axis=0)
        return Z, 0


CONSENSUS_KINDS = {
    "acc_gossip_nonrecoverable": AccGossip,
    "acogwmc": Acogwmc,
    "plain": PlainGossip,
    "exact": ExactAverage,
}
