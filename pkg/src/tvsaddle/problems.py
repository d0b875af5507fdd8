"""Per-node strongly-convex-strongly-concave objectives and their operators.

Every node objective in this module has the form

    f_m(x, y) = x^T B_m y + a_m^T x - b_m^T y + (mu/2)|x|^2 - (mu/2)|y|^2

so that ``F_m(z) = G_m z + h_m`` with ``G_m = [[mu I, B_m], [-B_m^T, mu I]]`` and
``h_m = (a_m, b_m)``. The operator matrix is normal, which gives the Lipschitz
constant in closed form: ``|G_m| = sqrt(mu^2 + |B_m|^2)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve, svds

from .exceptions import DimensionMismatch, InvalidParameter
from .graphs import taab_layout
from .states import check_vector


@dataclass(frozen=True)
class Box:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        if lo.shape != hi.shape or np.any(lo > hi):
            raise InvalidParameter("box needs lower <= upper with matching shapes")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def uniform(cls, dim, lower, upper):
        return cls(np.full(dim, float(lower)), np.full(dim, float(upper)))


class NodeBlock:
    """Data of one node objective; ``B`` may be dense, sparse, or ``None`` (zero)."""

    def __init__(self, B, a, b, mu):
        self.B = B
        self.a = np.asarray(a, dtype=float)
        self.b = np.asarray(b, dtype=float)
        self.mu = float(mu)

    @property
    def coupling_norm(self):
        if not hasattr(self, "_norm"):
            self._norm = _spectral_norm(self.B)
        return self._norm

    def value(self, x, y):
        out = self.a @ x - self.b @ y + 0.5 * self.mu * (x @ x - y @ y)
        if self.B is not None:
            out += x @ (self.B @ y)
        return float(out)

    def operator(self, x, y):
        gx = self.mu * x + self.a
        gy = self.mu * y + self.b
        if self.B is not None:
            gx = gx + self.B @ y
            gy = gy - self.B.T @ x
        return np.concatenate([gx, gy])


def _spectral_norm(B):
    if B is None:
        return 0.0
    if sp.issparse(B):
        if min(B.shape) <= 2:
            return float(np.linalg.norm(B.toarray(), 2))
        return float(svds(B.tocsc(), k=1, return_singular_vectors=False, random_state=0)[0])
    return float(np.linalg.norm(B, 2))


def _mean_coupling(blocks):
    dense = [b.B for b in blocks if b.B is not None]
    if not dense:
        return None
    total = dense[0].copy() if not sp.issparse(dense[0]) else dense[0].copy().tocsr()
    for B in dense[1:]:
        total = total + B
    return total / len(blocks)


class SaddleProblem:
    """Decentralized saddle problem ``min_x max_y (1/M) sum_m f_m(x, y)``.

    Parameters
    ----------
    blocks : list of NodeBlock
        One entry per node; entries may be shared objects.
    dim_x, dim_y : int
    feasible_set : Box or None
        ``None`` means the whole space.
    """

    def __init__(self, blocks, dim_x, dim_y, feasible_set=None, name="custom"):
        if not blocks:
            raise InvalidParameter("need at least one node")
        mus = {b.mu for b in blocks}
        if len(mus) != 1:
            raise InvalidParameter("all nodes must share the quadratic modulus mu")
        self.blocks = list(blocks)
        self.dim_x = int(dim_x)
        self.dim_y = int(dim_y)
        self.dim_z = self.dim_x + self.dim_y
        self.mu = mus.pop()
        if self.mu <= 0:
            raise InvalidParameter("mu must be positive")
        self.feasible_set = feasible_set
        if feasible_set is not None and feasible_set.lower.shape != (self.dim_z,):
            raise DimensionMismatch("box dimension must equal n_x + n_y")
        self.name = name

        self._mean_block = NodeBlock(
            _mean_coupling(self.blocks),
            np.mean([b.a for b in self.blocks], axis=0),
            np.mean([b.b for b in self.blocks], axis=0),
            self.mu,
        )
        self.L = math.hypot(self.mu, self._mean_block.coupling_norm)
        self.L_max = max(math.hypot(self.mu, b.coupling_norm) for b in self.blocks)
        self.reference_solution = self._solve_reference()

    @property
    def node_count(self):
        return len(self.blocks)

    def split(self, z):
        return z[: self.dim_x], z[self.dim_x :]

    def node_value(self, m, z):
        z = check_vector(z, self.dim_z)
        return self.blocks[m].value(*self.split(z))

    def value(self, z):
        z = check_vector(z, self.dim_z)
        return self._mean_block.value(*self.split(z))

    def eval_operator(self, m, z):
        """``F_m(z) = (grad_x f_m, -grad_y f_m)``."""
        z = check_vector(z, self.dim_z)
        return self.blocks[m].operator(*self.split(z))

    def operator(self, z):
        z = check_vector(z, self.dim_z)
        return self._mean_block.operator(*self.split(z))

    def node_operators(self, Z):
        """Row ``m`` of the result is ``F_m(Z[m])``."""
        if Z.shape != (self.node_count, self.dim_z):
            raise DimensionMismatch(f"expected states of shape {(self.node_count, self.dim_z)}, got {Z.shape}")
        return np.stack([blk.operator(z[: self.dim_x], z[self.dim_x :]) for blk, z in zip(self.blocks, Z)])

    def operator_matrix(self, m=None):
        """Dense ``G`` (averaged, ``m=None``) or ``G_m``; for small instances."""
        blk = self._mean_block if m is None else self.blocks[m]
        nx, ny = self.dim_x, self.dim_y
        G = self.mu * np.eye(self.dim_z)
        if blk.B is not None:
            B = blk.B.toarray() if sp.issparse(blk.B) else np.asarray(blk.B)
            G[:nx, nx:] += B
            G[nx:, :nx] -= B.T
        return G

    def offset(self):
        return np.concatenate([self._mean_block.a, self._mean_block.b])

    def project(self, z):
        """Euclidean projection onto the feasible set (works row-wise on stacks)."""
        z = np.asarray(z, dtype=float)
        if z.shape[-1] != self.dim_z:
            raise DimensionMismatch(f"expected trailing dimension {self.dim_z}, got {z.shape}")
        if self.feasible_set is None:
            return z
        return np.clip(z, self.feasible_set.lower, self.feasible_set.upper)

    def residual(self, z):
        """Natural residual ``|z - proj(z - F(z))|``; zero exactly at the solution."""
        return float(np.linalg.norm(z - self.project(z - self.operator(z))))

    def solution_q_sq(self):
        """``(1/M) sum_m |F_m(z*)|^2``."""
        z = self.reference_solution
        return float(np.mean([np.sum(self.eval_operator(m, z) ** 2) for m in range(self.node_count)]))

    def _solve_reference(self):
        if self.feasible_set is None:
            z = scipy.linalg.solve(self.operator_matrix(), -self.offset())
            res = np.linalg.norm(self.operator(z))
            if res > 1e-8 * (1.0 + np.linalg.norm(z)):
                raise ArithmeticError(f"reference solve residual {res:.3e} too large")
            return z
        # centralized projected extragradient, linear convergence
        gamma = 1.0 / (2.0 * self.L)
        z = self.project(np.zeros(self.dim_z))
        for _ in range(200000):
            half = self.project(z - gamma * self.operator(z))
            z = self.project(z - gamma * self.operator(half))
            if self.residual(z) <= 1e-13 * (1.0 + np.linalg.norm(z)):
                break
        return z

    def __repr__(self):
        return (
            f"SaddleProblem(name={self.name!r}, M={self.node_count}, n_x={self.dim_x}, "
            f"n_y={self.dim_y}, L={self.L:.4g}, L_max={self.L_max:.4g}, mu={self.mu:.4g})"
        )


def eval_operator(p: SaddleProblem, m: int, z):
    return p.eval_operator(m, z)


def project(p: SaddleProblem, z):
    return p.project(check_vector(z, p.dim_z))


def make_bilinear_problem(M, n, seed=None, L=10.0, mu=1.0, feasible_set=None):
    """Random bilinear-quadratic family with global Lipschitz constant ``L``.

    Couplings are ``B_m = C + D_m`` with ``sum_m D_m = 0``; ``C`` is scaled so the
    averaged operator has norm exactly ``L`` and every ``|D_m| <= |C|``, which keeps
    ``L_max <= 2 L``.
    """
    if not L > mu > 0:
        raise InvalidParameter(f"need L > mu > 0, got L={L}, mu={mu}")
    if n < 1 or M < 1:
        raise InvalidParameter("need n >= 1 and M >= 1")
    rng = np.random.default_rng(seed)
    s = math.sqrt(L * L - mu * mu)
    C = rng.standard_normal((n, n))
    C *= s / np.linalg.norm(C, 2)
    D = rng.standard_normal((M, n, n))
    D -= D.mean(axis=0)
    if M > 1:
        D *= 0.5 * s / max(np.linalg.norm(Dm, 2) for Dm in D)
    a = rng.standard_normal((M, n))
    b = rng.standard_normal((M, n))
    blocks = [NodeBlock(C + D[m], a[m], b[m], mu) for m in range(M)]
    return SaddleProblem(blocks, n, n, feasible_set, name="bilinear")


# -- lower-bound instance -------------------------------------------------------

def bidiagonal_pair(n):
    """The two alternating upper-bidiagonal matrices of the hard instance.

    Both have unit diagonal; ``A1`` has superdiagonal ``0, -2, 0, -2, ...`` and
    ``A2`` has ``-2, 0, -2, 0, ...``.
    """
    sup1 = np.where(np.arange(n - 1) % 2 == 0, 0.0, -2.0)
    sup2 = np.where(np.arange(n - 1) % 2 == 0, -2.0, 0.0)
    A1 = sp.diags([np.ones(n), sup1], [0, 1], shape=(n, n), format="csr")
    A2 = sp.diags([np.ones(n), sup2], [0, 1], shape=(n, n), format="csr")
    return A1, A2


def q_root(L, mu):
    """Smallest root of ``q^2 - (2 + alpha) q + 1`` with ``alpha = 4 mu^2 / L^2``."""
    if not L > mu > 0:
        raise InvalidParameter(f"need L > mu > 0, got L={L}, mu={mu}")
    alpha = 4.0 * mu * mu / (L * L)
    # product of the roots is 1; this form avoids cancellation for small alpha
    q = 2.0 / (2.0 + alpha + math.sqrt(alpha * alpha + 4.0 * alpha))
    residual = q * q - (2.0 + alpha) * q + 1.0
    assert abs(residual) <= 1e-12, residual
    assert 0.0 < q < 1.0
    return q


def approx_solution_y(q, n):
    """Geometric approximation ``q^i / (1 - q)``, ``i = 1..n``."""
    if not 0.0 < q < 1.0 or n < 1:
        raise InvalidParameter("need q in (0, 1) and n >= 1")
    return q ** np.arange(1, n + 1) / (1.0 - q)


def error_bound(q, alpha, n):
    return q ** (n + 1) / (alpha * (1.0 - q))


def hard_instance_dimension(L, mu, K):
    """Smallest ``n`` with ``n >= 2 log_q(alpha / (4 sqrt 2))`` and ``n >= 2K``."""
    q = q_root(L, mu)
    alpha = 4.0 * mu * mu / (L * L)
    log_term = max(0.0, math.log(alpha / (4.0 * math.sqrt(2.0))) / math.log(q))
    return max(2, math.ceil(2.0 * log_term), 2 * int(math.ceil(K)))


class LowerBoundProblem(SaddleProblem):
    """The hard instance: ``A1``-nodes on ``V2``, ``A2``-nodes on ``V1``, plain
    quadratics elsewhere, with vertex roles taken from the adversarial tree
    sequence of the same ``d``."""

    def __init__(self, d, L, mu, n):
        if not L > mu > 0:
            raise InvalidParameter(f"need L > mu > 0, got L={L}, mu={mu}")
        if n < 2:
            raise InvalidParameter("need n >= 2")
        self.layout = taab_layout(d)
        self.d = self.layout.d
        self.nominal_L = float(L)
        M = self.layout.vertex_count
        h = len(self.layout.v1)
        self.A1, self.A2 = bidiagonal_pair(n)
        self.A = 0.5 * (self.A1 + self.A2)
        scale = M / (2.0 * h)
        e1 = np.zeros(n)
        e1[0] = 1.0
        zero = np.zeros(n)
        plain = NodeBlock(None, zero, zero, mu)
        on_v2 = NodeBlock(scale * 0.5 * L * self.A1, zero, -scale * L * L / (2.0 * mu) * e1, mu)
        on_v1 = NodeBlock(scale * 0.5 * L * self.A2, zero, zero, mu)
        blocks = [plain] * M
        for m in self.layout.v2:
            blocks[m] = on_v2
        for m in self.layout.v1:
            blocks[m] = on_v1
        super().__init__(blocks, n, n, None, name="lower_bound")
        self.alpha = 4.0 * mu * mu / (L * L)
        self.q = q_root(L, mu)

    def global_value(self, x, y):
        """Closed form of the node average."""
        L, mu = self.nominal_L, self.mu
        return float(0.5 * L * (x @ (self.A @ y)) + 0.5 * mu * (x @ x - y @ y) + L * L / (4.0 * mu) * y[0])

    @property
    def y_star(self):
        return self.reference_solution[self.dim_x :]

    def _solve_reference(self):
        # banded structure: sparse direct solve scales to large n
        n = self.dim_x
        Bbar = self._mean_block.B.tocsr()
        G = sp.bmat([[self.mu * sp.identity(n), Bbar], [-Bbar.T, self.mu * sp.identity(n)]], format="csc")
        z = spsolve(G, -self.offset())
        res = np.linalg.norm(self.operator(z))
        if res > 1e-8 * (1.0 + np.linalg.norm(z)):
            raise ArithmeticError(f"reference solve residual {res:.3e} too large")
        return z


def make_lower_bound_problem(d, L, mu, n) -> LowerBoundProblem:
    return LowerBoundProblem(d, L, mu, n)
