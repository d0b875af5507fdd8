"""Stacked node iterates ``Z`` of shape ``(M, n_z)`` and validation helpers."""
import numpy as np
from sklearn.utils.validation import check_array

from .exceptions import DimensionMismatch


def check_states(Z, node_count=None, dim=None, copy=False):
    """Validate a stacked state matrix, one row per node."""
    Z = check_array(Z, dtype=np.float64, ensure_2d=True, copy=copy, ensure_all_finite=True)
    if node_count is not None and Z.shape[0] != node_count:
        raise DimensionMismatch(f"expected {node_count} node rows, got {Z.shape[0]}")
    if dim is not None and Z.shape[1] != dim:
        raise DimensionMismatch(f"expected states of dimension {dim}, got {Z.shape[1]}")
    return Z


def check_vector(z, dim):
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 1 or z.shape[0] != dim:
        raise DimensionMismatch(f"expected a vector of dimension {dim}, got shape {z.shape}")
    return z


def node_mean(Z):
    return np.mean(Z, axis=0)


def consensus_error(Z):
    """Mean squared distance of the node iterates to their average."""
    Z = np.asarray(Z, dtype=float)
    D = Z - Z.mean(axis=0)
    return float(np.sum(D * D) / Z.shape[0])


def replicate(z, node_count):
    return np.tile(np.asarray(z, dtype=float), (node_count, 1))
