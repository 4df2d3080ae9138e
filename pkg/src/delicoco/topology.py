"""Communication graphs and their doubly stochastic mixing matrices."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from delicoco.errors import ConfigurationError, ContractViolation, DisconnectedGraphWarning
from delicoco.numkit import eig_sym

KINDS = ("ring", "torus", "fully_connected", "disconnected")

_GAP_FLOOR = 1e-12


@dataclass(frozen=True)
class Topology:
    kind: str
    n: int
    adjacency: np.ndarray  # bool (n, n), symmetric, zero diagonal

    @property
    def degrees(self) -> np.ndarray:
        return self.adjacency.sum(axis=1)


@dataclass(frozen=True)
class MixingMatrix:
    w: np.ndarray
    delta: float
    lambda_max_i_minus_w: float

    @property
    def n(self) -> int:
        return self.w.shape[0]

    @property
    def connected(self) -> bool:
        return self.delta > 0.0

    @classmethod
    def from_matrix(cls, w) -> MixingMatrix:
        w = np.array(w, dtype=np.float64)
        check_mixing(w)
        delta, lam = spectral_quantities(w)
        return cls(w, delta, lam)


def build_topology(kind: str, n: int) -> Topology:
    if kind not in KINDS:
        raise ConfigurationError(f"unknown topology {kind!r}; expected one of {', '.join(KINDS)}")
    n = int(n)
    adj = np.zeros((n, n), dtype=bool)
    if kind == "ring":
        if n < 3:
            raise ConfigurationError(f"ring needs n >= 3, got {n}")
        for i in range(n):
            adj[i, (i + 1) % n] = adj[(i + 1) % n, i] = True
    elif kind == "torus":
        side = math.isqrt(n)
        if n < 1 or side * side != n:
            raise ConfigurationError(f"torus: n must be a perfect square, got {n}")
        if n < 2:
            raise ConfigurationError(f"torus needs n >= 2, got {n}")
        for r in range(side):
            for c in range(side):
                i = r * side + c
                for j in (((r + 1) % side) * side + c, r * side + (c + 1) % side):
                    if j != i:
                        adj[i, j] = adj[j, i] = True
    else:
        if n < 2:
            raise ConfigurationError(f"{kind} needs n >= 2, got {n}")
        if kind == "fully_connected":
            adj[:] = True
        else:
            half = n // 2
            adj[:half, :half] = True
            adj[half:, half:] = True
        np.fill_diagonal(adj, False)
    return Topology(kind, n, adj)


def metropolis_mixing(t: Topology) -> MixingMatrix:
    """Metropolis-Hastings weights ``1 / (1 + max(deg_i, deg_j))`` on edges.

    The fully connected graph uses the exact averaging matrix ``11^T / n``.
    """
    n = t.n
    if t.kind == "fully_connected":
        w = np.full((n, n), 1.0 / n)
    else:
        deg = t.degrees
        w = np.zeros((n, n))
        ii, jj = np.nonzero(t.adjacency)
        w[ii, jj] = 1.0 / (1.0 + np.maximum(deg[ii], deg[jj]))
        np.fill_diagonal(w, 1.0 - w.sum(axis=1))
    check_mixing(w)
    with warnings.catch_warnings():
        if t.kind == "disconnected":
            warnings.simplefilter("ignore", DisconnectedGraphWarning)
        delta, lam = spectral_quantities(w)
    return MixingMatrix(w, delta, lam)


def check_mixing(w: np.ndarray, tol: float = 1e-12) -> None:
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise ContractViolation(f"mixing matrix must be square, got shape {w.shape}")
    if np.max(np.abs(w - w.T)) > tol:
        raise ContractViolation("mixing matrix is not symmetric")
    if np.max(np.abs(w.sum(axis=1) - 1.0)) > tol:
        raise ContractViolation("mixing matrix rows do not sum to 1")
    if np.min(w) < 0.0:
        raise ContractViolation("mixing matrix has negative entries")
    if np.min(np.diag(w)) <= 0.0:
        raise ContractViolation("mixing matrix needs a positive diagonal")


def spectral_quantities(w) -> tuple[float, float]:
    """Spectral gap ``1 - |lambda_2(W)|`` and ``lambda_max(I - W) = 1 - lambda_min(W)``.

    A gap below 1e-12 means the graph is disconnected: the gap is reported
    as exactly 0 and a :class:`DisconnectedGraphWarning` is issued.
    """
    vals = eig_sym(w)
    if vals.shape[0] == 1:
        delta = 1.0
    else:
        delta = 1.0 - abs(vals[1])
    if delta <= _GAP_FLOOR:
        warnings.warn(
            "disconnected graph: mixing matrix has no spectral gap (delta = 0)",
            DisconnectedGraphWarning,
            stacklevel=2,
        )
        delta = 0.0
    return float(min(delta, 1.0)), float(1.0 - vals.min())
