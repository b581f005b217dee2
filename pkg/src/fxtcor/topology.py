"""Undirected agent graph with leader links."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .numkit import sym_eig_extrema


class Variant(str, Enum):
    PLAIN = "plain"
    BAR = "bar"
    TILDE = "tilde"


@dataclass(frozen=True)
class Topology:
    """Agents 1..N plus the leader, node 0.

    `a` is the N x N agent adjacency (symmetric, zero diagonal) and `a0[i]`
    is the link weight between agent i+1 and the leader.
    """

    a: np.ndarray
    a0: np.ndarray
    N: int = field(init=False)

    def __post_init__(self):
        a = np.array(self.a, dtype=float)
        a0 = np.array(self.a0, dtype=float).reshape(-1)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"adjacency must be square, got {a.shape}")
        if a0.shape[0] != a.shape[0]:
            raise ValueError("leader-link vector length must equal the agent count")
        if not np.allclose(a, a.T, atol=0.0):
            raise ValueError("adjacency must be symmetric")
        if np.any(np.diag(a) != 0):
            raise ValueError("adjacency diagonal must be zero")
        if np.any(a < 0) or np.any(a0 < 0):
            raise ValueError("edge weights must be nonnegative")
        a.setflags(write=False)
        a0.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "a0", a0)
        object.__setattr__(self, "N", a.shape[0])

    @classmethod
    def from_edges(cls, N: int, edges, leader_links) -> "Topology":
        """Build from 1-based agent edge pairs and 1-based leader-linked agents."""
        a = np.zeros((N, N))
        for i, j in edges:
            if not (1 <= i <= N and 1 <= j <= N) or i == j:
                raise ValueError(f"bad edge ({i}, {j}) for N={N}")
            a[i - 1, j - 1] = a[j - 1, i - 1] = 1.0
        a0 = np.zeros(N)
        for i in leader_links:
            if not 1 <= i <= N:
                raise ValueError(f"bad leader link {i} for N={N}")
            a0[i - 1] = 1.0
        return cls(a, a0)

    def full_adjacency(self) -> np.ndarray:
        """(N+1) x (N+1) adjacency including the leader as node 0."""
        A = np.zeros((self.N + 1, self.N + 1))
        A[1:, 1:] = self.a
        A[1:, 0] = self.a0
        A[0, 1:] = self.a0
        return A


def laplacian(t: Topology) -> np.ndarray:
    return np.diag(t.a.sum(axis=1)) - t.a


def h_matrix(t: Topology, num: int = 1, den: int = 1, variant: Variant | str = Variant.PLAIN) -> np.ndarray:
    """H = diag(a0) + L, optionally with every weight raised to a power.

    `bar` uses exponent 2b/(a+b) and `tilde` uses 2b/(3b-a), with a = num
    and b = den.
    """
    variant = Variant(variant)
    if variant is Variant.PLAIN:
        p = 1.0
    elif variant is Variant.BAR:
        p = 2.0 * den / (num + den)
    else:
        p = 2.0 * den / (3.0 * den - num)
    a = np.where(t.a > 0, t.a ** p, 0.0)
    a0 = np.where(t.a0 > 0, t.a0 ** p, 0.0)
    return np.diag(a0) + np.diag(a.sum(axis=1)) - a


def leader_reachable_bfs(t: Topology) -> bool:
    """Breadth-first search from node 0 over the leader-augmented graph."""
    A = t.full_adjacency()
    seen = {0}
    queue = deque([0])
    while queue:
        k = queue.popleft()
        for j in np.nonzero(A[k])[0]:
            if int(j) not in seen:
                seen.add(int(j))
                queue.append(int(j))
    return len(seen) == t.N + 1


def leader_globally_reachable(t: Topology, tol: float = 1e-9) -> bool:
    """True iff lambda_min(H) > tol, which holds iff node 0 reaches every agent."""
    lam_min, _ = sym_eig_extrema(h_matrix(t))
    return lam_min > tol
