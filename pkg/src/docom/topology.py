"""Gossip mixing matrices and their spectral quantities.

A :class:`MixingMatrix` bundles a symmetric doubly stochastic weight matrix
with the two numbers every compressed-gossip analysis needs: the spectral
gap ``rho`` (one minus the second-largest eigenvalue magnitude) and
``omega_bar``, the operator norm of ``W - I``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "MixingMatrix",
    "spectral_quantities",
    "ring_topology",
    "complete_topology",
    "metropolis_topology",
    "from_weights",
    "load_mixing_matrix",
    "make_topology",
]

STOCHASTIC_TOL = 1e-9


def _check_weights(weights: np.ndarray) -> None:
    if weights.ndim != 2 or weights.shape[0] != weights.shape[1]:
        raise ValueError(f"mixing matrix must be square, got shape {weights.shape}")
    if not np.all(np.isfinite(weights)):
        raise ValueError("mixing matrix has non-finite entries")
    if np.any(weights < 0) or np.any(weights > 1):
        raise ValueError("mixing matrix entries must lie in [0, 1]")
    rows = np.abs(weights.sum(axis=1) - 1.0).max()
    cols = np.abs(weights.sum(axis=0) - 1.0).max()
    if max(rows, cols) > STOCHASTIC_TOL:
        raise ValueError(
            f"mixing matrix is not doubly stochastic (max row/col deviation {max(rows, cols):.3g})"
        )
    if not np.allclose(weights, weights.T, rtol=0.0, atol=1e-12):
        raise ValueError("mixing matrix must be symmetric")


def spectral_quantities(weights) -> tuple[float, float]:
    """Return ``(rho, omega_bar)`` for a symmetric doubly stochastic matrix.

    ``rho = 1 - max |lambda|`` over all eigenvalues except the principal one
    (the eigenvalue closest to 1), and ``omega_bar = max |lambda - 1|``.
    A 1x1 matrix has no non-principal eigenvalue; it yields ``(1.0, 0.0)``.
    """
    w = np.asarray(weights, dtype=float)
    _check_weights(w)
    eig = np.linalg.eigvalsh(w)
    omega_bar = float(np.max(np.abs(eig - 1.0)))
    if w.shape[0] == 1:
        return 1.0, omega_bar
    rest = np.delete(eig, np.argmin(np.abs(eig - 1.0)))
    rho = 1.0 - float(np.max(np.abs(rest)))
    return rho, omega_bar


@dataclass(frozen=True, eq=False)
class MixingMatrix:
    """Validated gossip matrix with cached spectral data.

    Construct through :func:`from_weights` or one of the generators; the
    constructor itself recomputes and checks everything from ``weights``.
    """

    weights: np.ndarray
    name: str = "custom"
    rho: float = field(init=False)
    omega_bar: float = field(init=False)
    neighbor_lists: tuple[tuple[int, ...], ...] = field(init=False)

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        _check_weights(w)
        if np.any(np.diag(w) <= 0):
            raise ValueError("every agent needs a positive self-weight")
        rho, omega_bar = spectral_quantities(w)
        if rho <= 1e-12:
            raise ValueError("mixing matrix has no spectral gap (graph disconnected?)")
        w.setflags(write=False)
        n = w.shape[0]
        nbrs = tuple(tuple(int(j) for j in np.flatnonzero(w[i]) if j != i) for i in range(n))
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "omega_bar", omega_bar)
        object.__setattr__(self, "neighbor_lists", nbrs)

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    @property
    def degenerate(self) -> bool:
        """True for a single agent, where ``W - I = 0`` and ``omega_bar = 0``."""
        return self.n == 1

    def degree(self, i: int) -> int:
        return len(self.neighbor_lists[i])

    def closed_neighborhood(self, i: int) -> tuple[int, ...]:
        """Neighbors of ``i`` including ``i`` itself, in increasing order."""
        return tuple(sorted(self.neighbor_lists[i] + (i,)))

    @property
    def total_degree(self) -> int:
        """Number of directed messages in one gossip round, self-loops excluded."""
        return sum(len(nb) for nb in self.neighbor_lists)

    def summary(self) -> dict:
        return {
            "name": self.name,
            "n": self.n,
            "rho": self.rho,
            "omega_bar": self.omega_bar,
            "degenerate": self.degenerate,
            "edges": self.total_degree // 2,
            "max_degree": max(self.degree(i) for i in range(self.n)),
        }

    def __repr__(self):
        return f"MixingMatrix(name={self.name!r}, n={self.n}, rho={self.rho:.6g}, omega_bar={self.omega_bar:.6g})"


def from_weights(weights, name: str = "custom") -> MixingMatrix:
    return MixingMatrix(np.asarray(weights, dtype=float), name=name)


def ring_topology(n: int) -> MixingMatrix:
    """Ring with uniform weights: 1/3 on self and both neighbors (1/2 for n=2)."""
    if n < 1:
        raise ValueError(f"ring topology needs n >= 1, got {n}")
    if n <= 2:
        return MixingMatrix(np.full((n, n), 1.0 / n), name=f"ring({n})")
    w = np.zeros((n, n))
    for i in range(n):
        for j in (i - 1, i, i + 1):
            w[i, j % n] = 1.0 / 3.0
    return MixingMatrix(w, name=f"ring({n})")


def complete_topology(n: int) -> MixingMatrix:
    """Exact averaging, ``W = 11^T / n``."""
    if n < 1:
        raise ValueError(f"complete topology needs n >= 1, got {n}")
    return MixingMatrix(np.full((n, n), 1.0 / n), name=f"complete({n})")


def metropolis_topology(adjacency, name: str = "metropolis") -> MixingMatrix:
    """Metropolis-Hastings weights for an undirected adjacency matrix.

    ``W_ij = 1 / (1 + max(deg_i, deg_j))`` on edges, remainder on the diagonal.
    """
    a = np.asarray(adjacency, dtype=bool)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("adjacency must be square")
    if not np.array_equal(a, a.T):
        raise ValueError("adjacency must be symmetric")
    a = a & ~np.eye(a.shape[0], dtype=bool)
    deg = a.sum(axis=1)
    n = a.shape[0]
    w = np.zeros((n, n))
    for i, j in zip(*np.nonzero(a)):
        w[i, j] = 1.0 / (1.0 + max(deg[i], deg[j]))
    w[np.diag_indices(n)] = 1.0 - w.sum(axis=1)
    return MixingMatrix(w, name=name)


def load_mixing_matrix(path) -> MixingMatrix:
    """Read a whitespace-separated matrix file (one row per line, ``#`` comments)."""
    path = Path(path)
    w = np.loadtxt(path, dtype=float, comments="#", ndmin=2)
    return MixingMatrix(w, name=path.name)


def make_topology(kind: str, n: int) -> MixingMatrix:
    """Resolve a topology spec: ``ring``, ``complete`` or ``file:<path>``."""
    if kind == "ring":
        return ring_topology(n)
    if kind == "complete":
        return complete_topology(n)
    if kind.startswith("file:"):
        topo = load_mixing_matrix(kind[5:])
        if topo.n != n:
            raise ValueError(f"matrix file has n={topo.n}, config asks for n={n}")
        return topo
    raise ValueError(f"unknown topology {kind!r}")

