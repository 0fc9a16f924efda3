"""Areal adjacency graphs, intrinsic CAR precision and its spectral factors."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

__all__ = [
    "GraphError",
    "RegionGraph",
    "CarStructure",
    "build_graph",
    "car_precision",
    "count_islands",
    "spectral_car",
    "car_structure",
    "car_log_density",
]

ZERO_EIG_RTOL = 1e-8


class GraphError(ValueError):
    """Invalid adjacency input or graph/matrix inconsistency."""


@dataclass(frozen=True)
class RegionGraph:
    """Symmetric neighbor structure over ``n_regions`` areal units.

    ``neighbors[i]`` is the sorted tuple of regions adjacent to ``i``.
    Build instances with :func:`build_graph` or :meth:`from_pairs`, which
    validate and symmetrize the input.
    """

    n_regions: int
    neighbors: tuple[tuple[int, ...], ...]
    asymmetric_pairs: tuple[tuple[int, int], ...] = field(default=(), compare=False)

    @classmethod
    def from_pairs(cls, n_regions: int, pairs: Iterable[tuple[int, int]]) -> "RegionGraph":
        return build_graph(n_regions, pairs)

    @classmethod
    def from_neighbor_lists(
        cls, neighbor_lists: Sequence[Iterable[int]]
    ) -> "RegionGraph":
        """Build from per-region neighbor lists, symmetrizing with a warning."""
        pairs = [(i, j) for i, nbrs in enumerate(neighbor_lists) for j in nbrs]
        return build_graph(len(neighbor_lists), pairs, directed=True)

    @property
    def counts(self) -> np.ndarray:
        """Number of neighbors ``m_i`` of each region."""
        return np.array([len(n) for n in self.neighbors], dtype=int)

    def edges(self) -> list[tuple[int, int]]:
        return [(i, j) for i, nbrs in enumerate(self.neighbors) for j in nbrs if i < j]

    def adjacency_matrix(self) -> np.ndarray:
        W = np.zeros((self.n_regions, self.n_regions))
        for i, j in self.edges():
            W[i, j] = W[j, i] = 1.0
        return W

    def subgraph(self, regions: Sequence[int]) -> "RegionGraph":
        """Induced subgraph, relabelled ``0..len(regions)-1`` in the given order."""
        index = {r: k for k, r in enumerate(regions)}
        pairs = [
            (index[i], index[j])
            for i, j in self.edges()
            if i in index and j in index
        ]
        return build_graph(len(regions), pairs)


def build_graph(
    n_regions: int, pairs: Iterable[tuple[int, int]], directed: bool = False
) -> RegionGraph:
    """Validate a neighbor-pair list and return a symmetric, deduplicated graph.

    Parameters
    ----------
    n_regions : int
        Number of regions ``N``; indices must lie in ``[0, N)``.
    pairs : iterable of (int, int)
        Neighbor pairs.  With ``directed=False`` each pair is an undirected
        edge.  With ``directed=True`` each pair ``(i, j)`` states only that
        ``j`` is listed as a neighbor of ``i``; pairs missing their reverse
        are symmetrized and reported through a ``UserWarning`` and the
        ``asymmetric_pairs`` attribute.

    Raises
    ------
    GraphError
        On self-loops or out-of-range indices.
    """
    n_regions = int(n_regions)
    if n_regions < 1:
        raise GraphError("n_regions must be positive")
    directed_set: set[tuple[int, int]] = set()
    for i, j in pairs:
        i, j = int(i), int(j)
        if not (0 <= i < n_regions and 0 <= j < n_regions):
            raise GraphError(f"pair ({i}, {j}) out of range for N={n_regions}")
        if i == j:
            raise GraphError(f"self-loop at region {i}")
        directed_set.add((i, j))
        if not directed:
            directed_set.add((j, i))

    asym = tuple(sorted((i, j) for i, j in directed_set if (j, i) not in directed_set))
    if asym:
        warnings.warn(
            f"{len(asym)} asymmetric neighbor pair(s) symmetrized, e.g. {asym[0]}",
            UserWarning,
            stacklevel=2,
        )
    nbrs: list[set[int]] = [set() for _ in range(n_regions)]
    for i, j in directed_set:
        nbrs[i].add(j)
        nbrs[j].add(i)
    return RegionGraph(
        n_regions=n_regions,
        neighbors=tuple(tuple(sorted(s)) for s in nbrs),
        asymmetric_pairs=asym,
    )


def car_precision(graph: RegionGraph) -> np.ndarray:
    """Intrinsic CAR precision: ``Q_ii = m_i`` and ``Q_ij = -1`` for neighbors."""
    W = graph.adjacency_matrix()
    return np.diag(W.sum(axis=1)) - W


def count_islands(graph: RegionGraph) -> int:
    """Number of connected components of the graph."""
    N = graph.n_regions
    rows = [i for i, nbrs in enumerate(graph.neighbors) for _ in nbrs]
    cols = [j for nbrs in graph.neighbors for j in nbrs]
    A = csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(N, N))
    n_comp, _ = connected_components(A, directed=False)
    return int(n_comp)


@dataclass(frozen=True, eq=False)
class CarStructure:
    """Spectral factors ``Q = V diag(D) V'`` of an intrinsic CAR precision.

    Eigenvalues are sorted in descending order so the ``G`` zero eigenvalues
    sit in the last positions; column ``N`` of ``V`` is exactly
    ``1/sqrt(N)``.
    """

    Q: np.ndarray
    V: np.ndarray
    D: np.ndarray
    G: int
    alpha: float = 1.0

    @property
    def N(self) -> int:
        return self.Q.shape[0]

    @property
    def rank(self) -> int:
        return self.N - self.G

    @property
    def V_minus(self) -> np.ndarray:
        """``V`` without its final (constant) column."""
        return self.V[:, :-1]

    @property
    def D_minus(self) -> np.ndarray:
        return self.D[:-1]


def _fix_signs(V: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    V = V.copy()
    for k in range(V.shape[1]):
        col = V[:, k]
        nz = np.flatnonzero(np.abs(col) > tol)
        if nz.size and col[nz[0]] < 0:
            V[:, k] = -col
    return V


def spectral_car(Q: np.ndarray, G: int) -> CarStructure:
    """Eigendecompose a CAR precision with the constant vector placed last.

    Raises
    ------
    GraphError
        If the numerical nullity of ``Q`` differs from ``G``.
    """
    Q = np.asarray(Q, dtype=float)
    N = Q.shape[0]
    if N == 1:
        if abs(Q[0, 0]) > 0 or G != 1:
            raise GraphError("single region must have Q = [[0]] and G = 1")
        return CarStructure(Q=Q.copy(), V=np.ones((1, 1)), D=np.zeros(1), G=1)

    evals, evecs = np.linalg.eigh(Q)
    order = np.argsort(evals)[::-1]
    evals, evecs = evals[order], evecs[:, order]
    scale = max(float(evals.max()), 0.0)
    zero = np.abs(evals) < ZERO_EIG_RTOL * (scale if scale > 0 else 1.0)
    nullity = int(zero.sum())
    if nullity != G:
        raise GraphError(f"Q has nullity {nullity} but graph has {G} island(s)")
    D = np.where(zero, 0.0, evals)

    pos = evecs[:, :N - G]
    null = evecs[:, N - G:]
    ones = np.full(N, 1.0 / np.sqrt(N))
    # re-orthonormalize the remaining null vectors against the constant one
    resid = null - np.outer(ones, ones @ null)
    if G > 1:
        u, s, _ = np.linalg.svd(resid, full_matrices=False)
        others = u[:, : G - 1]
    else:
        others = np.empty((N, 0))
    V = np.column_stack([_fix_signs(pos), _fix_signs(others), ones])
    return CarStructure(Q=Q, V=V, D=D, G=int(G))


def car_structure(graph: RegionGraph) -> CarStructure:
    """Convenience: precision, island count and spectral factors of a graph."""
    return spectral_car(car_precision(graph), count_islands(graph))


def car_log_density(phi: np.ndarray, tau: float, car: CarStructure) -> float:
    """Unnormalized intrinsic CAR log-density ``(N-G)/2 log tau - tau/2 phi'Q phi``."""
    phi = np.asarray(phi, dtype=float)
    return 0.5 * car.rank * np.log(tau) - 0.5 * tau * float(phi @ car.Q @ phi)
