"""Fusion graphs and the latent-scale precision matrices built on them.

A fusion graph says which coefficient pairs get a difference penalty.  The
conditional posterior of the coefficient vector is gaussian with precision
``X'X + P`` where P collects one inverse variance per coefficient on the
diagonal plus one per graph edge in graph-Laplacian form.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.linalg import lapack

__all__ = [
    "FusionGraph",
    "LatentScales",
    "SingularPrecisionError",
    "build_precision",
    "build_precision_banded",
    "sample_beta_conditional",
]


class SingularPrecisionError(ValueError):
    """Cholesky factorization of the conditional precision failed.

    ``pivot`` is the 1-based index of the first non-positive pivot reported by
    the factorization.
    """

    def __init__(self, pivot: int):
        self.pivot = pivot
        super().__init__(f"conditional precision is not positive definite (pivot {pivot})")


@dataclass(frozen=True)
class FusionGraph:
    """Undirected graph over coefficient indices with canonically ordered edges.

    Edges are stored as (j, k) pairs with j < k, sorted lexicographically.
    That fixed order is what ties edge-indexed latent scales to edges across
    the whole package.
    """

    n_nodes: int
    edges: tuple[tuple[int, int], ...]
    kind: str = "custom"
    grid_shape: tuple[int, int] | None = field(default=None)

    def __post_init__(self) -> None:
        if self.n_nodes < 1:
            raise ValueError(f"graph needs at least one node, got {self.n_nodes}")
        seen = set()
        for j, k in self.edges:
            if not (0 <= j < k < self.n_nodes):
                raise ValueError(f"edge ({j}, {k}) is not ordered inside [0, {self.n_nodes})")
            if (j, k) in seen:
                raise ValueError(f"duplicate edge ({j}, {k})")
            seen.add((j, k))
        object.__setattr__(self, "edges", tuple(sorted(self.edges)))

    @classmethod
    def chain(cls, n_nodes: int) -> "FusionGraph":
        """Path graph linking consecutive indices: the 1-d fused lasso layout."""
        edges = tuple((j, j + 1) for j in range(n_nodes - 1))
        return cls(n_nodes, edges, kind="chain")

    @classmethod
    def grid(cls, n_rows: int, n_cols: int) -> "FusionGraph":
        """4-neighbour lattice in row-major node order: the image layout."""
        if n_rows < 1 or n_cols < 1:
            raise ValueError("grid dimensions must be positive")
        edges = []
        for r in range(n_rows):
            for c in range(n_cols):
                node = r * n_cols + c
                if c + 1 < n_cols:
                    edges.append((node, node + 1))
                if r + 1 < n_rows:
                    edges.append((node, node + n_cols))
        return cls(n_rows * n_cols, tuple(edges), kind="grid", grid_shape=(n_rows, n_cols))

    @classmethod
    def complete(cls, n_nodes: int) -> "FusionGraph":
        """Every pair fused: shrinks all pairwise differences jointly."""
        edges = tuple((j, k) for j in range(n_nodes) for k in range(j + 1, n_nodes))
        return cls(n_nodes, edges, kind="complete")

    @classmethod
    def custom(cls, n_nodes: int, edges) -> "FusionGraph":
        return cls(n_nodes, tuple(tuple(e) for e in edges), kind="custom")

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def edge_array(self) -> np.ndarray:
        """Edges as an (n_edges, 2) int64 array (empty-safe)."""
        if not self.edges:
            return np.empty((0, 2), dtype=np.int64)
        return np.asarray(self.edges, dtype=np.int64)

    @property
    def bandwidth(self) -> int:
        """Largest index distance across an edge; 0 for edgeless graphs."""
        if not self.edges:
            return 0
        return max(k - j for j, k in self.edges)


@dataclass
class LatentScales:
    """Per-coefficient and per-edge variance scales of the conditional prior.

    ``coef`` holds one positive variance per coefficient; ``edge`` one per
    graph edge in the graph's canonical edge order (empty for edgeless
    graphs).
    """

    coef: np.ndarray
    edge: np.ndarray

    def __post_init__(self) -> None:
        self.coef = np.asarray(self.coef, dtype=float)
        self.edge = np.asarray(self.edge, dtype=float)
        for name, arr in (("coef", self.coef), ("edge", self.edge)):
            if arr.ndim != 1:
                raise ValueError(f"{name} scales must be 1-d")
            if arr.size and (not np.all(np.isfinite(arr)) or np.any(arr <= 0.0)):
                raise ValueError(f"{name} scales must be positive and finite")


def _check_scales(graph: FusionGraph, scales: LatentScales) -> None:
    if scales.coef.size != graph.n_nodes:
        raise ValueError(
            f"expected {graph.n_nodes} coefficient scales, got {scales.coef.size}"
        )
    if scales.edge.size != graph.n_edges:
        raise ValueError(f"expected {graph.n_edges} edge scales, got {scales.edge.size}")


def build_precision(graph: FusionGraph, scales: LatentScales) -> np.ndarray:
    """Dense symmetric prior precision: diagonal inverse variances plus a
    graph Laplacian weighted by inverse edge variances."""
    _check_scales(graph, scales)
    p = graph.n_nodes
    prec = np.zeros((p, p))
    np.fill_diagonal(prec, 1.0 / scales.coef)
    if graph.n_edges:
        e = graph.edge_array()
        w = 1.0 / scales.edge
        np.add.at(prec, (e[:, 0], e[:, 0]), w)
        np.add.at(prec, (e[:, 1], e[:, 1]), w)
        prec[e[:, 0], e[:, 1]] = -w
        prec[e[:, 1], e[:, 0]] = -w
    return prec


def build_precision_banded(graph: FusionGraph, scales: LatentScales) -> np.ndarray:
    """Same matrix in lower-banded storage, shape (bandwidth + 1, n_nodes).

    Row d holds the d-th subdiagonal; useful when the graph bandwidth is small
    (chains, row-major grids) so factorizations run in O(p * bandwidth^2).
    """
    _check_scales(graph, scales)
    p = graph.n_nodes
    band = np.zeros((graph.bandwidth + 1, p))
    band[0, :] = 1.0 / scales.coef
    for (j, k), v in zip(graph.edges, scales.edge):
        w = 1.0 / v
        band[0, j] += w
        band[0, k] += w
        band[k - j, j] = -w
    return band


def sample_beta_conditional(
    xtx: np.ndarray | None,
    xty: np.ndarray,
    prior_precision: np.ndarray,
    sigma2: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Exact draw from N(A^{-1} xty, sigma2 * A^{-1}) with A = xtx + prior_precision.

    ``xtx = None`` stands for the identity design (signal denoising), where A
    is I + prior_precision.  Raises :class:`SingularPrecisionError` carrying
    the failing pivot when A is not positive definite.
    """
    xty = np.asarray(xty, dtype=float)
    p = xty.size
    if prior_precision.shape != (p, p):
        raise ValueError(
            f"prior precision shape {prior_precision.shape} does not match p={p}"
        )
    if not (np.isfinite(sigma2) and sigma2 > 0.0):
        raise ValueError(f"sigma2 must be positive and finite, got {sigma2!r}")
    if xtx is None:
        a = prior_precision.copy()
        a[np.diag_indices_from(a)] += 1.0
    else:
        a = xtx + prior_precision
    chol, info = lapack.dpotrf(a, lower=1)
    if info > 0:
        raise SingularPrecisionError(int(info))
    if info < 0:  # pragma: no cover - argument errors cannot happen here
        raise ValueError(f"illegal value in argument {-info} of dpotrf")
    mean = scipy.linalg.cho_solve((chol, True), xty, check_finite=False)
    noise = scipy.linalg.solve_triangular(
        chol, rng.standard_normal(p), lower=True, trans="T", check_finite=False
    )
    return mean + np.sqrt(sigma2) * noise
