"""Areal adjacency structures: lattices, contiguity matrices, degree matrices.

A lattice is the neighbor graph of a set of areal units (counties, grid
cells). The CAR-type models in :mod:`arealagree.gmcar` consume the order-1
contiguity matrix ``W1`` (0/1, symmetric, zero diagonal) and the degree
matrix ``D_w`` of neighbor counts. Higher-order contiguity matrices mark
pairs at exact shortest-path distance ``j``; the "exact shell" convention
(distance equal to ``j``, not within ``j``) is used so that matrices of
different orders never overlap.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.sparse.csgraph import shortest_path

from .errors import InvalidParameterError, IsolatedUnitError, LatticeError

__all__ = [
    "Lattice",
    "ContiguityMatrix",
    "DegreeMatrix",
    "build_contiguity",
    "higher_order_contiguity",
    "contiguity_matrices",
    "degree_matrix",
    "grid_lattice",
    "load_adjacency",
]


@dataclass(frozen=True)
class Lattice:
    """An areal unit graph: ``n`` units and unordered neighbor pairs.

    ``edges`` are canonicalized to sorted, deduplicated ``(i, j)`` pairs with
    ``i < j``. ``ids`` optionally carries the original unit identifiers, in
    index order. Instances are immutable and hashable.
    """

    n: int
    edges: tuple[tuple[int, int], ...]
    ids: tuple[str, ...] | None = field(default=None)

    def __post_init__(self):
        if self.n < 2:
            raise IsolatedUnitError(f"a lattice needs at least 2 units, got n={self.n}")
        canon = set()
        for i, j in self.edges:
            if i == j:
                raise LatticeError(f"self-loop on unit {i}")
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise LatticeError(f"edge ({i},{j}) outside [0, {self.n})")
            canon.add((min(i, j), max(i, j)))
        object.__setattr__(self, "edges", tuple(sorted(canon)))
        touched = {i for e in self.edges for i in e}
        missing = sorted(set(range(self.n)) - touched)
        if missing:
            raise IsolatedUnitError(f"units without neighbors: {missing}")
        if self.ids is not None:
            if len(self.ids) != self.n:
                raise LatticeError("ids length must equal n")
            object.__setattr__(self, "ids", tuple(str(u) for u in self.ids))
        # lattices key several lru caches on hot paths; hash once
        object.__setattr__(self, "_hash", hash((self.n, self.edges)))

    def __hash__(self):
        return self._hash

    @property
    def unit_ids(self) -> tuple[str, ...]:
        """Original identifiers, falling back to stringified indices."""
        return self.ids if self.ids is not None else tuple(str(i) for i in range(self.n))

    def index_of(self, unit_id: str) -> int:
        return self.unit_ids.index(unit_id)


@dataclass(frozen=True)
class ContiguityMatrix:
    """Symmetric 0/1 matrix marking unit pairs at a given neighbor order."""

    order: int
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if self.order < 1:
            raise InvalidParameterError(f"neighbor order must be >= 1, got {self.order}")
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise LatticeError("contiguity matrix must be square")
        if not np.array_equal(v, v.T):
            raise LatticeError("contiguity matrix must be symmetric")
        if np.any(np.diag(v) != 0):
            raise LatticeError("contiguity matrix must have zero diagonal")
        if not np.all((v == 0) | (v == 1)):
            raise LatticeError("contiguity entries must be 0 or 1")
        v = v.copy()
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class DegreeMatrix:
    """Diagonal matrix of order-1 neighbor counts ``w_{i+}``."""

    diagonal: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.diagonal, dtype=float)
        if d.ndim != 1:
            raise LatticeError("degree diagonal must be a vector")
        if np.any(d <= 0):
            raise IsolatedUnitError("zero neighbor count; CAR precision would be singular")
        d = d.copy()
        d.flags.writeable = False
        object.__setattr__(self, "diagonal", d)

    def as_matrix(self) -> np.ndarray:
        return np.diag(self.diagonal)


def build_contiguity(lattice: Lattice) -> ContiguityMatrix:
    """Order-1 contiguity matrix: ``w_ij = 1`` iff ``(i, j)`` is an edge."""
    w = np.zeros((lattice.n, lattice.n))
    for i, j in lattice.edges:
        w[i, j] = 1.0
        w[j, i] = 1.0
    return ContiguityMatrix(order=1, values=w)


def higher_order_contiguity(w1: ContiguityMatrix, order: int) -> ContiguityMatrix:
    """Contiguity matrix of a given order: pairs at exact graph distance ``order``.

    Distances are shortest paths in the order-1 graph. Orders beyond the
    graph diameter give an all-zero matrix, which is permitted.
    """
    if order < 1:
        raise InvalidParameterError(f"neighbor order must be >= 1, got {order}")
    if w1.order != 1:
        raise InvalidParameterError("base matrix must be order 1")
    if order == 1:
        return w1
    dist = shortest_path(w1.values, method="D", unweighted=True)
    return ContiguityMatrix(order=order, values=(dist == order).astype(float))


@lru_cache(maxsize=64)
def contiguity_matrices(lattice: Lattice, max_order: int) -> tuple[ContiguityMatrix, ...]:
    """``(W_1, ..., W_max_order)`` for a lattice, cached per (lattice, order)."""
    w1 = build_contiguity(lattice)
    return tuple(higher_order_contiguity(w1, j) for j in range(1, max_order + 1))


def degree_matrix(w1: ContiguityMatrix) -> DegreeMatrix:
    """Diagonal of row sums of the order-1 contiguity matrix."""
    if w1.order != 1:
        raise InvalidParameterError("degree matrix is defined from the order-1 matrix")
    return DegreeMatrix(diagonal=w1.values.sum(axis=1))


def grid_lattice(rows: int, cols: int) -> Lattice:
    """Rook-adjacency grid with ``rows * cols`` units, row-major indexing."""
    if rows < 1 or cols < 1:
        raise LatticeError("grid dimensions must be positive")
    edges = []
    for r in range(rows):
        for c in range(cols):
            i = r * cols + c
            if c + 1 < cols:
                edges.append((i, i + 1))
            if r + 1 < rows:
                edges.append((i, i + cols))
    return Lattice(n=rows * cols, edges=tuple(edges))


def load_adjacency(path: str | Path, header: bool = False) -> Lattice:
    """Read an edge-list file into a validated :class:`Lattice`.

    Format: one edge per line as ``ID1,ID2``; ``#`` starts a comment line;
    blank lines are skipped; set ``header=True`` to drop the first data line.
    Unit IDs may be arbitrary strings and are mapped to indices in order of
    first appearance (kept on the result as ``ids``). Duplicate edges, in
    either orientation, are tolerated with a warning.
    """
    path = Path(path)
    index: dict[str, int] = {}
    edges: set[tuple[int, int]] = set()
    skipped_header = not header
    with path.open(encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if not skipped_header:
                skipped_header = True
                continue
            parts = [p.strip() for p in line.split(",")]
            if len(parts) != 2 or not all(parts):
                raise LatticeError(f"{path.name}:{lineno}: expected 'ID1,ID2', got {line!r}")
            a, b = parts
            if a == b:
                raise LatticeError(f"{path.name}:{lineno}: self-loop on {a!r}")
            for u in (a, b):
                if u not in index:
                    index[u] = len(index)
            e = (min(index[a], index[b]), max(index[a], index[b]))
            if e in edges:
                warnings.warn(f"{path.name}:{lineno}: duplicate edge {a!r},{b!r} ignored")
            edges.add(e)
    if len(index) < 2:
        raise LatticeError(f"{path.name}: no usable edges")
    return Lattice(n=len(index), edges=tuple(sorted(edges)), ids=tuple(index))
