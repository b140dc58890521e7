"""Exact nearest-neighbor queries, interpolation and analogy arithmetic in embedding space."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError
from .evaluation import EmbeddingTable, format_table, write_table


@dataclass
class QueryResult:
    query: np.ndarray
    ids: list
    origins: np.ndarray
    distances: np.ndarray

    def __len__(self):
        return len(self.ids)

    def to_text(self) -> str:
        rows = [
            (rank + 1, i, int(o[0]), int(o[1]), f"{d:.6g}")
            for rank, (i, o, d) in enumerate(zip(self.ids, self.origins, self.distances))
        ]
        return format_table(["rank", "id", "x", "y", "distance"], rows)


def _vec(z):
    return np.asarray(getattr(z, "values", z), dtype=np.float64).ravel()


def nearest(table: EmbeddingTable, query, k: int = 5, exclude=()) -> QueryResult:
    """The ``k`` rows closest to ``query`` in Euclidean distance, after dropping ``exclude`` ids.

    Equal distances keep table order.
    """
    if k <= 0:
        raise ConfigError(f"k must be positive, got {k}")
    if len(table) == 0:
        raise ConfigError("cannot query an empty table")
    q = _vec(query)
    if q.shape != (table.dim,):
        raise ShapeError(f"query has dim {q.shape[0]}, table has {table.dim}")
    exclude = {str(e) for e in exclude}
    keep = np.array([i for i, rid in enumerate(table.ids) if rid not in exclude], dtype=np.int64)
    if not len(keep):
        return QueryResult(q, [], np.zeros((0, 2), np.int64), np.zeros(0))
    dist = np.sqrt(((table.embeddings[keep] - q) ** 2).sum(1))
    order = np.argsort(dist, kind="stable")[:k]
    rows = keep[order]
    return QueryResult(q, [table.ids[i] for i in rows], table.origins[rows], dist[order])


def interpolate(z1, z2, steps: int) -> list[np.ndarray]:
    """``steps`` evenly spaced points from ``z1`` to ``z2``, endpoints included."""
    a, b = _vec(z1), _vec(z2)
    if a.shape != b.shape:
        raise ShapeError(f"dims differ: {a.shape} vs {b.shape}")
    if steps < 2:
        raise ConfigError("steps must be >= 2")
    return [a + (i / (steps - 1)) * (b - a) for i in range(steps)]


def analogy(z1, z2, z3) -> np.ndarray:
    """Query vector ``z1 + z2 - z3``."""
    a, b, c = _vec(z1), _vec(z2), _vec(z3)
    if not (a.shape == b.shape == c.shape):
        raise ShapeError(f"dims differ: {a.shape}, {b.shape}, {c.shape}")
    return a + b - c


def interpolation_neighbors(table: EmbeddingTable, id1, id2, steps=5, k=5, exclude_endpoints=True):
    """Nearest rows to each point on the segment between two table rows."""
    pos = {rid: i for i, rid in enumerate(table.ids)}
    z1, z2 = table.embeddings[pos[str(id1)]], table.embeddings[pos[str(id2)]]
    exclude = {str(id1), str(id2)} if exclude_endpoints else set()
    return [nearest(table, z, k, exclude) for z in interpolate(z1, z2, steps)]


def export_embeddings(table: EmbeddingTable, path) -> None:
    write_table(table, path)
