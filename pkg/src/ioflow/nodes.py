"""Node indexing, reductions and rank orderings shared by every stage.

A node is a (country, sector) pair. Internally node ``i = c * n_sectors + s``
with zero-based ``c`` and ``s``; reports use the one-based
``i = s + (c - 1) * n_sectors``, which is the same number plus one.
"""

from __future__ import annotations

import numpy as np

COUNTRY = "country"
SECTOR = "sector"


def node_index(c: int, s: int, n_sectors: int) -> int:
    return c * n_sectors + s


def node_pair(i: int, n_sectors: int) -> tuple[int, int]:
    return divmod(i, n_sectors)


def reduce(p, n_countries: int, n_sectors: int, axis: str) -> np.ndarray:
    """Sum node probabilities over sectors (``axis="country"``) or countries."""
    grid = np.asarray(p, dtype=float).reshape(n_countries, n_sectors)
    if axis == COUNTRY:
        return grid.sum(axis=1)
    if axis == SECTOR:
        return grid.sum(axis=0)
    raise ValueError(f"axis must be 'country' or 'sector', got {axis!r}")


def rank_indexes(p) -> np.ndarray:
    """One-based rank of every entry of ``p``.

    Larger probability ranks first; equal probabilities keep ascending index
    order, which for node vectors means ascending country, then sector.
    """
    p = np.asarray(p, dtype=float)
    order = np.lexsort((np.arange(p.size), -p))
    ranks = np.empty(p.size, dtype=np.int64)
    ranks[order] = np.arange(1, p.size + 1)
    return ranks


def ordering(ranks) -> np.ndarray:
    """Inverse of :func:`rank_indexes`: positions sorted by rank."""
    ranks = np.asarray(ranks)
    return np.argsort(ranks, kind="stable")
