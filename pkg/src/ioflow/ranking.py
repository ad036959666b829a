"""PageRank / CheiRank by power iteration, the two-pass GPVM pipeline and 2DRank."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .gmatrix import (DEFAULT_ALPHA, EXPORT, IMPORT, GoogleOperator, apply_google,
                      build_stochastic, first_personalization, second_personalization)
from .ingest import FlowTensor, ValueTables, compute_values
from .nodes import COUNTRY, SECTOR, rank_indexes, reduce

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-12
DEFAULT_MAX_ITER = 1000

__all__ = ["ConvergenceError", "RankResult", "GPVMResult", "TwoDRankResult",
           "pagerank", "gpvm", "gpvm_ranks", "reduce", "two_d_rank"]


class ConvergenceError(RuntimeError):
    def __init__(self, iterations: int, residual: float):
        self.iterations = iterations
        self.residual = residual
        super().__init__(f"power iteration did not converge in {iterations} steps "
                         f"(last L1 change {residual:.3e})")


@dataclass(frozen=True)
class RankResult:
    """Stationary probabilities with node, country and sector orderings.

    ``direction`` is ``"import"`` for PageRank and ``"export"`` for CheiRank.
    Rank arrays hold the one-based rank of each position.
    """

    P: np.ndarray
    K: np.ndarray
    P_c: np.ndarray
    K_c: np.ndarray
    P_s: np.ndarray
    K_s: np.ndarray
    direction: str
    iterations: int
    residual: float

    @classmethod
    def from_probabilities(cls, P, shape, direction, iterations=0, residual=0.0) -> "RankResult":
        nc, ns = shape
        P_c = reduce(P, nc, ns, COUNTRY)
        P_s = reduce(P, nc, ns, SECTOR)
        return cls(P, rank_indexes(P), P_c, rank_indexes(P_c), P_s, rank_indexes(P_s),
                   direction, iterations, residual)


def pagerank(op: GoogleOperator, tol: float = DEFAULT_TOL,
             max_iter: int = DEFAULT_MAX_ITER) -> RankResult:
    """Stationary vector of ``op`` by power iteration from the uniform vector.

    Iterates until the L1 change between successive iterates is at most
    ``tol``; since ``G`` contracts by ``alpha`` the returned vector then
    satisfies ``|G P - P|_1 <= alpha * tol``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    x = np.full(op.n, 1.0 / op.n)
    residual = np.inf
    for it in range(1, max_iter + 1):
        y = apply_google(op, x)
        residual = float(np.abs(y - x).sum())
        x = y
        if residual <= tol:
            break
    else:
        raise ConvergenceError(max_iter, residual)
    x /= x.sum()
    return RankResult.from_probabilities(x, op.S.shape, op.S.direction, it, residual)


@dataclass(frozen=True)
class GPVMResult:
    """Second-pass PageRank and CheiRank plus the first-pass results for debugging."""

    pagerank: RankResult
    cheirank: RankResult
    first_pagerank: RankResult
    first_cheirank: RankResult
    values: ValueTables

    @property
    def max_residual(self) -> float:
        return max(r.residual for r in
                   (self.pagerank, self.cheirank, self.first_pagerank, self.first_cheirank))


def gpvm(tensor: FlowTensor, alpha: float = DEFAULT_ALPHA, tol: float = DEFAULT_TOL,
         max_iter: int = DEFAULT_MAX_ITER) -> GPVMResult:
    """Run both GPVM passes in both directions.

    The first pass personalizes on within-country value shares; the second on
    the sector reduction of the first-pass result, shared equally by countries.
    """
    values = compute_values(tensor)
    nc = tensor.n_countries
    results = {}
    for direction in (IMPORT, EXPORT):
        S = build_stochastic(tensor, direction)
        first = pagerank(GoogleOperator(S, first_personalization(values, direction), alpha),
                         tol, max_iter)
        v2 = second_personalization(first.P_s, nc, direction)
        second = pagerank(GoogleOperator(S, v2, alpha), tol, max_iter)
        logger.debug("%s: %d + %d iterations", direction, first.iterations, second.iterations)
        results[direction] = (first, second)
    return GPVMResult(results[IMPORT][1], results[EXPORT][1],
                      results[IMPORT][0], results[EXPORT][0], values)


def gpvm_ranks(tensor: FlowTensor, alpha: float = DEFAULT_ALPHA, tol: float = DEFAULT_TOL,
               max_iter: int = DEFAULT_MAX_ITER) -> tuple[RankResult, RankResult]:
    """``(PageRank, CheiRank)`` after the second GPVM pass."""
    res = gpvm(tensor, alpha, tol, max_iter)
    return res.pagerank, res.cheirank


@dataclass(frozen=True)
class TwoDRankResult:
    K2: np.ndarray


def _check_permutation(K) -> np.ndarray:
    K = np.asarray(K)
    if K.ndim != 1 or not np.array_equal(np.sort(K), np.arange(1, K.size + 1)):
        raise ValueError("rank vector must be a permutation of 1..N")
    return K.astype(np.int64)


def two_d_rank(K, K_star) -> TwoDRankResult:
    """Order nodes by the first square ``[1..k] x [1..k]`` of the (K, K*) plane holding them.

    A node enters at ``k = max(K, K*)``. Nodes entering at the same ``k``
    (at most two) are listed by ascending ``K``: the one on the edge
    ``K* = k`` comes before the one on the edge ``K = k``.
    """
    K = _check_permutation(K)
    K_star = _check_permutation(K_star)
    if K.size != K_star.size:
        raise ValueError("K and K* must rank the same number of nodes")
    order = np.lexsort((K, np.maximum(K, K_star)))
    K2 = np.empty(K.size, dtype=np.int64)
    K2[order] = np.arange(1, K.size + 1)
    return TwoDRankResult(K2)
