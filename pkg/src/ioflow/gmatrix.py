"""Column-stochastic matrices and the personalized Google operator.

For the import direction column ``i'`` of ``S`` holds the flows sent by node
``i'`` divided by their total; the export direction does the same on the
transposed flows. Columns with nothing to normalize are *dangling* and stand
for the uniform column ``1/N``. They are never stored: :func:`apply_google`
adds their contribution as a single scalar.

The Google operator is ``G x = alpha * S x + (1 - alpha) * v * sum(x)``.
Neither ``G`` nor the rank-one terms are materialized.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .ingest import FlowTensor, ValueTables

IMPORT = "import"
EXPORT = "export"
FIRST = "first"
SECOND = "second"

DEFAULT_ALPHA = 0.5
_SUM_TOL = 1e-12


def _check_direction(direction: str) -> None:
    if direction not in (IMPORT, EXPORT):
        raise ValueError(f"direction must be 'import' or 'export', got {direction!r}")


@dataclass(frozen=True)
class StochasticMatrix:
    """Sparse column-stochastic matrix with implicit uniform dangling columns.

    ``matrix`` is CSC and has empty columns wherever ``dangling`` is true.
    ``source_value`` is the pre-normalization column total.
    """

    matrix: sp.csc_matrix
    dangling: np.ndarray
    source_value: np.ndarray
    shape: tuple[int, int]     # (n_countries, n_sectors)
    direction: str

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def column_sums(self) -> np.ndarray:
        sums = np.asarray(self.matrix.sum(axis=0)).ravel()
        sums[self.dangling] = 1.0
        return sums

    def toarray(self) -> np.ndarray:
        dense = self.matrix.toarray()
        dense[:, self.dangling] = 1.0 / self.n
        return dense


def build_stochastic(tensor: FlowTensor, direction: str = IMPORT) -> StochasticMatrix:
    """Normalize the flattened money matrix column by column.

    ``direction="import"`` gives ``S`` (flows read from the sender's column),
    ``"export"`` gives ``S*`` built on the transposed flows.
    """
    _check_direction(direction)
    flat = tensor.flat()
    # contiguous copy so that both directions sum in the same order
    flat = np.ascontiguousarray(flat.T if direction == EXPORT else flat)
    colsum = flat.sum(axis=0)
    dangling = colsum == 0
    mat = sp.csc_matrix(flat)
    mat.eliminate_zeros()
    cols = np.repeat(np.arange(mat.shape[1]), np.diff(mat.indptr))
    mat.data = mat.data / colsum[cols]
    return StochasticMatrix(mat, dangling, colsum, (tensor.n_countries, tensor.n_sectors), direction)


@dataclass(frozen=True)
class PersonalizationVector:
    v: np.ndarray
    stage: str
    direction: str

    def __post_init__(self):
        v = np.asarray(self.v, dtype=float)
        if (v < 0).any():
            raise ValueError("personalization vector has negative entries")
        if abs(v.sum() - 1.0) > _SUM_TOL:
            raise ValueError(f"personalization vector sums to {v.sum()!r}, not 1")
        object.__setattr__(self, "v", v)


def first_personalization(tables: ValueTables, direction: str = IMPORT) -> PersonalizationVector:
    """Value share of each sector within its country, each country weighted ``1/N_c``.

    A country without any value in this direction spreads its ``1/N_c``
    uniformly over its sectors.
    """
    _check_direction(direction)
    values = tables.v_import if direction == IMPORT else tables.v_export
    nc, ns = values.shape
    totals = values.sum(axis=1)
    v = np.empty_like(values)
    live = totals > 0
    v[live] = values[live] / (nc * totals[live, None])
    v[~live] = 1.0 / (nc * ns)
    return PersonalizationVector(v.ravel(), FIRST, direction)


def second_personalization(p_sector, n_countries: int, direction: str = IMPORT) -> PersonalizationVector:
    """Every country gets the same sector profile ``P_s / N_c``."""
    p_sector = np.asarray(p_sector, dtype=float)
    if abs(p_sector.sum() - 1.0) > 1e-10 or (p_sector < 0).any():
        raise ValueError("sector probabilities must be nonnegative and sum to 1")
    return PersonalizationVector(np.tile(p_sector / n_countries, n_countries), SECOND, direction)


@dataclass(frozen=True)
class GoogleOperator:
    S: StochasticMatrix
    v: PersonalizationVector
    alpha: float = DEFAULT_ALPHA

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.v.v.size != self.S.n:
            raise ValueError(f"personalization has {self.v.v.size} entries, matrix has {self.S.n}")

    @property
    def n(self) -> int:
        return self.S.n


def apply_google(op: GoogleOperator, x) -> np.ndarray:
    """Return ``G x`` for a probability vector ``x``.

    The sparse product is sequential, so the result is bit-reproducible.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (op.n,):
        raise ValueError(f"vector of shape {x.shape} does not match operator size {op.n}")
    y = op.S.matrix @ x
    y += x[op.S.dangling].sum() / op.n
    y *= op.alpha
    y += (1.0 - op.alpha) * x.sum() * op.v.v
    return y


def dump_triplets(S: StochasticMatrix, stream) -> None:
    """Write ``S`` as one-based ``row,col,weight`` triplets, dangling columns expanded."""
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(["row", "col", "weight"])
    coo = S.matrix.tocoo()
    entries = list(zip(coo.col.tolist(), coo.row.tolist(), coo.data.tolist()))
    uniform = 1.0 / S.n
    for col in np.flatnonzero(S.dangling).tolist():
        entries.extend((col, row, uniform) for row in range(S.n))
    for col, row, w in sorted(entries):
        writer.writerow([row + 1, col + 1, repr(w)])
