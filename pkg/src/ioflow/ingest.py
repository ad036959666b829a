"""Flow-table ingestion, import/export value tables and value-based ranks.

The canonical input is a long-format CSV, one flow per line::

    year,src_country,src_sector,dst_country,dst_sector,value
    2009,AUT,C23,FRA,C24 CHM,100.0

Values are USD millions. A record from ``src`` to ``dst`` is stored as
``M[dst_country, src_country, dst_sector, src_sector]`` so that column
``(c', s')`` of the flattened matrix lists what node ``(c', s')`` sends out.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .nodes import COUNTRY, SECTOR, rank_indexes, reduce
from .registry import Registry

HEADER = ("year", "src_country", "src_sector", "dst_country", "dst_sector", "value")


class FlowFormatError(ValueError):
    """Malformed flow file; ``line`` is the one-based offending line."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DegenerateDatasetError(ValueError):
    pass


@dataclass
class FlowTensor:
    """Money-transfer tensor ``M[c, c', s, s']`` (flow from ``(c', s')`` to ``(c, s)``)."""

    year: int
    countries: Registry
    sectors: Registry
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        shape = (len(self.countries), len(self.countries), len(self.sectors), len(self.sectors))
        if self.values.shape != shape:
            raise ValueError(f"tensor shape {self.values.shape} does not match registries {shape}")

    @property
    def n_countries(self) -> int:
        return len(self.countries)

    @property
    def n_sectors(self) -> int:
        return len(self.sectors)

    @property
    def n_nodes(self) -> int:
        return self.n_countries * self.n_sectors

    def flat(self) -> np.ndarray:
        """N x N matrix with entry ``[i, i']`` = flow from node ``i'`` to node ``i``."""
        return self.values.transpose(0, 2, 1, 3).reshape(self.n_nodes, self.n_nodes)

    def with_values(self, values) -> "FlowTensor":
        return FlowTensor(self.year, self.countries, self.sectors, values)

    @classmethod
    def zeros(cls, countries: Registry, sectors: Registry, year: int = 0) -> "FlowTensor":
        nc, ns = len(countries), len(sectors)
        return cls(year, countries, sectors, np.zeros((nc, nc, ns, ns)))

    @classmethod
    def from_flat(cls, flat, countries: Registry, sectors: Registry, year: int = 0) -> "FlowTensor":
        nc, ns = len(countries), len(sectors)
        values = np.asarray(flat, dtype=float).reshape(nc, ns, nc, ns).transpose(0, 2, 1, 3)
        return cls(year, countries, sectors, values.copy())


def _text_stream(source):
    if isinstance(source, (bytes, bytearray)):
        return io.StringIO(bytes(source).decode("utf-8"))
    if isinstance(source, str):
        return io.StringIO(source)
    if isinstance(source, io.TextIOBase):
        return source
    return io.TextIOWrapper(source, encoding="utf-8", newline="")


def parse_flow_table(source, countries: Registry, sectors: Registry, year: int) -> FlowTensor:
    """Parse long-format flow records for ``year`` into a :class:`FlowTensor`.

    ``source`` may be a binary or text stream, ``bytes`` or ``str``. Records
    tagged with other years are skipped so that one file can carry several
    years. Unknown codes, negative or non-finite values and repeated
    ``(src, dst)`` keys raise :class:`FlowFormatError`.
    """
    stream = _text_stream(source)
    try:
        return _parse(stream, countries, sectors, year)
    finally:
        if isinstance(stream, io.TextIOWrapper) and stream is not source:
            # leave the caller's binary stream open
            stream.detach()


def _parse(stream, countries, sectors, year) -> FlowTensor:
    tensor = FlowTensor.zeros(countries, sectors, year)
    M = tensor.values
    seen = set()
    reader = csv.reader(stream)
    header = next(reader, None)
    if header is None:
        return tensor
    if tuple(h.strip() for h in header) != HEADER:
        raise FlowFormatError(f"expected header {','.join(HEADER)}", 1)
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not f.strip() for f in row):
            continue
        if len(row) != len(HEADER):
            raise FlowFormatError(f"expected {len(HEADER)} fields, got {len(row)}", lineno)
        try:
            rec_year = int(row[0])
        except ValueError:
            raise FlowFormatError(f"bad year {row[0]!r}", lineno) from None
        if rec_year != year:
            continue
        try:
            sc = countries.index(row[1])
            ss = sectors.index(row[2])
            dc = countries.index(row[3])
            ds = sectors.index(row[4])
        except ValueError as exc:
            raise FlowFormatError(str(exc), lineno) from None
        try:
            value = float(row[5])
        except ValueError:
            raise FlowFormatError(f"bad value {row[5]!r}", lineno) from None
        if not math.isfinite(value) or value < 0:
            raise FlowFormatError(f"value must be finite and nonnegative, got {row[5]!r}", lineno)
        key = (sc, ss, dc, ds)
        if key in seen:
            raise FlowFormatError("duplicate record for "
                                  f"{row[1]}/{row[2]} -> {row[3]}/{row[4]}", lineno)
        seen.add(key)
        M[dc, sc, ds, ss] = value
    return tensor


def write_flow_table(tensor: FlowTensor, stream) -> None:
    """Write the nonzero cells of ``tensor`` in the canonical long format.

    Values use ``repr`` so that parsing the output reproduces the tensor exactly.
    """
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(HEADER)
    M = tensor.values
    # source-major order: (src_country, src_sector, dst_country, dst_sector)
    for dc, sc, ds, ss in sorted(zip(*np.nonzero(M)), key=lambda k: (k[1], k[3], k[0], k[2])):
        writer.writerow([tensor.year, tensor.countries.codes[sc], tensor.sectors.codes[ss],
                         tensor.countries.codes[dc], tensor.sectors.codes[ds],
                         repr(float(M[dc, sc, ds, ss]))])


def from_square_table(table, countries: Registry, sectors: Registry, year: int = 0) -> FlowTensor:
    """Convert an OECD-style square inter-industry table.

    ``table[i_src, i_dst]`` holds what the supplying node sends to the using
    node, with both axes in country-major node order. This is the transpose
    of the flattened money matrix.
    """
    table = np.asarray(table, dtype=float)
    n = len(countries) * len(sectors)
    if table.shape != (n, n):
        raise ValueError(f"square table must be {n}x{n}, got {table.shape}")
    if (table < 0).any() or not np.isfinite(table).all():
        raise ValueError("square table entries must be finite and nonnegative")
    return FlowTensor.from_flat(table.T, countries, sectors, year)


def zero_intra_country(tensor: FlowTensor) -> FlowTensor:
    """Return a copy with all flows inside a single country removed."""
    values = tensor.values.copy()
    for c in range(tensor.n_countries):
        values[c, c] = 0.0
    return tensor.with_values(values)


@dataclass
class ValueTables:
    v_import: np.ndarray   # (n_countries, n_sectors)
    v_export: np.ndarray   # (n_countries, n_sectors)
    v_total: float
    p_import: np.ndarray = field(repr=False)
    p_export: np.ndarray = field(repr=False)

    @property
    def shape(self) -> tuple[int, int]:
        return self.v_import.shape


def compute_values(tensor: FlowTensor) -> ValueTables:
    """Import and export value per node and the normalized value probabilities."""
    M = tensor.values
    if (M < 0).any():
        raise ValueError("flow tensor has negative entries")
    shape = (tensor.n_countries, tensor.n_sectors)
    flat = np.ascontiguousarray(tensor.flat())
    # row sums of contiguous arrays: mirrored tensors give bit-identical tables
    v_import = flat.sum(axis=1).reshape(shape)
    v_export = np.ascontiguousarray(flat.T).sum(axis=1).reshape(shape)
    total = float(v_import.sum())
    if total <= 0:
        raise DegenerateDatasetError(f"total flow value is zero for year {tensor.year}")
    return ValueTables(v_import, v_export, total,
                       v_import.ravel() / total, v_export.ravel() / total)


@dataclass
class ValueRanks:
    """ImportRank / ExportRank probabilities with their orderings.

    ``K`` arrays map position to one-based rank.
    """

    p_import: np.ndarray
    k_import: np.ndarray
    p_export: np.ndarray
    k_export: np.ndarray
    pc_import: np.ndarray
    kc_import: np.ndarray
    pc_export: np.ndarray
    kc_export: np.ndarray
    ps_import: np.ndarray
    ks_import: np.ndarray
    ps_export: np.ndarray
    ks_export: np.ndarray


def value_rank_indexes(tables: ValueTables) -> ValueRanks:
    nc, ns = tables.shape
    pc_imp = reduce(tables.p_import, nc, ns, COUNTRY)
    pc_exp = reduce(tables.p_export, nc, ns, COUNTRY)
    ps_imp = reduce(tables.p_import, nc, ns, SECTOR)
    ps_exp = reduce(tables.p_export, nc, ns, SECTOR)
    return ValueRanks(
        tables.p_import, rank_indexes(tables.p_import),
        tables.p_export, rank_indexes(tables.p_export),
        pc_imp, rank_indexes(pc_imp), pc_exp, rank_indexes(pc_exp),
        ps_imp, rank_indexes(ps_imp), ps_exp, rank_indexes(ps_exp),
    )


def load_flow_file(path, countries: Registry, sectors: Registry, year: int,
                   zero_intra: bool = True) -> FlowTensor:
    """Read ``path`` for ``year``; intra-country flows are dropped unless ``zero_intra`` is false."""
    with open(path, "rb") as fh:
        tensor = parse_flow_table(fh, countries, sectors, year)
    return zero_intra_country(tensor) if zero_intra else tensor
