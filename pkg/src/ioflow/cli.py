"""Command-line front end.

Subcommands::

    ioflow ingest-check --data flows.csv --year 2009
    ioflow rank         --data flows.csv --year 2009 --out results/
    ioflow balance      --data flows.csv --year 2008,2009 --out results/
    ioflow sensitivity  --data flows.csv --year 2009 --shock labor:CHN --basis both

Every run that writes files also writes ``manifest.json`` listing the
configuration and a SHA-256 of every output. Files are written to a
temporary name and renamed into place, so an interrupted run never leaves a
half-written table behind.
"""

from __future__ import annotations

import argparse
import hashlib
import io
import json
import logging
import os
import re
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .gmatrix import DEFAULT_ALPHA, EXPORT, IMPORT, build_stochastic, dump_triplets
from .ingest import (DegenerateDatasetError, FlowFormatError, FlowTensor, compute_values,
                     load_flow_file, value_rank_indexes)
from .ranking import DEFAULT_MAX_ITER, DEFAULT_TOL, ConvergenceError, gpvm, two_d_rank
from .registry import RegistryError, load_registries
from .sensitivity import (BASES, DEFAULT_STEP, FD_TOL, GPVM, VALUE,
                          parse_shock, sweep, tensor_balance)

logger = logging.getLogger("ioflow")

EXIT_FAILURE = 1
EXIT_USAGE = 2

_KIND_NAMES = {"sector-price": "sector", "country-labor": "labor", "group-labor": "group"}


class UsageError(Exception):
    pass


def fmt(x) -> str:
    """10 significant digits, printed as the shortest decimal that round-trips."""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(format(float(x), ".10g")))
    return str(x)


def _json_value(x):
    if isinstance(x, (int, np.integer)) and not isinstance(x, (bool, np.bool_)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        return float(format(float(x), ".10g"))
    return x


class Table:
    def __init__(self, columns, rows):
        self.columns = list(columns)
        self.rows = [list(r) for r in rows]

    def render(self, fmt_name: str) -> bytes:
        if fmt_name == "json":
            records = [{c: _json_value(v) for c, v in zip(self.columns, row)} for row in self.rows]
            return (json.dumps(records, indent=1) + "\n").encode()
        lines = [",".join(self.columns)]
        lines.extend(",".join(_csv_field(fmt(v)) for v in row) for row in self.rows)
        return ("\n".join(lines) + "\n").encode()


def _csv_field(text: str) -> str:
    if any(ch in text for ch in ',"\n'):
        return '"' + text.replace('"', '""') + '"'
    return text


def _atomic_write(path: Path, data: bytes) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_outputs(out_dir: Path, files: dict[str, bytes], manifest: dict) -> None:
    """Write ``files`` then a manifest carrying their hashes."""
    out_dir.mkdir(parents=True, exist_ok=True)
    listing = []
    for name, data in files.items():
        _atomic_write(out_dir / name, data)
        listing.append({"file": name, "sha256": hashlib.sha256(data).hexdigest()})
    manifest = dict(manifest, files=listing)
    _atomic_write(out_dir / "manifest.json", (json.dumps(manifest, indent=2) + "\n").encode())


# -- argument handling -------------------------------------------------------

def _years(text: str) -> list[int]:
    try:
        years = [int(y) for y in text.split(",") if y.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad year list {text!r}") from None
    if not 1 <= len(years) <= 2:
        raise argparse.ArgumentTypeError("give one year or two comma-separated years")
    return years


def _alpha(text: str) -> float:
    value = float(text)
    if not 0.0 < value < 1.0:
        raise argparse.ArgumentTypeError("alpha must lie strictly between 0 and 1")
    return value


def _positive(text: str) -> float:
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ioflow", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--data", action="append", required=True, metavar="PATH",
                        help="long-format flow file; repeat to give one file per year")
    common.add_argument("--year", type=_years, required=True, metavar="Y[,Y2]")
    common.add_argument("--alpha", type=_alpha, default=DEFAULT_ALPHA)
    common.add_argument("--tol", type=_positive, default=None,
                        help=f"L1 convergence threshold (default {DEFAULT_TOL:g}; "
                             f"{FD_TOL:g} for sensitivity)")
    common.add_argument("--max-iter", type=int, default=DEFAULT_MAX_ITER)
    common.add_argument("--keep-intra", action="store_true",
                        help="keep flows inside a country instead of zeroing them")

    outputs = argparse.ArgumentParser(add_help=False)
    outputs.add_argument("--out", type=Path, default=Path("."))
    outputs.add_argument("--format", choices=("csv", "json"), default="csv")

    sub.add_parser("ingest-check", parents=[common], help="parse and summarize a dataset")
    p = sub.add_parser("rank", parents=[common, outputs], help="GPVM rank tables")
    p.add_argument("--debug", action="store_true",
                   help="also write first-pass ranks and the S/S* triplet dumps")
    sub.add_parser("balance", parents=[common, outputs], help="CheiRank-PageRank balance")
    p = sub.add_parser("sensitivity", parents=[common, outputs], help="balance derivatives")
    p.add_argument("--shock", action="append", required=True,
                   metavar="sector:CODE|labor:ISO3|group:NAME|ISO3,...")
    p.add_argument("--step", type=_positive, default=DEFAULT_STEP)
    p.add_argument("--basis", choices=(*BASES, "both"), default=GPVM)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--no-check", action="store_true", help="skip the step/10 linearity check")
    return parser


def _config(args) -> dict:
    # the output directory is where the manifest lives; leave it out so runs compare
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("verbose", "out")}


def _load(args, countries, sectors) -> list[FlowTensor]:
    paths = args.data
    if len(paths) not in (1, len(args.year)):
        raise UsageError("give one --data file, or one per year")
    for path in paths:
        if not Path(path).is_file():
            raise UsageError(f"input file not found: {path}")
    if len(paths) == 1:
        paths = paths * len(args.year)
    return [load_flow_file(path, countries, sectors, year, zero_intra=not args.keep_intra)
            for path, year in zip(paths, args.year)]


# -- subcommands --------------------------------------------------------------

def cmd_ingest_check(args, countries, sectors) -> int:
    for tensor in _load(args, countries, sectors):
        values = compute_values(tensor)
        S = build_stochastic(tensor, IMPORT)
        S_star = build_stochastic(tensor, EXPORT)
        summary = {
            "year": tensor.year,
            "n_countries": tensor.n_countries,
            "n_sectors": tensor.n_sectors,
            "n_nodes": tensor.n_nodes,
            "nonzero_flows": int(np.count_nonzero(tensor.values)),
            "total_value_billion_usd": _json_value(values.v_total / 1000.0),
            "dangling_S": int(S.dangling.sum()),
            "dangling_S_star": int(S_star.dangling.sum()),
        }
        print(json.dumps(summary))
    return 0


def _node_labels(tensor):
    for c, cc in enumerate(tensor.countries.codes):
        for s, sc in enumerate(tensor.sectors.codes):
            yield c * tensor.n_sectors + s, cc, sc


def _rank_tables(tensor, pr, cr):
    K2 = two_d_rank(pr.K, cr.K).K2
    nodes = Table(["node_id", "country", "sector", "P", "K", "Pstar", "Kstar", "K2"],
                  [[i + 1, cc, sc, pr.P[i], pr.K[i], cr.P[i], cr.K[i], K2[i]]
                   for i, cc, sc in _node_labels(tensor)])
    return nodes


def cmd_rank(args, countries, sectors) -> int:
    if len(args.year) != 1:
        raise UsageError("rank takes a single year")
    (tensor,) = _load(args, countries, sectors)
    res = gpvm(tensor, args.alpha, args.tol or DEFAULT_TOL, args.max_iter)
    pr, cr = res.pagerank, res.cheirank
    vr = value_rank_indexes(res.values)
    K2_c = two_d_rank(pr.K_c, cr.K_c).K2
    K2_s = two_d_rank(pr.K_s, cr.K_s).K2
    countries_t = Table(
        ["country_index", "country_iso3", "P", "K", "Pstar", "Kstar", "K2",
         "Phat", "Khat", "Phatstar", "Khatstar"],
        [[c + 1, code, pr.P_c[c], pr.K_c[c], cr.P_c[c], cr.K_c[c], K2_c[c],
          vr.pc_import[c], vr.kc_import[c], vr.pc_export[c], vr.kc_export[c]]
         for c, code in enumerate(tensor.countries.codes)])
    sectors_t = Table(
        ["sector_index", "sector_code", "P", "K", "Pstar", "Kstar", "K2",
         "Phat", "Khat", "Phatstar", "Khatstar"],
        [[s + 1, code, pr.P_s[s], pr.K_s[s], cr.P_s[s], cr.K_s[s], K2_s[s],
          vr.ps_import[s], vr.ks_import[s], vr.ps_export[s], vr.ks_export[s]]
         for s, code in enumerate(tensor.sectors.codes)])
    value_t = Table(["node_id", "country", "sector", "Phat", "Khat", "Phatstar", "Khatstar"],
                    [[i + 1, cc, sc, vr.p_import[i], vr.k_import[i], vr.p_export[i], vr.k_export[i]]
                     for i, cc, sc in _node_labels(tensor)])
    ext = args.format
    files = {
        f"nodes.{ext}": _rank_tables(tensor, pr, cr).render(ext),
        f"countries.{ext}": countries_t.render(ext),
        f"sectors.{ext}": sectors_t.render(ext),
        f"value_ranks.{ext}": value_t.render(ext),
    }
    if args.debug:
        files[f"nodes_first_pass.{ext}"] = _rank_tables(
            tensor, res.first_pagerank, res.first_cheirank).render(ext)
        for direction, name in ((IMPORT, "S"), (EXPORT, "S_star")):
            buf = io.StringIO()
            dump_triplets(build_stochastic(tensor, direction), buf)
            files[f"{name}_triplets.csv"] = buf.getvalue().encode()
    solves = {name: {"iterations": r.iterations, "residual": r.residual}
              for name, r in (("pagerank", pr), ("cheirank", cr),
                              ("first_pagerank", res.first_pagerank),
                              ("first_cheirank", res.first_cheirank))}
    write_outputs(args.out, files, {"command": "rank", "config": _config(args), "solves": solves})
    return 0


def cmd_balance(args, countries, sectors) -> int:
    tensors = _load(args, countries, sectors)
    tol = args.tol or DEFAULT_TOL
    runs = [(tensor_balance(t, GPVM, args.alpha, tol, args.max_iter),
             tensor_balance(t, VALUE)) for t in tensors]
    gp, val = runs[-1]
    columns = ["country_iso3", "B_gpvm", "B_value"]
    rows = [[code, gp.B[c], val.B[c]] for c, code in enumerate(countries.codes)]
    if len(runs) == 2:
        delta = runs[1][0].B - runs[0][0].B
        columns.append("delta_B")
        for row, d in zip(rows, delta):
            row.append(d)
    ext = args.format
    files = {f"balance.{ext}": Table(columns, rows).render(ext)}
    manifest = {"command": "balance", "config": _config(args),
                "years": args.year, "balance_year": args.year[-1],
                "residuals": [g.residual for g, _ in runs]}
    write_outputs(args.out, files, manifest)
    return 0


def _safe(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9.+-]", "_", text)


def cmd_sensitivity(args, countries, sectors) -> int:
    try:
        shocks = [parse_shock(s, countries, sectors) for s in args.shock]
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    tensors = _load(args, countries, sectors)
    bases = BASES if args.basis == "both" else (args.basis,)
    tol = args.tol or FD_TOL
    files, sweeps = {}, []
    ext = args.format
    for tensor in tensors:
        maps = sweep(tensor, shocks, bases, workers=args.workers, step=args.step,
                     alpha=args.alpha, tol=tol, max_iter=args.max_iter, check=not args.no_check)
        for m in maps:
            kind = _KIND_NAMES[m.shock.kind]
            stem = f"{tensor.year}_{kind}_{_safe(m.shock.label)}_{m.basis}"
            rows = [[code, m.dB[c], m.basis, m.shock.kind, m.shock.label, m.step]
                    for c, code in enumerate(countries.codes)]
            sweep_name = f"sensitivity_{stem}.{ext}"
            map_name = f"map_{stem}.{ext}"
            files[sweep_name] = Table(
                ["country_iso3", "dB", "basis", "shock_kind", "shock_target", "step"], rows).render(ext)
            files[map_name] = Table(["country_iso3", "value"],
                                    [[code, m.dB[c]] for c, code in enumerate(countries.codes)]
                                    ).render(ext)
            entry = {
                "year": tensor.year, "file": sweep_name, "map_file": map_name,
                "shock_kind": m.shock.kind, "shock_target": m.shock.label,
                "basis": m.basis, "step": m.step, "residual": m.residual,
                "linearity_ok": m.linearity_ok, "max_relative_change": m.max_relative_change,
                "warning": m.warning,
            }
            if m.shock.countries:
                entry["members"] = [countries.codes[c] for c in m.shock.countries]
                entry["self_dB"] = _json_value(m.self_derivative)
            sweeps.append(entry)
    manifest = {"command": "sensitivity", "config": _config(args), "sweeps": sweeps}
    write_outputs(args.out, files, manifest)
    return 0


COMMANDS = {
    "ingest-check": cmd_ingest_check,
    "rank": cmd_rank,
    "balance": cmd_balance,
    "sensitivity": cmd_sensitivity,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        countries, sectors = load_registries()
    except (OSError, RegistryError) as exc:
        print(f"ioflow: cannot load registries: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    try:
        return COMMANDS[args.command](args, countries, sectors)
    except UsageError as exc:
        print(f"ioflow {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FlowFormatError, DegenerateDatasetError, RegistryError, ConvergenceError) as exc:
        print(f"ioflow {args.command}: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
