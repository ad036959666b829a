"""Country and sector registries.

The default registries ship as CSV files under ``ioflow/data`` and list the
58 countries (57 plus the ``ROW`` aggregate) and the 37 ISIC Rev.3 activity
sectors of the OECD-WTO TiVA inter-country tables. Set ``IOFLOW_REGISTRY_DIR``
to a directory holding ``countries.csv`` and ``sectors.csv`` to override them.

Registry indexes are one-based in files and reports; lookups return
zero-based positions for array indexing.
"""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

REGISTRY_ENV = "IOFLOW_REGISTRY_DIR"


class RegistryError(ValueError):
    pass


@dataclass(frozen=True)
class Registry:
    """Ordered list of ``(index, code, name)`` entries.

    ``aliases`` maps alternative spellings to the same entry; for sectors the
    short OECD code (``C23`` for ``C23 PET``) is registered automatically.
    """

    kind: str
    codes: tuple[str, ...]
    names: tuple[str, ...]
    aliases: dict[str, int]

    def __len__(self) -> int:
        return len(self.codes)

    def __iter__(self):
        for pos, (code, name) in enumerate(zip(self.codes, self.names)):
            yield pos + 1, code, name

    def index(self, code: str) -> int:
        """Zero-based position of ``code`` (case-insensitive, aliases allowed)."""
        key = " ".join(code.split()).upper()
        try:
            return self.aliases[key]
        except KeyError:
            raise RegistryError(f"unknown {self.kind} code {code!r}") from None

    def __contains__(self, code: str) -> bool:
        return " ".join(code.split()).upper() in self.aliases


def make_registry(kind: str, entries, short_alias: bool = False) -> Registry:
    """Build a registry from ``(index, code, name)`` triples.

    Indexes must run contiguously from 1 and codes must be unique.
    """
    entries = sorted(((int(i), c.strip(), n.strip()) for i, c, n in entries),
                     key=lambda e: e[0])
    if [e[0] for e in entries] != list(range(1, len(entries) + 1)):
        raise RegistryError(f"{kind} indexes must be contiguous from 1")
    codes = tuple(e[1] for e in entries)
    aliases: dict[str, int] = {}
    for pos, code in enumerate(codes):
        key = " ".join(code.split()).upper()
        if key in aliases:
            raise RegistryError(f"duplicate {kind} code {code!r}")
        aliases[key] = pos
    if short_alias:
        for pos, code in enumerate(codes):
            short = code.split()[0].upper()
            # a short alias is only usable when it is unambiguous
            if short not in aliases:
                aliases[short] = pos
    return Registry(kind, codes, tuple(e[2] for e in entries), aliases)


def _read_csv(text: str) -> list[tuple[str, str, str]]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or len(header) < 3 or header[0].strip() != "index":
        raise RegistryError("registry file must start with an index,code,name header")
    return [(row[0], row[1], row[2]) for row in reader if row]


def read_country_registry(text: str) -> Registry:
    return make_registry("country", _read_csv(text))


def read_sector_registry(text: str) -> Registry:
    return make_registry("sector", _read_csv(text), short_alias=True)


def _registry_text(name: str, directory: str | os.PathLike | None) -> str:
    if directory is None:
        directory = os.environ.get(REGISTRY_ENV) or None
    if directory is not None:
        return (Path(directory) / name).read_text(encoding="utf-8")
    return resources.files("ioflow").joinpath("data", name).read_text(encoding="utf-8")


def load_registries(directory: str | os.PathLike | None = None) -> tuple[Registry, Registry]:
    """Return ``(countries, sectors)`` from ``directory``, the env override, or the defaults."""
    countries = read_country_registry(_registry_text("countries.csv", directory))
    sectors = read_sector_registry(_registry_text("sectors.csv", directory))
    return countries, sectors


def write_registry(registry: Registry, path: str | os.PathLike) -> None:
    header = "description" if registry.kind == "sector" else "name"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["index", "code", header])
        writer.writerows(registry)


# Euro area membership as of 2008 (15 states).
EUROZONE_2008 = ("AUT", "BEL", "FIN", "FRA", "DEU", "GRC", "IRL", "ITA",
                 "LUX", "NLD", "PRT", "SVN", "ESP", "MLT", "CYP")

GROUP_PRESETS = {"eurozone-2008": EUROZONE_2008}
