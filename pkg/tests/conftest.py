from pathlib import Path

import numpy as np
import pytest

from ioflow.ingest import FlowTensor, zero_intra_country
from ioflow.registry import make_registry, read_country_registry, read_sector_registry

DATA = Path(__file__).parent / "data"
TOY_FLOWS = DATA / "toy_3x2.csv"
TOY_REGISTRY = DATA / "registry"


def toy_registries(n_countries, n_sectors):
    countries = make_registry("country", [(i + 1, f"C{i:02d}", f"Country {i}")
                                          for i in range(n_countries)])
    sectors = make_registry("sector", [(i + 1, f"S{i:02d} X{i}", f"Sector {i}")
                                       for i in range(n_sectors)], short_alias=True)
    return countries, sectors


def random_tensor(rng, n_countries, n_sectors, sparsity=0.2, zero_intra=True, year=2009):
    """Lognormal flows with a fraction ``sparsity`` of cells set to zero."""
    countries, sectors = toy_registries(n_countries, n_sectors)
    shape = (n_countries, n_countries, n_sectors, n_sectors)
    values = rng.lognormal(0.0, 1.5, shape) * (rng.random(shape) >= sparsity)
    tensor = FlowTensor(year, countries, sectors, values)
    return zero_intra_country(tensor) if zero_intra else tensor


def toy_set(count=50, seed=20240501):
    """The acceptance toy collection: 3-6 countries, 2-4 sectors, 20% sparsity."""
    rng = np.random.default_rng(seed)
    tensors = []
    for _ in range(count):
        nc = int(rng.integers(3, 7))
        ns = int(rng.integers(2, 5))
        tensors.append(random_tensor(rng, nc, ns, 0.2))
    return tensors


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def toy_regs():
    countries = read_country_registry((TOY_REGISTRY / "countries.csv").read_text())
    sectors = read_sector_registry((TOY_REGISTRY / "sectors.csv").read_text())
    return countries, sectors


@pytest.fixture
def toy_registry_env(monkeypatch):
    monkeypatch.setenv("IOFLOW_REGISTRY_DIR", str(TOY_REGISTRY))
    return TOY_REGISTRY


# -- acceptance reporting ------------------------------------------------------

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, text): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, text = marker.args
    state = _CRITERIA.setdefault(number, {"text": text, "outcome": "PASS", "detail": ""})
    if report.skipped and state["outcome"] == "PASS":
        state["outcome"] = "SKIP"
        state["detail"] = str(report.longrepr[-1]) if isinstance(report.longrepr, tuple) else ""
    elif report.failed:
        state["outcome"] = "FAIL"
        state["detail"] = report.head_line or ""


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        state = _CRITERIA[number]
        line = f"[{state['outcome']}] criterion {number:>2}: {state['text']}"
        if state["outcome"] != "PASS" and state["detail"]:
            line += f"  ({state['detail']})"
        terminalreporter.write_line(line)
