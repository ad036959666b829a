"""CheiRank-PageRank balance and its response to price and labor-cost shocks.

A shock multiplies every flow *sent* by the targeted sector (price shock) or
by the targeted countries (labor-cost shock) by ``1 + magnitude``. Balance
derivatives are central differences where each side re-runs the whole
pipeline on the shocked tensor: value tables, both personalizations, both
GPVM passes, reductions and balance.
"""

from __future__ import annotations

import logging
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .gmatrix import DEFAULT_ALPHA
from .ingest import FlowTensor, compute_values
from .nodes import COUNTRY, reduce
from .ranking import DEFAULT_MAX_ITER, DEFAULT_TOL, gpvm
from .registry import GROUP_PRESETS, Registry

logger = logging.getLogger(__name__)

GPVM = "gpvm"
VALUE = "value"
BASES = (GPVM, VALUE)

SECTOR_PRICE = "sector-price"
COUNTRY_LABOR = "country-labor"
GROUP_LABOR = "group-labor"
SHOCK_KINDS = (SECTOR_PRICE, COUNTRY_LABOR, GROUP_LABOR)

DEFAULT_STEP = 1e-5
# Finite differences divide solver error by the step, so shocked solves
# are run well below the ranking default of 1e-12.
FD_TOL = 1e-14
LINEARITY_RTOL = 1e-2
LINEARITY_FLOOR = 1e-6


class LinearityWarning(UserWarning):
    pass


@dataclass(frozen=True)
class BalanceVector:
    B: np.ndarray
    basis: str
    P_c: np.ndarray = field(repr=False)
    P_star_c: np.ndarray = field(repr=False)
    residual: float = 0.0


def balance(P_c, P_star_c, basis: str = GPVM, residual: float = 0.0) -> BalanceVector:
    """``(P*_c - P_c) / (P*_c + P_c)`` per country; 0 where both vanish."""
    P_c = np.asarray(P_c, dtype=float)
    P_star_c = np.asarray(P_star_c, dtype=float)
    den = P_star_c + P_c
    B = np.zeros_like(den)
    np.divide(P_star_c - P_c, den, out=B, where=den > 0)
    return BalanceVector(B, basis, P_c, P_star_c, residual)


def tensor_balance(tensor: FlowTensor, basis: str = GPVM, alpha: float = DEFAULT_ALPHA,
                   tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> BalanceVector:
    """Balance of every country from GPVM ranks or from raw import/export values."""
    if basis == GPVM:
        res = gpvm(tensor, alpha, tol, max_iter)
        return balance(res.pagerank.P_c, res.cheirank.P_c, GPVM, res.max_residual)
    if basis == VALUE:
        values = compute_values(tensor)
        nc, ns = values.shape
        return balance(reduce(values.p_import, nc, ns, COUNTRY),
                       reduce(values.p_export, nc, ns, COUNTRY), VALUE)
    raise ValueError(f"basis must be one of {BASES}, got {basis!r}")


@dataclass(frozen=True)
class ShockSpec:
    """Perturbation of the flow tensor.

    ``target`` is a zero-based sector index for ``sector-price``, a country
    index for ``country-labor`` and a tuple of country indexes for
    ``group-labor``. ``label`` names the target in reports.
    """

    kind: str
    target: int | tuple[int, ...]
    magnitude: float = 0.0
    label: str = ""

    def __post_init__(self):
        if self.kind not in SHOCK_KINDS:
            raise ValueError(f"unknown shock kind {self.kind!r}")
        if not self.magnitude > -1.0:
            raise ValueError("shock magnitude must exceed -1")
        if self.kind == GROUP_LABOR:
            members = tuple(sorted({int(t) for t in self.target}))
            if not members:
                raise ValueError("group shock needs at least one country")
            object.__setattr__(self, "target", members)
        else:
            object.__setattr__(self, "target", int(self.target))

    def with_magnitude(self, magnitude: float) -> "ShockSpec":
        return replace(self, magnitude=magnitude)

    @property
    def countries(self) -> tuple[int, ...]:
        """Countries whose own labor cost is shocked (empty for price shocks)."""
        if self.kind == COUNTRY_LABOR:
            return (self.target,)
        if self.kind == GROUP_LABOR:
            return self.target
        return ()


def parse_shock(text: str, countries: Registry, sectors: Registry) -> ShockSpec:
    """Parse ``sector:<code>``, ``labor:<iso3>`` or ``group:<preset|iso3,iso3,...>``."""
    kind, sep, arg = text.partition(":")
    arg = arg.strip()
    if not sep or not arg:
        raise ValueError(f"shock must look like kind:target, got {text!r}")
    kind = kind.strip().lower()
    if kind == "sector":
        s = sectors.index(arg)
        return ShockSpec(SECTOR_PRICE, s, label=sectors.codes[s].split()[0])
    if kind == "labor":
        c = countries.index(arg)
        return ShockSpec(COUNTRY_LABOR, c, label=countries.codes[c])
    if kind == "group":
        if arg.lower() in GROUP_PRESETS:
            codes, label = GROUP_PRESETS[arg.lower()], arg.lower()
        else:
            codes = [a for a in (p.strip() for p in arg.split(",")) if a]
            label = "+".join(c.upper() for c in codes)
        return ShockSpec(GROUP_LABOR, tuple(countries.index(c) for c in codes), label=label)
    raise ValueError(f"unknown shock kind {kind!r} (use sector, labor or group)")


def apply_shock(tensor: FlowTensor, shock: ShockSpec) -> FlowTensor:
    """Scale the flows sent by the shocked sector or countries by ``1 + magnitude``."""
    factor = 1.0 + shock.magnitude
    values = tensor.values.copy()
    if shock.kind == SECTOR_PRICE:
        if not 0 <= shock.target < tensor.n_sectors:
            raise IndexError(f"sector index {shock.target} out of range")
        values[:, :, :, shock.target] *= factor
    else:
        members = shock.countries
        if not all(0 <= c < tensor.n_countries for c in members):
            raise IndexError(f"country index out of range in {members}")
        mask = np.zeros(tensor.n_countries, dtype=bool)
        mask[list(members)] = True
        values[:, mask] *= factor
    return tensor.with_values(values)


@dataclass(frozen=True)
class SensitivityMap:
    """Balance derivative of every country with respect to one shock."""

    dB: np.ndarray
    shock: ShockSpec
    step: float
    basis: str
    dB_refined: np.ndarray | None = field(default=None, repr=False)
    linearity_ok: bool | None = None
    max_relative_change: float | None = None
    residual: float = 0.0
    warning: str | None = None

    @property
    def self_derivative(self) -> float | None:
        """Summed response of the shocked countries themselves (labor shocks only)."""
        members = self.shock.countries
        if not members:
            return None
        return float(self.dB[list(members)].sum())


def _central_difference(tensor, shock, basis, h, alpha, tol, max_iter):
    plus = tensor_balance(apply_shock(tensor, shock.with_magnitude(h)), basis, alpha, tol, max_iter)
    minus = tensor_balance(apply_shock(tensor, shock.with_magnitude(-h)), basis, alpha, tol, max_iter)
    return (plus.B - minus.B) / (2.0 * h), max(plus.residual, minus.residual)


def balance_derivative(tensor: FlowTensor, shock: ShockSpec, basis: str = GPVM,
                       step: float = DEFAULT_STEP, alpha: float = DEFAULT_ALPHA,
                       tol: float = FD_TOL, max_iter: int = DEFAULT_MAX_ITER,
                       check: bool = True) -> SensitivityMap:
    """Central-difference ``dB_c / d(magnitude)`` at zero shock.

    With ``check`` the derivative is recomputed at ``step / 10``; entries that
    move by more than 1% (relative to ``max(|dB|, 1e-6)``) trigger a
    :class:`LinearityWarning` that is also recorded on the result.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    shock = shock.with_magnitude(0.0)
    dB, residual = _central_difference(tensor, shock, basis, step, alpha, tol, max_iter)
    if not check:
        return SensitivityMap(dB, shock, step, basis, residual=residual)
    fine, res_fine = _central_difference(tensor, shock, basis, step / 10, alpha, tol, max_iter)
    rel = np.abs(dB - fine) / np.maximum(np.abs(dB), LINEARITY_FLOOR)
    worst = float(rel.max()) if rel.size else 0.0
    ok = worst <= LINEARITY_RTOL
    message = None
    if not ok:
        message = (f"{shock.kind} {shock.label or shock.target} ({basis}): derivative changes by "
                   f"{worst:.2%} between steps {step:g} and {step / 10:g}")
        warnings.warn(message, LinearityWarning, stacklevel=2)
    return SensitivityMap(dB, shock, step, basis, fine, ok, worst, max(residual, res_fine), message)


def _sweep_one(args):
    tensor, shock, basis, kwargs = args
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", LinearityWarning)
        return balance_derivative(tensor, shock, basis, **kwargs)


def sweep(tensor: FlowTensor, shocks, bases=(GPVM,), workers: int = 1, **kwargs) -> list[SensitivityMap]:
    """Derivatives for every ``(shock, basis)`` pair, in input order.

    With ``workers > 1`` evaluations run in separate processes; results are
    collected in submission order so output does not depend on scheduling.
    Linearity problems are reported through ``SensitivityMap.warning``.
    """
    jobs = [(tensor, shock, basis, kwargs) for shock in shocks for basis in bases]
    if workers <= 1 or len(jobs) <= 1:
        results = [_sweep_one(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_one, jobs))
    for res in results:
        if res.warning:
            logger.warning(res.warning)
    return results


def same_registries(a: FlowTensor, b: FlowTensor) -> bool:
    return a.countries.codes == b.countries.codes and a.sectors.codes == b.sectors.codes


def balance_delta(earlier: FlowTensor, later: FlowTensor, alpha: float = DEFAULT_ALPHA,
                  tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> np.ndarray:
    """``B_c(later) - B_c(earlier)`` on the GPVM basis."""
    if not same_registries(earlier, later):
        raise ValueError("datasets use different country or sector registries")
    return (tensor_balance(later, GPVM, alpha, tol, max_iter).B
            - tensor_balance(earlier, GPVM, alpha, tol, max_iter).B)
