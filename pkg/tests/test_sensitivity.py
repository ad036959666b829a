import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_tensor
from ioflow.registry import load_registries
from ioflow.sensitivity import (COUNTRY_LABOR, GPVM, GROUP_LABOR, SECTOR_PRICE, VALUE,
                                LinearityWarning, ShockSpec, apply_shock, balance,
                                balance_delta, balance_derivative, parse_shock, sweep,
                                tensor_balance)


def test_balance_formula(rng):
    P = rng.random(6)
    P /= P.sum()
    Ps = rng.random(6)
    Ps /= Ps.sum()
    b = balance(P, Ps)
    expected = [(Ps[c] - P[c]) / (Ps[c] + P[c]) for c in range(6)]
    np.testing.assert_allclose(b.B, expected, rtol=1e-15)
    assert abs((b.B * (P + Ps)).sum()) <= 1e-10


def test_balance_equal_vectors_and_empty_country():
    P = np.array([0.5, 0.5, 0.0])
    b = balance(P, P)
    assert b.B.tolist() == [0.0, 0.0, 0.0]
    b = balance([0.6, 0.4, 0.0], [0.3, 0.7, 0.0])
    assert b.B[2] == 0.0
    assert np.all(np.abs(b.B) <= 1)


@pytest.mark.parametrize("basis", [GPVM, VALUE])
def test_balance_identity_and_bounds(rng, basis):
    for _ in range(5):
        t = random_tensor(rng, 5, 3, 0.3)
        b = tensor_balance(t, basis)
        assert np.all(np.abs(b.B) <= 1)
        assert abs((b.B * (b.P_c + b.P_star_c)).sum()) <= 1e-10


def test_shock_magnitude_zero_is_identity(rng):
    t = random_tensor(rng, 4, 3)
    for shock in (ShockSpec(SECTOR_PRICE, 1), ShockSpec(COUNTRY_LABOR, 2),
                  ShockSpec(GROUP_LABOR, (0, 3))):
        assert np.array_equal(apply_shock(t, shock).values, t.values)


def test_sector_shock_scales_source_sector(rng):
    t = random_tensor(rng, 3, 3)
    out = apply_shock(t, ShockSpec(SECTOR_PRICE, 1, 0.5)).values
    np.testing.assert_array_equal(out[..., 1], t.values[..., 1] * 1.5)
    np.testing.assert_array_equal(out[..., [0, 2]], t.values[..., [0, 2]])


def test_labor_shock_scales_source_country(rng):
    t = random_tensor(rng, 3, 2)
    out = apply_shock(t, ShockSpec(COUNTRY_LABOR, 2, -0.25)).values
    np.testing.assert_array_equal(out[:, 2], t.values[:, 2] * 0.75)
    np.testing.assert_array_equal(out[:, :2], t.values[:, :2])


def test_sector_without_outflows_unchanged(rng):
    t = random_tensor(rng, 3, 3)
    t.values[..., 2] = 0.0
    assert np.array_equal(apply_shock(t, ShockSpec(SECTOR_PRICE, 2, 0.3)).values, t.values)


def test_group_equals_sequential_country_shocks(rng):
    t = random_tensor(rng, 5, 2)
    group = apply_shock(t, ShockSpec(GROUP_LABOR, (1, 3), 0.2))
    seq = apply_shock(apply_shock(t, ShockSpec(COUNTRY_LABOR, 1, 0.2)),
                      ShockSpec(COUNTRY_LABOR, 3, 0.2))
    assert np.array_equal(group.values, seq.values)


def test_shock_validation(rng):
    t = random_tensor(rng, 3, 2)
    with pytest.raises(ValueError):
        ShockSpec(SECTOR_PRICE, 0, -1.0)
    with pytest.raises(ValueError):
        ShockSpec(GROUP_LABOR, ())
    with pytest.raises(ValueError):
        ShockSpec("tariff", 0)
    with pytest.raises(IndexError):
        apply_shock(t, ShockSpec(SECTOR_PRICE, 5, 0.1))
    with pytest.raises(IndexError):
        apply_shock(t, ShockSpec(GROUP_LABOR, (0, 9), 0.1))


def test_parse_shock():
    countries, sectors = load_registries()
    s = parse_shock("sector:C23", countries, sectors)
    assert (s.kind, s.target, s.label) == (SECTOR_PRICE, 6, "C23")
    s = parse_shock("labor:chn", countries, sectors)
    assert (s.kind, s.target, s.label) == (COUNTRY_LABOR, 36, "CHN")
    s = parse_shock("group:eurozone-2008", countries, sectors)
    assert s.kind == GROUP_LABOR and len(s.target) == 15 and s.label == "eurozone-2008"
    s = parse_shock("group:DEU,FRA", countries, sectors)
    assert s.target == (9, 10) and s.label == "DEU+FRA"
    for bad in ("sector", "planet:X", "labor:XXX", "sector:C99"):
        with pytest.raises(ValueError):
            parse_shock(bad, countries, sectors)


@pytest.mark.parametrize("basis", [GPVM, VALUE])
def test_null_support_shock_gives_exact_zero(rng, basis):
    t = random_tensor(rng, 4, 3)
    t.values[..., 0] = 0.0
    m = balance_derivative(t, ShockSpec(SECTOR_PRICE, 0), basis)
    assert np.all(m.dB == 0.0)
    assert m.linearity_ok


@pytest.mark.parametrize("basis", [GPVM, VALUE])
def test_singleton_group_equals_country_shock(rng, basis):
    t = random_tensor(rng, 4, 3)
    a = balance_derivative(t, ShockSpec(COUNTRY_LABOR, 2), basis, check=False)
    b = balance_derivative(t, ShockSpec(GROUP_LABOR, (2,)), basis, check=False)
    assert np.array_equal(a.dB, b.dB)


@pytest.mark.parametrize("basis", [GPVM, VALUE])
@pytest.mark.parametrize("shock", [ShockSpec(SECTOR_PRICE, 1), ShockSpec(COUNTRY_LABOR, 0)])
def test_step_refinement(rng, basis, shock):
    t = random_tensor(rng, 5, 3, 0.2)
    m = balance_derivative(t, shock, basis)
    assert m.linearity_ok, m.warning
    rel = np.abs(m.dB - m.dB_refined) / np.maximum(np.abs(m.dB), 1e-6)
    assert rel.max() <= 1e-2
    # one-sided difference at step/10 against the central value
    h = m.step / 10
    base = tensor_balance(t, basis, tol=1e-14).B
    plus = tensor_balance(apply_shock(t, shock.with_magnitude(h)), basis, tol=1e-14).B
    forward = (plus - base) / h
    big = np.abs(m.dB) > 1e-3
    assert np.all(np.abs(forward - m.dB)[big] <= 1e-3 * np.abs(m.dB)[big])


def test_zero_sum_of_numerator_derivatives(rng):
    t = random_tensor(rng, 5, 3)
    h = 1e-5
    shock = ShockSpec(COUNTRY_LABOR, 1)
    for basis in (GPVM, VALUE):
        plus = tensor_balance(apply_shock(t, shock.with_magnitude(h)), basis, tol=1e-14)
        minus = tensor_balance(apply_shock(t, shock.with_magnitude(-h)), basis, tol=1e-14)
        d_num = ((plus.P_star_c - plus.P_c) - (minus.P_star_c - minus.P_c)) / (2 * h)
        assert abs(d_num.sum()) <= 1e-8


def test_value_basis_matches_closed_form(rng):
    """Value balance derivative compared with the analytic derivative of value shares."""
    t = random_tensor(rng, 4, 2)
    c0 = 1
    m = balance_derivative(t, ShockSpec(COUNTRY_LABOR, c0), VALUE, check=False)
    M = t.values
    imp = M.sum(axis=(1, 3))          # by destination country/sector
    exp = M.sum(axis=(0, 2))
    dimp = M[:, c0].sum(axis=(1, 2))  # d/dsigma of country import totals
    dexp = np.zeros(4)
    dexp[c0] = exp[c0].sum()
    I, E = imp.sum(axis=1), exp.sum(axis=1)
    V, dV = M.sum(), M[:, c0].sum()
    P, Ps = I / V, E / V
    dP = dimp / V - I * dV / V**2
    dPs = dexp / V - E * dV / V**2
    expected = ((dPs - dP) * (Ps + P) - (Ps - P) * (dPs + dP)) / (Ps + P) ** 2
    np.testing.assert_allclose(m.dB, expected, rtol=1e-6, atol=1e-9)


def test_linearity_warning_is_raised_and_recorded(rng):
    t = random_tensor(rng, 4, 3)
    with pytest.warns(LinearityWarning):
        m = balance_derivative(t, ShockSpec(COUNTRY_LABOR, 0), GPVM, step=0.5)
    assert m.linearity_ok is False
    assert "derivative changes" in m.warning


def test_sweep_order_and_workers(rng):
    t = random_tensor(rng, 3, 2)
    shocks = [ShockSpec(SECTOR_PRICE, 0, label="S00"), ShockSpec(COUNTRY_LABOR, 1, label="C01")]
    serial = sweep(t, shocks, (GPVM, VALUE), check=False)
    parallel = sweep(t, shocks, (GPVM, VALUE), workers=2, check=False)
    assert [(m.shock.label, m.basis) for m in serial] == [
        ("S00", GPVM), ("S00", VALUE), ("C01", GPVM), ("C01", VALUE)]
    for a, b in zip(serial, parallel):
        assert np.array_equal(a.dB, b.dB)


def test_self_derivative(rng):
    t = random_tensor(rng, 4, 2)
    m = balance_derivative(t, ShockSpec(GROUP_LABOR, (0, 2)), VALUE, check=False)
    assert m.self_derivative == pytest.approx(m.dB[0] + m.dB[2])
    assert balance_derivative(t, ShockSpec(SECTOR_PRICE, 0), VALUE, check=False).self_derivative is None


def test_balance_delta(rng):
    a = random_tensor(rng, 4, 3)
    b = random_tensor(rng, 4, 3)
    assert np.all(balance_delta(a, a) == 0)
    expected = tensor_balance(b).B - tensor_balance(a).B
    np.testing.assert_array_equal(balance_delta(a, b), expected)
    c = random_tensor(rng, 5, 3)
    with pytest.raises(ValueError):
        balance_delta(a, c)


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 5), st.integers(1, 3), st.integers(0, 2**32 - 1),
       st.floats(-0.5, 2.0))
def test_shocked_balance_bounded(nc, ns, seed, magnitude):
    rng = np.random.default_rng(seed)
    t = random_tensor(rng, nc, ns, 0.3)
    if not t.values.any():
        return
    shocked = apply_shock(t, ShockSpec(COUNTRY_LABOR, 0, magnitude))
    if not shocked.values.any():
        return
    for basis in (GPVM, VALUE):
        b = tensor_balance(shocked, basis)
        assert np.all(np.abs(b.B) <= 1)
        assert abs((b.B * (b.P_c + b.P_star_c)).sum()) <= 1e-10
