import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from legatosim.domain import NodeClass, Resources, make_node
from legatosim.errors import CrashRegion, InvalidFootprint, OutOfRange
from legatosim.undervolt import (
    BUILTIN_PRESETS,
    PlatformPreset,
    VoltageRegion,
    fault_rate,
    mtbf,
    power_factor,
    region,
    voltage_for_fault_rate,
)

from oracles import power_factor_closed_form

VC707 = BUILTIN_PRESETS["VC707"]
FPGA = NodeClass("fpga", Resources(4, 4096), 40.0, platform="VC707")


def test_nominal_voltage_is_guardband():
    assert VC707.v_nom == 1.0
    assert region(1.0, VC707) is VoltageRegion.GUARDBAND


def test_region_boundaries():
    assert region(VC707.v_min, VC707) is VoltageRegion.GUARDBAND
    assert region(VC707.v_crash, VC707) is VoltageRegion.CRITICAL
    assert region(VC707.v_crash - 1e-9, VC707) is VoltageRegion.CRASH
    assert region(VC707.v_min - 1e-9, VC707) is VoltageRegion.CRITICAL


@pytest.mark.parametrize("v", [0.0, -0.1, 1.0000001, 2.0])
def test_region_out_of_range(v):
    with pytest.raises(OutOfRange):
        region(v, VC707)


def test_region_partition_dense_grid():
    for v in np.linspace(1e-3, VC707.v_nom, 20001):
        r = region(float(v), VC707)
        expected = (
            VoltageRegion.GUARDBAND if v >= VC707.v_min
            else VoltageRegion.CRITICAL if v >= VC707.v_crash
            else VoltageRegion.CRASH
        )
        assert r is expected


@pytest.mark.parametrize("name,rate", [("VC707", 652.0), ("ZC702", 153.0), ("KC705-A", 254.0), ("KC705-B", 60.0)])
def test_fault_rate_crash_anchors(name, rate):
    p = BUILTIN_PRESETS[name]
    assert fault_rate(p.v_crash, p) == rate


@pytest.mark.parametrize("name", sorted(BUILTIN_PRESETS))
def test_fault_free_in_guardband(name):
    p = BUILTIN_PRESETS[name]
    for v in np.linspace(p.v_min, p.v_nom, 50):
        assert fault_rate(float(v), p) == 0.0


def test_fault_rate_exponential_shape():
    k = math.log(652.0 / 1.0) / (0.61 - 0.54)
    for v in (0.55, 0.58, 0.6, 0.6099):
        assert fault_rate(v, VC707) == pytest.approx(1.0 * math.exp(k * (0.61 - v)), rel=1e-12)


def test_fault_rate_below_crash_raises():
    with pytest.raises(CrashRegion):
        fault_rate(VC707.v_crash - 0.001, VC707)


def test_fault_rate_monotone_and_continuous_in_critical_region():
    vs = np.linspace(VC707.v_crash, VC707.v_min - 1e-12, 5001)
    rates = np.array([fault_rate(float(v), VC707) for v in vs])
    assert np.all(np.diff(rates) <= 0)
    # continuity: consecutive samples never jump more than the local slope allows
    step = vs[1] - vs[0]
    assert np.max(np.abs(np.diff(rates))) <= VC707.fault_slope * rates.max() * step * 1.01
    assert fault_rate(VC707.v_min - 1e-12, VC707) == pytest.approx(VC707.lambda_min, rel=1e-9)


def test_voltage_for_fault_rate_inverts():
    for rate in (1.5, 10.0, 100.0, 652.0):
        v = voltage_for_fault_rate(rate, VC707)
        assert fault_rate(v, VC707) == pytest.approx(rate, rel=1e-12)


def test_power_factor_anchors():
    assert power_factor(VC707.v_nom, VC707) == 1.0
    at_crash = power_factor(VC707.v_crash, VC707)
    assert at_crash <= 0.10
    assert abs(at_crash - (1 - VC707.power_saving_at_crash)) <= 1e-9 * (1 - VC707.power_saving_at_crash)


def test_power_factor_midpoint_matches_frozen_value():
    # (0.54 + 1.0) / 2 = 0.77 V; 1 - 0.91 * (1 - 0.77^2) / (1 - 0.54^2)
    assert power_factor(0.77, VC707) == pytest.approx(0.47704545454545455, rel=1e-12)
    assert 1 - VC707.power_saving_at_crash < power_factor(0.77, VC707) < 1.0


def test_power_factor_strictly_increasing_dense_grid():
    vs = np.linspace(VC707.v_crash, VC707.v_nom, 10001)
    f = np.array([power_factor(float(v), VC707) for v in vs])
    assert np.all(np.diff(f) > 0)
    oracle = np.array([power_factor_closed_form(float(v), 1.0, 0.54, 0.91) for v in vs])
    np.testing.assert_allclose(f, oracle, rtol=1e-12)


@given(
    v_crash=st.floats(0.3, 0.7),
    gap1=st.floats(0.01, 0.2),
    gap2=st.floats(0.01, 0.3),
    saving=st.floats(0.05, 0.99),
    lam=st.floats(1.5, 5000),
)
def test_anchors_hold_for_any_preset(v_crash, gap1, gap2, saving, lam):
    p = PlatformPreset("X", v_crash + gap1 + gap2, v_crash + gap1, v_crash, lam, power_saving_at_crash=saving)
    assert fault_rate(p.v_crash, p) == lam
    assert power_factor(p.v_nom, p) == pytest.approx(1.0, rel=1e-9)
    assert power_factor(p.v_crash, p) == pytest.approx(1 - saving, rel=1e-9)
    mid = (p.v_crash + p.v_nom) / 2
    assert 1 - saving < power_factor(mid, p) < 1


def test_preset_invariants_enforced():
    with pytest.raises(ValueError):
        PlatformPreset("bad", 1.0, 0.5, 0.6, 100.0)
    with pytest.raises(ValueError):
        PlatformPreset("bad", 1.0, 0.6, 0.5, 0.5)
    with pytest.raises(ValueError):
        PlatformPreset("bad", 1.0, 0.6, 0.5, 100.0, power_saving_at_crash=1.0)


def test_mtbf_guardband_is_none():
    assert mtbf(make_node("f", FPGA), 1.0) is None
    assert mtbf(make_node("f", FPGA, voltage=VC707.v_min), 1.0) is None


def test_mtbf_at_crash_voltage():
    node = make_node("f", FPGA, voltage=VC707.v_crash)
    assert mtbf(node, 1.0) == pytest.approx(3600 / 652, rel=1e-12)
    assert mtbf(node, 1.0) == pytest.approx(5.521472392638037, rel=1e-12)


def test_mtbf_inverse_in_fault_rate():
    v1 = voltage_for_fault_rate(20.0, VC707)
    v2 = voltage_for_fault_rate(40.0, VC707)
    m1 = mtbf(make_node("a", FPGA, voltage=v1), 2.0)
    m2 = mtbf(make_node("b", FPGA, voltage=v2), 2.0)
    assert m1 == pytest.approx(2 * m2, rel=1e-12)


@pytest.mark.parametrize("fp", [0.0, -1.0])
def test_mtbf_rejects_bad_footprint(fp):
    with pytest.raises(InvalidFootprint):
        mtbf(make_node("f", FPGA), fp)


def test_mtbf_for_node_without_platform():
    cpu = make_node("c", NodeClass("cpu", Resources(4, 1024), 100.0))
    assert mtbf(cpu, 1.0) is None
