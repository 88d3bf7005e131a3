import math
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st
from pytest import approx

from paultrap.circuit import (
    RODS,
    ElectrodeLoad,
    LoadedCircuit,
    divider_gain,
    effective_capacitance,
    parallel_attenuation,
    parallel_attenuation_first_order,
    phase_error,
    phase_error_first_order,
    resonance_ratio,
    resonance_vs_parallel_load,
    rod_amplitudes,
    series_attenuation,
    series_attenuation_first_order,
    solve_balanced_loads,
)
from paultrap.coldfluid import fit_inverse_sqrt
from paultrap.core import DomainError

pF = 1e-12
W0 = 2 * math.pi * 4e6

caps = st.floats(1 * pF, 500 * pF)


def circuit(Q=1.45):
    return LoadedCircuit(base_resonance=W0, Q_res=Q)


def test_divider_gain():
    assert divider_gain(ElectrodeLoad(C=2.2e-9, Ct=40 * pF)) == approx(float(1 / (1 + Fraction(40, 2200))), rel=1e-15)
    assert divider_gain(ElectrodeLoad(C=2.2e-9, Ct=1e-30)) == approx(1.0)
    assert divider_gain(ElectrodeLoad(C=40 * pF, Ct=40 * pF)) == 0.5


def test_parallel_attenuation():
    load = ElectrodeLoad(C=2.2e-9, Ct=40 * pF, Cp=22 * pF)
    exact = Fraction(2240, 2200) / Fraction(2262, 2200)
    assert parallel_attenuation(load) == approx(float(exact), rel=1e-14)
    # the 0.99033 quoted alongside this case does not follow from the formula
    assert parallel_attenuation(load) == approx(0.990274, abs=1e-6)
    assert parallel_attenuation_first_order(load) == approx(0.99)
    assert parallel_attenuation(ElectrodeLoad()) == 1.0


@given(caps, caps)
def test_parallel_exact_not_below_first_order(Ct, Cp):
    load = ElectrodeLoad(C=2.2e-9, Ct=Ct, Cp=Cp)
    assert parallel_attenuation(load) >= parallel_attenuation_first_order(load) - 1e-15


def test_series_attenuation():
    big = ElectrodeLoad(C=2.2e-9, Ct=40 * pF, Cs=1e6 * 40 * pF)
    assert series_attenuation(big) == approx(1.0, abs=1e-4)
    load = ElectrodeLoad(C=2.2e-9, Ct=40 * pF, Cs=1000 * pF)
    assert series_attenuation_first_order(load) == approx(1 / 1.04, rel=1e-15)
    assert series_attenuation_first_order(load) == approx(0.96154, abs=1e-5)


def test_series_halving_cs_doubles_loss():
    l1 = ElectrodeLoad(C=2.2e-6, Ct=40 * pF, Cs=200 * pF)
    l2 = ElectrodeLoad(C=2.2e-6, Ct=40 * pF, Cs=100 * pF)
    ratio = (1 - series_attenuation(l2)) / (1 - series_attenuation(l1))
    assert ratio == approx(2.0, rel=0.2)


@given(caps, st.floats(0, 100 * pF), st.floats(10 * pF, 2000 * pF))
def test_attenuations_in_unit_interval(Ct, Cp, Cs):
    C = 2.2e-9
    for load in (ElectrodeLoad(C=C, Ct=Ct, Cp=Cp), ElectrodeLoad(C=C, Ct=Ct, Cp=Cp, Cs=Cs)):
        assert 0 < series_attenuation(load) <= 1
        assert 0 < parallel_attenuation(load) <= 1


@given(caps, st.floats(0, 100 * pF), st.floats(10 * pF, 2000 * pF))
def test_series_exact_vs_approximate_bound(Ct, Cp, Cs):
    C = 2.2e-9
    load = ElectrodeLoad(C=C, Ct=Ct, Cp=Cp, Cs=Cs)
    exact, approx_ = series_attenuation(load), series_attenuation_first_order(load)
    assert abs(exact - approx_) / exact <= (Ct + Cp + Cs) / C


def test_effective_capacitance():
    assert effective_capacitance(ElectrodeLoad(Ct=40 * pF, Cp=2 * pF)) == approx(42 * pF)
    huge = ElectrodeLoad(Ct=40 * pF, Cp=2 * pF, Cs=1e3)
    assert effective_capacitance(huge) == approx(42 * pF, rel=1e-12)
    Cp, Cs = solve_balanced_loads(40 * pF, 0.96)
    assert effective_capacitance(ElectrodeLoad(Ct=40 * pF, Cp=Cp, Cs=Cs)) == approx(40 * pF, rel=1e-12)
    eq = ElectrodeLoad(Ct=40 * pF, Cp=2 * pF, Cs=42 * pF)
    assert effective_capacitance(eq) == approx(21 * pF, rel=1e-14)


def test_resonance_ratio():
    assert resonance_ratio(ElectrodeLoad(Ct=40 * pF)) == 1.0
    assert resonance_ratio(ElectrodeLoad(Ct=40 * pF, Cp=40 * pF)) == approx(math.sqrt(0.5), rel=1e-15)


def test_balanced_loads_paper_case():
    Ct = 40 * pF
    Cp, Cs = solve_balanced_loads(Ct, 0.96)
    assert Cp == approx(1.6667 * pF, rel=1e-4)
    assert Cs == approx(1000 * pF, rel=1e-12)
    load = ElectrodeLoad(Ct=Ct, Cp=Cp, Cs=Cs)
    assert resonance_ratio(load) == approx(1.0, rel=1e-12)
    assert series_attenuation_first_order(load) == approx(0.96, rel=1e-12)


@given(caps, st.floats(0.01, 0.99))
def test_balanced_loads_property(Ct, t):
    Cp, Cs = solve_balanced_loads(Ct, t)
    load = ElectrodeLoad(Ct=Ct, Cp=Cp, Cs=Cs)
    assert resonance_ratio(load) == approx(1.0, rel=1e-12)
    assert series_attenuation_first_order(load) == approx(t, rel=1e-12)


def test_balanced_loads_limits():
    Cp, Cs = solve_balanced_loads(40 * pF, 1 - 1e-14)
    assert Cp < 1e-24 and Cs is None
    for t in (0.0, 1.0, 1.5, -0.1):
        with pytest.raises(DomainError):
            solve_balanced_loads(40 * pF, t)


def test_resonance_vs_parallel_load():
    c = circuit()
    cps = [i * pF for i in range(0, 60, 5)]
    curve = resonance_vs_parallel_load(c, cps)
    assert curve[0][1] == approx(W0, rel=1e-15)
    ws = [w for _, w in curve]
    assert all(b < a for a, b in zip(ws, ws[1:]))
    with pytest.raises(ValueError):
        resonance_vs_parallel_load(c, [])


def test_resonance_curve_fit_round_trip():
    from paultrap.circuit import resonance_model_coefficients

    c = circuit()
    a, b = resonance_model_coefficients(c)
    curve = resonance_vs_parallel_load(c, [i * pF for i in range(0, 50, 5)])
    fit = fit_inverse_sqrt(curve)
    assert fit["a"] == approx(a, rel=1e-6)
    assert fit["b"] == approx(b, rel=1e-6)


def test_phase_error():
    c = circuit(1.45)
    assert phase_error(c, 0.0) == 0.0
    # arctan expression evaluated directly
    direct = abs(math.atan(1.45 * (1 / 1.003 - 1.003)))
    assert phase_error(c, 0.003) == approx(direct, rel=1e-14)
    assert math.degrees(phase_error(c, 0.003)) == approx(0.5, abs=0.01)
    assert phase_error(c, 0.003) == approx(phase_error_first_order(c, 0.003), rel=0.01)
    with pytest.raises(DomainError):
        phase_error(c, 0.1)


@given(st.floats(0.5, 100), st.floats(1e-6, 0.05), st.floats(1.01, 1.9))
def test_phase_error_monotone(Q, d, k):
    c = circuit(Q)
    assert phase_error(c, d * k) > phase_error(c, d)


def test_rod_phase_symmetry():
    c = circuit().with_load("X+", Cp=22 * pF)
    d = circuit().with_load("Y+", Cp=22 * pF)
    ax = rod_amplitudes(100, c)
    ay = rod_amplitudes(100, d)
    assert abs(ax["X+"]) == approx(abs(ay["Y+"]), rel=1e-15)
    assert ax["X+"] < 0 < ay["Y+"]


def test_circuit_requires_q_res():
    with pytest.raises(DomainError):
        LoadedCircuit.from_config({"C_nF": "2.2"}, W0)
    c = LoadedCircuit.from_config({"C_nF": "2.2", "Ct_pF": "40", "Q_res": "1.45"}, W0)
    assert set(c.rods) == set(RODS)
    assert c.total_capacitance() == approx(12 * 40 * pF)
