import math

import numpy as np
import pytest

from thyrsim.errors import OutOfRange
from thyrsim.rms import (RmsParams, commutation_angle_rms, current_shape_factor,
                         rms_basic, rms_extended, rms_phasor_interface)

P50 = RmsParams(l_c=10e-6, omega_g=2 * math.pi * 50)


def test_no_load_dc_voltage():
    v_dc, i_m, phi = rms_basic(1.0, 0.0, 0.0, P50)
    assert v_dc == pytest.approx(3 * math.sqrt(3) / math.pi)
    assert i_m == 0.0
    assert phi == 0.0


def test_ac_current_coefficient():
    _, i_m, _ = rms_basic(1.0, 0.0, 1.0, P50)
    assert i_m == pytest.approx(2 * math.sqrt(3) / math.pi)


def test_basic_model_with_commutation_drop():
    w = 2 * math.pi * 50
    params = RmsParams(l_c=10e-6, omega_g=w)
    v_dc, _, phi = rms_basic(1.0, math.pi / 3, 100.0, params)
    expected = 3 * math.sqrt(3) / math.pi * 0.5 - (3 * w * 10e-6 / math.pi) * 100.0
    assert v_dc == pytest.approx(expected, rel=1e-12)
    assert phi == math.pi / 3


def test_extended_reduces_to_basic_at_no_load():
    sol = rms_extended(1.0, 0.35, 0.0, P50)
    assert sol.mu == pytest.approx(0.0, abs=1e-12)
    assert sol.k_ic == 1.0
    assert sol.v_dc == pytest.approx(3 * math.sqrt(3) / math.pi * math.cos(0.35))


def test_commutation_angle_arccos_half():
    # choose I_dc so the arccos argument is exactly 0.5 at alpha = 0
    w = P50.omega_g
    i_dc = 0.5 * math.sqrt(3) / (2 * w * P50.l_c)
    mu = commutation_angle_rms(1.0, 0.0, i_dc, P50)
    assert mu == pytest.approx(math.pi / 3)


def test_out_of_range_raises():
    with pytest.raises(OutOfRange):
        rms_extended(1.0, 0.0, 1e9, P50)


def test_shape_factor_limit():
    k = current_shape_factor(0.3, 1e-6)
    assert abs(k - 1.0) < 1e-6


def test_shape_factor_range_not_asserted_but_probed():
    # probed numerically over the operating envelope; not a model invariant
    for alpha in np.linspace(math.radians(5), math.radians(70), 12):
        for mu in np.linspace(1e-4, math.pi / 3 - 1e-4, 12):
            k = current_shape_factor(alpha, mu)
            assert 0.9 < k < 1.2


def test_phasor_interface_in_phase():
    sol = rms_extended(1.0, 0.0, 0.0, P50)
    _, (i_d, i_q) = rms_phasor_interface(sol, 0.0)
    assert i_q == pytest.approx(0.0, abs=1e-12)


def test_phasor_interface_reactive_at_alpha_90():
    v_dc, i_m, phi = rms_basic(1.0, math.pi / 2, 1.0, P50)
    assert phi == pytest.approx(math.pi / 2)
    # current lags voltage by 90 degrees: pure reactive draw
    ang = 0.0 - phi
    assert math.cos(ang) == pytest.approx(0.0, abs=1e-12)


def test_power_balance_extended():
    # (3/2) V_m I_m cos(phi) == V_dc I_dc within 0.5% on an operating grid
    w = 2 * math.pi * 50
    params = RmsParams(l_c=5e-6, omega_g=w)
    v_m = 1.0
    for alpha in np.linspace(math.radians(5), math.radians(70), 9):
        for i_dc in (20.0, 100.0, 200.0):
            sol = rms_extended(v_m, alpha, i_dc, params)
            p_ac = 1.5 * v_m * sol.i_m * math.cos(sol.phi)
            p_dc = sol.v_dc * i_dc
            assert p_ac == pytest.approx(p_dc, rel=5e-3)


def test_twelve_pulse_doubles_voltage_and_current():
    p6 = RmsParams(l_c=10e-6, omega_g=P50.omega_g, pulses=6)
    p12 = RmsParams(l_c=10e-6, omega_g=P50.omega_g, pulses=12)
    s6 = rms_extended(1.0, 0.3, 200.0, p6)
    s12 = rms_extended(1.0, 0.3, 200.0, p12)
    assert s12.v_dc == pytest.approx(2 * s6.v_dc)
    assert s12.i_m == pytest.approx(2 * s6.i_m)
    assert s12.mu == pytest.approx(s6.mu)
