import math

import numpy as np
import pytest
from scipy.integrate import quad

from thyrsim.emt import (EmtParams, EmtState, K_V, commutation_angle,
                         commutation_current, dc_voltage, effective_inductance,
                         firing_filter_derivative, input_currents_exact,
                         input_currents_linear, pll_derivatives)
from thyrsim.errors import DegenerateVoltage
from thyrsim.rms import RmsParams, rms_extended

W50 = 2 * math.pi * 50


def segment_average_oracle(alpha, mu, theta_e, v_mag, omega, l_c):
    """Independent quadrature of the commutation/conduction segment averages."""
    i_dc = (math.sqrt(3) * v_mag / (2 * omega * l_c)) * (
        math.cos(alpha + theta_e) - math.cos(alpha + mu + theta_e))

    def i_a(th):
        return (math.sqrt(3) * v_mag / (2 * omega * l_c)) * (
            math.cos(alpha + theta_e) - math.cos(th + theta_e + math.pi / 3))

    k = 2 * math.sqrt(3) / 3

    def id_com(th):
        return k * (i_a(th) * math.sin(th + math.pi / 3) - i_dc * math.sin(th))

    def iq_com(th):
        return k * (i_a(th) * math.cos(th + math.pi / 3) - i_dc * math.cos(th))

    def id_con(th):
        return -k * i_dc * math.sin(th - math.pi / 3)

    def iq_con(th):
        return -k * i_dc * math.cos(th - math.pi / 3)

    a0 = -math.pi / 3 + alpha
    i_d = 3 / math.pi * (quad(id_com, a0, a0 + mu, limit=200)[0]
                         + quad(id_con, a0 + mu, alpha, limit=200)[0])
    i_q = 3 / math.pi * (quad(iq_com, a0, a0 + mu, limit=200)[0]
                         + quad(iq_con, a0 + mu, alpha, limit=200)[0])
    return i_dc, i_d, i_q


class TestCommutationAngle:
    def test_zero_current(self):
        for alpha, te in [(0.1, 0.0), (0.8, 0.05), (1.2, -0.1)]:
            mu, sat = commutation_angle(alpha, te, 1.0, W50, 0.0, 1e-4)
            assert mu == pytest.approx(0.0, abs=1e-12)
            assert not sat

    def test_arccos_half_boundary(self):
        l_c = 1e-4
        i_dc = 0.5 * math.sqrt(3) / (2 * W50 * l_c)
        mu, sat = commutation_angle(0.0, 0.0, 1.0, W50, i_dc, l_c)
        assert mu == pytest.approx(math.pi / 3, rel=1e-12)
        assert sat  # pi/3 is the clamp boundary

    def test_against_commutation_current_integration(self):
        # integrate the commutation ODE until i_a reaches I_dc; difference of
        # event angles is the commutation angle
        alpha, te, v_mag, l_c = math.pi / 6, 0.0, 1.0, 1e-4
        drop = 0.2  # (2 w L / sqrt(3) V) I_dc
        i_dc = drop * math.sqrt(3) * v_mag / (2 * W50 * l_c)
        mu, sat = commutation_angle(alpha, te, v_mag, W50, i_dc, l_c)
        assert not sat
        assert mu == pytest.approx(0.3183097, abs=2e-4)
        ths = np.linspace(-math.pi / 3 + alpha, -math.pi / 3 + alpha + math.pi / 3, 200001)
        ia = [commutation_current(t, alpha, te, v_mag, W50, l_c) for t in ths]
        k = int(np.searchsorted(ia, i_dc))
        mu_meas = ths[k] - ths[0]
        assert mu_meas == pytest.approx(mu, abs=math.radians(0.01))

    def test_negative_current_uses_magnitude(self):
        mu_p, _ = commutation_angle(0.2, 0.0, 1.0, W50, 100.0, 1e-5)
        mu_n, _ = commutation_angle(0.2, 0.0, 1.0, W50, -100.0, 1e-5)
        assert mu_p == mu_n > 0

    def test_degenerate_voltage(self):
        with pytest.raises(DegenerateVoltage):
            commutation_angle(0.2, 0.0, 0.0, W50, 1.0, 1e-5, v_floor=1e-6)

    def test_self_consistency_with_boundary_condition(self):
        # substituting mu back into the boundary condition reproduces I_dc
        for alpha in np.linspace(math.radians(5), math.radians(70), 8):
            for drop in (0.02, 0.1, 0.3):
                for te in (-0.1, 0.0, 0.1):
                    l_c, v_mag = 1e-4, 1.0
                    i_dc = drop * math.sqrt(3) * v_mag / (2 * W50 * l_c)
                    mu, sat = commutation_angle(alpha, te, v_mag, W50, i_dc, l_c)
                    if sat:
                        continue
                    i_back = (math.sqrt(3) * v_mag / (2 * W50 * l_c)) * (
                        math.cos(alpha + te) - math.cos(alpha + mu + te))
                    assert i_back == pytest.approx(i_dc, rel=1e-9)


class TestDcVoltage:
    def test_diode_no_load(self):
        assert dc_voltage(1.0, 0.0, 0.0, 0.0, 0.0, 1e-4) == pytest.approx(
            3 * math.sqrt(3) / math.pi)

    def test_effective_inductance_bounds(self):
        l_c = 3e-6
        assert effective_inductance(0.0, l_c) == pytest.approx(2.0 * l_c)
        assert effective_inductance(math.pi / 3, l_c) == pytest.approx(1.5 * l_c)
        mus = np.linspace(0, math.pi / 3, 50)
        ls = [effective_inductance(m, l_c) for m in mus]
        assert all(x > y for x, y in zip(ls, ls[1:]))  # monotone decreasing

    def test_matches_rms_extended_at_zero_error(self):
        # with theta_e = 0 and no current ramp the averaged DC voltage equals
        # the extended phasor model exactly
        params = RmsParams(l_c=1e-4, omega_g=W50)
        for alpha in np.linspace(math.radians(5), math.radians(70), 10):
            for i_dc in (2.0, 8.0):
                sol = rms_extended(1.0, alpha, i_dc, params)
                v = dc_voltage(1.0, 0.0, alpha, sol.mu, 0.0, 1e-4)
                assert v == pytest.approx(sol.v_dc, rel=1e-12)


class TestCommutationCurrent:
    def test_boundary_start(self):
        alpha = 0.4
        assert commutation_current(-math.pi / 3 + alpha, alpha, 0.0, 1.0, W50,
                                   1e-4) == pytest.approx(0.0, abs=1e-12)

    def test_boundary_end_reaches_idc(self):
        alpha, te, v, l_c = 0.3, 0.02, 1.0, 1e-4
        i_dc = 0.15 * math.sqrt(3) * v / (2 * W50 * l_c)
        mu, _ = commutation_angle(alpha, te, v, W50, i_dc, l_c)
        i_end = commutation_current(-math.pi / 3 + alpha + mu, alpha, te, v, W50, l_c)
        assert i_end == pytest.approx(i_dc, rel=1e-10)

    def test_matches_quadrature_of_ode(self):
        alpha, te, v, l_c = 0.5, -0.03, 1.0, 1e-4
        vd, vq = v * math.cos(te), v * math.sin(te)

        def rhs(th):
            return math.sqrt(3) / (2 * W50 * l_c) * (
                vd * math.sin(th + math.pi / 3) + vq * math.cos(th + math.pi / 3))

        theta0 = -math.pi / 3 + alpha
        for theta in np.linspace(theta0, theta0 + 0.4, 7):
            expected = quad(rhs, theta0, theta, limit=200)[0]
            got = commutation_current(theta, alpha, te, v, W50, l_c)
            assert got == pytest.approx(expected, abs=1e-9 * max(1.0, abs(expected)))


class TestInputCurrents:
    def test_exact_matches_segment_average_oracle(self):
        l_c, v_mag = 1e-4, 1.0
        for alpha in np.radians([5, 20, 40, 70]):
            for mu in np.radians([0.5, 5, 12, 20]):
                for te in (-0.1, 0.0, 0.1):
                    i_dc, i_d_ref, i_q_ref = segment_average_oracle(
                        alpha, mu, te, v_mag, W50, l_c)
                    i_d, i_q = input_currents_exact(i_dc, alpha, mu, te, v_mag,
                                                    W50, l_c)
                    assert i_d == pytest.approx(i_d_ref, rel=1e-6)
                    assert i_q == pytest.approx(i_q_ref, rel=1e-6)

    def test_zero_commutation_width(self):
        i_d, i_q = input_currents_exact(10.0, 0.3, 0.0, 0.0, 1.0, W50, 1e-4)
        k = 2 * math.sqrt(3) / math.pi
        assert i_d == pytest.approx(k * 10.0 * math.cos(0.3), rel=1e-12)
        assert i_q == pytest.approx(-k * 10.0 * math.sin(0.3), rel=1e-12)
        ld, lq = input_currents_linear(10.0, 0.3, 0.0)
        assert (i_d, i_q) == pytest.approx((ld, lq), rel=1e-12)

    def test_linear_close_to_exact_at_small_mu(self):
        l_c, v_mag = 1e-4, 1.0
        for alpha in np.radians([10, 30, 60]):
            mu = math.radians(2.0)
            i_dc, _, _ = segment_average_oracle(alpha, mu, 0.0, v_mag, W50, l_c)
            ed, eq = input_currents_exact(i_dc, alpha, mu, 0.0, v_mag, W50, l_c)
            ld, lq = input_currents_linear(i_dc, alpha, mu)
            assert math.hypot(ed - ld, eq - lq) / math.hypot(ed, eq) < 2e-3

    def test_magnitude_vs_rms_shape_factor(self):
        # the exact averaged current magnitude tracks (2*sqrt(3)/pi)*k_ic*I_dc
        l_c, v_mag = 1e-4, 1.0
        alpha, mu, te = math.radians(25), math.radians(12), 0.0
        i_dc, _, _ = segment_average_oracle(alpha, mu, te, v_mag, W50, l_c)
        i_d, i_q = input_currents_exact(i_dc, alpha, mu, te, v_mag, W50, l_c)
        sol = rms_extended(v_mag, alpha, i_dc,
                           RmsParams(l_c=l_c, omega_g=W50))
        assert math.hypot(i_d, i_q) == pytest.approx(sol.i_m, rel=2e-2)


class TestPll:
    PARAMS = EmtParams(l_c=1e-4, pll_kp=0.5, pll_ki=30.0, omega_n=W50)

    def test_locked_equilibrium(self):
        st = EmtState(alpha=0.2, theta_pll=0.0, x_pll=0.0)
        d_th, d_x, theta_e, v_mag, w_pll, _, vq = pll_derivatives(
            st, 1.0, 0.0, self.PARAMS)
        assert vq == 0.0
        assert d_th == 0.0 and d_x == 0.0
        assert theta_e == 0.0 and w_pll == self.PARAMS.omega_n

    def test_zero_voltage_raises(self):
        st = EmtState(alpha=0.2, theta_pll=0.0, x_pll=0.0)
        with pytest.raises(DegenerateVoltage):
            pll_derivatives(st, 0.0, 0.0, self.PARAMS)

    def test_second_order_response_to_angle_step(self):
        # simulate the nonlinear PLL after a grid-angle step and compare the
        # tracking-error envelope with the linearized second-order solution
        params = EmtParams(l_c=1e-4, pll_kp=2.0, pll_ki=400.0, omega_n=W50)
        step = 0.05
        v_gd, v_gq = math.cos(step), math.sin(step)
        st = EmtState(alpha=0.0, theta_pll=0.0, x_pll=0.0)
        dt = 1e-5
        ts, tes = [], []
        for k in range(int(0.5 / dt)):
            d_th, d_x, theta_e, *_ = pll_derivatives(st, v_gd, v_gq, params)
            ts.append(k * dt)
            tes.append(theta_e)
            st = EmtState(alpha=0.0, theta_pll=st.theta_pll + dt * d_th,
                          x_pll=st.x_pll + dt * d_x)
        # linear model: theta_e'' + kp*theta_e' + ki*theta_e = 0 (unit voltage)
        wn = math.sqrt(params.pll_ki)
        zeta = params.pll_kp / (2 * wn)
        wd = wn * math.sqrt(1 - zeta ** 2)
        # initial slope is -kp*step from the proportional path
        lin = [step * math.exp(-zeta * wn * t) * (
            math.cos(wd * t) - zeta * wn / wd * math.sin(wd * t)) for t in ts]
        err = max(abs(a - b) for a, b in zip(tes, lin))
        assert err < 0.02 * step


class TestFiringFilter:
    def test_equilibrium(self):
        assert firing_filter_derivative(0.4, 0.4, 2 * math.pi * 150) == 0.0

    def test_first_order_time_constant(self):
        w_z = 2 * math.pi * 150
        alpha, target, dt = 0.0, 1.0, 1e-7
        t = 0.0
        while t < 1.0 / w_z:
            alpha += dt * firing_filter_derivative(alpha, target, w_z)
            t += dt
        assert alpha == pytest.approx(1 - math.exp(-1), abs=1e-3)

    def test_cutoff_magnitude(self):
        w_z = 2 * math.pi * 150
        mag = 1.0 / math.sqrt(1.0 + (w_z / w_z) ** 2)
        assert mag == pytest.approx(1 / math.sqrt(2))
