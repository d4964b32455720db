"""Source, load, and controller fragments used in composed studies."""
import math

import numpy as np
import pytest

from thyrsim.dae import (compose, integrate, solve_consistent_z,
                         solve_equilibrium)
from thyrsim.network import (BandwidthPiCurrentController, CurrentLoad,
                             Electrolyzer, PiCurrentController, StiffSource,
                             VsmSource, WeakGridSource,
                             pi_gains_for_bandwidth)

OMEGA = 2.0 * math.pi * 50.0


def electrolyzer_model(**kw):
    params = dict(l_d=20e-6, r0=0.8e-3, r1=3e-3, c1=10.0, v_rev=100.0,
                  i_init=10e3, i_base=10e3, v_base=150.0)
    params.update(kw)
    return Electrolyzer("elz", **params)


class TestElectrolyzer:
    def test_equilibrium_iv_curve_is_affine(self):
        """Steady state: v_1 = R_1*I and V = V_rev + (R_0+R_1)*I."""
        elz = electrolyzer_model()
        model = compose([elz])
        for i_dc in (2e3, 10e3, 14e3):
            # drive e_dc to whatever sustains i_dc: solve for the terminal
            # voltage from the analytic curve, then check it is an equilibrium
            v = 100.0 + (0.8e-3 + 3e-3) * i_dc
            u = model.u0.copy()
            u[model.input_index("elz.e_dc")] = v
            eq = solve_equilibrium(model, u=u,
                                   x0=np.array([i_dc, 3e-3 * i_dc]))
            assert eq.x[0] == pytest.approx(i_dc, rel=1e-8)
            assert eq.x[1] == pytest.approx(3e-3 * i_dc, rel=1e-8)

    def test_bus21_operating_point_138v_at_10ka(self):
        elz = electrolyzer_model()
        model = compose([elz])
        u = model.u0.copy()
        u[model.input_index("elz.e_dc")] = 138.0
        eq = solve_equilibrium(model, u=u, x0=np.array([10e3, 30.0]))
        assert eq.x[0] == pytest.approx(10e3, rel=1e-9)

    def test_zero_current_equilibrium_at_v_rev(self):
        elz = electrolyzer_model(i_init=0.0)
        model = compose([elz])
        u = model.u0.copy()
        u[model.input_index("elz.e_dc")] = 100.0  # exactly V_rev
        eq = solve_equilibrium(model, u=u, x0=np.array([0.0, 0.0]))
        assert abs(eq.x[0]) < 1e-6
        assert abs(eq.x[1]) < 1e-6

    def test_inductor_dynamics_time_constant(self):
        """With the RC branch frozen fast, di/dt = (e - R0*i - v1 - Vrev)/L."""
        elz = electrolyzer_model()
        model = compose([elz])
        u = model.u0.copy()
        u[model.input_index("elz.e_dc")] = 138.0
        x0 = np.array([10e3, 30.0])
        dx = model.f(0.0, x0, u, solve_consistent_z(model, 0.0, x0, u, model.z0))
        # at the consistent equilibrium the derivative vanishes
        assert abs(dx[0]) < 1e-6
        # raise the terminal voltage by 1 V: di/dt = 1/L_d
        u[model.input_index("elz.e_dc")] = 139.0
        dx = model.f(0.0, x0, u, solve_consistent_z(model, 0.0, x0, u, model.z0))
        assert dx[0] == pytest.approx(1.0 / 20e-6, rel=1e-9)


class TestPiController:
    def test_zero_error_outputs_alpha0(self):
        pi = PiCurrentController("pi", kp=1e-4, ki=1e-2,
                                 alpha0=math.radians(40.0), i_base=1e4)
        model = compose([pi])
        u = model.u0.copy()
        u[model.input_index("pi.i_dc")] = 5e3
        u[model.input_index("pi.i_ref")] = 5e3
        eq = solve_equilibrium(model, u=u)
        assert eq.z[0] == pytest.approx(math.radians(40.0), abs=1e-12)

    def test_error_sign_raises_alpha_for_excess_current(self):
        """Raising alpha lowers V_dc, so i_dc > i_ref must push alpha up."""
        pi = PiCurrentController("pi", kp=1e-4, ki=0.0,
                                 alpha0=math.radians(40.0), i_base=1e4)
        model = compose([pi])
        u = model.u0.copy()
        u[model.input_index("pi.i_dc")] = 6e3
        u[model.input_index("pi.i_ref")] = 5e3
        z = solve_consistent_z(model, 0.0, model.x0, u, model.z0)
        assert z[0] == pytest.approx(math.radians(40.0) + 1e-4 * 1e3)

    def test_antiwindup_freezes_integrator_on_clamp(self):
        pi = PiCurrentController("pi", kp=1e-3, ki=1e-2,
                                 alpha0=math.radians(40.0), i_base=1e4)
        model = compose([pi])
        u = model.u0.copy()
        u[model.input_index("pi.i_dc")] = 15e3   # drives output past alpha_max
        u[model.input_index("pi.i_ref")] = 5e3
        z = solve_consistent_z(model, 0.0, model.x0, u, model.z0)
        assert z[0] == pytest.approx(math.radians(85.0))  # clamped
        dx = model.f(0.0, model.x0, u, z)
        assert dx[0] == 0.0                               # frozen
        # still clamped at the max but the error now points back inside:
        # the integrator must resume (and unwind downward)
        x_wound = np.array([1.0])
        u[model.input_index("pi.i_dc")] = 4.9e3
        z = solve_consistent_z(model, 0.0, x_wound, u, model.z0)
        assert z[0] == pytest.approx(math.radians(85.0))
        dx = model.f(0.0, x_wound, u, z)
        assert dx[0] == pytest.approx(1e-2 * (4.9e3 - 5e3))

    def test_closed_loop_reference_step_zero_steady_state_error(self):
        """First-order plant di/dt = (k*(0.9 - alpha) - r*i)/l under PI."""
        from thyrsim.dae import Fragment, Var

        class Plant(Fragment):
            def __init__(self):
                super().__init__("plant")
                self.k, self.r, self.l = 200.0, 4.6e-3, 20e-6
                self.states = [Var("i", "A", 10e3, 1e4)]
                self.inputs = [Var("alpha", "rad", 0.7, 1.0)]
                self.algebraics = [Var("i_out", "A", 10e3, 1e4)]

            def derivatives(self, t, x, u, z):
                return ((self.k * (0.9 - u[0]) - self.r * x[0]) / self.l,)

            def outputs(self, t, x, u, z):
                return (x[0],)

        kp, ki = pi_gains_for_bandwidth(30.0, 200.0, 20e-6, 4.6e-3)
        pi = PiCurrentController("pi", kp=kp, ki=ki, alpha0=0.7, i_base=1e4)
        model = compose([Plant(), pi],
                        connections=[("plant.alpha", "pi.alpha_cmd"),
                                     ("pi.i_dc", "plant.i_out")])
        u = model.u0.copy()
        u[model.input_index("pi.i_ref")] = 10e3
        eq = solve_equilibrium(model, u=u)
        u2 = u.copy()
        u2[model.input_index("pi.i_ref")] = 10.5e3
        traj = integrate(model, (0.0, 0.5), 1e-4, u=u2, x0=eq.x, z0=eq.z)
        assert traj["plant.i"][-1] == pytest.approx(10.5e3, rel=1e-4)

    def test_bandwidth_controller_gains_follow_parameter(self):
        ctrl = BandwidthPiCurrentController(
            "ctrl", bandwidth_hz=20.0, k_plant=200.0, l_loop=25e-6,
            r_loop=4.6e-3, alpha0=0.7)
        kp_ref, ki_ref = pi_gains_for_bandwidth(20.0, 200.0, 25e-6, 4.6e-3)
        assert ctrl.kp == pytest.approx(kp_ref)
        assert ctrl.ki == pytest.approx(ki_ref)
        ctrl.bandwidth_hz = 40.0
        assert ctrl.kp == pytest.approx(2.0 * kp_ref)
        assert ctrl.ki == pytest.approx(2.0 * ki_ref)


class TestSources:
    def test_stiff_source_passes_perturbation_through(self):
        src = StiffSource("src", v_m=120.0, omega_g=OMEGA)
        model = compose([src])
        u = model.u0.copy()
        z = solve_consistent_z(model, 0.0, model.x0, u, model.z0)
        assert z[model.alg_index("src.v_gd")] == pytest.approx(120.0)
        assert z[model.alg_index("src.v_gq")] == pytest.approx(0.0)
        u[model.input_index("src.v_pd")] = 1.5
        u[model.input_index("src.v_pq")] = -0.5
        z = solve_consistent_z(model, 0.0, model.x0, u, model.z0)
        assert z[model.alg_index("src.v_gd")] == pytest.approx(121.5)
        assert z[model.alg_index("src.v_gq")] == pytest.approx(-0.5)

    def test_weak_grid_steady_state_voltage_drop(self):
        """DC (dq) analysis of the R-L / shunt-C divider under load current."""
        r_g, l_g, c_f = 0.3e-3, 15e-6, 20e-3
        src = WeakGridSource("src", v_m=120.0, omega_g=OMEGA, r_g=r_g,
                             l_g=l_g, c_f=c_f, i_base=1e4)
        model = compose([src])
        u = model.u0.copy()
        i_rd = 8e3
        u[model.input_index("src.i_rd")] = i_rd
        eq = solve_equilibrium(model, u=u)
        # phasor solution: v_b = (v_m - z_g*i_r) / (1 + z_g*y_c)
        z_g = complex(r_g, OMEGA * l_g)
        y_c = complex(0.0, OMEGA * c_f)
        v_b = (120.0 - z_g * i_rd) / (1.0 + z_g * y_c)
        assert eq.z[model.alg_index("src.v_gd")] == pytest.approx(
            v_b.real, rel=1e-8)
        assert eq.z[model.alg_index("src.v_gq")] == pytest.approx(
            v_b.imag, rel=1e-8, abs=1e-8)

    def test_vsm_power_balance_at_equilibrium(self):
        src = VsmSource("vsm", rating=2e6, h=5.0, d=0.32, t_v=0.05,
                        v_ref=120.0, omega_n=OMEGA, p_ref=0.0, i_base=1e4)
        model = compose([src])
        eq = solve_equilibrium(model, u=model.u0)
        assert abs(eq.z[model.alg_index("vsm.p_e")]) < 1e-6
        assert eq.x[model.state_index("vsm.omega_dev")] == pytest.approx(
            0.0, abs=1e-12)

    def test_vsm_swing_mode_matches_analytic_two_machine_formula(self):
        """VSM behind a lossless tie to an infinite bus at equal magnitude.

        At delta0 = 0 the voltage lag decouples and the swing pair solves
        s^2 + (D/2H) s + w_n*K/(2*H*rating) = 0 with K = 1.5*E*V/X.
        """
        from thyrsim import ssa
        from thyrsim.dae import Fragment, Var

        rating, h, d, x_tie, v = 2e6, 5.0, 0.32, 0.01, 120.0

        class ReactiveTie(Fragment):
            """i = (v_term - V_inf) / jX toward an infinite bus."""

            def __init__(self):
                super().__init__("tie")
                self.inputs = [Var("v_d", "V", v, v), Var("v_q", "V", 0.0, v)]
                self.algebraics = [Var("i_d", "A", 0.0, 1e4),
                                   Var("i_q", "A", 0.0, 1e4)]

            def outputs(self, t, x, u, z):
                dv = complex(u[0] - v, u[1])
                i = dv / complex(0.0, x_tie)
                return (i.real, i.imag)

        src = VsmSource("vsm", rating=rating, h=h, d=d, t_v=0.05,
                        v_ref=v, omega_n=OMEGA, p_ref=0.0, i_base=1e4)
        model = compose([src, ReactiveTie()],
                        connections=[("tie.v_d", "vsm.v_gd"),
                                     ("tie.v_q", "vsm.v_gq"),
                                     ("vsm.i_rd", "tie.i_d"),
                                     ("vsm.i_rq", "tie.i_q")])
        eq = solve_equilibrium(model, u=model.u0)
        lin = ssa.linearize(model, eq)
        reports = ssa.modes(lin)
        osc = max((r for r in reports if r.eigenvalue.imag > 1e-6),
                  key=lambda r: abs(r.eigenvalue.imag))
        k_sync = 1.5 * v * v / x_tie
        poly = np.roots([1.0, d / (2.0 * h),
                         OMEGA * k_sync / (2.0 * h * rating)])
        ref = poly[np.argmax(poly.imag)]
        assert osc.eigenvalue.real == pytest.approx(ref.real, rel=1e-6)
        assert osc.eigenvalue.imag == pytest.approx(ref.imag, rel=1e-6)

    def test_vsm_frequency_nadir_scales_inversely_with_inertia(self):
        """A step in p_ref produces a frequency excursion ~ 1/H."""
        nadirs = {}
        for h in (2.5, 5.0):
            src = VsmSource("vsm", rating=2e6, h=h, d=0.32, t_v=0.05,
                            v_ref=120.0, omega_n=OMEGA, p_ref=0.0,
                            i_base=1e4)
            model = compose([src])
            u = model.u0.copy()
            eq = solve_equilibrium(model, u=u)
            u2 = u.copy()
            u2[model.input_index("vsm.i_rd")] = 2e3   # sudden load current
            traj = integrate(model, (0.0, 1.0), 5e-4, u=u2, x0=eq.x, z0=eq.z)
            nadirs[h] = np.max(np.abs(traj["vsm.omega_dev"]))
        assert nadirs[2.5] > 1.4 * nadirs[5.0]


class TestCurrentLoad:
    def test_tracks_command_with_first_order_lag(self):
        load = CurrentLoad("load", omega_track=2.0 * math.pi * 2000.0,
                           i_init=10e3, i_base=1e4, v_base=150.0)
        model = compose([load])
        u = model.u0.copy()
        u[model.input_index("load.i_cmd")] = 10e3
        eq = solve_equilibrium(model, u=u)
        assert eq.x[0] == pytest.approx(10e3)
        u2 = u.copy()
        u2[model.input_index("load.i_cmd")] = 11e3
        tau = 1.0 / (2.0 * math.pi * 2000.0)
        traj = integrate(model, (0.0, 5.0 * tau), tau / 50.0, u=u2,
                         x0=eq.x, z0=eq.z)
        expected = 11e3 - 1e3 * math.exp(-5.0)
        assert traj["load.i_dc"][-1] == pytest.approx(expected, rel=1e-4)
