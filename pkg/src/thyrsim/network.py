"""Network components surrounding the rectifier: sources, electrolyzer load,
DC current load, PI firing-angle controller, and a simplified grid-forming
virtual synchronous machine.

All dq quantities live in the common rotating reference (nominal frequency);
fragment parameters are plain attributes so parameter sweeps and scheduled
events can mutate them through ``DaeModel.set_param``.
"""
from __future__ import annotations

import math

from .dae import Fragment, Var


class StiffSource(Fragment):
    """Ideal three-phase source: dq EMF plus series perturbation voltage.

    The series inductance to the rectifier terminals is the rectifier's own
    commutation inductance (single point of truth lives in the rectifier
    parameters), so the fragment only publishes the EMF.
    """

    def __init__(self, name, v_m, omega_g):
        super().__init__(name)
        self.v_m = v_m
        self.omega_g = omega_g
        scale = max(abs(v_m), 1.0)
        self.inputs = [Var("v_pd", "V", 0.0, scale), Var("v_pq", "V", 0.0, scale)]
        self.algebraics = [Var("v_gd", "V", v_m, scale), Var("v_gq", "V", 0.0, scale)]

    def outputs(self, t, x, u, z):
        v_pd, v_pq = u
        return (self.v_m + v_pd, v_pq)


class WeakGridSource(Fragment):
    """Thevenin source behind series R-L feeding a shunt-capacitor bus.

    Gives the rectifier terminal voltage genuine sensitivity to the drawn
    current, which is what couples PLL dynamics to the rest of the system.
    """

    def __init__(self, name, v_m, omega_g, r_g, l_g, c_f, i_base=1.0):
        super().__init__(name)
        self.v_m = v_m
        self.omega_g = omega_g
        self.r_g = r_g
        self.l_g = l_g
        self.c_f = c_f
        vs = max(abs(v_m), 1.0)
        self.states = [
            Var("i_sd", "A", 0.0, i_base), Var("i_sq", "A", 0.0, i_base),
            Var("v_bd", "V", v_m, vs), Var("v_bq", "V", 0.0, vs),
        ]
        self.inputs = [
            Var("i_rd", "A", 0.0, i_base), Var("i_rq", "A", 0.0, i_base),
            Var("v_pd", "V", 0.0, vs), Var("v_pq", "V", 0.0, vs),
        ]
        self.algebraics = [Var("v_gd", "V", v_m, vs), Var("v_gq", "V", 0.0, vs)]

    def derivatives(self, t, x, u, z):
        i_sd, i_sq, v_bd, v_bq = x
        i_rd, i_rq, v_pd, v_pq = u
        w = self.omega_g
        di_sd = (self.v_m + v_pd - v_bd - self.r_g * i_sd + w * self.l_g * i_sq) / self.l_g
        di_sq = (v_pq - v_bq - self.r_g * i_sq - w * self.l_g * i_sd) / self.l_g
        dv_bd = (i_sd - i_rd + w * self.c_f * v_bq) / self.c_f
        dv_bq = (i_sq - i_rq - w * self.c_f * v_bd) / self.c_f
        return (di_sd, di_sq, dv_bd, dv_bq)

    def outputs(self, t, x, u, z):
        return (x[2], x[3])


class Electrolyzer(Fragment):
    """PEM electrolyzer equivalent circuit fed from the rectifier DC port.

    The rectifier's variable commutation inductance enters the DC loop as
    the connected ``l_ext`` input, keeping the composed DAE semi-explicit.
    """

    def __init__(self, name, l_d, r0, r1, c1, v_rev, i_init=0.0, i_base=1.0, v_base=1.0):
        super().__init__(name)
        self.l_d = l_d
        self.r0 = r0
        self.r1 = r1
        self.c1 = c1
        self.v_rev = v_rev
        self.states = [
            Var("i_cell", "A", i_init, i_base),
            Var("v_1", "V", r1 * i_init, v_base),
        ]
        self.inputs = [Var("e_dc", "V", 0.0, v_base), Var("l_ext", "H", 0.0, 1e-6)]
        self.algebraics = [
            Var("i_dc", "A", i_init, i_base),
            Var("v_dc", "V", 0.0, v_base),
        ]

    def _di_dt(self, x, u):
        i_cell, v_1 = x
        e_dc, l_ext = u
        return (e_dc - self.r0 * i_cell - v_1 - self.v_rev) / (self.l_d + l_ext)

    def derivatives(self, t, x, u, z):
        i_cell, v_1 = x
        return (self._di_dt(x, u), (i_cell - v_1 / self.r1) / self.c1)

    def outputs(self, t, x, u, z):
        e_dc, l_ext = u
        return (x[0], e_dc - l_ext * self._di_dt(x, u))


class CurrentLoad(Fragment):
    """DC current load tracking a commanded current through a fast lag.

    Used for output-impedance scans: the measured impedance is the ratio of
    the measured voltage and current tones, so the tracking lag cancels out.
    """

    def __init__(self, name, omega_track, i_init=0.0, i_base=1.0, v_base=1.0):
        super().__init__(name)
        self.omega_track = omega_track
        self.states = [Var("i_dc", "A", i_init, i_base)]
        self.inputs = [
            Var("e_dc", "V", 0.0, v_base),
            Var("l_ext", "H", 0.0, 1e-6),
            Var("i_cmd", "A", i_init, i_base),
        ]
        self.algebraics = [Var("v_dc", "V", 0.0, v_base)]

    def derivatives(self, t, x, u, z):
        return (self.omega_track * (u[2] - x[0]),)

    def outputs(self, t, x, u, z):
        e_dc, l_ext, i_cmd = u
        return (e_dc - l_ext * self.omega_track * (i_cmd - x[0]),)


class PiCurrentController(Fragment):
    """PI firing-angle controller: raising alpha lowers the DC voltage, so the
    error sign is (measured - reference). Conditional anti-windup freezes the
    integrator when the output clamp is active and the error pushes outward.
    """

    def __init__(self, name, kp, ki, alpha0, i_base=1.0,
                 alpha_min=math.radians(5.0), alpha_max=math.radians(85.0)):
        super().__init__(name)
        self.kp = kp
        self.ki = ki
        self.alpha0 = alpha0
        self.alpha_min = alpha_min
        self.alpha_max = alpha_max
        self.states = [Var("x_i", "rad", 0.0, 1.0)]
        self.inputs = [Var("i_dc", "A", 0.0, i_base), Var("i_ref", "A", 0.0, i_base)]
        self.algebraics = [Var("alpha_cmd", "rad", alpha0, 1.0)]

    def _raw(self, x, u):
        e = u[0] - u[1]
        return self.alpha0 + self.kp * e + x[0], e

    def derivatives(self, t, x, u, z):
        raw, e = self._raw(x, u)
        if (raw >= self.alpha_max and e > 0.0) or (raw <= self.alpha_min and e < 0.0):
            return (0.0,)
        return (self.ki * e,)

    def outputs(self, t, x, u, z):
        raw, _ = self._raw(x, u)
        return (min(max(raw, self.alpha_min), self.alpha_max),)


class VsmSource(Fragment):
    """Grid-forming source with swing dynamics and first-order voltage lag."""

    def __init__(self, name, rating, h, d, t_v, v_ref, omega_n,
                 p_ref=0.0, i_base=1.0):
        super().__init__(name)
        self.rating = rating
        self.h = h
        self.d = d
        self.t_v = t_v
        self.v_ref = v_ref
        self.p_ref = p_ref
        self.omega_n = omega_n
        vs = max(abs(v_ref), 1.0)
        self.states = [
            Var("delta", "rad", 0.0, 1.0),
            Var("omega_dev", "pu", 0.0, 1e-2),
            Var("e_mag", "V", v_ref, vs),
        ]
        self.inputs = [Var("i_rd", "A", 0.0, i_base), Var("i_rq", "A", 0.0, i_base)]
        self.algebraics = [
            Var("v_gd", "V", v_ref, vs),
            Var("v_gq", "V", 0.0, vs),
            Var("p_e", "W", 0.0, max(rating, 1.0)),
        ]

    def _electrical_power(self, x, u):
        delta, _, e_mag = x
        i_rd, i_rq = u
        v_gd = e_mag * math.cos(delta)
        v_gq = e_mag * math.sin(delta)
        return v_gd, v_gq, 1.5 * (v_gd * i_rd + v_gq * i_rq)

    def derivatives(self, t, x, u, z):
        _, omega_dev, e_mag = x
        _, _, p_e = self._electrical_power(x, u)
        d_delta = self.omega_n * omega_dev
        d_omega = ((self.p_ref - p_e) / self.rating - self.d * omega_dev) / (2.0 * self.h)
        d_e = (self.v_ref - e_mag) / self.t_v
        return (d_delta, d_omega, d_e)

    def outputs(self, t, x, u, z):
        return self._electrical_power(x, u)


class BandwidthPiCurrentController(PiCurrentController):
    """PI firing-angle controller parameterized by closed-loop bandwidth.

    Gains are derived from ``bandwidth_hz`` through the first-order DC-loop
    constants, so sweeping the bandwidth retunes both kp and ki together.
    """

    def __init__(self, name, bandwidth_hz, k_plant, l_loop, r_loop,
                 alpha0, i_base=1.0, **kw):
        self.k_plant = k_plant
        self.l_loop = l_loop
        self.r_loop = r_loop
        self.bandwidth_hz = bandwidth_hz
        super().__init__(name, kp=0.0, ki=0.0, alpha0=alpha0,
                         i_base=i_base, **kw)

    @property
    def kp(self):
        return 2.0 * math.pi * self.bandwidth_hz * self.l_loop / self.k_plant

    @property
    def ki(self):
        return 2.0 * math.pi * self.bandwidth_hz * self.r_loop / self.k_plant

    @kp.setter
    def kp(self, value):
        pass

    @ki.setter
    def ki(self, value):
        pass


def pi_gains_for_bandwidth(bandwidth_hz, k_plant, l_loop, r_loop):
    """Map a closed-loop current bandwidth to PI gains.

    The firing-angle-to-current plant is approximated as the first-order loop
    ``dI = -k_plant*dalpha/(l_loop*s + r_loop)``; internal-model tuning places
    the PI zero on the plant pole and sets the crossover at the bandwidth.
    """
    w_c = 2.0 * math.pi * bandwidth_hz
    kp = w_c * l_loop / k_plant
    ki = w_c * r_loop / k_plant
    return kp, ki
