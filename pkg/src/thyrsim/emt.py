"""Switching-period-averaged dq-domain model of the thyristor rectifier.

The rectifier is represented as a DC voltage source behind a variable
(commutation-state dependent) inductance, and a current sink on the AC
side. All quantities live in the frame defined by the rectifier's own PLL;
``theta_e`` is the PLL tracking error.

The exact averaged input currents below were re-derived from the
commutation/conduction segment integrals and verified against direct
quadrature of the segment averages; see tests/test_emt.py.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .dae import Fragment, Var
from .errors import DegenerateVoltage

K_V = 3.0 * math.sqrt(3.0) / math.pi
K_I = 2.0 * math.sqrt(3.0) / math.pi
MU_MAX = math.pi / 3.0


@dataclass(frozen=True)
class EmtParams:
    l_c: float                    # commutation inductance per phase, H
    pll_kp: float                 # PLL proportional gain, (rad/s)/V
    pll_ki: float                 # PLL integral gain, (rad/s^2)/V
    omega_n: float                # nominal angular frequency, rad/s
    pulses: int = 6
    firing_filter_hz: float | None = None  # default: pulse frequency / 2
    current_mode: str = "exact"   # 'exact' | 'linear'
    v_nominal: float = 1.0        # scale for the degenerate-voltage floor
    v_floor_frac: float = 1e-6

    def __post_init__(self):
        if self.l_c <= 0.0:
            raise ValueError("l_c must be positive")
        if self.pll_kp < 0.0 or self.pll_ki < 0.0:
            raise ValueError("PLL gains must be nonnegative")
        if self.omega_n <= 0.0:
            raise ValueError("omega_n must be positive")
        if self.pulses not in (6, 12):
            raise ValueError("pulses must be 6 or 12")
        if self.current_mode not in ("exact", "linear"):
            raise ValueError("current_mode must be 'exact' or 'linear'")

    @property
    def n_bridges(self) -> int:
        return self.pulses // 6

    @property
    def pulse_frequency(self) -> float:
        return self.pulses * self.omega_n / (2.0 * math.pi)

    @property
    def omega_z(self) -> float:
        """Firing-angle low-pass cut-off, rad/s."""
        f_c = self.firing_filter_hz
        if f_c is None:
            f_c = 0.5 * self.pulse_frequency
        return 2.0 * math.pi * f_c

    @property
    def v_floor(self) -> float:
        return self.v_floor_frac * self.v_nominal


@dataclass
class EmtState:
    alpha: float        # filtered firing angle, rad
    theta_pll: float    # PLL angle relative to the common rotating reference, rad
    x_pll: float        # PLL integrator, rad/s


@dataclass(frozen=True)
class EmtOutputs:
    v_dc: float
    mu: float
    i_d: float
    i_q: float
    l_eff: float
    theta_e: float
    v_mag: float
    saturated: bool = False


def commutation_angle(alpha: float, theta_e: float, v_mag: float, omega: float,
                      i_dc: float, l_c: float, v_floor: float = 0.0):
    """Averaged-model commutation angle, clamped to [0, pi/3].

    Returns ``(mu, saturated)``; the flag is set when the arccos argument or
    the angle itself had to be clamped. ``abs(i_dc)`` enforces unidirectional
    conduction.
    """
    if v_mag <= v_floor or v_mag <= 0.0:
        raise DegenerateVoltage(f"voltage magnitude {v_mag:.3g} at or below floor")
    arg = math.cos(alpha + theta_e) - 2.0 * omega * l_c * abs(i_dc) / (math.sqrt(3.0) * v_mag)
    saturated = False
    if arg < -1.0:
        arg = -1.0
        saturated = True
    elif arg > 1.0:
        arg = 1.0
        saturated = True
    mu = math.acos(arg) - alpha - theta_e
    if mu < 0.0:
        # arccos roundoff at zero current gives mu ~ -1e-16; only a genuinely
        # negative angle counts as saturation
        saturated = saturated or mu < -1e-12
        mu = 0.0
    elif mu > MU_MAX:
        mu = MU_MAX
        saturated = True
    return mu, saturated


def effective_inductance(mu: float, l_c: float) -> float:
    """DC-side series inductance of one bridge, (2 - 3*mu/(2*pi)) * L_c."""
    return (2.0 - 1.5 * mu / math.pi) * l_c


def dc_voltage(v_mag: float, theta_e: float, alpha: float, mu: float,
               di_dc_dt: float, l_c: float) -> float:
    """Averaged DC voltage of one six-pulse bridge."""
    emf = K_V * v_mag * math.cos(0.5 * mu) * math.cos(alpha + 0.5 * mu + theta_e)
    return emf - effective_inductance(mu, l_c) * di_dc_dt


def dc_emf(v_mag: float, theta_e: float, alpha: float, mu: float) -> float:
    """DC voltage of one bridge excluding the variable-inductance term."""
    return K_V * v_mag * math.cos(0.5 * mu) * math.cos(alpha + 0.5 * mu + theta_e)


def commutation_current(theta: float, alpha: float, theta_e: float,
                        v_mag: float, omega: float, l_c: float) -> float:
    """Incoming-phase current during commutation, boundary i(-pi/3 + alpha) = 0."""
    return (math.sqrt(3.0) * v_mag / (2.0 * omega * l_c)) * (
        math.cos(alpha + theta_e) - math.cos(theta + theta_e + math.pi / 3.0)
    )


def input_currents_exact(i_dc: float, alpha: float, mu: float, theta_e: float,
                         v_mag: float, omega: float, l_c: float):
    """Exact segment-averaged dq input currents of one bridge (PLL frame)."""
    c = 3.0 * v_mag / (math.pi * omega * l_c)
    two_am = 2.0 * alpha + mu + theta_e
    dd = (0.5 * mu * math.sin(theta_e) + 0.5 * math.cos(theta_e)
          + 0.25 * math.cos(2.0 * alpha + theta_e) - 0.5 * math.cos(mu - theta_e)
          - 0.5 * math.cos(two_am) + 0.25 * math.cos(two_am + mu))
    dq = (-0.5 * mu * math.cos(theta_e) + 0.5 * math.sin(theta_e)
          - 0.25 * math.sin(2.0 * alpha + theta_e) + 0.5 * math.sin(mu - theta_e)
          + 0.5 * math.sin(two_am) - 0.25 * math.sin(two_am + mu))
    i_d = K_I * i_dc * math.cos(alpha + mu) + c * dd
    i_q = -K_I * i_dc * math.sin(alpha + mu) + c * dq
    return i_d, i_q


def input_currents_linear(i_dc: float, alpha: float, mu: float):
    """Linear-commutation approximation of the averaged dq input currents."""
    return (K_I * i_dc * math.cos(alpha + 0.5 * mu),
            -K_I * i_dc * math.sin(alpha + 0.5 * mu))


def pll_derivatives(state: EmtState, v_gd: float, v_gq: float, params: EmtParams):
    """PLL state derivatives plus derived frame quantities.

    ``v_gd, v_gq`` are the terminal voltage in the common rotating (grid)
    reference; ``theta_pll`` is relative to the same reference, so the
    returned angle derivative is ``omega_pll - omega_n``.
    """
    c = math.cos(state.theta_pll)
    s = math.sin(state.theta_pll)
    v_d = v_gd * c + v_gq * s
    v_q = -v_gd * s + v_gq * c
    v_mag = math.hypot(v_d, v_q)
    if v_mag <= params.v_floor:
        raise DegenerateVoltage(f"voltage magnitude {v_mag:.3g} at or below floor")
    theta_e = math.atan2(v_q, v_d)
    omega_pll = params.omega_n + params.pll_kp * v_q + state.x_pll
    dtheta_pll = omega_pll - params.omega_n
    dx_pll = params.pll_ki * v_q
    return dtheta_pll, dx_pll, theta_e, v_mag, omega_pll, v_d, v_q


def firing_filter_derivative(alpha: float, alpha_cmd: float, omega_z: float) -> float:
    """First-order lag of the firing angle toward its commanded value."""
    return omega_z * (alpha_cmd - alpha)


class EmtRectifier(Fragment):
    """Averaged-rectifier DAE fragment.

    States: filtered firing angle, PLL angle (relative to the common rotating
    reference) and PLL integrator. The DC port publishes the averaged EMF and
    the commutation-state-dependent series inductance; the connected DC-side
    fragment stamps that inductance into its own loop, which keeps the
    composed DAE semi-explicit.
    """

    def __init__(self, name: str, params: EmtParams, alpha_init: float,
                 i_base: float = 1.0):
        super().__init__(name)
        self.l_c = params.l_c
        self.pll_kp = params.pll_kp
        self.pll_ki = params.pll_ki
        self.omega_n = params.omega_n
        self.pulses = params.pulses
        self.omega_z = params.omega_z
        self.current_mode = params.current_mode
        self.v_floor = params.v_floor
        v_base = max(params.v_nominal, 1.0)
        self.states = [
            Var("alpha", "rad", alpha_init, 1.0),
            Var("theta_pll", "rad", 0.0, 1.0),
            Var("x_pll", "rad/s", 0.0, params.omega_n),
        ]
        self.inputs = [
            Var("v_gd", "V", params.v_nominal, v_base),
            Var("v_gq", "V", 0.0, v_base),
            Var("i_dc", "A", 0.0, i_base),
            Var("alpha_cmd", "rad", alpha_init, 1.0),
        ]
        self.algebraics = [
            Var("v_d", "V", params.v_nominal, v_base),
            Var("v_q", "V", 0.0, v_base),
            Var("v_mag", "V", params.v_nominal, v_base),
            Var("theta_e", "rad", 0.0, 1.0),
            Var("omega_pll", "rad/s", params.omega_n, params.omega_n),
            Var("mu", "rad", 0.0, 1.0),
            Var("e_dc", "V", 0.0, v_base),
            Var("l_eff", "H", 2.0 * params.l_c * (params.pulses // 6),
                max(params.l_c, 1e-9)),
            Var("i_d_pll", "A", 0.0, i_base),
            Var("i_q_pll", "A", 0.0, i_base),
            Var("i_gd", "A", 0.0, i_base),
            Var("i_gq", "A", 0.0, i_base),
        ]

    def _frame(self, x, u):
        _, theta_pll, _ = x
        v_gd, v_gq = u[0], u[1]
        c = math.cos(theta_pll)
        s = math.sin(theta_pll)
        v_d = v_gd * c + v_gq * s
        v_q = -v_gd * s + v_gq * c
        v_mag = math.hypot(v_d, v_q)
        if v_mag <= self.v_floor:
            raise DegenerateVoltage(
                f"{self.name}: voltage magnitude {v_mag:.3g} at or below floor")
        return v_d, v_q, v_mag

    def derivatives(self, t, x, u, z):
        alpha, _, x_pll = x
        _, v_q, _ = self._frame(x, u)
        alpha_cmd = min(max(u[3], 0.0), math.pi - 1e-6)
        d_alpha = self.omega_z * (alpha_cmd - alpha)
        d_theta = self.pll_kp * v_q + x_pll  # omega_pll - omega_n
        d_x = self.pll_ki * v_q
        return (d_alpha, d_theta, d_x)

    def outputs(self, t, x, u, z):
        alpha, theta_pll, x_pll = x
        i_dc = u[2]
        v_d, v_q, v_mag = self._frame(x, u)
        theta_e = math.atan2(v_q, v_d)
        omega_pll = self.omega_n + self.pll_kp * v_q + x_pll
        mu, _ = commutation_angle(alpha, theta_e, v_mag, omega_pll, i_dc,
                                  self.l_c, self.v_floor)
        n = self.pulses // 6
        e = n * dc_emf(v_mag, theta_e, alpha, mu)
        l_eff = n * effective_inductance(mu, self.l_c)
        if self.current_mode == "exact":
            i_d, i_q = input_currents_exact(i_dc, alpha, mu, theta_e, v_mag,
                                            omega_pll, self.l_c)
        else:
            i_d, i_q = input_currents_linear(i_dc, alpha, mu)
        i_d *= n
        i_q *= n
        # rotate the PLL-frame current back into the common reference
        c = math.cos(theta_pll)
        s = math.sin(theta_pll)
        i_gd = i_d * c - i_q * s
        i_gq = i_d * s + i_q * c
        return (v_d, v_q, v_mag, theta_e, omega_pll, mu, e, l_eff,
                i_d, i_q, i_gd, i_gq)


def evaluate(params: EmtParams, state: EmtState, v_gd: float, v_gq: float,
             i_dc: float, di_dc_dt: float = 0.0) -> EmtOutputs:
    """One-shot evaluation of the averaged model outputs at a given state."""
    _, _, theta_e, v_mag, omega_pll, _, _ = pll_derivatives(state, v_gd, v_gq, params)
    mu, sat = commutation_angle(state.alpha, theta_e, v_mag, omega_pll, i_dc,
                                params.l_c, params.v_floor)
    n = params.n_bridges
    l_eff = n * effective_inductance(mu, params.l_c)
    v_dc = n * dc_emf(v_mag, theta_e, state.alpha, mu) - l_eff * di_dc_dt
    if params.current_mode == "exact":
        i_d, i_q = input_currents_exact(i_dc, state.alpha, mu, theta_e, v_mag,
                                        omega_pll, params.l_c)
    else:
        i_d, i_q = input_currents_linear(i_dc, state.alpha, mu)
    return EmtOutputs(v_dc=v_dc, mu=mu, i_d=n * i_d, i_q=n * i_q, l_eff=l_eff,
                      theta_e=theta_e, v_mag=v_mag, saturated=sat)
