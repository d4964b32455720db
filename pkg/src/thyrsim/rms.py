"""Quasi-static phasor (RMS) model of the six-pulse thyristor rectifier.

Two variants: the basic model with a lumped commutation voltage drop
``R_dc = 3*w*L_c/pi``, and the extended model that resolves the commutation
angle ``mu`` and the current shape factor ``k_ic`` explicitly. Both are
memoryless; any dynamics come from the surrounding network.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .dae import Fragment, Var
from .errors import OutOfRange

K_V = 3.0 * math.sqrt(3.0) / math.pi  # DC voltage coefficient, peak phasor in
K_I = 2.0 * math.sqrt(3.0) / math.pi  # fundamental AC current coefficient


@dataclass(frozen=True)
class RmsParams:
    l_c: float           # commutation inductance per phase, H
    omega_g: float       # grid angular frequency, rad/s
    pulses: int = 6

    def __post_init__(self):
        if self.l_c <= 0.0:
            raise ValueError("l_c must be positive")
        if self.omega_g <= 0.0:
            raise ValueError("omega_g must be positive")
        if self.pulses not in (6, 12):
            raise ValueError("pulses must be 6 or 12")

    @property
    def r_dc(self) -> float:
        """Commutation-induced DC voltage drop resistance of one bridge."""
        return 3.0 * self.omega_g * self.l_c / math.pi

    @property
    def n_bridges(self) -> int:
        return self.pulses // 6


@dataclass(frozen=True)
class RmsSolution:
    v_dc: float     # average DC voltage, V
    i_m: float      # fundamental AC current magnitude (peak), A
    phi: float      # displacement angle (current lags voltage by phi), rad
    mu: float       # commutation angle, rad
    k_ic: float     # current shape factor


def rms_basic(v_m: float, alpha: float, i_dc: float, params: RmsParams):
    """Basic phasor model: DC voltage, AC current magnitude, displacement angle."""
    n = params.n_bridges
    v_dc = n * (K_V * v_m * math.cos(alpha) - params.r_dc * i_dc)
    i_m = n * K_I * i_dc
    return v_dc, i_m, alpha


def commutation_angle_rms(v_m: float, alpha: float, i_dc: float, params: RmsParams) -> float:
    """Commutation angle of the quasi-static model; raises if infeasible."""
    arg = math.cos(alpha) - 2.0 * params.omega_g * params.l_c * i_dc / (math.sqrt(3.0) * v_m)
    if arg < -1.0 or arg > 1.0:
        raise OutOfRange(
            f"commutation infeasible: arccos argument {arg:.6g} outside [-1, 1]"
        )
    return math.acos(arg) - alpha


def current_shape_factor(alpha: float, mu: float) -> float:
    """Shape factor k_ic relating the fundamental AC current to a rectangular wave."""
    if mu <= 1e-9:
        return 1.0  # series limit; avoids 0/0 roundoff below
    num = math.sqrt(
        (math.cos(2.0 * alpha) - math.cos(2.0 * (alpha + mu))) ** 2
        + (2.0 * mu + math.sin(2.0 * alpha) - math.sin(2.0 * (alpha + mu))) ** 2
    )
    den = 4.0 * (math.cos(alpha) - math.cos(alpha + mu))
    return num / den


def rms_extended(v_m: float, alpha: float, i_dc: float, params: RmsParams) -> RmsSolution:
    """Extended phasor model with explicit commutation angle and shape factor."""
    mu = commutation_angle_rms(v_m, alpha, i_dc, params)
    k_ic = current_shape_factor(alpha, mu)
    half = math.cos(alpha + 0.5 * mu) * math.cos(0.5 * mu)
    n = params.n_bridges
    v_dc = n * K_V * v_m * half
    i_m = n * K_I * k_ic * i_dc
    cos_phi = half / k_ic
    phi = math.acos(max(-1.0, min(1.0, cos_phi)))
    return RmsSolution(v_dc=v_dc, i_m=i_m, phi=phi, mu=mu, k_ic=k_ic)


class RmsRectifier(Fragment):
    """Memoryless DAE fragment of the extended phasor model.

    No states: PLL and firing delay are assumed ideal, so the firing command
    acts instantaneously and the AC current phasor tracks the terminal
    voltage angle. The DC port publishes the phasor EMF with a zero series
    inductance (the commutation drop is already inside the EMF).
    """

    def __init__(self, name: str, params: RmsParams, v_nominal: float = 1.0,
                 i_base: float = 1.0):
        super().__init__(name)
        self.l_c = params.l_c
        self.omega_g = params.omega_g
        self.pulses = params.pulses
        v_base = max(abs(v_nominal), 1.0)
        self.inputs = [
            Var("v_gd", "V", v_nominal, v_base),
            Var("v_gq", "V", 0.0, v_base),
            Var("i_dc", "A", 0.0, i_base),
            Var("alpha_cmd", "rad", 0.0, 1.0),
        ]
        self.algebraics = [
            Var("v_mag", "V", v_nominal, v_base),
            Var("theta_v", "rad", 0.0, 1.0),
            Var("mu", "rad", 0.0, 1.0),
            Var("k_ic", "-", 1.0, 1.0),
            Var("e_dc", "V", 0.0, v_base),
            Var("l_eff", "H", 0.0, 1e-6),
            Var("i_m", "A", 0.0, i_base),
            Var("phi", "rad", 0.0, 1.0),
            Var("i_gd", "A", 0.0, i_base),
            Var("i_gq", "A", 0.0, i_base),
        ]

    def outputs(self, t, x, u, z):
        v_gd, v_gq, i_dc, alpha_cmd = u
        v_mag = math.hypot(v_gd, v_gq)
        theta_v = math.atan2(v_gq, v_gd)
        params = RmsParams(l_c=self.l_c, omega_g=self.omega_g, pulses=self.pulses)
        sol = rms_extended(v_mag, alpha_cmd, abs(i_dc), params)
        _, (i_gd, i_gq) = rms_phasor_interface(sol, theta_v)
        return (v_mag, theta_v, sol.mu, sol.k_ic, sol.v_dc, 0.0,
                sol.i_m, sol.phi, i_gd, i_gq)


def rms_phasor_interface(solution: RmsSolution, theta_v: float):
    """Circuit-side view: DC voltage source value and the AC current phasor.

    The current phasor is returned in rectangular dq components, lagging
    the voltage phasor (at angle ``theta_v``) by the displacement angle.
    """
    ang = theta_v - solution.phi
    return solution.v_dc, (solution.i_m * math.cos(ang), solution.i_m * math.sin(ang))
