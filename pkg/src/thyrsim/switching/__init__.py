"""Detailed six- and twelve-pulse thyristor bridge simulator.

Runs on a compiled kernel when the extension built, otherwise on the pure
Python reference implementation (same algorithm, roughly two orders of
magnitude slower). ``BACKEND`` reports which one is active.
"""
import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, NoConvergence

try:
    from ._cykernel import Kernel as _Kernel
    BACKEND = "cython"
except ImportError:  # extension not built; fall back to the reference kernel
    from ._pure import Kernel as _Kernel
    BACKEND = "pure"

from ._pure import Kernel as PureKernel
from ._pure import (CTRL_CONST, CTRL_PI, LOAD_CURRENT, LOAD_ELECTROLYZER,
                    PERT_ALPHA, PERT_IDC, PERT_IREF, PERT_NONE, PERT_VD,
                    PERT_VQ)

_PERT_CODES = {"none": PERT_NONE, "vd": PERT_VD, "vq": PERT_VQ,
               "idc": PERT_IDC, "alpha": PERT_ALPHA, "iref": PERT_IREF}


@dataclass
class SwitchingParams:
    """Full configuration of one switching-model run."""

    v_m: float
    omega_g: float
    l_c: float
    pulses: int = 6
    load: str = "electrolyzer"          # or "current"
    l_d: float = 0.0
    r0: float = 0.0
    r1: float = 1.0
    c1: float = 1.0
    v_rev: float = 0.0
    i0: float = 0.0                     # prescribed current / initial guess
    control: str = "constant"           # or "pi"
    alpha0: float = math.radians(30.0)
    pi_kp: float = 0.0
    pi_ki: float = 0.0
    i_ref: float = 0.0
    alpha_min: float = math.radians(5.0)
    alpha_max: float = math.radians(85.0)
    firing_filter_hz: float | None = None
    pll_kp: float = 1.0
    pll_ki: float = 30.0
    pert_channel: str = "none"
    pert_amp: float = 0.0
    pert_freq_hz: float = 0.0
    dt: float = 1e-6

    def __post_init__(self):
        if self.pulses not in (6, 12):
            raise ConfigError(f"pulses must be 6 or 12, got {self.pulses}", key="pulses")
        if self.load not in ("electrolyzer", "current"):
            raise ConfigError(f"unknown load kind {self.load!r}", key="load")
        if self.control not in ("constant", "pi"):
            raise ConfigError(f"unknown control kind {self.control!r}", key="control")
        if self.pert_channel not in _PERT_CODES:
            raise ConfigError(
                f"unknown perturbation channel {self.pert_channel!r}",
                key="pert_channel")
        if self.pert_channel == "idc" and self.load != "current":
            raise ConfigError(
                "idc perturbation requires the current load",
                key="pert_channel")

    def kernel_config(self):
        n_b = self.pulses // 6
        shifts = [0.0] if n_b == 1 else [math.pi / 12.0, -math.pi / 12.0]
        f_sw = self.omega_g / (2.0 * math.pi) * 6.0
        w_z = (2.0 * math.pi * self.firing_filter_hz
               if self.firing_filter_hz is not None
               else 2.0 * math.pi * f_sw / 2.0)
        return {
            "v_m": self.v_m, "omega_g": self.omega_g, "l_c": self.l_c,
            "n_bridges": n_b, "phase_shifts": shifts,
            "load_kind": (LOAD_ELECTROLYZER if self.load == "electrolyzer"
                          else LOAD_CURRENT),
            "l_d": self.l_d, "r0": self.r0, "r1": self.r1, "c1": self.c1,
            "v_rev": self.v_rev, "i0": self.i0,
            "ctrl_kind": CTRL_CONST if self.control == "constant" else CTRL_PI,
            "alpha0": self.alpha0, "pi_kp": self.pi_kp, "pi_ki": self.pi_ki,
            "i_ref": self.i_ref,
            "alpha_min": self.alpha_min, "alpha_max": self.alpha_max,
            "omega_z": w_z,
            "pll_kp": self.pll_kp, "pll_ki": self.pll_ki,
            "omega_n": self.omega_g,
            "pert_channel": _PERT_CODES[self.pert_channel],
            "pert_amp": self.pert_amp,
            "pert_omega": 2.0 * math.pi * self.pert_freq_hz,
            "dt": self.dt,
        }


@dataclass
class SwitchingTrajectory:
    """Uniformly sampled switching-model record in the grid frame."""

    t: np.ndarray
    i_dc: np.ndarray
    v_dc: np.ndarray
    i_a: np.ndarray
    i_b: np.ndarray
    i_c: np.ndarray
    alpha: np.ndarray
    theta_pll: np.ndarray
    mask: np.ndarray
    params: SwitchingParams = field(repr=False, default=None)

    def grid_dq_currents(self, omega_g=None):
        """Phase currents projected on the grid synchronous frame."""
        w = self.params.omega_g if omega_g is None else omega_g
        th = w * self.t
        k = 2.0 / 3.0
        i_d = k * (self.i_a * np.cos(th)
                   + self.i_b * np.cos(th - 2 * np.pi / 3)
                   + self.i_c * np.cos(th + 2 * np.pi / 3))
        i_q = -k * (self.i_a * np.sin(th)
                    + self.i_b * np.sin(th - 2 * np.pi / 3)
                    + self.i_c * np.sin(th + 2 * np.pi / 3))
        return i_d, i_q

    def to_csv(self, path):
        import csv

        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time [s]", "v_dc [V]", "i_dc [A]", "i_a [A]",
                        "i_b [A]", "i_c [A]", "alpha [rad]",
                        "theta_pll [rad]", "conducting"])
            for k in range(len(self.t)):
                w.writerow([repr(float(self.t[k])), repr(float(self.v_dc[k])),
                            repr(float(self.i_dc[k])), repr(float(self.i_a[k])),
                            repr(float(self.i_b[k])), repr(float(self.i_c[k])),
                            repr(float(self.alpha[k])),
                            repr(float(self.theta_pll[k])),
                            int(self.mask[k])])


def make_kernel(params: SwitchingParams, backend=None):
    cls = PureKernel if backend == "pure" else _Kernel
    kern = cls(params.kernel_config())
    i_start = params.i0 if params.load == "current" else max(params.i0, 0.0)
    alpha_init = params.alpha0 if params.control == "constant" else params.alpha0
    kern.init_state(0.0, i_start, alpha_init)
    return kern


def _collect(kern, params, n_steps, stride, average=False):
    cols = kern.run(n_steps, stride, average)
    arrs = [np.asarray(c, dtype=float) for c in cols[:8]]
    mask = np.asarray(cols[8], dtype=np.int64)
    return SwitchingTrajectory(*arrs, mask, params=params)


def run_switching(params: SwitchingParams, t_end, stride=1, kern=None,
                  backend=None, average=False):
    """Simulate from t=0 (or continue a supplied kernel) up to ``t_end``.

    Returns ``(trajectory, kernel)``; pass the kernel back in to continue a
    run with full state retained across the call.
    """
    if kern is None:
        kern = make_kernel(params, backend=backend)
    n_steps = int(round((t_end - kern.t) / params.dt))
    traj = _collect(kern, params, n_steps, stride, average)
    return traj, kern


def run_to_periodic_steady_state(params: SwitchingParams, max_cycles=120,
                                 tol=1e-5, stride=1, backend=None):
    """Iterate grid cycles until per-cycle mean v_dc and i_dc settle.

    Returns ``(trajectory_of_last_cycle, kernel)``. Raises
    :class:`NoConvergence` when the averages keep moving after
    ``max_cycles``.
    """
    kern = make_kernel(params, backend=backend)
    t_cycle = 2.0 * math.pi / params.omega_g
    n_steps = int(round(t_cycle / params.dt))
    prev_v = math.inf
    prev_i = math.inf
    for _ in range(max_cycles):
        traj = _collect(kern, params, n_steps, stride)
        v_bar = float(np.mean(traj.v_dc))
        i_bar = float(np.mean(traj.i_dc))
        dv = abs(v_bar - prev_v) / max(abs(v_bar), 1e-9)
        di = abs(i_bar - prev_i) / max(abs(i_bar), 1e-9)
        if dv < tol and di < tol:
            return traj, kern
        prev_v, prev_i = v_bar, i_bar
    raise NoConvergence(
        f"per-cycle averages still moving after {max_cycles} cycles "
        f"(dv={dv:.3g}, di={di:.3g})", best_residual=max(dv, di))
