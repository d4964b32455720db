"""Small-signal analysis of composed DAE models.

Numerical linearization around a verified equilibrium, reduction of the
semi-explicit index-1 system to an ordinary state space, eigenvalue and
participation-factor reporting, and parameter sweeps with stability-boundary
refinement.
"""
from __future__ import annotations

import cmath
import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.optimize import linear_sum_assignment

from .dae import DaeModel, Equilibrium, solve_equilibrium
from .errors import EigenFailure, NoConvergence, NonEquilibrium, SingularAzz


def _central_jacobian(fun, y0, scales, rel=1e-6, base=1e-9):
    f0 = np.asarray(fun(y0))
    J = np.empty((f0.size, y0.size))
    for j in range(y0.size):
        h = max(rel * abs(y0[j]), base * scales[j])
        yp = y0.copy()
        ym = y0.copy()
        yp[j] += h
        ym[j] -= h
        J[:, j] = (np.asarray(fun(yp)) - np.asarray(fun(ym))) / (2.0 * h)
    return J


@dataclass
class LinearModel:
    """Jacobian blocks of dx/dt = f, 0 = g plus the reduced state space."""

    a_xx: np.ndarray
    a_xz: np.ndarray
    a_zx: np.ndarray
    a_zz: np.ndarray
    b_xu: np.ndarray
    b_zu: np.ndarray
    state_names: list
    alg_names: list
    input_names: list
    operating_point: Equilibrium

    a_red: np.ndarray = field(init=False)
    b_red: np.ndarray = field(init=False)
    _lu_zz: tuple = field(init=False, repr=False)

    def __post_init__(self):
        try:
            self._lu_zz = sla.lu_factor(self.a_zz)
        except (ValueError, sla.LinAlgError):
            raise SingularAzz("algebraic Jacobian could not be factorized")
        # cheap conditioning guard: reject a numerically singular A_zz
        diag = np.abs(np.diag(self._lu_zz[0]))
        if diag.size and (diag.min() == 0.0 or
                          diag.min() < 1e-13 * diag.max()):
            raise SingularAzz(
                f"algebraic Jacobian numerically singular "
                f"(pivot ratio {diag.min() / max(diag.max(), 1e-300):.2e})")
        # reduction via linear solves, never explicit inversion
        zr_x = sla.lu_solve(self._lu_zz, self.a_zx)
        zr_u = sla.lu_solve(self._lu_zz, self.b_zu)
        self.a_red = self.a_xx - self.a_xz @ zr_x
        self.b_red = self.b_xu - self.a_xz @ zr_u

    # sensitivities of the algebraic variables, z = z_x x + z_u u
    def alg_sensitivities(self):
        z_x = -sla.lu_solve(self._lu_zz, self.a_zx)
        z_u = -sla.lu_solve(self._lu_zz, self.b_zu)
        return z_x, z_u

    def output_row(self, name):
        """(C, D) row mapping (x, u) to one state or algebraic variable."""
        nx = len(self.state_names)
        nu = len(self.input_names)
        if name in self.state_names:
            c = np.zeros(nx)
            c[self.state_names.index(name)] = 1.0
            return c, np.zeros(nu)
        if name in self.alg_names:
            z_x, z_u = self.alg_sensitivities()
            k = self.alg_names.index(name)
            return z_x[k], z_u[k]
        raise KeyError(name)

    def transfer(self, s, input_name, output_name):
        """Transfer function value C (sI - A)^{-1} B + D at complex s."""
        j = self.input_names.index(input_name)
        c, d = self.output_row(output_name)
        nx = self.a_red.shape[0]
        rhs = self.b_red[:, j].astype(complex)
        x_resp = np.linalg.solve(s * np.eye(nx) - self.a_red, rhs)
        return complex(c @ x_resp + d[j])


@dataclass(frozen=True)
class ModeReport:
    eigenvalue: complex
    f_n_hz: float
    zeta: float
    participations: tuple   # ((state label, factor), ...) sorted descending

    def to_dict(self):
        return {
            "lambda_re": self.eigenvalue.real,
            "lambda_im": self.eigenvalue.imag,
            "zeta": self.zeta,
            "f_n_hz": self.f_n_hz,
            "participations": [{"state": s, "factor": p}
                               for s, p in self.participations],
        }


def damping_and_frequency(lam: complex):
    """(f_n, zeta) of one eigenvalue; zeta = 1 for non-oscillatory decay."""
    mag = abs(lam)
    if mag == 0.0:
        return 0.0, 0.0
    return abs(lam.imag) / (2.0 * math.pi), -lam.real / mag


def linearize(model: DaeModel, xi_o: Equilibrium, res_tol=1e-6) -> LinearModel:
    """Central-difference Jacobian blocks around a verified equilibrium."""
    x0, z0, u0 = xi_o.x, xi_o.z, xi_o.u
    r = model.residuals(0.0, x0, u0, z0)
    if r.size and np.max(np.abs(r)) > res_tol:
        raise NonEquilibrium(
            f"operating point residual {np.max(np.abs(r)):.3g} exceeds "
            f"{res_tol:.1g}; solve the equilibrium first")

    xsc, zsc = model.state_scales, model.alg_scales
    usc = np.maximum(np.abs(u0), 1.0)

    a_xx = _central_jacobian(lambda x: model.f(0.0, x, u0, z0), x0.copy(), xsc)
    a_xz = _central_jacobian(lambda z: model.f(0.0, x0, u0, z), z0.copy(), zsc)
    a_zx = _central_jacobian(lambda x: model.g(0.0, x, u0, z0), x0.copy(), xsc)
    a_zz = _central_jacobian(lambda z: model.g(0.0, x0, u0, z), z0.copy(), zsc)
    b_xu = _central_jacobian(lambda u: model.f(0.0, x0, u, z0), u0.copy(), usc)
    b_zu = _central_jacobian(lambda u: model.g(0.0, x0, u, z0), u0.copy(), usc)

    return LinearModel(a_xx, a_xz, a_zx, a_zz, b_xu, b_zu,
                       list(model.state_names), list(model.alg_names),
                       list(model.input_names), xi_o)


def modes(linear: LinearModel, deduplicate=True):
    """Eigenmodes of the reduced system with participation factors."""
    try:
        lams, psi, phi = sla.eig(linear.a_red, left=True, right=True)
    except (ValueError, sla.LinAlgError) as exc:
        raise EigenFailure(str(exc)) from None
    reports = []
    for i in np.argsort(-lams.real):
        lam = complex(lams[i])
        if deduplicate and lam.imag < 0.0:
            continue   # keep the positive-imaginary representative of a pair
        p = np.abs(phi[:, i] * np.conj(psi[:, i]))
        total = p.sum()
        if total > 0.0:
            p = p / total
        order = np.argsort(-p)
        parts = tuple((linear.state_names[k], float(p[k])) for k in order)
        f_n, zeta = damping_and_frequency(lam)
        reports.append(ModeReport(lam, f_n, zeta, parts))
    return reports


@dataclass(frozen=True)
class StabilityVerdict:
    stable: bool
    margin: float        # -max Re(lambda); negative when unstable
    boundary: bool       # a mode sits exactly on the imaginary axis

    @property
    def verdict(self):
        return "stable" if self.stable else "unstable"


def stability_verdict(mode_reports) -> StabilityVerdict:
    worst = max(m.eigenvalue.real for m in mode_reports)
    # a mode on the axis is reported unstable with zero margin by convention
    return StabilityVerdict(stable=worst < 0.0, margin=-worst,
                            boundary=worst == 0.0)


def mode_report_json(mode_reports, path=None, max_participations=None):
    payload = []
    for m in mode_reports:
        d = m.to_dict()
        if max_participations is not None:
            d["participations"] = d["participations"][:max_participations]
        payload.append(d)
    text = json.dumps(payload, indent=2)
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text


# -- parameter sweeps --------------------------------------------------------


@dataclass
class SweepPoint:
    value: float
    eigenvalues: np.ndarray      # tracked order
    ok: bool
    reason: str = ""


@dataclass
class SweepResult:
    parameter: str
    points: list
    first_unstable: float | None
    crossing: float | None        # bisection-refined boundary value

    def to_csv(self, path):
        import csv

        n_modes = max((len(p.eigenvalues) for p in self.points if p.ok),
                      default=0)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            header = [self.parameter]
            for k in range(n_modes):
                header += [f"re_{k}", f"im_{k}"]
            w.writerow(header)
            for p in self.points:
                row = [repr(float(p.value))]
                if p.ok:
                    for lam in p.eigenvalues:
                        row += [repr(float(lam.real)), repr(float(lam.imag))]
                w.writerow(row)


def _spectrum(model, param, value, guess):
    model.set_param(param, value)
    eq = solve_equilibrium(model, x0=guess[0], z0=guess[1])
    lin = linearize(model, eq)
    lams, phi = sla.eig(lin.a_red, left=False, right=True)
    # unit-norm mode shapes for overlap matching
    phi = phi / np.linalg.norm(phi, axis=0, keepdims=True)
    return lams, phi, (eq.x, eq.z)


def _match_order(prev_phi, phi):
    overlap = np.abs(prev_phi.conj().T @ phi)
    _, cols = linear_sum_assignment(-overlap)
    return cols


def parameter_sweep(model: DaeModel, parameter: str, values,
                    refine_crossing=True, refine_rel_tol=0.01) -> SweepResult:
    """Tracked eigenvalue trajectories along a monotone parameter path.

    Modes are matched between consecutive points by eigenvector overlap.
    When the leading real part changes sign between two points, the boundary
    is bisection-refined to ``refine_rel_tol`` of the parameter value.
    """
    values = [float(v) for v in values]
    points = []
    prev_phi = None
    guess = (None, None)
    last_stable = None
    first_unstable = None
    for v in values:
        try:
            lams, phi, guess = _spectrum(model, parameter, v, guess)
        except (NoConvergence, NonEquilibrium, SingularAzz) as exc:
            points.append(SweepPoint(v, np.empty(0, complex), False, str(exc)))
            continue
        if prev_phi is not None and phi.shape == prev_phi.shape:
            order = _match_order(prev_phi, phi)
            lams, phi = lams[order], phi[:, order]
        points.append(SweepPoint(v, lams, True))
        prev_phi = phi
        if lams.real.max() < 0.0:
            last_stable = v
        elif first_unstable is None:
            first_unstable = v

    crossing = None
    if refine_crossing and first_unstable is not None and last_stable is not None:
        lo, hi = last_stable, first_unstable        # stable at lo
        guess = (None, None)
        while abs(hi - lo) > refine_rel_tol * max(abs(lo), abs(hi)):
            mid = 0.5 * (lo + hi)
            try:
                lams, _, guess = _spectrum(model, parameter, mid, guess)
            except (NoConvergence, NonEquilibrium, SingularAzz):
                break
            if lams.real.max() < 0.0:
                lo = mid
            else:
                hi = mid
        crossing = 0.5 * (lo + hi)

    return SweepResult(parameter=parameter, points=points,
                       first_unstable=first_unstable, crossing=crossing)
