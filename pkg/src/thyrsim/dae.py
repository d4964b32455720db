"""Semi-explicit index-1 DAE composition, equilibrium solving, integration.

A composed model collects fragment differential states ``x``, algebraic
variables ``z`` (one per declared fragment output, residual ``z - h(...)``),
and unconnected fragment inputs ``u``. Connections route a fragment input to
another fragment's state or algebraic variable; optional nodes add shared
node-voltage algebraics with KCL residuals.

Integration is implicit trapezoidal with finite-difference Jacobians reused
across steps. Residuals are normalized per equation by the variable scales,
since SI magnitudes here span microhenries to kiloamps.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (AlgebraicSolveFailure, DanglingConnection, NoConvergence,
                     StepFailure, UnitMismatch)

_KIND_U, _KIND_X, _KIND_Z = 0, 1, 2


@dataclass(frozen=True)
class Var:
    name: str
    unit: str = ""
    init: float = 0.0
    scale: float = 1.0


class Fragment:
    """A model piece: states with derivatives, algebraic outputs, named inputs.

    Subclasses set ``states``, ``algebraics`` and ``inputs`` (lists of Var)
    and implement ``derivatives`` and ``outputs``; both receive the local
    state vector, resolved input vector, local algebraic vector and time.
    """

    states: list[Var] = []
    algebraics: list[Var] = []
    inputs: list[Var] = []

    def __init__(self, name: str):
        self.name = name

    def derivatives(self, t, x, u, z):
        return ()

    def outputs(self, t, x, u, z):
        return ()


@dataclass(frozen=True)
class Node:
    """Shared circuit node: one algebraic voltage variable plus a KCL residual.

    ``currents`` lists (source_ref, sign) pairs of fragment outputs summing
    to zero at the node.
    """
    name: str
    unit: str
    currents: tuple
    scale: float = 1.0


@dataclass
class Equilibrium:
    x: np.ndarray
    z: np.ndarray
    u: np.ndarray
    residual: float
    azz_condition: float | None = None


class DaeModel:
    """Composed DAE. Built via :func:`compose`; do not construct directly."""

    def __init__(self, fragments, connections, nodes):
        self.fragments = list(fragments)
        if not self.fragments:
            raise ValueError("fragment list is empty")
        names = [f.name for f in self.fragments]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate fragment names: {names}")

        self.state_names, self.state_units, self.state_scales, x0 = [], [], [], []
        self.alg_names, self.alg_units, self.alg_scales, z0 = [], [], [], []
        self._frag_state_slices = {}
        self._frag_alg_slices = {}
        for frag in self.fragments:
            s0 = len(self.state_names)
            for v in frag.states:
                self.state_names.append(f"{frag.name}.{v.name}")
                self.state_units.append(v.unit)
                self.state_scales.append(v.scale)
                x0.append(v.init)
            self._frag_state_slices[frag.name] = slice(s0, len(self.state_names))
            a0 = len(self.alg_names)
            for v in frag.algebraics:
                self.alg_names.append(f"{frag.name}.{v.name}")
                self.alg_units.append(v.unit)
                self.alg_scales.append(v.scale)
                z0.append(v.init)
            self._frag_alg_slices[frag.name] = slice(a0, len(self.alg_names))

        self.nodes = list(nodes)
        self._node_targets = []
        for node in self.nodes:
            self.alg_names.append(f"node.{node.name}")
            self.alg_units.append(node.unit)
            self.alg_scales.append(node.scale)
            z0.append(0.0)
            terms = []
            for ref, sign in node.currents:
                idx = self._lookup_alg(ref)
                terms.append((idx, float(sign)))
            self._node_targets.append(terms)

        # resolve connections: input_ref -> (kind, index)
        x_index = {n: i for i, n in enumerate(self.state_names)}
        z_index = {n: i for i, n in enumerate(self.alg_names)}
        unit_of = {}
        for n, un in zip(self.state_names, self.state_units):
            unit_of[n] = un
        for n, un in zip(self.alg_names, self.alg_units):
            unit_of[n] = un

        conn_map = {}
        for input_ref, source_ref in connections:
            frag_name, _, var_name = input_ref.partition(".")
            frag = next((f for f in self.fragments if f.name == frag_name), None)
            if frag is None or all(v.name != var_name for v in frag.inputs):
                raise DanglingConnection(f"no such input: {input_ref}")
            if source_ref in z_index:
                src = (_KIND_Z, z_index[source_ref])
            elif source_ref in x_index:
                src = (_KIND_X, x_index[source_ref])
            else:
                raise DanglingConnection(f"no such source: {source_ref}")
            in_var = next(v for v in frag.inputs if v.name == var_name)
            src_unit = unit_of[source_ref]
            if in_var.unit and src_unit and in_var.unit != src_unit:
                raise UnitMismatch(
                    f"{input_ref} [{in_var.unit}] <- {source_ref} [{src_unit}]")
            if input_ref in conn_map:
                raise DanglingConnection(f"input connected twice: {input_ref}")
            conn_map[input_ref] = src

        self.input_names, self.input_units, u0 = [], [], []
        self._frag_input_plans = {}
        for frag in self.fragments:
            plan = []
            for v in frag.inputs:
                ref = f"{frag.name}.{v.name}"
                if ref in conn_map:
                    plan.append(conn_map.pop(ref))
                else:
                    plan.append((_KIND_U, len(self.input_names)))
                    self.input_names.append(ref)
                    self.input_units.append(v.unit)
                    u0.append(v.init)
            self._frag_input_plans[frag.name] = plan
        assert not conn_map

        self.x0 = np.asarray(x0, dtype=float)
        self.z0 = np.asarray(z0, dtype=float)
        self.u0 = np.asarray(u0, dtype=float)
        self.state_scales = np.asarray(self.state_scales, dtype=float)
        self.alg_scales = np.asarray(self.alg_scales, dtype=float)
        self.nx = len(self.state_names)
        self.nz = len(self.alg_names)
        self.nu = len(self.input_names)

    def _lookup_alg(self, ref):
        try:
            return self.alg_names.index(ref)
        except ValueError:
            raise DanglingConnection(f"no such algebraic variable: {ref}") from None

    # -- variable lookup helpers ------------------------------------------
    def state_index(self, name: str) -> int:
        return self.state_names.index(name)

    def alg_index(self, name: str) -> int:
        return self.alg_names.index(name)

    def input_index(self, name: str) -> int:
        return self.input_names.index(name)

    def set_param(self, path: str, value):
        frag_name, _, attr = path.partition(".")
        for frag in self.fragments:
            if frag.name == frag_name:
                if not hasattr(frag, attr):
                    raise AttributeError(f"fragment {frag_name} has no parameter {attr}")
                setattr(frag, attr, value)
                return
        raise KeyError(f"no fragment named {frag_name}")

    def get_param(self, path: str):
        frag_name, _, attr = path.partition(".")
        for frag in self.fragments:
            if frag.name == frag_name:
                return getattr(frag, attr)
        raise KeyError(f"no fragment named {frag_name}")

    # -- evaluation --------------------------------------------------------
    def _local_u(self, frag, x, u, z):
        vals = []
        for kind, idx in self._frag_input_plans[frag.name]:
            if kind == _KIND_U:
                vals.append(u[idx])
            elif kind == _KIND_X:
                vals.append(x[idx])
            else:
                vals.append(z[idx])
        return vals

    def f(self, t, x, u, z):
        out = np.empty(self.nx)
        for frag in self.fragments:
            sl = self._frag_state_slices[frag.name]
            if sl.start == sl.stop:
                continue
            lu = self._local_u(frag, x, u, z)
            lz = z[self._frag_alg_slices[frag.name]]
            out[sl] = frag.derivatives(t, x[sl], lu, lz)
        return out

    def g(self, t, x, u, z):
        out = np.empty(self.nz)
        for frag in self.fragments:
            sl = self._frag_alg_slices[frag.name]
            if sl.start == sl.stop:
                continue
            lu = self._local_u(frag, x, u, z)
            h = frag.outputs(t, x[self._frag_state_slices[frag.name]], lu, z[sl])
            out[sl] = z[sl] - np.asarray(h)
        pos = self.nz - len(self._node_targets)
        for terms in self._node_targets:
            total = 0.0
            for idx, sign in terms:
                total += sign * z[idx]
            out[pos] = total
            pos += 1
        return out

    def residuals(self, t, x, u, z):
        """Stacked scaled residuals [f/x_scale; g/z_scale]."""
        fv = self.f(t, x, u, z) / self.state_scales if self.nx else np.empty(0)
        gv = self.g(t, x, u, z) / self.alg_scales if self.nz else np.empty(0)
        return np.concatenate([fv, gv])


def compose(fragments, connections=(), nodes=()) -> DaeModel:
    """Wire fragments into a single DAE; KCL residuals appended for nodes."""
    return DaeModel(fragments, connections, nodes)


# -- numerics ---------------------------------------------------------------

def _fd_jacobian(fun, y, scales, rel=1e-7):
    n = len(y)
    f0 = fun(y)
    J = np.empty((len(f0), n))
    for j in range(n):
        h = rel * max(abs(y[j]), scales[j])
        yp = y.copy()
        yp[j] += h
        J[:, j] = (fun(yp) - f0) / h
    return J


def solve_equilibrium(model: DaeModel, u=None, x0=None, z0=None,
                      tol=1e-9, max_iter=50) -> Equilibrium:
    """Newton solve of f = 0, g = 0 at fixed inputs; scaled residual < tol."""
    u = model.u0 if u is None else np.asarray(u, dtype=float)
    x = model.x0.copy() if x0 is None else np.asarray(x0, dtype=float).copy()
    z = model.z0.copy() if z0 is None else np.asarray(z0, dtype=float).copy()
    scales = np.concatenate([model.state_scales, model.alg_scales])

    def res(y):
        return model.residuals(0.0, y[:model.nx], u, y[model.nx:])

    y = np.concatenate([x, z])
    best = math.inf
    r = res(y)
    norm = np.max(np.abs(r)) if r.size else 0.0
    for _ in range(max_iter):
        if norm < tol:
            x, z = y[:model.nx], y[model.nx:]
            return Equilibrium(x=x.copy(), z=z.copy(), u=u.copy(), residual=norm)
        J = _fd_jacobian(res, y, scales)
        try:
            step = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError:
            raise NoConvergence("singular Jacobian in equilibrium solve",
                                best_residual=norm) from None
        lam = 1.0
        for _ in range(10):
            y_try = y + lam * step
            try:
                r_try = res(y_try)
                n_try = np.max(np.abs(r_try))
            except (ValueError, FloatingPointError, ArithmeticError):
                n_try = math.inf
            if n_try < norm or n_try < tol:
                break
            lam *= 0.5
        else:
            raise NoConvergence("line search stalled in equilibrium solve",
                                best_residual=norm)
        y, r, norm = y_try, r_try, n_try
        best = min(best, norm)
    raise NoConvergence(f"equilibrium not reached in {max_iter} iterations "
                        f"(best scaled residual {best:.3g})", best_residual=best)


def solve_consistent_z(model: DaeModel, t, x, u, z_guess, tol=1e-10, max_iter=30):
    """Solve g(t, x, u, z) = 0 for z at fixed x (consistent initialization)."""
    z = np.asarray(z_guess, dtype=float).copy()
    if model.nz == 0:
        return z

    def res(zv):
        return model.g(t, x, u, zv) / model.alg_scales

    r = res(z)
    for _ in range(max_iter):
        norm = np.max(np.abs(r))
        if norm < tol:
            return z
        J = _fd_jacobian(res, z, model.alg_scales)
        try:
            z = z + np.linalg.solve(J, -r)
        except np.linalg.LinAlgError:
            raise AlgebraicSolveFailure("singular algebraic Jacobian") from None
        r = res(z)
    raise AlgebraicSolveFailure(
        f"algebraic constraints not satisfied (residual {norm:.3g})")


@dataclass(frozen=True)
class Event:
    """Scheduled parameter change applied during integration."""
    time: float
    target: str     # "fragment.param"
    value: float


@dataclass
class Trajectory:
    t: np.ndarray
    x: np.ndarray
    z: np.ndarray
    state_names: list
    alg_names: list
    state_units: list
    alg_units: list
    event_log: list = field(default_factory=list)

    @property
    def columns(self):
        return ["time"] + self.state_names + self.alg_names

    def __getitem__(self, name):
        if name == "time":
            return self.t
        if name in self.state_names:
            return self.x[:, self.state_names.index(name)]
        if name in self.alg_names:
            return self.z[:, self.alg_names.index(name)]
        raise KeyError(name)

    def to_csv(self, path):
        """Write the common trajectory schema: one header row, registry order."""
        import csv

        units = ["s"] + list(self.state_units) + list(self.alg_units)
        header = [f"{n} [{u}]" if u else n for n, u in zip(self.columns, units)]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for i in range(len(self.t)):
                w.writerow([repr(float(self.t[i]))]
                           + [repr(float(v)) for v in self.x[i]]
                           + [repr(float(v)) for v in self.z[i]])


def integrate(model: DaeModel, t_span, dt, u=None, x0=None, z0=None,
              events=(), newton_tol=1e-8, max_newton=12) -> Trajectory:
    """Fixed-step implicit trapezoidal integration with consistent z.

    ``u`` may be a constant vector or a callable ``u(t)``. Events are
    parameter steps applied at their scheduled times (algebraic variables
    re-solved for consistency afterwards).
    """
    t0, t_end = float(t_span[0]), float(t_span[1])
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    if callable(u):
        u_fn = u
    else:
        u_const = model.u0 if u is None else np.asarray(u, dtype=float)
        u_fn = lambda t: u_const
    x = model.x0.copy() if x0 is None else np.asarray(x0, dtype=float).copy()
    z_guess = model.z0.copy() if z0 is None else np.asarray(z0, dtype=float).copy()
    z = solve_consistent_z(model, t0, x, u_fn(t0), z_guess)

    n_steps = int(round((t_end - t0) / dt))
    events = sorted(events, key=lambda e: e.time)
    ev_i = 0
    event_log = []

    ts = np.empty(n_steps + 1)
    xs = np.empty((n_steps + 1, model.nx))
    zs = np.empty((n_steps + 1, model.nz))
    ts[0], xs[0], zs[0] = t0, x, z

    scales = np.concatenate([model.state_scales, model.alg_scales])
    lu_cache = [None]

    def step_residual(y1, t1, u1, x_n, f_n):
        x1 = y1[:model.nx]
        z1 = y1[model.nx:]
        f1 = model.f(t1, x1, u1, z1)
        rx = (x1 - x_n - 0.5 * dt * (f_n + f1)) / (model.state_scales * max(dt, 1e-12))
        rz = model.g(t1, x1, u1, z1) / model.alg_scales
        return np.concatenate([rx, rz])

    import scipy.linalg as sla

    for k in range(n_steps):
        t_n = t0 + k * dt
        t1 = t0 + (k + 1) * dt
        # apply any events scheduled within (t_n, t1]
        while ev_i < len(events) and events[ev_i].time <= t_n + 1e-12:
            ev = events[ev_i]
            model.set_param(ev.target, ev.value)
            z = solve_consistent_z(model, t_n, x, u_fn(t_n), z)
            event_log.append((t_n, ev.target, ev.value))
            lu_cache[0] = None
            ev_i += 1

        u_n = u_fn(t_n)
        u1 = u_fn(t1)
        f_n = model.f(t_n, x, u_n, z)
        y = np.concatenate([x + dt * f_n, z])  # explicit predictor

        res = lambda yv: step_residual(yv, t1, u1, x, f_n)
        r = res(y)
        converged = False
        fresh = False
        for _ in range(2 * max_newton):
            norm = np.max(np.abs(r))
            if norm < newton_tol:
                converged = True
                break
            if lu_cache[0] is None:
                J = _fd_jacobian(res, y, scales)
                try:
                    lu_cache[0] = sla.lu_factor(J)
                except (np.linalg.LinAlgError, ValueError):
                    raise StepFailure(f"singular step Jacobian at t={t1:.6g}")
                fresh = True
            try:
                step = sla.lu_solve(lu_cache[0], -r)
            except ValueError:
                raise StepFailure(f"Jacobian solve failed at t={t1:.6g}")
            y_new = y + step
            r_new = res(y_new)
            improving = np.all(np.isfinite(r_new)) and np.max(np.abs(r_new)) < norm
            if not improving:
                if not fresh:
                    lu_cache[0] = None  # stale Jacobian; rebuild and retry
                    continue
                lam = 0.5
                while lam > 1e-3:
                    y_new = y + lam * step
                    r_new = res(y_new)
                    if np.all(np.isfinite(r_new)) and np.max(np.abs(r_new)) < norm:
                        break
                    lam *= 0.5
                else:
                    raise StepFailure(
                        f"Newton stalled at t={t1:.6g} (residual {norm:.3g})")
            if np.max(np.abs(r_new)) > 0.2 * norm:
                lu_cache[0] = None  # slow contraction; refresh next pass
                fresh = False
            y, r = y_new, r_new
        if not converged:
            raise StepFailure(f"step did not converge at t={t1:.6g}")
        x, z = y[:model.nx].copy(), y[model.nx:].copy()
        ts[k + 1], xs[k + 1], zs[k + 1] = t1, x, z

    return Trajectory(t=ts, x=xs, z=zs,
                      state_names=list(model.state_names),
                      alg_names=list(model.alg_names),
                      state_units=list(model.state_units),
                      alg_units=list(model.alg_units),
                      event_log=event_log)
