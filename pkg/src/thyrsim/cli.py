"""Batch front end: scenario-driven studies with deterministic file outputs.

Subcommands
    simulate    time-domain trajectories (any subset of rms / emt / switching)
    scan-dc     DC output-impedance Bode CSV for one model
    scan-ac     dq admittance Bode CSVs (four channels) for one model
    linearize   reduced state-space matrices of an operating point (JSON)
    modes       eigenvalues, damping, frequency, participations (JSON)
    sweep       tracked eigenvalue loci along a parameter path (CSV + JSON)
    compare     tolerance check between two Bode CSVs

Exit codes: 0 success, 1 study-level failure (non-convergence, tolerance
fail), 2 configuration error.  Errors are emitted as one-line JSON on
stderr so callers can locate the offending key mechanically.  All output
files are written atomically (temp file in the target directory, then
rename).  ``THYRSIM_THREADS`` bounds worker threads for scan studies.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile

import numpy as np

from . import ssa
from .dae import integrate
from .errors import ConfigError, GridMismatch, ThyrsimError
from .scan import (FrequencyResponse, ScanPlan, compare_responses,
                   dc_scan_scenario, scan_ac_admittance, scan_dc_impedance)
from .scenarios import (build_dae_system, build_switching_params,
                        load_scenario, solve_operating_point, study_events)
from .switching import run_switching, run_to_periodic_steady_state

MODELS = ("rms", "emt", "switching")


def _atomic(path, writer):
    """Write through ``writer(tmp_path)`` and rename into place."""
    d = os.path.dirname(os.path.abspath(path)) or "."
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    os.close(fd)
    try:
        writer(tmp)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def _atomic_json(path, payload):
    _atomic(path, lambda p: open(p, "w").write(
        json.dumps(payload, indent=2) + "\n"))


def _require_study(scn, kind):
    study = scn.get("study")
    if study is None or study.get("kind") != kind:
        raise ConfigError(
            f"scenario {scn['name']!r} needs a study block of kind {kind!r}",
            key="study.kind")
    return study


def _plan_from_study(study):
    kw = {k: study[k] for k in
          ("f_min", "f_max", "n_points", "amplitude") if k in study}
    return ScanPlan(**kw)


def _out_path(args, filename):
    return os.path.join(args.out, filename)


# -- simulate -----------------------------------------------------------------

def _simulate_dae(scn, model, t_end, dt, events):
    dae, u0 = build_dae_system(scn, model)
    eq = solve_operating_point(dae, u0)
    return integrate(dae, (0.0, t_end), dt, u=u0, x0=eq.x, z0=eq.z,
                     events=events)


def _simulate_switching(scn, t_end, dt, events):
    """Start from periodic steady state, apply events by mutating the kernel."""
    params = build_switching_params(scn)
    stride = int(round(dt / params.dt))
    if stride < 1 or abs(stride * params.dt - dt) > 1e-12:
        raise ConfigError("study.dt must be a multiple of the switching "
                          "step size", key="study.dt")
    _, kern = run_to_periodic_steady_state(params, stride=stride)
    t0 = kern.t
    chunks = []
    t_done = 0.0
    for ev in sorted(events, key=lambda e: e.time) + [None]:
        t_next = t_end if ev is None else min(ev.time, t_end)
        if t_next > t_done:
            traj, kern = run_switching(params, t0 + t_next, stride=stride,
                                       kern=kern)
            chunks.append(traj)
            t_done = t_next
        if ev is not None:
            attr = ev.target.split(".")[-1]
            if not hasattr(kern, attr):
                raise ConfigError(f"unknown switching-model event target "
                                  f"{ev.target!r}", key="study.events")
            setattr(kern, attr, float(ev.value))
    first = chunks[0]
    out = first.__class__(
        *[np.concatenate([getattr(c, f) for c in chunks])
          for f in ("t", "i_dc", "v_dc", "i_a", "i_b", "i_c",
                    "alpha", "theta_pll", "mask")],
        params=params)
    out.t = out.t - t0
    return out


def cmd_simulate(args):
    scn = load_scenario(args.scenario)
    study = _require_study(scn, "simulate")
    t_end, dt = study["t_end"], study["dt"]
    models = [args.model] if args.model else list(MODELS)
    idc = {}
    t_ref = None
    for model in models:
        events = study_events(scn)
        if model == "switching":
            traj = _simulate_switching(scn, t_end, dt, events)
            i_dc = traj.i_dc
        else:
            traj = _simulate_dae(scn, model, t_end, dt, events)
            i_dc = traj["load.i_dc"]
            t_ref = traj.t
        _atomic(_out_path(args, f"{scn['name']}_sim_{model}.csv"),
                traj.to_csv)
        idc[model] = i_dc
    if len(models) > 1:
        n = min(len(v) for v in idc.values())
        if t_ref is None:
            t_ref = np.arange(n) * dt
        cols = ["time [s]"] + [f"i_dc_{m} [A]" for m in models]

        def write(path):
            import csv
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(cols)
                for k in range(n):
                    w.writerow([repr(float(t_ref[k]))] +
                               [repr(float(idc[m][k])) for m in models])

        _atomic(_out_path(args, f"{scn['name']}_idc_compare.csv"), write)
    return 0


# -- scans --------------------------------------------------------------------

def cmd_scan_dc(args):
    scn = load_scenario(args.scenario)
    study = _require_study(scn, "scan_dc")
    scn = dc_scan_scenario(scn)
    resp = scan_dc_impedance(scn, args.model, _plan_from_study(study))
    _atomic(_out_path(args, f"{scn['name']}_Zout_{args.model}.csv"),
            resp.to_csv)
    return 0


def cmd_scan_ac(args):
    scn = load_scenario(args.scenario)
    study = _require_study(scn, "scan_ac")
    chans = scan_ac_admittance(scn, args.model, _plan_from_study(study))
    for name, resp in chans.items():
        _atomic(_out_path(args, f"{scn['name']}_{name}_{args.model}.csv"),
                resp.to_csv)
    return 0


# -- small-signal analysis ----------------------------------------------------

def _linearized(scn, model):
    if model not in ("rms", "emt"):
        raise ConfigError("linearization needs an averaged model "
                          "(rms or emt)", key="model")
    dae, u0 = build_dae_system(scn, model)
    eq = solve_operating_point(dae, u0)
    return ssa.linearize(dae, eq)


def cmd_linearize(args):
    scn = load_scenario(args.scenario)
    lin = _linearized(scn, args.model)
    payload = {
        "scenario": scn["name"],
        "model": args.model,
        "state_names": list(lin.state_names),
        "input_names": list(lin.input_names),
        "a": lin.a_red.tolist(),
        "b": lin.b_red.tolist(),
        "eigenvalues": [[lam.real, lam.imag]
                        for lam in np.linalg.eigvals(lin.a_red)],
    }
    _atomic_json(_out_path(args, f"{scn['name']}_linear_{args.model}.json"),
                 payload)
    return 0


def cmd_modes(args):
    scn = load_scenario(args.scenario)
    lin = _linearized(scn, args.model)
    reports = ssa.modes(lin)
    verdict = ssa.stability_verdict(reports)
    payload = {
        "scenario": scn["name"],
        "model": args.model,
        "stable": verdict.stable,
        "margin": verdict.margin,
        "modes": [m.to_dict() for m in reports],
    }
    _atomic_json(_out_path(args, f"{scn['name']}_modes_{args.model}.json"),
                 payload)
    return 0


def cmd_sweep(args):
    scn = load_scenario(args.scenario)
    study = _require_study(scn, "sweep")
    lo, hi, n = study["from"], study["to"], study["points"]
    if study.get("log", False):
        values = np.geomspace(lo, hi, n)
    else:
        values = np.linspace(lo, hi, n)
    dae, u0 = build_dae_system(scn, args.model)
    dae.u0 = np.asarray(u0, dtype=float)
    result = ssa.parameter_sweep(dae, study["param"], values)
    base = f"{scn['name']}_sweep_{args.model}"
    _atomic(_out_path(args, base + ".csv"), result.to_csv)
    _atomic_json(_out_path(args, base + ".json"), {
        "scenario": scn["name"],
        "parameter": result.parameter,
        "first_unstable": result.first_unstable,
        "crossing": result.crossing,
        "all_stable": result.first_unstable is None,
    })
    return 0


# -- comparison ---------------------------------------------------------------

def cmd_compare(args):
    a = FrequencyResponse.from_csv(args.file_a, channel="a", model="a")
    b = FrequencyResponse.from_csv(args.file_b, channel="b", model="b")
    report = compare_responses(a, b, mag_tol_db=args.mag_tol_db,
                               phase_tol_deg=args.phase_tol_deg,
                               f_max=args.f_max)
    payload = report.to_dict()
    print(json.dumps(payload, indent=2))
    if args.report is not None:
        _atomic_json(args.report, payload)
    return 0 if report.passed else 1


# -- wiring -------------------------------------------------------------------

def _build_parser():
    p = argparse.ArgumentParser(
        prog="thyrsim",
        description="Thyristor-rectifier simulation and small-signal studies")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, model_default="emt", model_optional=False):
        sp.add_argument("--scenario", required=True,
                        help="bundled scenario name or path to a YAML file")
        sp.add_argument("--out", default=".", help="output directory")
        sp.add_argument("--seed", type=int, default=0,
                        help="RNG seed for noise-bearing studies")
        if model_optional:
            sp.add_argument("--model", choices=MODELS, default=None,
                            help="restrict to one model (default: all)")
        else:
            sp.add_argument("--model", choices=MODELS, default=model_default)

    sp = sub.add_parser("simulate", help="time-domain trajectories")
    common(sp, model_optional=True)
    sp.set_defaults(fn=cmd_simulate)

    sp = sub.add_parser("scan-dc", help="DC output impedance scan")
    common(sp)
    sp.set_defaults(fn=cmd_scan_dc)

    sp = sub.add_parser("scan-ac", help="dq admittance scan")
    common(sp)
    sp.set_defaults(fn=cmd_scan_ac)

    sp = sub.add_parser("linearize", help="operating-point state space")
    common(sp)
    sp.set_defaults(fn=cmd_linearize)

    sp = sub.add_parser("modes", help="eigenvalues and participations")
    common(sp)
    sp.set_defaults(fn=cmd_modes)

    sp = sub.add_parser("sweep", help="eigenvalue loci along a parameter")
    common(sp)
    sp.set_defaults(fn=cmd_sweep)

    sp = sub.add_parser("compare", help="tolerance check of two Bode CSVs")
    sp.add_argument("file_a")
    sp.add_argument("file_b")
    sp.add_argument("--mag-tol-db", type=float, default=1.0)
    sp.add_argument("--phase-tol-deg", type=float, default=5.0)
    sp.add_argument("--f-max", type=float, default=None)
    sp.add_argument("--report", default=None, help="optional JSON report path")
    sp.set_defaults(fn=cmd_compare)
    return p


def _emit_error(kind, exc):
    payload = {"error": kind, "type": type(exc).__name__, "message": str(exc)}
    key = getattr(exc, "key", None)
    if key is not None:
        payload["key"] = key
    print(json.dumps(payload), file=sys.stderr)


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        _emit_error("config", exc)
        return 2
    except GridMismatch as exc:
        _emit_error("study", exc)
        return 1
    except ThyrsimError as exc:
        _emit_error("study", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
