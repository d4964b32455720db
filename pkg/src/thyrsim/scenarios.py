"""Scenario files: schema validation, bundled studies, and system builders.

A scenario is a YAML document describing one composed system (grid source,
rectifier, DC load, controller), a nominal operating point, and a study to
run on it. Builders assemble the corresponding phasor or averaged DAE model,
or the switching-simulator parameter set, so every front end (CLI, tests,
scans) constructs systems the same way.
"""
from __future__ import annotations

import importlib.resources
import math

import numpy as np
import yaml
from jsonschema import Draft202012Validator

from .dae import compose, solve_equilibrium
from .emt import EmtParams, EmtRectifier
from .errors import ConfigError
from .network import (BandwidthPiCurrentController, CurrentLoad, Electrolyzer,
                      PiCurrentController, StiffSource, VsmSource,
                      WeakGridSource)
from .rms import RmsParams, RmsRectifier
from .switching import SwitchingParams

SCHEMA = {
    "type": "object",
    "required": ["name", "grid", "rectifier", "load", "control"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string"},
        "description": {"type": "string"},
        "grid": {
            "type": "object",
            "required": ["v_m", "f_hz", "source"],
            "additionalProperties": False,
            "properties": {
                "v_m": {"type": "number", "exclusiveMinimum": 0},
                "f_hz": {"type": "number", "exclusiveMinimum": 0},
                "source": {"enum": ["stiff", "weak", "vsm"]},
                "r_g": {"type": "number", "minimum": 0},
                "l_g": {"type": "number", "exclusiveMinimum": 0},
                "c_f": {"type": "number", "exclusiveMinimum": 0},
                "rating": {"type": "number", "exclusiveMinimum": 0},
                "h": {"type": "number", "exclusiveMinimum": 0},
                "d": {"type": "number", "minimum": 0},
                "t_v": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "rectifier": {
            "type": "object",
            "required": ["l_c"],
            "additionalProperties": False,
            "properties": {
                "l_c": {"type": "number", "exclusiveMinimum": 0},
                "pulses": {"enum": [6, 12]},
                "pll_kp": {"type": "number", "exclusiveMinimum": 0},
                "pll_ki": {"type": "number", "exclusiveMinimum": 0},
                "firing_filter_hz": {"type": ["number", "null"]},
                "current_mode": {"enum": ["exact", "linear"]},
            },
        },
        "load": {
            "type": "object",
            "required": ["kind"],
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["electrolyzer", "current"]},
                "l_d": {"type": "number", "minimum": 0},
                "r0": {"type": "number", "minimum": 0},
                "r1": {"type": "number", "exclusiveMinimum": 0},
                "c1": {"type": "number", "exclusiveMinimum": 0},
                "v_rev": {"type": "number", "minimum": 0},
                "i0": {"type": "number"},
                "track_hz": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "control": {
            "type": "object",
            "required": ["kind"],
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["constant", "pi", "pi_bandwidth"]},
                "alpha_deg": {"type": "number", "minimum": 0, "maximum": 90},
                "kp": {"type": "number", "minimum": 0},
                "ki": {"type": "number", "minimum": 0},
                "bandwidth_hz": {"type": "number", "exclusiveMinimum": 0},
                "i_ref": {"type": "number"},
            },
        },
        "study": {
            "type": "object",
            "required": ["kind"],
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["simulate", "scan_dc", "scan_ac",
                                  "linearize", "modes", "sweep"]},
                "t_end": {"type": "number", "exclusiveMinimum": 0},
                "dt": {"type": "number", "exclusiveMinimum": 0},
                "events": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "required": ["time", "target", "value"],
                        "additionalProperties": False,
                        "properties": {
                            "time": {"type": "number", "minimum": 0},
                            "target": {"type": "string"},
                            "value": {"type": "number"},
                        },
                    },
                },
                "f_min": {"type": "number", "exclusiveMinimum": 0},
                "f_max": {"type": "number", "exclusiveMinimum": 0},
                "n_points": {"type": "integer", "minimum": 2},
                "amplitude": {"type": "number", "exclusiveMinimum": 0,
                              "maximum": 0.05},
                "param": {"type": "string"},
                "from": {"type": "number"},
                "to": {"type": "number"},
                "points": {"type": "integer", "minimum": 2},
                "log": {"type": "boolean"},
            },
        },
    },
}

_DEFAULTS = {
    "rectifier": {"pulses": 6, "pll_kp": 1.0, "pll_ki": 33.0,
                  "firing_filter_hz": None, "current_mode": "exact"},
    "load": {"l_d": 20e-6, "r0": 0.8e-3, "r1": 3e-3, "c1": 10.0,
             "v_rev": 100.0, "i0": 10e3, "track_hz": 2000.0},
    "control": {"alpha_deg": 40.0, "kp": 2e-5, "ki": 6e-3, "i_ref": 10e3,
                "bandwidth_hz": 20.0},
}

BUNDLED = ("default", "fig6", "fig7", "fig8", "fig10a", "fig10b")


def validate_scenario(doc) -> dict:
    """Schema-check a scenario document and fill in defaults."""
    errors = sorted(Draft202012Validator(SCHEMA).iter_errors(doc),
                    key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        key = ".".join(str(p) for p in e.absolute_path) or "<root>"
        raise ConfigError(f"{key}: {e.message}", key=key)
    scn = {k: (dict(v) if isinstance(v, dict) else v) for k, v in doc.items()}
    for section, defaults in _DEFAULTS.items():
        for k, v in defaults.items():
            scn[section].setdefault(k, v)
    kind = scn["load"]["kind"]
    ctrl = scn["control"]["kind"]
    if ctrl in ("pi", "pi_bandwidth") and kind == "current":
        raise ConfigError(
            "control.kind: PI current control conflicts with the prescribed "
            "current load", key="control.kind")
    if scn["grid"]["source"] == "weak":
        for k in ("r_g", "l_g", "c_f"):
            if k not in scn["grid"]:
                raise ConfigError(f"grid.{k}: required for the weak source",
                                  key=f"grid.{k}")
    if scn["grid"]["source"] == "vsm":
        for k in ("rating", "h", "d", "t_v"):
            if k not in scn["grid"]:
                raise ConfigError(f"grid.{k}: required for the vsm source",
                                  key=f"grid.{k}")
    return scn


def load_scenario(name_or_path) -> dict:
    """Load and validate a bundled scenario name or a YAML file path."""
    text = None
    if isinstance(name_or_path, str) and name_or_path in BUNDLED:
        res = importlib.resources.files("thyrsim.data") / f"{name_or_path}.yaml"
        text = res.read_text()
    else:
        try:
            with open(name_or_path) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read scenario: {exc}",
                              key=str(name_or_path)) from None
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML: {exc}", key=str(name_or_path)) from None
    if not isinstance(doc, dict):
        raise ConfigError("scenario must be a mapping", key=str(name_or_path))
    return validate_scenario(doc)


# -- builders ------------------------------------------------------------------


def _loop_constants(scn):
    """First-order DC-loop constants used for bandwidth-mode PI tuning."""
    g = scn["grid"]
    r = scn["rectifier"]
    ld = scn["load"]
    n = r["pulses"] // 6
    alpha0 = math.radians(scn["control"]["alpha_deg"])
    omega = 2.0 * math.pi * g["f_hz"]
    k_v = 3.0 * math.sqrt(3.0) / math.pi
    k_plant = n * k_v * g["v_m"] * math.sin(alpha0)
    r_dc = 3.0 * omega * r["l_c"] / math.pi
    l_loop = ld["l_d"] + 2.0 * n * r["l_c"]
    r_loop = ld["r0"] + ld["r1"] + n * r_dc
    return k_plant, l_loop, r_loop


def build_dae_system(scn: dict, model: str):
    """Compose the scenario as a DAE; returns (model, u0).

    ``model`` selects the rectifier fidelity: "rms" or "emt". Fragment names
    are fixed (src, rect, load, ctrl) so studies can address parameters and
    signals uniformly.
    """
    if model not in ("rms", "emt"):
        raise ConfigError(f"unknown dae model {model!r}", key="model")
    g = scn["grid"]
    r = scn["rectifier"]
    ld = scn["load"]
    ct = scn["control"]
    omega = 2.0 * math.pi * g["f_hz"]
    i_base = max(abs(ld["i0"]), abs(ct.get("i_ref", 0.0)), 1.0)
    alpha0 = math.radians(ct["alpha_deg"])

    if g["source"] == "stiff":
        src = StiffSource("src", v_m=g["v_m"], omega_g=omega)
        src_conn = []
    elif g["source"] == "weak":
        src = WeakGridSource("src", v_m=g["v_m"], omega_g=omega,
                             r_g=g["r_g"], l_g=g["l_g"], c_f=g["c_f"],
                             i_base=i_base)
        src_conn = [("src.i_rd", "rect.i_gd"), ("src.i_rq", "rect.i_gq")]
    else:
        src = VsmSource("src", rating=g["rating"], h=g["h"], d=g["d"],
                        t_v=g["t_v"], v_ref=g["v_m"], omega_n=omega,
                        i_base=i_base)
        src_conn = [("src.i_rd", "rect.i_gd"), ("src.i_rq", "rect.i_gq")]

    if model == "emt":
        params = EmtParams(l_c=r["l_c"], pll_kp=r["pll_kp"],
                           pll_ki=r["pll_ki"], omega_n=omega,
                           pulses=r["pulses"],
                           firing_filter_hz=r["firing_filter_hz"],
                           current_mode=r["current_mode"],
                           v_nominal=g["v_m"])
        rect = EmtRectifier("rect", params, alpha_init=alpha0, i_base=i_base)
    else:
        rect = RmsRectifier("rect", RmsParams(l_c=r["l_c"], omega_g=omega,
                                              pulses=r["pulses"]),
                            v_nominal=g["v_m"], i_base=i_base)

    if ld["kind"] == "electrolyzer":
        load = Electrolyzer("load", l_d=ld["l_d"], r0=ld["r0"], r1=ld["r1"],
                            c1=ld["c1"], v_rev=ld["v_rev"], i_init=ld["i0"],
                            i_base=i_base, v_base=max(g["v_m"], 1.0))
    else:
        load = CurrentLoad("load", omega_track=2.0 * math.pi * ld["track_hz"],
                           i_init=ld["i0"], i_base=i_base,
                           v_base=max(g["v_m"], 1.0))

    fragments = [src, rect, load]
    connections = src_conn + [
        ("rect.v_gd", "src.v_gd"), ("rect.v_gq", "src.v_gq"),
        ("rect.i_dc", "load.i_dc"),
        ("load.e_dc", "rect.e_dc"), ("load.l_ext", "rect.l_eff"),
    ]
    if ct["kind"] != "constant":
        if ct["kind"] == "pi":
            ctrl = PiCurrentController("ctrl", kp=ct["kp"], ki=ct["ki"],
                                       alpha0=alpha0, i_base=i_base)
        else:
            k_plant, l_loop, r_loop = _loop_constants(scn)
            ctrl = BandwidthPiCurrentController(
                "ctrl", bandwidth_hz=ct["bandwidth_hz"], k_plant=k_plant,
                l_loop=l_loop, r_loop=r_loop, alpha0=alpha0, i_base=i_base)
        fragments.append(ctrl)
        connections += [("ctrl.i_dc", "load.i_dc"),
                        ("rect.alpha_cmd", "ctrl.alpha_cmd")]

    dae = compose(fragments, connections=connections)
    u0 = dae.u0.copy()
    if ct["kind"] != "constant":
        u0[dae.input_index("ctrl.i_ref")] = ct["i_ref"]
    else:
        u0[dae.input_index("rect.alpha_cmd")] = alpha0
    if ld["kind"] == "current":
        u0[dae.input_index("load.i_cmd")] = ld["i0"]
    return dae, u0


def build_switching_params(scn: dict, **overrides) -> SwitchingParams:
    """Scenario as the switching-oracle parameter set."""
    if scn["grid"]["source"] != "stiff":
        raise ConfigError("the switching model supports only the stiff "
                          "source", key="grid.source")
    g = scn["grid"]
    r = scn["rectifier"]
    ld = scn["load"]
    ct = scn["control"]
    if ct["kind"] == "pi_bandwidth":
        k_plant, l_loop, r_loop = _loop_constants(scn)
        from .network import pi_gains_for_bandwidth
        kp, ki = pi_gains_for_bandwidth(ct["bandwidth_hz"], k_plant,
                                        l_loop, r_loop)
    else:
        kp, ki = ct["kp"], ct["ki"]
    kw = dict(
        v_m=g["v_m"], omega_g=2.0 * math.pi * g["f_hz"], l_c=r["l_c"],
        pulses=r["pulses"], load=ld["kind"],
        l_d=ld["l_d"], r0=ld["r0"], r1=ld["r1"], c1=ld["c1"],
        v_rev=ld["v_rev"], i0=ld["i0"],
        control="constant" if ct["kind"] == "constant" else "pi",
        alpha0=math.radians(ct["alpha_deg"]),
        pi_kp=kp, pi_ki=ki, i_ref=ct.get("i_ref", 0.0),
        firing_filter_hz=r["firing_filter_hz"],
        pll_kp=r["pll_kp"], pll_ki=r["pll_ki"],
    )
    kw.update(overrides)
    return SwitchingParams(**kw)


def solve_operating_point(dae, u0, **kw):
    """Equilibrium of a built DAE system at its nominal inputs."""
    return solve_equilibrium(dae, u=u0, **kw)


def study_events(scn):
    from .dae import Event

    study = scn.get("study", {})
    return [Event(time=e["time"], target=e["target"], value=e["value"])
            for e in study.get("events", ())]
