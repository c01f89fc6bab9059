"""JSON run configuration: strict schema walk with full violation reporting.

Unknown keys are rejected with their paths; every violation found is reported
in one pass.  A first-component forcing entry is rejected explicitly (the
model has no axial load by assumption).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .dynamics import DissipationFields, ForcingModel, SimulationConfig
from .errors import ConfigError
from .material import STRESS_MODES, MaterialModel

_SECTION_SHAPES = ("disk", "square", "rectangle", "file")
_FORCING_KEYS = ("f2", "f3", "rho2", "rho3", "sigma")
_INITIAL_KEYS = ("v2", "v3", "vel2", "vel3")


@dataclass
class SectionSpec:
    shape: str
    resolution: int = 0
    aspect: float | None = None
    path: str | None = None


@dataclass
class RodSpec:
    L: float
    n_elem: int


@dataclass
class RunConfig:
    material: MaterialModel
    section: SectionSpec
    rod: RodSpec | None
    dynamics: SimulationConfig | None
    forcing: ForcingModel
    dissipation: DissipationFields
    initial: dict = field(default_factory=dict)   # raw profile specs, resolved at dispatch
    out: str | None = None
    stride: int = 1


class _Walker:
    def __init__(self):
        self.violations: list[str] = []

    def fail(self, path, msg):
        self.violations.append(f"{path}: {msg}")

    def block(self, data, path, allowed):
        if not isinstance(data, dict):
            self.fail(path, "must be an object")
            return {}
        for key in data:
            if key == "f1" and path == "forcing":
                self.fail("forcing.f1", "axial forcing must vanish (the model assumes f1 = 0)")
            elif key not in allowed:
                self.fail(f"{path}.{key}", "unknown key")
        return data

    def number(self, data, path, *, positive=False, nonneg=False, default=None):
        key = path.split(".")[-1]
        if key not in data:
            if default is None:
                self.fail(path, "missing required key")
            return default
        v = data[key]
        if not isinstance(v, (int, float)) or isinstance(v, bool):
            self.fail(path, f"must be a number, got {type(v).__name__}")
            return default
        if positive and not v > 0:
            self.fail(path, f"must be strictly positive, got {v}")
        if nonneg and v < 0:
            self.fail(path, f"must be nonnegative, got {v}")
        return float(v)

    def integer(self, data, path, *, minimum=None, default=None):
        key = path.split(".")[-1]
        if key not in data:
            if default is None:
                self.fail(path, "missing required key")
            return default
        v = data[key]
        if not isinstance(v, int) or isinstance(v, bool):
            self.fail(path, f"must be an integer, got {type(v).__name__}")
            return default
        if minimum is not None and v < minimum:
            self.fail(path, f"must be >= {minimum}, got {v}")
        return v

    def choice(self, data, path, options, default=None):
        key = path.split(".")[-1]
        if key not in data:
            if default is None:
                self.fail(path, "missing required key")
            return default
        v = data[key]
        if v not in options:
            self.fail(path, f"must be one of {options}, got {v!r}")
            return default
        return v


def _space_profile(walker: _Walker, spec, path):
    """None | constant | tabulated profile -> callable(x) or None."""
    if spec is None:
        return None
    if not isinstance(spec, dict) or "type" not in spec:
        walker.fail(path, "profile must be an object with a 'type' key")
        return None
    kind = spec["type"]
    if kind == "zero":
        walker.block(spec, path, ("type",))
        return None
    if kind == "constant":
        walker.block(spec, path, ("type", "value"))
        v = walker.number(spec, f"{path}.value")
        return None if v is None else (lambda x, v=v: np.full_like(np.asarray(x, float), v))
    if kind == "tabulated":
        walker.block(spec, path, ("type", "x", "values"))
        xs, vals = spec.get("x"), spec.get("values")
        if not (isinstance(xs, list) and isinstance(vals, list) and len(xs) == len(vals) and len(xs) >= 2):
            walker.fail(path, "tabulated profile needs lists 'x' and 'values' of equal length >= 2")
            return None
        xs, vals = np.asarray(xs, float), np.asarray(vals, float)
        if not np.all(np.diff(xs) > 0):
            walker.fail(f"{path}.x", "sample points must be strictly increasing")
            return None
        return lambda x, xs=xs, vals=vals: np.interp(np.asarray(x, float), xs, vals)
    walker.fail(f"{path}.type", f"unknown profile type {kind!r}")
    return None


def _time_space_profile(walker: _Walker, spec, path):
    """Profile for f_k; same kinds, wrapped as callables of (t, x)."""
    f = _space_profile(walker, spec, path)
    if f is None:
        return None
    return lambda t, x, f=f: f(x)


def _initial_profile(walker: _Walker, spec, path, velocity: bool):
    """Validated initial-data spec, kept symbolic (resolved against the problem)."""
    if spec is None:
        return None
    if not isinstance(spec, dict) or "type" not in spec:
        walker.fail(path, "profile must be an object with a 'type' key")
        return None
    kind = spec["type"]
    if kind == "zero":
        walker.block(spec, path, ("type",))
        return None
    if kind == "eigenmode":
        walker.block(spec, path, ("type", "index", "amplitude"))
        walker.integer(spec, f"{path}.index", minimum=1, default=1)
        walker.number(spec, f"{path}.amplitude")
        return dict(spec)
    if kind == "bump":
        walker.block(spec, path, ("type", "amplitude"))
        walker.number(spec, f"{path}.amplitude")
        return dict(spec)
    if kind == "tabulated":
        keys = ("type", "x", "values") + (() if velocity else ("slopes",))
        walker.block(spec, path, keys)
        need = ["x", "values"] + ([] if velocity else ["slopes"])
        for k in need:
            if not isinstance(spec.get(k), list):
                walker.fail(f"{path}.{k}", "missing or not a list")
        return dict(spec)
    walker.fail(f"{path}.type", f"unknown initial profile type {kind!r}")
    return None


def validate_config(raw: dict) -> RunConfig:
    w = _Walker()
    if not isinstance(raw, dict):
        raise ConfigError(["top level: must be a JSON object"])
    w.block(raw, "config", ("material", "section", "rod", "dynamics", "forcing", "initial", "io"))

    # material ---------------------------------------------------------------
    mat_raw = raw.get("material")
    material = None
    if mat_raw is None:
        w.fail("material", "missing required block")
    else:
        w.block(mat_raw, "material", ("lambda", "mu", "stress_mode", "hooke_voigt"))
        lam = w.number(mat_raw, "material.lambda", nonneg=True, default=0.0 if "hooke_voigt" in mat_raw else None)
        mu = w.number(mat_raw, "material.mu", positive=True, default=1.0 if "hooke_voigt" in mat_raw else None)
        mode = w.choice(mat_raw, "material.stress_mode", STRESS_MODES, default="nonlinear")
        voigt = mat_raw.get("hooke_voigt")
        if not w.violations:
            try:
                material = MaterialModel(lam=lam, mu=mu, mode=mode, hooke_voigt=voigt)
            except ConfigError as e:
                w.violations.extend("material." + v if not v.startswith("material") else v for v in e.violations)

    # section -----------------------------------------------------------------
    sec_raw = raw.get("section")
    section = None
    if sec_raw is None:
        w.fail("section", "missing required block")
    else:
        w.block(sec_raw, "section", ("shape", "resolution", "aspect", "path"))
        shape = w.choice(sec_raw, "section.shape", _SECTION_SHAPES)
        if shape == "file":
            path = sec_raw.get("path")
            if not isinstance(path, str):
                w.fail("section.path", "file sections need a string path")
            section = SectionSpec(shape="file", path=path)
        elif shape is not None:
            res = w.integer(sec_raw, "section.resolution", minimum=1)
            aspect = None
            if shape == "rectangle":
                aspect = w.number(sec_raw, "section.aspect", positive=True)
            elif "aspect" in sec_raw:
                w.fail("section.aspect", "only rectangle sections take an aspect ratio")
            section = SectionSpec(shape=shape, resolution=res or 1, aspect=aspect)

    # rod / dynamics ------------------------------------------------------------
    rod = None
    if "rod" in raw:
        rod_raw = w.block(raw["rod"], "rod", ("L", "n_elem"))
        L = w.number(rod_raw, "rod.L", positive=True)
        n_elem = w.integer(rod_raw, "rod.n_elem", minimum=2)
        if L is not None and n_elem is not None:
            rod = RodSpec(L=L, n_elem=n_elem)

    stride = 1
    out = None
    if "io" in raw:
        io_raw = w.block(raw["io"], "io", ("out", "stride"))
        stride = w.integer(io_raw, "io.stride", minimum=1, default=1)
        out = io_raw.get("out")
        if out is not None and not isinstance(out, str):
            w.fail("io.out", "must be a string path")

    dynamics = None
    if "dynamics" in raw:
        dyn_raw = w.block(raw["dynamics"], "dynamics", ("dt", "t_final", "newton_tol", "newton_max"))
        dt = w.number(dyn_raw, "dynamics.dt", positive=True)
        t_final = w.number(dyn_raw, "dynamics.t_final", positive=True)
        tol = w.number(dyn_raw, "dynamics.newton_tol", positive=True, default=1e-11)
        nmax = w.integer(dyn_raw, "dynamics.newton_max", minimum=1, default=30)
        if dt is not None and t_final is not None and not w.violations:
            dynamics = SimulationConfig(dt=dt, t_final=t_final, newton_tol=tol, newton_max=nmax,
                                        output_stride=stride)

    # forcing / dissipation -------------------------------------------------------
    forcing = ForcingModel()
    dissipation = DissipationFields()
    if "forcing" in raw:
        frc = w.block(raw["forcing"], "forcing", _FORCING_KEYS)
        forcing = ForcingModel(
            f2=_time_space_profile(w, frc.get("f2"), "forcing.f2"),
            f3=_time_space_profile(w, frc.get("f3"), "forcing.f3"),
        )
        dissipation = DissipationFields(
            rho2=_space_profile(w, frc.get("rho2"), "forcing.rho2"),
            rho3=_space_profile(w, frc.get("rho3"), "forcing.rho3"),
            sigma=_space_profile(w, frc.get("sigma"), "forcing.sigma"),
        )

    initial = {}
    if "initial" in raw:
        ini = w.block(raw["initial"], "initial", _INITIAL_KEYS)
        for key in _INITIAL_KEYS:
            prof = _initial_profile(w, ini.get(key), f"initial.{key}", velocity=key.startswith("vel"))
            if prof is not None:
                initial[key] = prof

    if w.violations:
        raise ConfigError(w.violations)
    return RunConfig(
        material=material,
        section=section,
        rod=rod,
        dynamics=dynamics,
        forcing=forcing,
        dissipation=dissipation,
        initial=initial,
        out=out,
        stride=stride,
    )


def parse_config(path) -> RunConfig:
    try:
        with open(path) as f:
            raw = json.load(f)
    except OSError as e:
        raise ConfigError([f"cannot read config {path}: {e}"]) from e
    except json.JSONDecodeError as e:
        raise ConfigError([f"invalid JSON in {path}: {e}"]) from e
    return validate_config(raw)
