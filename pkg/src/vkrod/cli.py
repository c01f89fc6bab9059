"""Command-line pipelines: cell, run, rescale, convergence.

Outputs are deterministic: every float is printed with 17 significant digits
and nothing depends on wall clock or randomness, so identical inputs give
byte-identical artifacts.  VKROD_THREADS caps the internal fan-out of
independent per-h work (default: all cores).
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import cell as cell_mod
from . import mesh2d, rescale
from .config import RunConfig, parse_config
from .dynamics import Integrator, initial_state
from .errors import ConfigError, OutputError, VkrodError
from .rod1d import RodProblem, build_spaces


def _fmt(x) -> str:
    return f"{float(x):.17g}"


def _json_dumps(obj, indent=0) -> str:
    pad = "  " * indent
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f'{pad}  "{k}": {_json_dumps(v, indent + 1)}' for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + f"\n{pad}}}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        flat = all(not isinstance(v, (dict, list, tuple)) for v in obj)
        if flat:
            return "[" + ", ".join(_json_dumps(v) for v in obj) + "]"
        items = [f"{pad}  {_json_dumps(v, indent + 1)}" for v in obj]
        return "[\n" + ",\n".join(items) + f"\n{pad}]"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt(obj)
    if obj is None:
        return "null"
    return '"' + str(obj).replace("\\", "\\\\").replace('"', '\\"') + '"'


def thread_count() -> int:
    raw = os.environ.get("VKROD_THREADS", "")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            raise ConfigError([f"VKROD_THREADS must be an integer, got {raw!r}"])
    return os.cpu_count() or 1


def parallel_map(fn, items):
    """Order-preserving map over independent work items."""
    n = thread_count()
    items = list(items)
    if n <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=min(n, len(items))) as ex:
        return list(ex.map(fn, items))


def _write_text(path, text: str):
    try:
        with open(path, "w") as f:
            f.write(text)
    except OSError as e:
        raise OutputError(f"cannot write {path}: {e}") from e


def build_section(cfg: RunConfig):
    spec = cfg.section
    if spec.shape == "file":
        raw = mesh2d.load_mesh(spec.path)
    else:
        raw = mesh2d.generate_mesh(spec.shape, spec.resolution, spec.aspect)
    mesh, report = mesh2d.normalize(raw)
    return mesh, report


def _resolve_initial(problem: RodProblem, cfg: RunConfig):
    """Turn validated initial-profile specs into a RodState."""
    sp = problem.spaces
    L = sp.L

    def mode_coeffs(spec, component):
        idx = spec.get("index", 1)
        amp = spec.get("amplitude", 0.0)
        _, modes = problem.linearized_modes(idx, component=component)
        c = modes[:, idx - 1]
        vals = sp.hermite.eval_matrix(sp.mesh.nodes, 0) @ c
        peak = vals[np.abs(vals).argmax()]
        return (amp / peak) * c

    def deflection(key, component):
        spec = cfg.initial.get(key)
        if spec is None:
            return None
        if spec["type"] == "eigenmode":
            return mode_coeffs(spec, component)
        if spec["type"] == "bump":
            a = spec.get("amplitude", 0.0)
            return (
                lambda x: a * x**2 * (L - x) ** 2,
                lambda x: a * (2 * x * (L - x) ** 2 - 2 * x**2 * (L - x)),
            )
        xs = np.asarray(spec["x"], float)
        vals = np.asarray(spec["values"], float)
        slopes = np.asarray(spec["slopes"], float)
        return (
            lambda x: np.interp(x, xs, vals),
            lambda x: np.interp(x, xs, slopes),
        )

    def velocity(key, component):
        spec = cfg.initial.get(key)
        if spec is None:
            return None
        if spec["type"] == "eigenmode":
            return mode_coeffs(spec, component)
        if spec["type"] == "bump":
            a = spec.get("amplitude", 0.0)
            return lambda x: a * x**2 * (L - x) ** 2
        xs = np.asarray(spec["x"], float)
        vals = np.asarray(spec["values"], float)
        return lambda x: np.interp(x, xs, vals)

    return initial_state(
        problem,
        v2=deflection("v2", 2),
        v3=deflection("v3", 3),
        vel2=velocity("vel2", 2),
        vel3=velocity("vel3", 3),
    )


# -- subcommands -------------------------------------------------------------------


def cmd_cell(args) -> int:
    cfg = parse_config(args.config)
    mesh, _ = build_section(cfg)
    stiff = cell_mod.effective_stiffness(mesh, cfg.material)
    _write_text(args.out, _json_dumps(stiff.as_dict()) + "\n")
    return 0


def cmd_run(args) -> int:
    cfg = parse_config(args.config)
    if cfg.rod is None:
        raise ConfigError(["rod: block is required by `run`"])
    if cfg.dynamics is None:
        raise ConfigError(["dynamics: block is required by `run`"])
    mesh, _ = build_section(cfg)
    stiff = cell_mod.effective_stiffness(mesh, cfg.material)
    spaces = build_spaces(cfg.rod.L, cfg.rod.n_elem)
    problem = RodProblem(spaces, stiff)
    print(f"first linearized period: {_fmt(problem.first_period())}")

    integ = Integrator(problem, cfg.dynamics, cfg.forcing, cfg.dissipation)
    state0 = _resolve_initial(problem, cfg)
    traj, ledger = integ.run(state0)

    lines = ["t,x1,u,v2,v3,w,vel2,vel3,N,T"]
    for snap in traj.snapshots:
        for j, x in enumerate(traj.x_nodes):
            lines.append(
                ",".join(
                    _fmt(v)
                    for v in (
                        snap.t, x, snap.u_nodes[j], snap.v2_nodes[j], snap.v3_nodes[j],
                        snap.w_nodes[j], snap.vel2_nodes[j], snap.vel3_nodes[j],
                        snap.N, snap.T_nodes[j],
                    )
                )
            )
    _write_text(args.out, "\n".join(lines) + "\n")

    t, kin, ela, work = ledger.arrays()
    elines = ["t,kinetic,elastic,work"]
    elines += [",".join(_fmt(v) for v in row) for row in zip(t, kin, ela, work)]
    _write_text(args.out + ".energy.csv", "\n".join(elines) + "\n")
    return 0


def cmd_rescale(args) -> int:
    mesh = mesh2d.load_mesh(args.mesh)
    if not mesh.is_normalized(1e-8):
        raise VkrodError("section mesh is not normalized; run it through `normalize` first")
    field = rescale.load_field(args.field, mesh, length=args.length)
    r = rescale.rescaled_displacements(field)
    lines = ["x1,u,v2,v3,w"]
    lines += [
        ",".join(_fmt(v) for v in row) for row in zip(r.x1, r.u, r.v2, r.v3, r.w)
    ]
    _write_text(args.out, "\n".join(lines) + "\n")
    return 0


_PERTURBATION = lambda x1, x2, x3: np.stack(
    [
        np.sin(3.0 * x1) * (1.0 + x2),
        np.cos(2.0 * x1) * (1.0 + x3),
        np.sin(x1) * (1.0 + x2 * x3),
    ],
    axis=-1,
)


def _family_fields(fam, mesh, material, correctors, limit, x1):
    variant = fam.get("variant", "plain")
    h_values = fam["h_values"]

    def build(h):
        if variant == "plain":
            return rescale.manufactured_field(limit, h, mesh, x1)
        if variant == "perturbed":
            return rescale.manufactured_field(limit, h, mesh, x1, perturbation=_PERTURBATION)
        if variant == "corrector":
            return rescale.manufactured_field(limit, h, mesh, x1, corrector=correctors)
        if variant == "torsion_oscillation":
            aw = fam.get("oscillation_amplitude", 1.0)
            osc = rescale.LimitFields(
                u=limit.u, du=limit.du,
                v2=limit.v2, dv2=limit.dv2, d2v2=limit.d2v2,
                v3=limit.v3, dv3=limit.dv3, d2v3=limit.d2v3,
                w=lambda x: limit.w(x) + aw * np.sin(np.pi * x / x1[-1]) * np.cos(x / h),
                dw=lambda x: limit.dw(x)
                + aw * (np.pi / x1[-1]) * np.cos(np.pi * x / x1[-1]) * np.cos(x / h)
                - aw * np.sin(np.pi * x / x1[-1]) * np.sin(x / h) / h,
            )
            return rescale.manufactured_field(osc, h, mesh, x1)
        raise ConfigError([f"family.variant: unknown variant {variant!r}"])

    fields = parallel_map(build, h_values)
    return dict(zip(h_values, fields))


def cmd_convergence(args) -> int:
    import json

    try:
        with open(args.family) as f:
            fam = json.load(f)
    except (OSError, ValueError) as e:
        raise ConfigError([f"cannot read family file {args.family}: {e}"]) from e

    from .config import validate_config

    base = validate_config(
        {"material": fam.get("material", {"lambda": 1.0, "mu": 1.0}), "section": fam["section"]}
    )
    mesh, _ = build_section(base)
    grid = fam.get("rod_grid", {"L": 1.0, "n1": 161})
    x1 = np.linspace(0.0, grid.get("L", 1.0), grid.get("n1", 161))
    prof = fam.get("profile", {})
    limit = rescale.smooth_profile(
        grid.get("L", 1.0),
        a_u=prof.get("a_u", 0.0),
        a_v2=prof.get("a_v2", 0.0),
        a_v3=prof.get("a_v3", 0.0),
        a_w=prof.get("a_w", 0.0),
    )
    needs_corr = fam.get("variant") == "corrector"
    correctors = cell_mod.solve_correctors(mesh, base.material) if needs_corr else None
    fields = _family_fields(fam, mesh, base.material, correctors, limit, x1)
    table = rescale.convergence_study(
        fields, limit,
        material=base.material if needs_corr else None,
        correctors=correctors,
    )

    hs = sorted(fam["h_values"], reverse=True)
    header = "quantity," + ",".join(f"err_h{_fmt(h)}" for h in hs) + ",rate"
    lines = [header]
    for row in table.rows:
        lines.append(row.quantity + "," + ",".join(_fmt(e) for e in row.errors) + "," + row.format_rate())
    _write_text(args.out, "\n".join(lines) + "\n")
    return 0


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vkrod", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("cell", help="solve the cross-section cell problem")
    c.add_argument("--config", required=True)
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_cell)

    r = sub.add_parser("run", help="integrate the transverse wave system")
    r.add_argument("--config", required=True)
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("rescale", help="rescale a sampled 3D deformation field")
    s.add_argument("--field", required=True)
    s.add_argument("--mesh", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--length", type=float, default=None)
    s.set_defaults(func=cmd_rescale)

    v = sub.add_parser("convergence", help="manufactured-family convergence study")
    v.add_argument("--family", required=True)
    v.add_argument("--out", required=True)
    v.set_defaults(func=cmd_convergence)
    return p


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        return args.func(args)
    except VkrodError as e:
        print(f"error[{e.stage}]: {e}", file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
