"""Command line interface: ``evowave <command> --config FILE [--seed N] [--out DIR]``.

Commands:
    run                    integrate the configured problem and write CSV output
    check-adjoint          randomized adjoint and skew probes of all operators
    check-positivity       certify the material law
    convergence            observed temporal (and spatial) convergence orders
    demo-order-dependence  the two cut-off descendants of the 1-D derivative

All CSV files use ',' separators, '.' decimals and a header row; floats are
written in shortest round-trip form so equal runs give identical files.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .config import ConfigError, SimulationConfig, load_config
from .evo import CertificationError, SolverError, StateVector, dense_expm_oracle, run, step_crank_nicolson
from .grid import FieldLayout, Grid, Label
from .linop import DENSE_CAP, adjoint_check, skew_defect
from .materials import assemble_M0, check_positivity_M0, check_positivity_rational
from .operators import (
    acoustic_operator,
    build_grad_dirichlet,
    coupling_map,
    elasticity_operator,
    face_to_cell,
    order_dependence_example,
    restriction,
    spatial_operator,
    sym_projection,
    trace_op,
    window_edge_indices,
)
from .transmission import classify_interface, traction_balance_residual

OUT_ENV = "EVOWAVE_OUT"
DEFAULT_OUT = "evowave-out"
SNAPSHOT_SCHEMA = "evowave-snapshot/1"
MANIFEST_SCHEMA = "evowave-manifest/1"
ADJOINT_TOL = 1e-12
ORDER_THRESHOLD = 1.8

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _write_csv(path: Path, header: Sequence[str], rows, preamble: Optional[str] = None) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if preamble:
            fh.write(preamble + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _out_dir(args, config: Optional[SimulationConfig]) -> Path:
    if args.out:
        path = Path(args.out)
    elif config is not None and config.output.directory:
        path = Path(config.output.directory)
    else:
        path = Path(os.environ.get(OUT_ENV) or DEFAULT_OUT)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _require_config(args) -> SimulationConfig:
    if not args.config:
        raise ConfigError("this command needs --config")
    return load_config(args.config)


# ------------------------------------------------------------------ run

VOIGT_NAMES = {1: ("T11",), 2: ("T11", "T22", "T12"), 3: ("T11", "T22", "T33", "T23", "T13", "T12")}


def snapshot_rows(state: StateVector):
    """Rows ``cell, x.., label, v.., T.., p`` with empty fields where a quantity does not live."""
    grid = state.layout.grid
    d, s = grid.dim, grid.n_voigt
    x = grid.centers()
    local = np.full(grid.n_cells, -1)
    local[grid.elastic_cells] = np.arange(grid.elastic_cells.size)
    local[grid.acoustic_cells] = np.arange(grid.acoustic_cells.size)
    for c in range(grid.n_cells):
        lab = Label(int(grid.flat_labels[c]))
        row = [c, *x[c], lab.name.lower(), *state.velocity[c]]
        if lab == Label.ELASTIC:
            row += [*state.stress[local[c]], ""]
        else:
            row += [""] * s + [state.pressure[local[c]]]
        yield row


def snapshot_header(d: int) -> list[str]:
    return ["cell", *"xyz"[:d], "label", *(f"v{i + 1}" for i in range(d)), *VOIGT_NAMES[d], "p"]


def cmd_run(args) -> int:
    config = _require_config(args)
    out = _out_dir(args, config)
    grid = config.build_grid()
    material = config.build_material(grid)
    source = config.build_source(grid)
    cert = check_positivity_M0(material)
    A = spatial_operator(grid)
    defect = skew_defect(A, trials=20, rng=np.random.default_rng(args.seed))
    faces = classify_interface(grid) if grid.has(Label.ELASTIC) and grid.has(Label.ACOUSTIC) else []

    snap_dir = out / "snapshots"
    snap_dir.mkdir(exist_ok=True)
    for stale in snap_dir.glob("snapshot_*.csv"):
        stale.unlink()
    snapshots: list[str] = []
    interface_rows = []

    def on_snapshot(t, state):
        name = f"snapshot_{len(snapshots):05d}.csv"
        _write_csv(
            snap_dir / name, snapshot_header(grid.dim), snapshot_rows(state),
            preamble=f"# schema={SNAPSHOT_SCHEMA} time={_fmt(t)}",
        )
        snapshots.append(f"snapshots/{name}")
        if faces:
            rep = traction_balance_residual(state, faces)
            interface_rows.append(
                (t, rep.max_traction_residual, rep.max_tangential_traction, rep.max_normal_velocity_jump)
            )

    st = config.stepping
    try:
        traj = run(grid, material, source, st.t_end, st.tau, st.tol, st.stride, st.max_iter, on_snapshot)
    except CertificationError as exc:
        print(f"certification failed: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except SolverError as exc:
        print(f"solver failed: {exc}", file=sys.stderr)
        return EXIT_FAIL

    times, energies = traj.energy_history
    _write_csv(out / "energy.csv", ["time", "energy"], zip(times, energies))
    _write_csv(
        out / "interface.csv",
        ["time", "max_traction_residual", "max_tangential_traction", "max_normal_velocity_jump"],
        interface_rows,
    )
    manifest = {
        "schema": MANIFEST_SCHEMA,
        "version": __version__,
        "command": "run",
        "seed": args.seed,
        "config": config.to_dict(),
        "certification": {
            "c0": cert.c0_estimate,
            "worst_cell": cert.worst_cell,
            "block_kind": cert.block_kind,
            "passed": cert.passed,
        },
        "skew_defect": defect,
        "steps": int(len(times) - 1),
        "krylov_iterations": traj.iterations,
        "interface_faces": len(faces),
        "files": ["energy.csv", "interface.csv", *snapshots],
    }
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"{len(times) - 1} steps, {len(snapshots)} snapshots, c0 = {cert.c0_estimate:.6g}, "
          f"skew defect = {defect:.3e}; output in {out}")
    return EXIT_OK


# ------------------------------------------------------------------ checks

def _operator_probes(grid: Grid):
    d, n = grid.dim, grid.n_cells
    yield "grad", build_grad_dirichlet(grid), False
    yield "face_to_cell", face_to_cell(grid), False
    yield "sym", sym_projection(d, n), False
    yield "trace", trace_op(d, n), False
    for label in Label:
        if grid.has(label):
            yield f"restrict_{label.name.lower()}", restriction(grid, label, n_voigt_of(grid, label)), False
    if grid.has(Label.ELASTIC) and grid.has(Label.ACOUSTIC):
        yield "coupling", coupling_map(grid), False
    yield "elasticity", elasticity_operator(grid), True
    yield "acoustics", acoustic_operator(grid), True
    yield "A", spatial_operator(grid), True


def n_voigt_of(grid: Grid, label: Label) -> int:
    return grid.n_voigt if label == Label.ELASTIC else 1


def cmd_check_adjoint(args) -> int:
    config = _require_config(args)
    out = _out_dir(args, config)
    grid = config.build_grid()
    rng = np.random.default_rng(args.seed)
    rows = []
    for name, op, skew in _operator_probes(grid):
        rep = adjoint_check(op, trials=10, tol=ADJOINT_TOL, rng=rng)
        rows.append((name, "adjoint", rep.max_defect, rep.passed))
        if skew:
            sd = skew_defect(op, trials=100, rng=rng)
            rows.append((name, "skew", sd, sd <= ADJOINT_TOL))
    _write_csv(out / "adjoint.csv", ["operator", "probe", "max_defect", "passed"], rows)
    for name, probe, value, ok in rows:
        print(f"{name:<22s} {probe:<8s} {value:10.3e}  {'ok' if ok else 'FAIL'}")
    passed = all(r[3] for r in rows)
    print("all defects <= 1e-12" if passed else "some defects exceed 1e-12")
    return EXIT_OK if passed else EXIT_FAIL


def cmd_check_positivity(args) -> int:
    config = _require_config(args)
    out = _out_dir(args, config)
    grid = config.build_grid()
    material = config.build_material(grid)
    rep = check_positivity_M0(material)
    print(f"M(0): c0 = {rep.c0_estimate:.10g} (cell {rep.worst_cell}, {rep.block_kind}) "
          f"{'positive' if rep.passed else 'NOT positive'}")
    _write_csv(out / "positivity.csv", ["block_kind", "cell", "min_eigenvalue"], rep.per_cell)
    passed = rep.passed
    if config.positivity is not None and config.positivity.rho_values:
        rat = check_positivity_rational(material, config.m1_blocks(material), config.positivity.rho_values)
        _write_csv(
            out / "positivity_rho.csv", ["rho", "c0", "worst_cell", "block_kind", "passed"],
            ((r, c, x.worst_cell, x.block_kind, x.passed) for r, c, x in zip(rat.rho_values, rat.c0_per_rho, rat.reports)),
        )
        for r, c in zip(rat.rho_values, rat.c0_per_rho):
            print(f"rho = {r:<10.6g} c0 = {c:.10g}")
        print(f"threshold rho = {rat.threshold_rho}, nondecreasing = {rat.nondecreasing}")
        passed = passed and rat.passed
    return EXIT_OK if passed else EXIT_FAIL


# ------------------------------------------------------------------ convergence

def _initial_state(config: SimulationConfig, grid: Grid) -> np.ndarray:
    """Source profile of the configuration, or a velocity bump at the domain center."""
    u = config.source_profile(grid)
    if not np.any(u):
        x = grid.centers()
        center = np.array([o + 0.5 * n * h for o, n, h in zip(grid.origin, grid.counts, grid.spacing)])
        width = 0.25 * min(n * h for n, h in zip(grid.counts, grid.spacing))
        s = np.linalg.norm(x - center, axis=1) / width
        shape = np.where(s < 1, np.cos(0.5 * np.pi * s) ** 4, 0.0)
        layout = FieldLayout(grid)
        v = np.zeros((grid.n_cells, grid.dim))
        v[:, 0] = shape
        u = layout.join(v, np.zeros(layout.stress_len), np.zeros(layout.pressure_len))
    return u


def _propagate(M0, A, u, t_end, tau, tol):
    n_steps = max(1, int(round(t_end / tau)))
    for k in range(n_steps):
        u = step_crank_nicolson(u, M0, A, None, k * tau, tau, tol)
    return u


def _orders(errors):
    return [float(np.log2(a / b)) if a > 0 and b > 0 else float("nan") for a, b in zip(errors, errors[1:])]


def temporal_study(config: SimulationConfig, levels: int):
    """Errors of the Cayley step at ``tau / 2**l`` against the dense oracle or, above the cap, self-convergence.

    Returns ``(rows, orders, reference)`` with rows ``(level, tau, error)``.
    """
    grid = config.build_grid()
    material = config.build_material(grid)
    M0, A = assemble_M0(grid, material), spatial_operator(grid)
    u0 = _initial_state(config, grid)
    st = config.stepping
    taus = [st.tau / 2**l for l in range(levels + 1)]
    if u0.size <= DENSE_CAP:
        ref = np.asarray(dense_expm_oracle(grid, material, u0, st.t_end))
        sols = [_propagate(M0, A, u0, st.t_end, tau, st.tol) for tau in taus[:levels]]
        errors = [np.linalg.norm(s - ref) / np.linalg.norm(ref) for s in sols]
        reference = "dense-oracle"
    else:
        sols = [_propagate(M0, A, u0, st.t_end, tau, st.tol) for tau in taus]
        scale = np.linalg.norm(sols[-1])
        errors = [np.linalg.norm(a - b) / scale for a, b in zip(sols, sols[1:])]
        reference = "self"
    rows = [(l, taus[l], e) for l, e in enumerate(errors)]
    return rows, _orders(errors), reference


def _coarsen_velocity(u: np.ndarray, grid: Grid, factor: int, coarse_counts) -> np.ndarray:
    v = FieldLayout(grid).split(u)[0].reshape(*grid.counts, grid.dim)
    shape = []
    for c in coarse_counts:
        shape += [c, factor]
    v = v.reshape(*shape, grid.dim)
    return v.mean(axis=tuple(range(1, 2 * grid.dim, 2))).ravel()


def spatial_study(config: SimulationConfig, levels: int):
    """Self-convergence of cell-averaged velocity under dyadic refinement in space and time."""
    base = config.build_grid()
    st = config.stepping
    fields = []
    for l in range(levels):
        grid = config.build_grid(refine=l)
        material = config.build_material(grid)
        M0, A = assemble_M0(grid, material), spatial_operator(grid)
        u = _propagate(M0, A, _initial_state(config, grid), st.t_end, st.tau / 2**l, st.tol)
        fields.append(_coarsen_velocity(u, grid, 2**l, base.counts))
    scale = np.linalg.norm(fields[-1])
    errors = [np.linalg.norm(a - b) / scale for a, b in zip(fields, fields[1:])]
    rows = [(l, base.n_cells * 2 ** (l * base.dim), st.tau / 2**l, e) for l, e in enumerate(errors)]
    return rows, _orders(errors)


def cmd_convergence(args) -> int:
    config = _require_config(args)
    out = _out_dir(args, config)
    levels = args.levels
    if levels < 2:
        raise ConfigError("--levels must be at least 2")
    t_rows, t_orders, reference = temporal_study(config, levels)
    rows = [("time", reference, l, "", tau, e, t_orders[l - 1] if l else "") for l, tau, e in t_rows]
    for l, tau, e in t_rows:
        print(f"time   level {l}  tau = {tau:<10.4g} error = {e:.3e}"
              + (f"  order = {t_orders[l - 1]:.3f}" if l else ""))
    if args.spatial:
        if levels < 3:
            print("spatial study needs --levels >= 3; skipped")
        else:
            try:
                s_rows, s_orders = spatial_study(config, levels)
            except ConfigError as exc:
                print(f"spatial study skipped: {exc}")
            else:
                for l, cells, tau, e in s_rows:
                    rows.append(("space", "self", l, cells, tau, e, s_orders[l - 1] if l else ""))
                    print(f"space  level {l}  cells = {cells:<8d} error = {e:.3e}"
                          + (f"  order = {s_orders[l - 1]:.3f}" if l else ""))
    _write_csv(out / "convergence.csv",
               ["study", "reference", "level", "cells", "tau", "error", "observed_order"], rows)
    order = t_orders[-1]
    print(f"temporal order {order:.3f} ({'>=' if order >= ORDER_THRESHOLD else '<'} {ORDER_THRESHOLD})")
    return EXIT_OK if order >= ORDER_THRESHOLD else EXIT_FAIL


# ------------------------------------------------------------------ demo

def cmd_demo_order_dependence(args) -> int:
    n = args.n
    out = _out_dir(args, None)
    a_d2, a_d1 = order_dependence_example(n)
    D2, D1 = a_d2.to_dense(), a_d1.to_dense()
    names = [f"u{k}" for k in range(n)] + [f"w{k}" for k in range(n + 1)]
    for label, M in (("A_D2", D2), ("A_D1", D1)):
        _write_csv(out / f"{label}.csv", ["row", *names], ([names[i], *M[i]] for i in range(M.shape[0])))
    diff = D2 - D1
    support = np.argwhere(diff != 0)
    _write_csv(out / "difference_support.csv", ["row", "col", "value"],
               ((names[i], names[j], diff[i, j]) for i, j in support))
    edge = set(window_edge_indices(n).tolist())
    skew2 = float(np.abs(D2 + D2.T).max())
    skew1 = float(np.abs(D1 + D1.T).max())
    confined = all(i in edge and j in edge for i, j in support)
    print(f"n = {n}: |A_D2 + A_D2^T| = {skew2:.1e}, |A_D1 + A_D1^T| = {skew1:.1e}")
    print(f"difference has {len(support)} nonzero entries, rows {sorted({names[i] for i, _ in support})}")
    print(f"confined to window-edge rows/columns: {confined}")
    ok = skew2 == 0 and skew1 == 0 and confined and len(support) > 0
    return EXIT_OK if ok else EXIT_FAIL


# ------------------------------------------------------------------ entry point

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML configuration file")
    common.add_argument("--seed", type=int, default=0, help="seed for randomized probes (default 0)")
    common.add_argument("--out", help=f"output directory (default: [output] directory, ${OUT_ENV} or ./{DEFAULT_OUT})")
    common.add_argument("-v", "--verbose", action="store_true", help="debug logging")

    parser = argparse.ArgumentParser(prog="evowave", description="Coupled elastic/acoustic wave simulator.")
    parser.add_argument("--version", action="version", version=f"evowave {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="run a simulation").set_defaults(fn=cmd_run)
    sub.add_parser("check-adjoint", parents=[common], help="adjoint and skew probes").set_defaults(
        fn=cmd_check_adjoint)
    sub.add_parser("check-positivity", parents=[common], help="certify the material law").set_defaults(
        fn=cmd_check_positivity)
    conv = sub.add_parser("convergence", parents=[common], help="observed convergence orders")
    conv.add_argument("--levels", type=int, default=3, help="number of dyadic levels (default 3)")
    conv.add_argument("--spatial", action="store_true", help="also run the spatial self-convergence study")
    conv.set_defaults(fn=cmd_convergence)
    demo = sub.add_parser("demo-order-dependence", parents=[common], help="order dependence of cut-offs")
    demo.add_argument("--n", type=int, default=16, help="cells on [-1, 1] (default 16)")
    demo.set_defaults(fn=cmd_demo_order_dependence)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
