"""Command line driver for configured benchmark runs.

`fracdarcy run config.toml` builds the configured case, runs the convergence
study (or the flux study when the case carries no exact solution), prints
the result table, and writes the configured CSV/VTK outputs.
`fracdarcy list-cases` prints the shipped benchmarks.

Config sections (all optional except [case]):

    [case]    name = "crossing", plus builder keywords (alpha, beta, ...)
    [mesh]    n0, refine_levels, band
    [params]  rho_e, rho_u, rho_p, rho_dir, penalty_h = "local" | "global"
    [solver]  method = "direct" | "gmres", tol
    [output]  csv = "report.csv", vtk = "solution.vtk"
"""

import argparse
import sys
import tomllib
from dataclasses import replace

from .assembly import FormParameters
from .cases import MeshPlan, case_names, make_case
from .errors import ConfigurationError, FracDarcyError
from .harness import run_convergence, run_network


def _mesh_plan(plan, mesh_cfg):
    if not mesh_cfg:
        return plan
    known = {"n0", "refine_levels", "band"}
    extra = set(mesh_cfg) - known
    if extra:
        raise ConfigurationError(f"unknown [mesh] keys: {', '.join(sorted(extra))}")
    band = float(mesh_cfg.get("band", plan.band))
    if plan.kind == "uniform":
        n0 = int(mesh_cfg.get("n0", plan.uniform_n[0]))
        n_levels = int(mesh_cfg.get("refine_levels", len(plan.uniform_n) - 1)) + 1
        seq = [n0]
        for _ in range(n_levels - 1):
            seq.append(2 * seq[-1] + 1)  # e.g. 9, 19, 39, 79: halves h, keeps parity
        return MeshPlan(kind="uniform", uniform_n=tuple(seq), band=band)
    dims0 = plan.dims0
    if "n0" in mesh_cfg:
        n0 = int(mesh_cfg["n0"])
        base = plan.dims0[0]
        if any((d * n0) % base for d in plan.dims0):
            raise ConfigurationError(
                f"n0={n0} breaks the case's root aspect ratio {plan.dims0}"
            )
        dims0 = tuple(d * n0 // base for d in plan.dims0)
    n_levels = int(mesh_cfg.get("refine_levels", plan.n_levels - 1)) + 1
    return MeshPlan(kind="graded", dims0=dims0, n_levels=n_levels, band=band)


def _form_parameters(cfg):
    if not cfg:
        return None
    cfg = dict(cfg)
    if "penalty_h" in cfg:
        cfg["h_def"] = cfg.pop("penalty_h")
    known = {"rho_e", "rho_u", "rho_p", "rho_dir", "h_def"}
    extra = set(cfg) - known
    if extra:
        raise ConfigurationError(f"unknown [params] keys: {', '.join(sorted(extra))}")
    return FormParameters(**cfg)


def _run(config_path):
    with open(config_path, "rb") as fh:
        cfg = tomllib.load(fh)
    case_cfg = dict(cfg.get("case", {}))
    name = case_cfg.pop("name", None)
    if not name:
        raise ConfigurationError("the config needs [case] with a name")
    case = make_case(name, **case_cfg)
    case = replace(case, plan=_mesh_plan(case.plan, cfg.get("mesh", {})))
    params = _form_parameters(cfg.get("params", {}))

    solver_cfg = cfg.get("solver", {})
    method = solver_cfg.get("method", "direct")
    tol = float(solver_cfg.get("tol", 1e-10))
    out_cfg = cfg.get("output", {})
    csv_path = out_cfg.get("csv")
    vtk_path = out_cfg.get("vtk")

    if case.has_exact:
        report = run_convergence(
            case,
            params=params,
            method=method,
            tol=tol,
            csv_path=csv_path,
            vtk_path=vtk_path,
            verbose=True,
        )
        print(report.table())
    else:
        result = run_network(
            case,
            params=params,
            method=method,
            tol=tol,
            csv_path=csv_path,
            vtk_path=vtk_path,
        )
        print(result.summary())
    for label, path in (("csv", csv_path), ("vtk", vtk_path)):
        if path:
            print(f"wrote {label}: {path}")


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="fracdarcy",
        description="Darcy flow on fracture networks with an unfitted octree method",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    prun = sub.add_parser("run", help="run a benchmark described by a TOML config")
    prun.add_argument("config", help="path to the TOML configuration file")
    sub.add_parser("list-cases", help="list the shipped benchmark cases")
    args = parser.parse_args(argv)
    try:
        if args.command == "list-cases":
            for name in case_names():
                print(f"{name:20s}{make_case(name).description}")
        else:
            _run(args.config)
    except FracDarcyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
