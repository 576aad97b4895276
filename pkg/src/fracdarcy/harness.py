"""Convergence studies and post-processing.

A convergence run solves one benchmark on every level of its mesh plan and
measures, by quadrature over the reconstructed surface, the velocity L2
error, the pressure L2 error, and the pressure max error at quadrature
points.  Rates between consecutive levels follow

    rate_k = log(e_{k-1} / e_k) / log(h_{k-1} / h_k),

with h the finest active-cell size of the level (equal to the uniform mesh
size on uniform plans).  Least-squares orders over all levels back the same
data for acceptance windows.  Pure-Neumann problems are solved with one
pinned pressure value, so pressure errors are computed after removing the
area-weighted mean mismatch, i.e. in the quotient space where the solution
is defined.

For networks without an exact solution the harness reports boundary fluxes
(conormal flux of u_h integrated over every Dirichlet curve), their global
imbalance relative to the inflow, and the computed pressure range.
"""

import csv
import time
from dataclasses import dataclass, field

import numpy as np

from .assembly import assemble
from .cases import build_mesh
from .errors import ConfigurationError, SolverError
from .geometry import reconstruct
from .quadrature import segment_gauss_rule, triangle_midpoint_rule
from .solver import solve
from .spaces import build_product_space, evaluate_solution
from . import vtkio


# --------------------------------------------------------------- error norms


def _component_quadrature(geom, index):
    patches = geom.patches[index]
    pts, w = triangle_midpoint_rule(patches.tris)
    cells = np.repeat(patches.cells, 3)
    return pts.reshape(-1, 3), w.reshape(-1), cells


def compute_errors(case, geom, pspace, x):
    """(velocity L2, pressure L2, pressure max) over the whole network."""
    if not case.has_exact:
        raise ConfigurationError(f"case {case.name!r} has no exact fields")
    data = {}
    for comp in case.network.components:
        i = comp.index
        pts, w, cells = _component_quadrature(geom, i)
        ph, uh = evaluate_solution(pspace, geom, i, x, cells, pts)
        dp = ph - np.asarray(case.exact_p[i](pts), dtype=float)
        du = uh - np.asarray(case.exact_u[i](pts), dtype=float)
        data[i] = (w, dp, du)

    shift = 0.0
    if pspace.pinned:
        num = sum(float(w @ dp) for w, dp, _ in data.values())
        den = sum(float(w.sum()) for w, _, _ in data.values())
        shift = num / den

    err_u2 = err_p2 = 0.0
    err_inf = 0.0
    for w, dp, du in data.values():
        dp = dp - shift
        err_p2 += float(w @ dp**2)
        err_u2 += float(w @ np.einsum("nd,nd->n", du, du))
        err_inf = max(err_inf, float(np.abs(dp).max()))
    return np.sqrt(err_u2), np.sqrt(err_p2), err_inf


def finest_cut_size(pspace, geom):
    mesh = geom.mesh
    return float(min(mesh.cell_sizes[s.active_cells].min() for s in pspace.spaces))


# -------------------------------------------------------------- error report


@dataclass
class LevelResult:
    level: int
    h: float
    dof_pressure: int
    dof_total: int
    err_u: float
    err_p: float
    err_p_inf: float
    assembly_time: float = 0.0
    solve_time: float = 0.0


_CSV_FIELDS = [f.strip() for f in (
    "level, h, dof_pressure, dof_total, err_u, err_p, err_p_inf, "
    "assembly_time, solve_time"
).split(",")]
_RATE_FIELDS = ["rate_u", "rate_p", "rate_p_inf"]


@dataclass
class ErrorReport:
    case: str
    levels: list = field(default_factory=list)

    def _series(self, key):
        return np.array([getattr(r, key) for r in self.levels])

    def rates(self):
        """Per-quantity consecutive rates; entry 0 is nan (no predecessor)."""
        h = self._series("h")
        out = {}
        for key in ("err_u", "err_p", "err_p_inf"):
            e = self._series(key)
            r = np.full(e.shape, np.nan)
            if e.shape[0] > 1:
                r[1:] = np.log(e[:-1] / e[1:]) / np.log(h[:-1] / h[1:])
            out[key] = r
        return out

    def ls_orders(self):
        """Least-squares slope of log error against log h, per quantity."""
        h = self._series("h")
        if h.shape[0] < 2:
            return {k: float("nan") for k in ("err_u", "err_p", "err_p_inf")}
        return {
            key: float(np.polyfit(np.log(h), np.log(self._series(key)), 1)[0])
            for key in ("err_u", "err_p", "err_p_inf")
        }

    def table(self):
        rates = self.rates()
        lines = [
            f"case: {self.case}",
            f"{'h':>12} {'dof_p':>8} {'err_u':>11} {'rate':>6} "
            f"{'err_p':>11} {'rate':>6} {'err_p_inf':>11} {'rate':>6}",
        ]
        for k, r in enumerate(self.levels):
            cols = [f"{r.h:12.5e}", f"{r.dof_pressure:8d}"]
            for key in ("err_u", "err_p", "err_p_inf"):
                cols.append(f"{getattr(r, key):11.4e}")
                rk = rates[key][k]
                cols.append("     -" if np.isnan(rk) else f"{rk:6.2f}")
            lines.append(" ".join(cols))
        return "\n".join(lines)

    def to_csv(self, path):
        rates = self.rates()
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["case", self.case])
            wr.writerow(_CSV_FIELDS + _RATE_FIELDS)
            for k, r in enumerate(self.levels):
                row = [
                    r.level,
                    *[f"{getattr(r, key):.17g}" for key in _CSV_FIELDS[1:]],
                ]
                for key in ("err_u", "err_p", "err_p_inf"):
                    rk = rates[key][k]
                    row.append("" if np.isnan(rk) else f"{rk:.17g}")
                wr.writerow(row)

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if len(rows) < 2 or rows[0][0] != "case":
            raise ConfigurationError(f"{path} is not an error report")
        name = rows[0][1]
        levels = []
        for row in rows[2:]:
            if not row:
                continue
            vals = dict(zip(_CSV_FIELDS, row))
            levels.append(
                LevelResult(
                    level=int(vals["level"]),
                    h=float(vals["h"]),
                    dof_pressure=int(vals["dof_pressure"]),
                    dof_total=int(vals["dof_total"]),
                    err_u=float(vals["err_u"]),
                    err_p=float(vals["err_p"]),
                    err_p_inf=float(vals["err_p_inf"]),
                    assembly_time=float(vals["assembly_time"]),
                    solve_time=float(vals["solve_time"]),
                )
            )
        return cls(case=name, levels=levels)


# --------------------------------------------------------------- level solve


@dataclass
class LevelSolution:
    """Everything produced by solving one mesh level of a case."""

    case: object
    level: int
    mesh: object
    geom: object
    pspace: object
    system: object
    x: np.ndarray
    report: object


def solve_level(case, level, params=None, method="direct", tol=1e-10):
    mesh = build_mesh(case, level)
    geom = reconstruct(case.network, mesh)
    pspace = build_product_space(
        case.network, geom, pin_nullspace=case.pin_nullspace
    )
    system = assemble(
        pspace,
        geom,
        params=params or case.params,
        forcing=case.forcing,
        source=case.source,
    )
    x, rep = solve(system, method=method, tol=tol)
    return LevelSolution(case, level, mesh, geom, pspace, system, x, rep)


def run_convergence(
    case,
    levels=None,
    params=None,
    method="direct",
    tol=1e-10,
    csv_path=None,
    vtk_path=None,
    verbose=False,
):
    """Solve every requested level and collect the error report.

    A solver failure raises SolverError carrying the partial report."""
    if not case.has_exact:
        raise ConfigurationError(
            f"case {case.name!r} has no exact solution; run it as a network study"
        )
    if levels is None:
        levels = range(case.plan.levels)
    report = ErrorReport(case=case.name)
    last = None
    for lv in levels:
        t0 = time.perf_counter()
        try:
            sol = solve_level(case, lv, params=params, method=method, tol=tol)
        except SolverError as exc:
            raise SolverError(
                f"level {lv} of case {case.name!r}: {exc}", report=report
            ) from exc
        eu, ep, einf = compute_errors(case, sol.geom, sol.pspace, sol.x)
        res = LevelResult(
            level=lv,
            h=finest_cut_size(sol.pspace, sol.geom),
            dof_pressure=sol.pspace.n_pressure,
            dof_total=sol.pspace.n_total,
            err_u=eu,
            err_p=ep,
            err_p_inf=einf,
            assembly_time=sol.system.assembly_time,
            solve_time=sol.report.wall_time,
        )
        report.levels.append(res)
        last = sol
        if verbose:
            print(
                f"[{case.name}] level {lv}: h={res.h:.4e} "
                f"dof_p={res.dof_pressure} err_u={eu:.4e} err_p={ep:.4e} "
                f"err_p_inf={einf:.4e} ({time.perf_counter() - t0:.1f}s)"
            )
    if csv_path is not None:
        report.to_csv(csv_path)
    if vtk_path is not None and last is not None:
        export_solution(last, vtk_path)
    return report


# ----------------------------------------------------------- network studies


def curve_flux(geom, pspace, x, cs):
    """Integral of u_h . m over one curve set (m its stored conormal)."""
    if cs.segments.shape[0] == 0:
        return 0.0
    index = cs.components[0]
    qp, qw = segment_gauss_rule(cs.segments)
    npts = qp.shape[0] * qp.shape[1]
    cells = np.repeat(cs.cells, qp.shape[1])
    _, u = evaluate_solution(pspace, geom, index, x, cells, qp.reshape(-1, 3))
    m = np.repeat(cs.conormals, qp.shape[1], axis=0)
    return float(qw.reshape(-1) @ np.einsum("nd,nd->n", u, m))


def boundary_fluxes(geom, pspace, x):
    """Outward flux through every pressure-boundary curve set.

    Returns a list of (component index, label, flux); labels are
    "face-<axis><side>" for box-face sets and "trim-<k>" for penalized
    internal boundaries."""
    out = []
    for comp in geom.network.components:
        for cs in geom.dirichlet_boundary_sets(comp.index):
            axis, side = cs.face
            label = f"face-{'xyz'[axis]}{'+' if side else '-'}"
            out.append((comp.index, label, curve_flux(geom, pspace, x, cs)))
        for k, cs in enumerate(geom.internal_dirichlet_sets(comp.index)):
            out.append((comp.index, f"trim-{k}", curve_flux(geom, pspace, x, cs)))
    return out


def pressure_range(geom, pspace, x):
    """(min, max) of the computed pressure over all surface quadrature points."""
    lo, hi = np.inf, -np.inf
    for comp in geom.network.components:
        pts, _, cells = _component_quadrature(geom, comp.index)
        ph, _ = evaluate_solution(pspace, geom, comp.index, x, cells, pts)
        lo = min(lo, float(ph.min()))
        hi = max(hi, float(ph.max()))
    return lo, hi


@dataclass
class NetworkRunResult:
    case: str
    level: int
    dof_pressure: int
    dof_total: int
    fluxes: list
    imbalance: float            # |sum of fluxes| / max individual |flux|
    p_min: float
    p_max: float

    def summary(self):
        lines = [f"case: {self.case} (level {self.level}, "
                 f"{self.dof_pressure} pressure dofs)"]
        for comp, label, flux in self.fluxes:
            lines.append(f"  component {comp} {label:10s} flux = {flux:+.6e}")
        lines.append(f"  imbalance = {self.imbalance:.3%} of the largest flux")
        lines.append(f"  pressure range = [{self.p_min:.4f}, {self.p_max:.4f}]")
        return "\n".join(lines)


def run_network(
    case,
    level=None,
    params=None,
    method="direct",
    tol=1e-10,
    csv_path=None,
    vtk_path=None,
    verbose=False,
):
    """Solve one level of a data-driven network and report flux balance."""
    if level is None:
        level = case.plan.levels - 1
    sol = solve_level(case, level, params=params, method=method, tol=tol)
    fluxes = boundary_fluxes(sol.geom, sol.pspace, sol.x)
    total = sum(f for _, _, f in fluxes)
    largest = max((abs(f) for _, _, f in fluxes), default=0.0)
    lo, hi = pressure_range(sol.geom, sol.pspace, sol.x)
    result = NetworkRunResult(
        case=case.name,
        level=level,
        dof_pressure=sol.pspace.n_pressure,
        dof_total=sol.pspace.n_total,
        fluxes=fluxes,
        imbalance=abs(total) / largest if largest > 0.0 else 0.0,
        p_min=lo,
        p_max=hi,
    )
    if verbose:
        print(result.summary())
    if csv_path is not None:
        with open(csv_path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["case", case.name])
            wr.writerow(["component", "boundary", "flux"])
            for comp, label, flux in fluxes:
                wr.writerow([comp, label, f"{flux:.17g}"])
            wr.writerow(["imbalance", f"{result.imbalance:.17g}", ""])
            wr.writerow(["pressure_min", f"{lo:.17g}", ""])
            wr.writerow(["pressure_max", f"{hi:.17g}", ""])
    if vtk_path is not None:
        export_solution(sol, vtk_path)
    return result


# -------------------------------------------------------------------- export


def export_solution(sol, path):
    """Write the solved surface with pressure, velocity, and curve cells."""
    vtkio.write_solution(path, sol.geom, sol.pspace, sol.x)
    return path
