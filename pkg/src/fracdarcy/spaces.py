"""Trace finite element spaces on cut-cell neighborhoods.

Each component Gamma_i gets its own scalar space V_i: the restriction of the
background piecewise-trilinear space to the active cells of Gamma_i (the
leaves owning at least one trimmed surface triangle).  Degrees of freedom are
the unconstrained vertices reachable from those cells; hanging vertices are
eliminated through the mesh constraint table by an expansion matrix E mapping
free coefficients to provisional 8-corner coefficients per cell, so element
assembly always sees a full trilinear corner basis and global matrices are
reduced as E^T A E.  Different components duplicate coefficients on shared
cells: the product space is a plain concatenation, pressure and the three
velocity components alike, so fields are discontinuous across junctions by
construction.

Pressure boundary conditions on the box faces are interpolated vertex-wise:
a free vertex of an active cell lying on a Dirichlet face takes the data
value at the closest point of the component's discrete boundary curve within
that face.  Internal (immersed) Dirichlet curves are handled weakly by the
assembly and do not constrain vertices here.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import ConfigurationError, PreconditionError

FIELD_UX, FIELD_UY, FIELD_UZ, FIELD_P = 0, 1, 2, 3


@dataclass
class ComponentSpace:
    component: int
    active_cells: np.ndarray      # sorted leaf indices
    cell_pos: dict                # leaf index -> row in active_cells
    vertices: np.ndarray          # provisional vertex ids (corners of active cells)
    cell_corner_rows: np.ndarray  # (n_active, 8) rows into `vertices`
    dofs: np.ndarray              # free vertex ids carrying coefficients
    dof_of_vertex: dict
    expansion: sp.csr_matrix      # (len(vertices), len(dofs))
    dirichlet_dofs: np.ndarray = field(default_factory=lambda: np.empty(0, np.int64))
    dirichlet_vals: np.ndarray = field(default_factory=lambda: np.empty(0))

    @property
    def n_dofs(self):
        return int(self.dofs.shape[0])


def active_cells_of(patches):
    """Sorted leaf indices owning at least one surface triangle."""
    return np.unique(patches.cells)


def build_component_space(comp, geom):
    mesh = geom.mesh
    cells = active_cells_of(geom.patches[comp.index])
    if cells.size == 0:
        raise ConfigurationError(f"component {comp.index} has no active cells")
    corners = mesh.cell_corners[cells]
    verts = np.unique(corners)
    row_of = {int(v): i for i, v in enumerate(verts)}
    cell_corner_rows = np.vectorize(row_of.__getitem__, otypes=[np.int64])(corners)

    constraints = mesh.hanging_constraints()
    dof_set = set()
    for v in verts:
        v = int(v)
        if v in constraints:
            dof_set.update(int(m) for m in constraints[v][0])
        else:
            dof_set.add(v)
    dofs = np.array(sorted(dof_set), dtype=np.int64)
    dof_of_vertex = {int(v): i for i, v in enumerate(dofs)}

    rows, cols, vals = [], [], []
    for i, v in enumerate(verts):
        v = int(v)
        if v in constraints:
            ids, w = constraints[v]
            for m, wm in zip(ids, w):
                rows.append(i)
                cols.append(dof_of_vertex[int(m)])
                vals.append(float(wm))
        else:
            rows.append(i)
            cols.append(dof_of_vertex[v])
            vals.append(1.0)
    E = sp.csr_matrix(
        (vals, (rows, cols)), shape=(verts.shape[0], dofs.shape[0])
    )
    return ComponentSpace(
        component=comp.index,
        active_cells=cells,
        cell_pos={int(c): i for i, c in enumerate(cells)},
        vertices=verts,
        cell_corner_rows=cell_corner_rows,
        dofs=dofs,
        dof_of_vertex=dof_of_vertex,
        expansion=E,
    )


def _closest_point_on_segments(p, segments):
    """Closest point to p over a set of segments (ns, 2, 3)."""
    a = segments[:, 0]
    b = segments[:, 1]
    d = b - a
    dd = np.einsum("nd,nd->n", d, d)
    t = np.einsum("nd,nd->n", p[None, :] - a, d) / np.where(dd == 0.0, 1.0, dd)
    t = np.clip(t, 0.0, 1.0)
    cand = a + t[:, None] * d
    dist = np.linalg.norm(cand - p[None, :], axis=1)
    k = int(np.argmin(dist))
    return cand[k], float(dist[k])


def interpolate_boundary_values(comp, geom, cspace):
    """Vertex-wise pressure data on the box-face Dirichlet boundary.

    Marks every free vertex of an active cell that owns Dirichlet curve
    segments on a box face and lies itself on that face; its value is the
    (ambient) data evaluated at the vertex itself, which keeps the
    interpolated trace on the boundary curve second-order accurate.  When
    several sets could claim a vertex, the one with the nearest segment
    supplies the data."""
    mesh = geom.mesh
    sets = geom.dirichlet_boundary_sets(comp.index)
    if not sets:
        return np.empty(0, np.int64), np.empty(0)
    fine_max = [d << mesh.max_level for d in mesh.dims]
    chosen = {}
    for cs in sets:
        axis, side = cs.face
        target = fine_max[axis] if side else 0
        for cell in np.unique(cs.cells):
            for v in mesh.cell_corners[cell]:
                v = int(v)
                if mesh.vertex_fine[v, axis] != target:
                    continue
                if mesh.is_hanging[v]:
                    continue
                dof = cspace.dof_of_vertex.get(v)
                if dof is None:
                    continue
                p = mesh.vertex_coords[v]
                _, dist = _closest_point_on_segments(p, cs.segments)
                prev = chosen.get(dof)
                if prev is None or dist < prev[0]:
                    chosen[dof] = (dist, cs.data, p)
    if not chosen:
        return np.empty(0, np.int64), np.empty(0)
    dofs = np.array(sorted(chosen), dtype=np.int64)
    vals = np.empty(dofs.shape[0])
    for i, dof in enumerate(dofs):
        _, data, p = chosen[int(dof)]
        vals[i] = float(np.asarray(data(p[None, :]), dtype=float).reshape(-1)[0])
    return dofs, vals


@dataclass
class ProductSpace:
    """Concatenation of the component spaces, 4 fields (ux, uy, uz, p) each."""

    spaces: list
    offsets: dict            # component index -> start of its block
    n_total: int
    essential_idx: np.ndarray
    essential_vals: np.ndarray
    pinned: list             # subset of essential dofs added to fix constants

    def space(self, index):
        for s in self.spaces:
            if s.component == index:
                return s
        raise ConfigurationError(f"no space for component {index}")

    def gindex(self, index, fld, local):
        s = self.space(index)
        return self.offsets[index] + fld * s.n_dofs + local

    def field_slice(self, index, fld):
        s = self.space(index)
        start = self.offsets[index] + fld * s.n_dofs
        return slice(start, start + s.n_dofs)

    @property
    def n_pressure(self):
        return sum(s.n_dofs for s in self.spaces)

    def counts(self):
        return {
            "components": {s.component: s.n_dofs for s in self.spaces},
            "pressure": self.n_pressure,
            "total": self.n_total,
        }


def build_product_space(network, geom, pin_nullspace=True):
    spaces = []
    offsets = {}
    total = 0
    for comp in network.components:
        s = build_component_space(comp, geom)
        d, v = interpolate_boundary_values(comp, geom, s)
        s.dirichlet_dofs, s.dirichlet_vals = d, v
        offsets[comp.index] = total
        total += 4 * s.n_dofs
        spaces.append(s)

    ess_idx = []
    ess_val = []
    for s in spaces:
        base = offsets[s.component] + FIELD_P * s.n_dofs
        for d, v in zip(s.dirichlet_dofs, s.dirichlet_vals):
            ess_idx.append(base + int(d))
            ess_val.append(float(v))

    pinned = []
    if pin_nullspace:
        constrained = set()
        for s in spaces:
            has_internal = any(
                t.kind == "dirichlet" for t in network.component(s.component).trims
            )
            if s.dirichlet_dofs.size > 0 or has_internal:
                constrained.add(s.component)
        for group in network.connected_groups():
            if not any(c in constrained for c in group):
                s = next(sp_ for sp_ in spaces if sp_.component == group[0])
                pin = offsets[group[0]] + FIELD_P * s.n_dofs + 0
                pinned.append(int(pin))
                ess_idx.append(int(pin))
                ess_val.append(0.0)

    order = np.argsort(np.array(ess_idx, dtype=np.int64)) if ess_idx else []
    ess_idx = np.array(ess_idx, dtype=np.int64)[order] if len(ess_idx) else np.empty(0, np.int64)
    ess_val = np.array(ess_val)[order] if len(ess_val) else np.empty(0)
    if np.unique(ess_idx).shape[0] != ess_idx.shape[0]:
        raise PreconditionError("duplicate essential dofs")
    return ProductSpace(
        spaces=spaces,
        offsets=offsets,
        n_total=total,
        essential_idx=ess_idx,
        essential_vals=ess_val,
        pinned=pinned,
    )


def expand_component_field(pspace, geom_or_mesh, index, fld, x):
    """Provisional (per active-cell corner) vertex values of one scalar field."""
    s = pspace.space(index)
    return s.expansion @ x[pspace.field_slice(index, fld)]


def evaluate_solution(pspace, geom, index, x, cells, points):
    """(pressure, velocity) of the discrete solution at points in given active
    cells of one component."""
    mesh = geom.mesh
    s = pspace.space(index)
    rows = np.vectorize(s.cell_pos.__getitem__, otypes=[np.int64])(cells)
    corner_rows = s.cell_corner_rows[rows]
    N = mesh.trilinear_basis(cells, points)
    p_prov = s.expansion @ x[pspace.field_slice(index, FIELD_P)]
    p = np.einsum("na,na->n", N, p_prov[corner_rows])
    u = np.empty((points.shape[0], 3))
    for a, fld in enumerate((FIELD_UX, FIELD_UY, FIELD_UZ)):
        prov = s.expansion @ x[pspace.field_slice(index, fld)]
        u[:, a] = np.einsum("na,na->n", N, prov[corner_rows])
    return p, u
