"""Fracture networks and their reconstruction on a background octree mesh.

A fracture network is a set of components Gamma_i, each the zero set of a
level-set field restricted by trim constraints (half-space style functions
g(x) <= 0), together with junction records naming the components that meet
along common curves.  Nothing here assumes the mesh resolves the geometry:
each component is interpolated to a continuous piecewise-trilinear field
phi_h on the octree (hanging vertices take their constrained values) and its
discrete surface is reconstructed cell by cell:

* edge crossings are the exact zeros of phi_h along cell edges;
* on each cell face the crossings are joined into chords, with the bilinear
  saddle rule disambiguating the 4-crossing case (pair crossings lying on the
  same side of the asymptote u = u* of the face bilinear);
* chords close into loops, a 3-loop becomes one triangle, longer loops are
  fanned from their centroid after projecting it onto the phi_h zero set
  along the interpolant gradient;
* triangle normals are aligned with grad phi_h at the triangle centroid.

Crossing points and chords on a face shared by two equal-level cells are
computed from identical inputs in identical order, so the reconstructed
patches agree bit-for-bit there and the union is a continuous polygonal
surface.  Trimming clips the triangles by each linearized g; the clip edges
introduced on g = 0 are collected per constraint and form the discrete
junction / internal-boundary curves, and triangle edges landing on the faces
of the background box form the outer boundary curves.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import (
    ConfigurationError,
    DegenerateCutError,
    GeometryConsistencyError,
    GeometryInputError,
)
from .fields import LevelSetField, evaluate_field
from .quadrature import segment_lengths, triangle_areas

# ---------------------------------------------------------------- cell tables
# corner k = (k & 1, k >> 1 & 1, k >> 2 & 1); edges grouped by axis, endpoints
# in ascending corner order so shared edges are traversed identically by the
# two cells that contain them.

_EDGES = (
    (0, 1), (2, 3), (4, 5), (6, 7),   # x-aligned
    (0, 2), (1, 3), (4, 6), (5, 7),   # y-aligned
    (0, 4), (1, 5), (2, 6), (3, 7),   # z-aligned
)
_EDGE_AXIS = (0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2)


def _build_face_tables():
    faces = []
    for axis in range(3):
        u, v = [a for a in range(3) if a != axis]
        for side in (0, 1):
            corners = []
            for vb in (0, 1):
                for ub in (0, 1):
                    corners.append((side << axis) | (ub << u) | (vb << v))
            # corners ordered (u,v) = (0,0), (1,0), (0,1), (1,1)
            edges = [
                e
                for e, (a, b) in enumerate(_EDGES)
                if ((a >> axis) & 1) == side and ((b >> axis) & 1) == side
            ]
            faces.append({"axis": axis, "side": side, "u": u, "v": v,
                          "corners": tuple(corners), "edges": tuple(edges)})
    return tuple(faces)


_FACES = _build_face_tables()


# -------------------------------------------------------------- network types


@dataclass
class TrimConstraint:
    """Keep the region fn(x) <= 0 of a component's carrier surface.

    kind tags what the trim's zero curve means: a junction shared with other
    components, an internal Dirichlet boundary (data = pressure), or an
    internal zero-flux edge ("neumann").
    """

    fn: Callable
    kind: str = "junction"
    junction_id: Optional[int] = None
    data: Optional[Callable] = None
    gradient: Optional[Callable] = None

    def __post_init__(self):
        if self.kind not in ("junction", "dirichlet", "neumann"):
            raise ConfigurationError(f"unknown trim kind {self.kind!r}")


@dataclass
class BoundarySpec:
    """Condition on the part of the component boundary lying on the box faces.

    `where` is a vectorized predicate on curve points (None = everything not
    claimed by an earlier spec).  Dirichlet data is a pressure; Neumann data a
    flux density (None = natural zero flux, which needs no assembly at all).
    """

    kind: str
    data: Optional[Callable] = None
    where: Optional[Callable] = None

    def __post_init__(self):
        if self.kind not in ("dirichlet", "neumann"):
            raise ConfigurationError(f"unknown boundary kind {self.kind!r}")


@dataclass
class FractureComponent:
    index: int
    level_set: LevelSetField
    trims: list = field(default_factory=list)
    permeability: np.ndarray = None
    boundary: list = field(default_factory=list)
    name: str = ""

    def __post_init__(self):
        if self.permeability is None:
            self.permeability = np.eye(3)
        self.permeability = np.asarray(self.permeability, dtype=float)
        if self.permeability.shape != (3, 3):
            raise ConfigurationError("permeability must be a 3x3 tensor")
        if not np.allclose(self.permeability, self.permeability.T):
            raise ConfigurationError("permeability must be symmetric")


@dataclass
class Junction:
    id: int
    members: tuple
    host: int


@dataclass
class FractureNetwork:
    components: list
    junctions: list = field(default_factory=list)

    def __post_init__(self):
        ids = [c.index for c in self.components]
        if len(set(ids)) != len(ids):
            raise ConfigurationError("component indices must be unique")
        for j in self.junctions:
            if len(j.members) < 2:
                raise ConfigurationError(f"junction {j.id} needs >= 2 members")
            if j.host not in j.members:
                raise ConfigurationError(f"junction {j.id}: host not a member")
            for m in j.members:
                comp = self.component(m)
                if not any(
                    t.kind == "junction" and t.junction_id == j.id for t in comp.trims
                ):
                    raise ConfigurationError(
                        f"junction {j.id}: component {m} has no matching trim"
                    )

    def component(self, index):
        for c in self.components:
            if c.index == index:
                return c
        raise ConfigurationError(f"no component with index {index}")

    def connected_groups(self):
        """Groups of component indices connected through junctions."""
        parent = {c.index: c.index for c in self.components}

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        for j in self.junctions:
            root = find(j.members[0])
            for m in j.members[1:]:
                parent[find(m)] = root
        groups = {}
        for c in self.components:
            groups.setdefault(find(c.index), []).append(c.index)
        return [sorted(g) for g in sorted(groups.values())]


# --------------------------------------------------------- cell reconstruction


def _cell_interp(vals, xi, eta, zeta):
    wx1, wy1, wz1 = xi, eta, zeta
    wx0, wy0, wz0 = 1.0 - xi, 1.0 - eta, 1.0 - zeta
    c00 = vals[0] * wx0 + vals[1] * wx1
    c10 = vals[2] * wx0 + vals[3] * wx1
    c01 = vals[4] * wx0 + vals[5] * wx1
    c11 = vals[6] * wx0 + vals[7] * wx1
    return (c00 * wy0 + c10 * wy1) * wz0 + (c01 * wy0 + c11 * wy1) * wz1


def _cell_grad(vals, xi, eta, zeta):
    """Gradient of the trilinear interpolant in reference coordinates."""
    wx1, wy1, wz1 = xi, eta, zeta
    wx0, wy0, wz0 = 1.0 - xi, 1.0 - eta, 1.0 - zeta
    dx = (
        (vals[1] - vals[0]) * wy0 + (vals[3] - vals[2]) * wy1
    ) * wz0 + ((vals[5] - vals[4]) * wy0 + (vals[7] - vals[6]) * wy1) * wz1
    dy = (
        (vals[2] - vals[0]) * wx0 + (vals[3] - vals[1]) * wx1
    ) * wz0 + ((vals[6] - vals[4]) * wx0 + (vals[7] - vals[5]) * wx1) * wz1
    dz = (
        (vals[4] - vals[0]) * wx0 + (vals[5] - vals[1]) * wx1
    ) * wy0 + ((vals[6] - vals[2]) * wx0 + (vals[7] - vals[3]) * wx1) * wy1
    return dx, dy, dz


def _project_centroid(vals, xi, eta, zeta, vscale):
    """Project a reference point onto the interpolant zero set along its
    gradient (Newton with step clamping); returns None when it fails."""
    gx, gy, gz = _cell_grad(vals, xi, eta, zeta)
    gn = (gx * gx + gy * gy + gz * gz) ** 0.5
    if gn < 1e-300:
        return None
    dx, dy, dz = gx / gn, gy / gn, gz / gn
    s = 0.0
    for _ in range(60):
        px, py, pz = xi + s * dx, eta + s * dy, zeta + s * dz
        f = _cell_interp(vals, px, py, pz)
        if abs(f) <= 1e-14 * vscale:
            return px, py, pz
        hx, hy, hz = _cell_grad(vals, px, py, pz)
        fp = hx * dx + hy * dy + hz * dz
        if fp == 0.0:
            return None
        step = f / fp
        if step > 0.5:
            step = 0.5
        elif step < -0.5:
            step = -0.5
        s -= step
        if abs(s) > 1.0:
            return None
    return None


def reconstruct_cell(corner_coords, values, size):
    """Polygonize the zero set of the trilinear interpolant in one cell.

    corner_coords: (8, 3) corner positions, values: the 8 nodal values, size:
    the cell edge length.  Returns (triangles (m,3,3), normals (m,3)); the
    list is empty when the interpolant does not change sign.  Nodal values
    that are exactly zero are perturbed to +1e-14 * size; a cell whose eight
    values all vanish has no meaningful cut and raises DegenerateCutError.
    """
    vals = [float(v) for v in values]
    if all(v == 0.0 for v in vals):
        raise DegenerateCutError("level set vanishes on all 8 cell corners")
    eps = 1e-14 * float(size)
    vals = [v if v != 0.0 else eps for v in vals]
    neg = [v < 0.0 for v in vals]
    if all(neg) or not any(neg):
        return np.empty((0, 3, 3)), np.empty((0, 3))

    corner_coords = np.asarray(corner_coords, dtype=float)
    lower = corner_coords[0]

    # exact zeros along the cut edges, in both world and reference coordinates
    cross_pt = {}
    cross_ref = {}
    for e, (a, b) in enumerate(_EDGES):
        if neg[a] == neg[b]:
            continue
        va, vb = vals[a], vals[b]
        t = va / (va - vb)
        cross_pt[e] = corner_coords[a] + t * (corner_coords[b] - corner_coords[a])
        ra = [(a >> ax) & 1 for ax in range(3)]
        ra[_EDGE_AXIS[e]] += t
        cross_ref[e] = tuple(ra)

    # one or two chords per face
    partners = {e: [] for e in cross_pt}
    for f in _FACES:
        hits = [e for e in f["edges"] if e in cross_pt]
        if not hits:
            continue
        if len(hits) == 2:
            pairs = [(hits[0], hits[1])]
        elif len(hits) == 4:
            c = f["corners"]
            f00, f10, f01, f11 = (vals[c[0]], vals[c[1]], vals[c[2]], vals[c[3]])
            d = f11 - f10 - f01 + f00
            ustar = (f00 - f01) / d
            uv = {}
            for e in hits:
                r = cross_ref[e]
                uv[e] = (r[f["u"]], r[f["v"]])
            lo = [e for e in hits if uv[e][0] < ustar]
            hi = [e for e in hits if uv[e][0] >= ustar]
            if len(lo) != 2 or len(hi) != 2:
                # degenerate saddle: fall back to pairing by v
                vstar = (f00 - f10) / d
                lo = [e for e in hits if uv[e][1] < vstar]
                hi = [e for e in hits if uv[e][1] >= vstar]
            pairs = [tuple(lo), tuple(hi)]
        else:
            raise DegenerateCutError(
                f"face with {len(hits)} edge crossings cannot be polygonized"
            )
        for e1, e2 in pairs:
            partners[e1].append(e2)
            partners[e2].append(e1)

    for e, p in partners.items():
        if len(p) != 2:
            raise DegenerateCutError("cut edge does not belong to exactly 2 chords")

    # walk the chords into closed loops
    loops = []
    seen = set()
    for start in sorted(partners):
        if start in seen:
            continue
        loop = [start]
        seen.add(start)
        prev, cur = None, start
        while True:
            nxt = partners[cur][0] if partners[cur][0] != prev else partners[cur][1]
            if nxt == start:
                break
            loop.append(nxt)
            seen.add(nxt)
            prev, cur = cur, nxt
        loops.append(loop)

    vscale = max(abs(v) for v in vals)
    tris = []
    for loop in loops:
        pts = [cross_pt[e] for e in loop]
        if len(loop) == 3:
            tris.append((pts[0], pts[1], pts[2]))
            continue
        refs = [cross_ref[e] for e in loop]
        cx = sum(r[0] for r in refs) / len(refs)
        cy = sum(r[1] for r in refs) / len(refs)
        cz = sum(r[2] for r in refs) / len(refs)
        proj = _project_centroid(vals, cx, cy, cz, vscale)
        if proj is None:
            # rare fallback: fan from the first loop vertex
            for i in range(1, len(pts) - 1):
                tris.append((pts[0], pts[i], pts[i + 1]))
            continue
        center = lower + size * np.array(proj)
        n = len(pts)
        for i in range(n):
            tris.append((center, pts[i], pts[(i + 1) % n]))

    # orient by the interpolant gradient at each triangle centroid and drop
    # exactly degenerate slivers
    out = []
    normals = []
    area_floor = 1e-18 * size * size
    for a, b, c in tris:
        a = np.asarray(a)
        b = np.asarray(b)
        c = np.asarray(c)
        nvec = np.cross(b - a, c - a)
        nn = np.linalg.norm(nvec)
        if 0.5 * nn < area_floor:
            continue
        cen = (a + b + c) / 3.0
        r = (cen - lower) / size
        g = np.array(_cell_grad(vals, r[0], r[1], r[2]))
        if float(nvec @ g) < 0.0:
            b, c = c, b
            nvec = -nvec
        out.append((a, b, c))
        normals.append(nvec / nn)
    if not out:
        return np.empty((0, 3, 3)), np.empty((0, 3))
    return np.array(out), np.array(normals)


# ------------------------------------------------------------------- clipping


def _lex_less(p, q):
    for a in range(3):
        if p[a] != q[a]:
            return p[a] < q[a]
    return False


def _edge_zero_point(pa, ga, pb, gb):
    """Zero of the linear interpolant of g along the edge, computed in a
    canonical endpoint order so both cells sharing an edge get the same
    floating-point result."""
    if _lex_less(pb, pa):
        pa, pb = pb, pa
        ga, gb = gb, ga
    t = ga / (ga - gb)
    return pa + t * (pb - pa)


def clip_polygon(points, tags, gvals, new_tag):
    """Clip a convex polygon against g <= 0 (g linear along edges).

    points: list of (3,) arrays; tags[i] labels the edge points[i] ->
    points[i+1]; gvals: g at the vertices.  Returns (points, tags) of the
    clipped polygon; the closing edge introduced on g = 0 carries new_tag.
    """
    n = len(points)
    out_pts = []
    out_tags = []
    for i in range(n):
        a, b = points[i], points[(i + 1) % n]
        ga, gb = gvals[i], gvals[(i + 1) % n]
        ta = tags[i]
        ina, inb = ga <= 0.0, gb <= 0.0
        if ina:
            out_pts.append(a)
            out_tags.append(ta)
            if not inb:
                x = _edge_zero_point(a, ga, b, gb)
                out_pts.append(x)
                out_tags.append(new_tag)
        elif inb:
            x = _edge_zero_point(a, ga, b, gb)
            out_pts.append(x)
            out_tags.append(ta)
    return out_pts, out_tags


# ------------------------------------------------------------- reconstruction


@dataclass
class SurfacePatches:
    """Reconstructed (and trimmed) triangles of one component."""

    component: int
    tris: np.ndarray      # (nt, 3, 3)
    cells: np.ndarray     # (nt,) owning leaf index
    normals: np.ndarray   # (nt, 3) unit, aligned with grad phi_h

    @property
    def areas(self):
        return triangle_areas(self.tris)

    def area(self):
        return float(self.areas.sum())


@dataclass
class CurveSegmentSet:
    """Polyline (as independent segments) on a component's patches.

    kind: "junction", "dirichlet" (internal, penalized), "neumann" (internal
    free edge), "boundary-dirichlet" or "boundary-neumann" (on the box faces).
    components lists the junction members, or the single owner.  conormals are
    unit vectors in the owning triangle's plane, perpendicular to the segment,
    pointing out of the kept region (or out of the box for boundary sets).
    """

    kind: str
    components: tuple
    segments: np.ndarray   # (ns, 2, 3)
    cells: np.ndarray      # (ns,)
    conormals: np.ndarray  # (ns, 3)
    data: Optional[Callable] = None
    junction_id: Optional[int] = None
    face: Optional[tuple] = None

    def total_length(self):
        if self.segments.shape[0] == 0:
            return 0.0
        return float(segment_lengths(self.segments).sum())


def interpolate_levelset(component, mesh):
    """Continuous piecewise-trilinear nodal interpolant of the level set
    (hanging vertices take their constrained values)."""
    vals = evaluate_field(
        component.level_set.value, mesh.vertex_coords,
        what=f"level set of component {component.index}",
    )
    if vals.shape != (mesh.n_vertices,):
        raise GeometryInputError("level set must return one value per point")
    return mesh.constrain_values(vals)


def _classify_boundary_edges(comp, segs, cells, normals, mesh):
    """Split segments lying on the box faces into per-spec curve sets."""
    box_lo = mesh.origin
    box_hi = mesh.origin + np.array(mesh.dims) * mesh.h0
    tol = 1e-12 * mesh.h0
    sets = []
    if len(segs) == 0:
        return sets
    segs = np.asarray(segs)
    cells = np.asarray(cells)
    normals = np.asarray(normals)
    mids = segs.mean(axis=1)
    specs = list(comp.boundary)
    claimed = np.zeros(len(segs), dtype=bool)
    assign = -np.ones(len(segs), dtype=int)
    for si, spec in enumerate(specs):
        if spec.where is None:
            mask = ~claimed
        else:
            mask = np.asarray(spec.where(mids), dtype=bool) & ~claimed
        assign[mask] = si
        claimed |= mask
    for fi, (axis, side) in enumerate(
        [(a, s) for a in range(3) for s in (0, 1)]
    ):
        bound = box_hi[axis] if side else box_lo[axis]
        on = (np.abs(segs[:, 0, axis] - bound) <= tol) & (
            np.abs(segs[:, 1, axis] - bound) <= tol
        )
        if not on.any():
            continue
        nface = np.zeros(3)
        nface[axis] = 1.0 if side else -1.0
        for si in np.unique(assign[on]):
            sel = np.nonzero(on & (assign == si))[0]
            if sel.size == 0:
                continue
            spec = specs[si] if si >= 0 else BoundarySpec("neumann")
            tang = nface[None, :] - (normals[sel] @ nface)[:, None] * normals[sel]
            norm = np.linalg.norm(tang, axis=1, keepdims=True)
            tang = tang / np.where(norm == 0.0, 1.0, norm)
            sets.append(
                CurveSegmentSet(
                    kind=f"boundary-{spec.kind}",
                    components=(comp.index,),
                    segments=segs[sel],
                    cells=cells[sel],
                    conormals=tang,
                    data=spec.data,
                    face=(axis, side),
                )
            )
    return sets


def _trim_conormals(trim, segs, normals, scale):
    """Unit in-plane conormals pointing towards increasing trim function."""
    if len(segs) == 0:
        return np.empty((0, 3))
    segs = np.asarray(segs)
    normals = np.asarray(normals)
    d = segs[:, 1] - segs[:, 0]
    dn = np.linalg.norm(d, axis=1, keepdims=True)
    d = d / np.where(dn == 0.0, 1.0, dn)
    m = np.cross(d, normals)
    mids = segs.mean(axis=1)
    if trim.gradient is not None:
        g = evaluate_field(trim.gradient, mids, what="trim gradient")
        sign = np.sign(np.einsum("nd,nd->n", m, g))
    else:
        eps = 1e-6 * scale
        gp = evaluate_field(trim.fn, mids + eps * m, what="trim")
        gm = evaluate_field(trim.fn, mids - eps * m, what="trim")
        sign = np.sign(gp - gm)
    sign = np.where(sign == 0.0, 1.0, sign)
    return m * sign[:, None]


def build_component_patches(comp, mesh, phi):
    """Reconstruct, trim, and collect curves for one component.

    Returns (SurfacePatches, {trim index: (segments, cells, normals)},
    boundary curve sets).
    """
    corner = phi[mesh.cell_corners]
    vmin = corner.min(axis=1)
    vmax = corner.max(axis=1)
    degenerate = (vmin == 0.0) & (vmax == 0.0)
    if degenerate.any():
        raise DegenerateCutError(
            f"component {comp.index}: level set vanishes on whole cells"
        )
    cut_ids = np.nonzero((vmin < 0.0) & (vmax >= 0.0))[0]

    tris = []
    cells = []
    normals = []
    for c in cut_ids:
        t, nrm = reconstruct_cell(
            mesh.vertex_coords[mesh.cell_corners[c]],
            corner[c],
            mesh.cell_sizes[c],
        )
        if t.shape[0]:
            tris.append(t)
            cells.append(np.full(t.shape[0], c, dtype=np.int64))
            normals.append(nrm)
    if not tris:
        raise ConfigurationError(
            f"component {comp.index} does not intersect the meshed box"
        )
    tris = np.concatenate(tris)
    cells = np.concatenate(cells)
    normals = np.concatenate(normals)

    trim_curves = {j: ([], [], []) for j in range(len(comp.trims))}
    if comp.trims:
        nt = tris.shape[0]
        keep_all = np.ones(nt, dtype=bool)
        drop_any = np.zeros(nt, dtype=bool)
        gvals = []
        for trim in comp.trims:
            g = evaluate_field(
                trim.fn, tris.reshape(-1, 3), what="trim function"
            ).reshape(nt, 3)
            gvals.append(g)
            keep_all &= (g <= 0.0).all(axis=1)
            drop_any |= (g > 0.0).all(axis=1)
        mixed = np.nonzero(~keep_all & ~drop_any)[0]

        new_tris = [tris[keep_all]]
        new_cells = [cells[keep_all]]
        new_norms = [normals[keep_all]]
        for ti in mixed:
            pts = [tris[ti, 0], tris[ti, 1], tris[ti, 2]]
            tags = [None, None, None]
            alive = True
            for j, trim in enumerate(comp.trims):
                if len(pts) < 3:
                    alive = False
                    break
                if j == 0:
                    gv = list(gvals[0][ti])
                else:
                    gv = list(
                        evaluate_field(trim.fn, np.array(pts), what="trim function")
                    )
                pts, tags = clip_polygon(pts, tags, gv, j)
                if len(pts) < 3:
                    alive = False
                    break
            if alive and len(pts) >= 3:
                parent_n = normals[ti]
                cell = cells[ti]
                for i in range(1, len(pts) - 1):
                    a, b, c2 = pts[0], pts[i], pts[i + 1]
                    cr = np.cross(b - a, c2 - a)
                    nn = np.linalg.norm(cr)
                    if nn < 1e-30:
                        continue
                    if float(cr @ parent_n) < 0.0:
                        b, c2 = c2, b
                    new_tris.append(np.array([[a, b, c2]]))
                    new_cells.append(np.array([cell]))
                    new_norms.append(parent_n[None, :])
                m = len(pts)
                for i in range(m):
                    tag = tags[i]
                    if tag is None:
                        continue
                    a, b = pts[i], pts[(i + 1) % m]
                    if np.linalg.norm(b - a) < 1e-30:
                        continue
                    segs, scs, sns = trim_curves[tag]
                    segs.append(np.array([a, b]))
                    scs.append(cells[ti])
                    sns.append(normals[ti])
        tris = np.concatenate(new_tris) if new_tris else np.empty((0, 3, 3))
        cells = np.concatenate(new_cells) if new_cells else np.empty(0, np.int64)
        normals = np.concatenate(new_norms) if new_norms else np.empty((0, 3))
        if tris.shape[0] == 0:
            raise ConfigurationError(
                f"component {comp.index}: trims removed the whole surface"
            )

    patches = SurfacePatches(comp.index, tris, cells, normals)

    # outer boundary: triangle edges on the box faces
    box_lo = mesh.origin
    box_hi = mesh.origin + np.array(mesh.dims) * mesh.h0
    tol = 1e-12 * mesh.h0
    bsegs, bcells, bnorms = [], [], []
    v = tris
    for axis in range(3):
        for side, bound in ((0, box_lo[axis]), (1, box_hi[axis])):
            onf = np.abs(v[:, :, axis] - bound) <= tol
            for i in range(3):
                jn = (i + 1) % 3
                sel = np.nonzero(onf[:, i] & onf[:, jn])[0]
                for s in sel:
                    bsegs.append(np.array([v[s, i], v[s, jn]]))
                    bcells.append(cells[s])
                    bnorms.append(normals[s])
    boundary_sets = _classify_boundary_edges(comp, bsegs, bcells, bnorms, mesh)

    curve_arrays = {}
    for j, (segs, scs, sns) in trim_curves.items():
        if segs:
            curve_arrays[j] = (
                np.array(segs),
                np.array(scs, dtype=np.int64),
                np.array(sns),
            )
        else:
            curve_arrays[j] = (
                np.empty((0, 2, 3)),
                np.empty(0, dtype=np.int64),
                np.empty((0, 3)),
            )
    return patches, curve_arrays, boundary_sets


@dataclass
class ReconstructedGeometry:
    mesh: object
    network: FractureNetwork
    phi: dict
    patches: dict
    trim_curves: dict       # (component index, trim index) -> CurveSegmentSet
    junction_curves: dict   # junction id -> CurveSegmentSet (host's segments)
    boundary_curves: dict   # component index -> [CurveSegmentSet, ...]

    def component_area(self, index):
        return self.patches[index].area()

    def junction_length(self, jid):
        return self.junction_curves[jid].total_length()

    def dirichlet_boundary_sets(self, index):
        return [s for s in self.boundary_curves[index] if s.kind == "boundary-dirichlet"]

    def neumann_boundary_sets(self, index):
        return [
            s
            for s in self.boundary_curves[index]
            if s.kind == "boundary-neumann" and s.data is not None
        ]

    def internal_dirichlet_sets(self, index):
        comp = self.network.component(index)
        out = []
        for j, trim in enumerate(comp.trims):
            if trim.kind == "dirichlet":
                out.append(self.trim_curves[(index, j)])
        return out


def reconstruct(network, mesh):
    """Reconstruct every component and all curves of the network."""
    phi = {}
    patches = {}
    trim_sets = {}
    boundary = {}
    for comp in network.components:
        phi_c = interpolate_levelset(comp, mesh)
        p, curves, bsets = build_component_patches(comp, mesh, phi_c)
        phi[comp.index] = phi_c
        patches[comp.index] = p
        boundary[comp.index] = bsets
        for j, trim in enumerate(comp.trims):
            segs, scs, sns = curves[j]
            scale = float(mesh.cell_sizes.min())
            kind = trim.kind
            trim_sets[(comp.index, j)] = CurveSegmentSet(
                kind=kind,
                components=(comp.index,),
                segments=segs,
                cells=scs,
                conormals=_trim_conormals(trim, segs, sns, scale),
                data=trim.data,
                junction_id=trim.junction_id,
            )

    junction_curves = {}
    for j in network.junctions:
        host = network.component(j.host)
        tidx = next(
            i
            for i, t in enumerate(host.trims)
            if t.kind == "junction" and t.junction_id == j.id
        )
        cs = trim_sets[(j.host, tidx)]
        if cs.segments.shape[0] == 0:
            raise GeometryConsistencyError(
                f"junction {j.id}: host component {j.host} has no curve on the mesh"
            )
        junction_curves[j.id] = CurveSegmentSet(
            kind="junction",
            components=tuple(j.members),
            segments=cs.segments,
            cells=cs.cells,
            conormals=cs.conormals,
            junction_id=j.id,
        )
        for m in j.members:
            comp = network.component(m)
            mi = next(
                i
                for i, t in enumerate(comp.trims)
                if t.kind == "junction" and t.junction_id == j.id
            )
            if trim_sets[(m, mi)].segments.shape[0] == 0:
                raise GeometryConsistencyError(
                    f"junction {j.id}: member {m} does not reach the junction"
                )

    return ReconstructedGeometry(
        mesh=mesh,
        network=network,
        phi=phi,
        patches=patches,
        trim_curves=trim_sets,
        junction_curves=junction_curves,
        boundary_curves=boundary,
    )


def extended_normal(component, points, mesh=None, phi=None):
    """Unit normal field of a component evaluated off the surface.

    Prefers the analytic level-set gradient; falls back to the gradient of
    the trilinear interpolant on the given mesh (never a finite difference of
    the raw field)."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if component.level_set.gradient is not None:
        g = evaluate_field(component.level_set.gradient, points, what="gradient")
    else:
        if mesh is None or phi is None:
            raise ConfigurationError(
                "no analytic gradient: an interpolated field is required"
            )
        cells = mesh.locate(points)
        g = mesh.eval_trilinear_grad(phi, cells, points)
    norms = np.linalg.norm(g, axis=1, keepdims=True)
    if np.any(norms < 1e-12):
        raise GeometryInputError("level-set gradient vanishes at a query point")
    return g / norms


def patch_quadrature_residual(geom, index):
    """Max |phi_h| over patch triangle vertices, in units of the cell size.

    Vertices of the untrimmed reconstruction lie on the zero set of the
    interpolant by construction; this measures how well that holds after all
    floating-point steps."""
    patches = geom.patches[index]
    phi = geom.phi[index]
    mesh = geom.mesh
    worst = 0.0
    for i in range(3):
        pts = patches.tris[:, i, :]
        vals = mesh.eval_trilinear(phi, patches.cells, pts)
        h = mesh.cell_sizes[patches.cells]
        worst = max(worst, float(np.max(np.abs(vals) / h)))
    return worst
