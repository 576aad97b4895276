"""Legacy ASCII VTK writers for surfaces, curves, and background meshes.

POLYDATA files carry the reconstructed triangles as polygons and the curve
sets (junctions, box-face boundaries, penalized internal boundaries, free
edges) as line cells.  Cell data follows the reader's fixed ordering, lines
before polygons.  Background octrees go out as UNSTRUCTURED_GRID files of
voxel cells, whose corner numbering matches the mesh's own bit order.
"""

import numpy as np

from .errors import ConfigurationError
from .spaces import evaluate_solution


def _fmt_points(out, points):
    out.append(f"POINTS {points.shape[0]} double")
    for p in points:
        out.append(f"{p[0]:.9g} {p[1]:.9g} {p[2]:.9g}")


def write_polydata(
    path,
    points,
    lines=None,
    polygons=None,
    point_scalars=None,
    cell_scalars=None,
    cell_vectors=None,
    title="fracdarcy surface",
):
    """Minimal legacy POLYDATA writer.

    `lines` (nl, 2) and `polygons` (nt, 3) index into points. Cell data
    arrays must be ordered line cells first, then polygon cells."""
    points = np.asarray(points, dtype=float)
    lines = np.empty((0, 2), dtype=np.int64) if lines is None else np.asarray(lines)
    polygons = (
        np.empty((0, 3), dtype=np.int64) if polygons is None else np.asarray(polygons)
    )
    n_cells = lines.shape[0] + polygons.shape[0]

    out = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET POLYDATA"]
    _fmt_points(out, points)
    if lines.shape[0]:
        out.append(f"LINES {lines.shape[0]} {3 * lines.shape[0]}")
        for a, b in lines:
            out.append(f"2 {a} {b}")
    if polygons.shape[0]:
        out.append(f"POLYGONS {polygons.shape[0]} {4 * polygons.shape[0]}")
        for a, b, c in polygons:
            out.append(f"3 {a} {b} {c}")

    if point_scalars:
        out.append(f"POINT_DATA {points.shape[0]}")
        for name, vals in point_scalars.items():
            vals = np.asarray(vals, dtype=float)
            if vals.shape[0] != points.shape[0]:
                raise ConfigurationError(f"point data {name!r} has wrong length")
            out.append(f"SCALARS {name} double 1")
            out.append("LOOKUP_TABLE default")
            out.extend(f"{v:.9g}" for v in vals)
    if cell_scalars or cell_vectors:
        out.append(f"CELL_DATA {n_cells}")
        for name, vals in (cell_scalars or {}).items():
            vals = np.asarray(vals)
            if vals.shape[0] != n_cells:
                raise ConfigurationError(f"cell data {name!r} has wrong length")
            if np.issubdtype(vals.dtype, np.integer):
                out.append(f"SCALARS {name} int 1")
                out.append("LOOKUP_TABLE default")
                out.extend(str(int(v)) for v in vals)
            else:
                out.append(f"SCALARS {name} double 1")
                out.append("LOOKUP_TABLE default")
                out.extend(f"{v:.9g}" for v in vals)
        for name, vals in (cell_vectors or {}).items():
            vals = np.asarray(vals, dtype=float)
            if vals.shape != (n_cells, 3):
                raise ConfigurationError(f"cell vectors {name!r} have wrong shape")
            out.append(f"VECTORS {name} double")
            out.extend(f"{v[0]:.9g} {v[1]:.9g} {v[2]:.9g}" for v in vals)
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")
    return path


def _curve_sets(geom):
    """Curve sets worth drawing, with the component whose trace to sample."""
    for jid in sorted(geom.junction_curves):
        cs = geom.junction_curves[jid]
        yield cs, cs.components[0]
    for i in sorted(geom.boundary_curves):
        for cs in geom.boundary_curves[i]:
            yield cs, i
    for (i, k) in sorted(geom.trim_curves):
        cs = geom.trim_curves[(i, k)]
        if cs.kind in ("dirichlet", "neumann"):
            yield cs, i


def _gather(geom, pspace=None, x=None):
    """Points/cells/data arrays of the whole network, lines before polygons."""
    pts_chunks, press_chunks = [], []
    line_idx, poly_idx = [], []
    line_comp, poly_comp = [], []
    line_vel, poly_vel = [], []
    offset = 0

    solved = pspace is not None and x is not None
    for cs, owner in _curve_sets(geom):
        ns = cs.segments.shape[0]
        if ns == 0:
            continue
        p = cs.segments.reshape(-1, 3)
        line_idx.append(offset + np.arange(2 * ns).reshape(-1, 2))
        line_comp.append(np.full(ns, owner, dtype=np.int64))
        if solved:
            ph, _ = evaluate_solution(
                pspace, geom, owner, x, np.repeat(cs.cells, 2), p
            )
            _, um = evaluate_solution(
                pspace, geom, owner, x, cs.cells, cs.segments.mean(axis=1)
            )
            press_chunks.append(ph)
            line_vel.append(um)
        pts_chunks.append(p)
        offset += p.shape[0]

    for comp in geom.network.components:
        i = comp.index
        patches = geom.patches[i]
        nt = patches.tris.shape[0]
        p = patches.tris.reshape(-1, 3)
        poly_idx.append(offset + np.arange(3 * nt).reshape(-1, 3))
        poly_comp.append(np.full(nt, i, dtype=np.int64))
        if solved:
            ph, _ = evaluate_solution(
                pspace, geom, i, x, np.repeat(patches.cells, 3), p
            )
            _, um = evaluate_solution(
                pspace, geom, i, x, patches.cells, patches.tris.mean(axis=1)
            )
            press_chunks.append(ph)
            poly_vel.append(um)
        pts_chunks.append(p)
        offset += p.shape[0]

    def cat(chunks, width=None):
        if not chunks:
            shape = (0,) if width is None else (0, width)
            return np.empty(shape)
        return np.concatenate(chunks)

    points = cat(pts_chunks, 3)
    lines = cat(line_idx, 2).astype(np.int64) if line_idx else None
    polys = cat(poly_idx, 3).astype(np.int64) if poly_idx else None
    comp_ids = np.concatenate(
        [cat(line_comp).astype(np.int64), cat(poly_comp).astype(np.int64)]
    )
    data = {}
    if solved:
        data["pressure"] = cat(press_chunks)
        data["velocity"] = np.concatenate(
            [cat(line_vel, 3), cat(poly_vel, 3)]
        )
    return points, lines, polys, comp_ids, data


def write_solution(path, geom, pspace, x):
    """Solved network: pressure at vertices, velocity per cell, curve cells."""
    points, lines, polys, comp_ids, data = _gather(geom, pspace, x)
    return write_polydata(
        path,
        points,
        lines=lines,
        polygons=polys,
        point_scalars={"pressure": data["pressure"]},
        cell_scalars={"component": comp_ids},
        cell_vectors={"velocity": data["velocity"]},
        title="fracdarcy solution",
    )


def write_surface(path, geom):
    """Reconstructed geometry only: triangles, curves, component ids."""
    points, lines, polys, comp_ids, _ = _gather(geom)
    return write_polydata(
        path,
        points,
        lines=lines,
        polygons=polys,
        cell_scalars={"component": comp_ids},
        title="fracdarcy geometry",
    )


def write_mesh(path, mesh):
    """Background octree as voxel cells with their refinement level."""
    out = [
        "# vtk DataFile Version 3.0",
        "fracdarcy background mesh",
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
    ]
    _fmt_points(out, mesh.vertex_coords)
    nc = mesh.n_cells
    out.append(f"CELLS {nc} {9 * nc}")
    for corners in mesh.cell_corners:
        out.append("8 " + " ".join(str(int(v)) for v in corners))
    out.append(f"CELL_TYPES {nc}")
    out.extend(["11"] * nc)
    out.append(f"CELL_DATA {nc}")
    out.append("SCALARS level int 1")
    out.append("LOOKUP_TABLE default")
    out.extend(str(int(v)) for v in mesh.levels)
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")
    return path
