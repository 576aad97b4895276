"""Octree background meshes of axis-aligned cubic cells.

The mesh starts from a coarse lattice of nx x ny x nz cubes filling an
axis-aligned box (the root cells must be cubes, the box need not be one) and
refines cells by splitting them into 8 children.  A 2:1 level balance is
maintained across faces and edges, so a vertex of a fine cell can sit only on
the interior of a face or an edge of a directly coarser neighbor.  Such
hanging vertices carry interpolation constraints (weights 1/4 on the four
face corners, 1/2 on the two edge endpoints) and any nodal field that honors
the constraints is continuous across refinement interfaces.

Vertices are deduplicated through their integer coordinates on the lattice of
the finest level, so coordinates of shared vertices are bit-identical across
the cells that touch them.  Corner k of a cell carries the offset
(k & 1, k >> 1 & 1, k >> 2 & 1), i.e. x varies fastest.
"""

from __future__ import annotations

from collections import deque

import numpy as np

from .errors import ConfigurationError, GeometryInputError, PreconditionError

CORNER_OFFSETS = np.array([[k & 1, (k >> 1) & 1, (k >> 2) & 1] for k in range(8)])

# face and edge neighbor directions (no corner-only adjacency in the balance rule)
_NEIGHBOR_DIRS = [
    (dx, dy, dz)
    for dx in (-1, 0, 1)
    for dy in (-1, 0, 1)
    for dz in (-1, 0, 1)
    if 1 <= abs(dx) + abs(dy) + abs(dz) <= 2
]


def _children(key):
    l, i, j, k = key
    return [
        (l + 1, 2 * i + (c & 1), 2 * j + ((c >> 1) & 1), 2 * k + ((c >> 2) & 1))
        for c in range(8)
    ]


def _split(leaves, key):
    leaves.remove(key)
    kids = _children(key)
    leaves.update(kids)
    return kids


def _balance(leaves, dims):
    """Enforce the 2:1 rule across faces and edges by splitting coarse leaves.

    Every violating pair (fine leaf, >= 2 levels coarser neighbor) is seen from
    the fine side, so it suffices to queue each leaf and re-queue children of
    whatever gets split.
    """
    queue = deque(leaves)
    while queue:
        cell = queue.pop()
        if cell not in leaves:
            continue
        l, i, j, k = cell
        if l < 2:
            continue
        nx, ny, nz = (d << l for d in dims)
        for dx, dy, dz in _NEIGHBOR_DIRS:
            ni, nj, nk = i + dx, j + dy, k + dz
            if not (0 <= ni < nx and 0 <= nj < ny and 0 <= nk < nz):
                continue
            for L in range(l - 2, -1, -1):
                sh = l - L
                coarse = (L, ni >> sh, nj >> sh, nk >> sh)
                if coarse in leaves:
                    queue.extend(_split(leaves, coarse))
                    queue.append(cell)
                    break
            else:
                continue
            break


class OctreeMesh:
    """Finalized leaf mesh with vertex table and hanging-node constraints."""

    def __init__(self, origin, h0, dims, leaves):
        if not leaves:
            raise ConfigurationError("mesh has no cells")
        self.origin = np.asarray(origin, dtype=float)
        self.h0 = float(h0)
        self.dims = tuple(int(d) for d in dims)
        keys = sorted(leaves)
        self.levels = np.array([c[0] for c in keys], dtype=np.int64)
        self.ijk = np.array([c[1:] for c in keys], dtype=np.int64)
        self.max_level = int(self.levels.max())
        self.fine_step = self.h0 / (1 << self.max_level)
        self.cell_scale = (1 << (self.max_level - self.levels)).astype(np.int64)
        self.cell_sizes = self.h0 / (1 << self.levels).astype(float)

        lower_fine = self.ijk * self.cell_scale[:, None]
        corners_fine = (
            lower_fine[:, None, :]
            + CORNER_OFFSETS[None, :, :] * self.cell_scale[:, None, None]
        )
        self._fine_dims = tuple((d << self.max_level) for d in self.dims)
        nfy = self._fine_dims[1] + 1
        nfz = self._fine_dims[2] + 1
        enc = (corners_fine[..., 0] * nfy + corners_fine[..., 1]) * nfz + corners_fine[..., 2]
        uniq, inv = np.unique(enc, return_inverse=True)
        self.cell_corners = inv.reshape(-1, 8).astype(np.int64)
        vz = uniq % nfz
        rem = uniq // nfz
        vy = rem % nfy
        vx = rem // nfy
        self.vertex_fine = np.stack([vx, vy, vz], axis=1).astype(np.int64)
        self.vertex_coords = self.origin[None, :] + self.vertex_fine * self.fine_step
        self.cell_lower = self.origin[None, :] + lower_fine * self.fine_step
        self._leaf_index = {key: idx for idx, key in enumerate(keys)}
        self._build_constraints()

    # ------------------------------------------------------------------ sizes

    @property
    def n_cells(self):
        return self.levels.shape[0]

    @property
    def n_vertices(self):
        return self.vertex_coords.shape[0]

    def leaf_keys(self):
        return [
            (int(l), int(i), int(j), int(k))
            for l, (i, j, k) in zip(self.levels, self.ijk)
        ]

    def volume(self):
        return float(np.sum(self.cell_sizes**3))

    def stats(self):
        return {
            "cells": int(self.n_cells),
            "vertices": int(self.n_vertices),
            "hanging": int(self.is_hanging.sum()),
            "min_size": float(self.cell_sizes.min()),
            "max_size": float(self.cell_sizes.max()),
            "max_level": self.max_level,
        }

    # ------------------------------------------------------ hanging vertices

    def _level_tables(self):
        """Sorted encoded leaf keys per level, for vectorized membership."""
        tables = {}
        nfy = self._fine_dims[1]
        nfz = self._fine_dims[2]
        for L in range(self.max_level + 1):
            sel = np.nonzero(self.levels == L)[0]
            if sel.size == 0:
                tables[L] = (np.empty(0, dtype=np.int64), sel)
                continue
            ijk = self.ijk[sel]
            enc = (ijk[:, 0] * (nfy + 1) + ijk[:, 1]) * (nfz + 1) + ijk[:, 2]
            order = np.argsort(enc)
            tables[L] = (enc[order], sel[order])
        return tables

    def _build_constraints(self):
        nv = self.n_vertices
        self.is_hanging = np.zeros(nv, dtype=bool)
        self.constraints_raw = {}
        self.constraints = {}
        if self.max_level == 0:
            return

        tables = self._level_tables()
        nfy = self._fine_dims[1]
        nfz = self._fine_dims[2]
        f = self.vertex_fine
        # lower corners of the up-to-8 fine-lattice cells incident to each vertex
        cand = f[:, None, :] - CORNER_OFFSETS[None, :, :]
        valid = np.all(cand >= 0, axis=2)
        for a in range(3):
            valid &= cand[:, :, a] < self._fine_dims[a]

        owner = -np.ones((nv, 8), dtype=np.int64)
        unresolved = valid.copy()
        for L in range(self.max_level, -1, -1):
            if not unresolved.any():
                break
            keys_sorted, cell_ids = tables[L]
            if keys_sorted.size == 0:
                continue
            sh = self.max_level - L
            sub = cand >> sh
            enc = (sub[:, :, 0] * (nfy + 1) + sub[:, :, 1]) * (nfz + 1) + sub[:, :, 2]
            pos = np.searchsorted(keys_sorted, enc)
            pos_c = np.minimum(pos, keys_sorted.size - 1)
            hit = unresolved & (keys_sorted[pos_c] == enc)
            owner[hit] = cell_ids[pos_c[hit]]
            unresolved &= ~hit
        if (unresolved & valid).any():
            raise PreconditionError("leaf lookup failed: leaves do not tile the box")

        # a vertex hangs on an owner cell when it is not one of its corners
        own_flat = owner.reshape(-1)
        ok = own_flat >= 0
        vids = np.repeat(np.arange(nv), 8)[ok]
        cells = own_flat[ok]
        rel = f[vids] - self.ijk[cells] * self.cell_scale[cells, None]
        scale = self.cell_scale[cells]
        inside = ((rel % scale[:, None]) != 0).any(axis=1)
        if not inside.any():
            return
        vids, cells, rel, scale = vids[inside], cells[inside], rel[inside], scale[inside]
        # keep the coarsest owner per vertex (deterministic, and valid for any
        # balanced configuration)
        order = np.lexsort((-scale, vids))
        vids, cells, rel, scale = vids[order], cells[order], rel[order], scale[order]
        first = np.ones(vids.shape[0], dtype=bool)
        first[1:] = vids[1:] != vids[:-1]
        vids, cells, rel, scale = vids[first], cells[first], rel[first], scale[first]

        # digit per axis: 0 at the low corner, 1 at the midpoint, 2 at the high
        digits = (2 * rel) // scale[:, None]
        corner_w = {0: (1.0, 0.0), 1: (0.5, 0.5), 2: (0.0, 1.0)}
        pattern = digits[:, 0] * 9 + digits[:, 1] * 3 + digits[:, 2]
        for pat in np.unique(pattern):
            d = (pat // 9, (pat // 3) % 3, pat % 3)
            if all(x != 1 for x in d):
                raise PreconditionError("hanging vertex coincides with a corner")
            if sum(x == 1 for x in d) == 3:
                raise PreconditionError("vertex interior to a leaf volume")
            w8 = np.array(
                [
                    corner_w[d[0]][c & 1]
                    * corner_w[d[1]][(c >> 1) & 1]
                    * corner_w[d[2]][(c >> 2) & 1]
                    for c in range(8)
                ]
            )
            nz = np.nonzero(w8 > 0.0)[0]
            sel = np.nonzero(pattern == pat)[0]
            masters = self.cell_corners[cells[sel]][:, nz]
            for row, v in enumerate(vids[sel]):
                self.constraints_raw[int(v)] = (masters[row].copy(), w8[nz].copy())

        self.is_hanging[list(self.constraints_raw.keys())] = True
        self._resolve_constraints()

    def _resolve_constraints(self):
        """Expand raw constraints until every master is an unconstrained vertex."""
        memo = {}

        def resolve(v, depth):
            if v in memo:
                return memo[v]
            if depth > self.max_level + 1:
                raise PreconditionError("constraint chain exceeds refinement depth")
            ids, w = self.constraints_raw[v]
            acc = {}
            for m, wm in zip(ids, w):
                m = int(m)
                if m in self.constraints_raw:
                    mids, mw = resolve(m, depth + 1)
                    for mm, wmm in zip(mids, mw):
                        acc[int(mm)] = acc.get(int(mm), 0.0) + wm * wmm
                else:
                    acc[m] = acc.get(m, 0.0) + wm
            items = sorted(acc.items())
            out = (
                np.array([m for m, _ in items], dtype=np.int64),
                np.array([wv for _, wv in items]),
            )
            memo[v] = out
            return out

        for v in sorted(self.constraints_raw):
            self.constraints[v] = resolve(v, 0)

    def hanging_constraints(self):
        """Resolved constraint table: hanging vertex -> (master ids, weights)."""
        return self.constraints

    def constrain_values(self, values):
        """Overwrite hanging entries of a nodal vector with their constrained values."""
        values = np.array(values, dtype=float, copy=True)
        for v, (ids, w) in self.constraints.items():
            values[v] = float(w @ values[ids])
        return values

    # ------------------------------------------------------------- evaluation

    def locate(self, points):
        """Leaf index containing each point (points on shared faces resolve to
        the cell on the + side, except at the box maximum)."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        L = self.max_level
        out = np.empty(points.shape[0], dtype=np.int64)
        for n, p in enumerate(points):
            fr = (p - self.origin) / self.fine_step
            fi = [int(min(max(np.floor(fr[a]), 0), self._fine_dims[a] - 1)) for a in range(3)]
            for l in range(L, -1, -1):
                sh = L - l
                key = (l, fi[0] >> sh, fi[1] >> sh, fi[2] >> sh)
                idx = self._leaf_index.get(key)
                if idx is not None:
                    out[n] = idx
                    break
            else:
                raise PreconditionError(f"point {p} is outside the meshed box")
        return out

    def _reference_coords(self, cells, points):
        lo = self.cell_lower[cells]
        s = self.cell_sizes[cells]
        return (points - lo) / s[:, None], s

    def trilinear_basis(self, cells, points):
        """Values of the 8 corner basis functions at the given points, (n, 8)."""
        xi, _ = self._reference_coords(cells, points)
        N = np.ones((points.shape[0], 8))
        for a in range(3):
            xa = xi[:, a][:, None]
            N *= np.where(CORNER_OFFSETS[None, :, a] == 1, xa, 1.0 - xa)
        return N

    def trilinear_basis_grad(self, cells, points):
        """Gradients of the 8 corner basis functions, (n, 8, 3)."""
        xi, s = self._reference_coords(cells, points)
        n = points.shape[0]
        F = np.empty((3, n, 8))
        D = np.empty((3, 1, 8))
        for a in range(3):
            xa = xi[:, a][:, None]
            on = CORNER_OFFSETS[None, :, a] == 1
            F[a] = np.where(on, xa, 1.0 - xa)
            D[a] = np.where(on, 1.0, -1.0)
        G = np.empty((n, 8, 3))
        G[:, :, 0] = D[0] * F[1] * F[2]
        G[:, :, 1] = D[1] * F[0] * F[2]
        G[:, :, 2] = D[2] * F[0] * F[1]
        return G / s[:, None, None]

    def eval_trilinear(self, values, cells, points):
        N = self.trilinear_basis(cells, points)
        return np.einsum("na,na->n", N, values[self.cell_corners[cells]])

    def eval_trilinear_grad(self, values, cells, points):
        G = self.trilinear_basis_grad(cells, points)
        return np.einsum("nad,na->nd", G, values[self.cell_corners[cells]])


def build_uniform(box, n):
    """Uniform mesh of cubic cells: n (or (nx, ny, nz)) cells per axis."""
    box = np.asarray(box, dtype=float)
    if box.shape != (3, 2):
        raise ConfigurationError("box must be ((x0,x1),(y0,y1),(z0,z1))")
    if np.isscalar(n) or np.ndim(n) == 0:
        dims = (int(n),) * 3
    else:
        dims = tuple(int(v) for v in n)
    if len(dims) != 3 or any(d < 1 for d in dims):
        raise ConfigurationError(f"bad cell counts {dims}")
    ext = box[:, 1] - box[:, 0]
    if np.any(ext <= 0):
        raise ConfigurationError("box extents must be positive")
    sizes = ext / np.array(dims, dtype=float)
    h0 = float(sizes[0])
    if np.any(np.abs(sizes - h0) > 1e-12 * h0):
        raise ConfigurationError(
            f"root cells must be cubes: box extents {ext.tolist()} vs counts {dims}"
        )
    leaves = {
        (0, i, j, k)
        for i in range(dims[0])
        for j in range(dims[1])
        for k in range(dims[2])
    }
    return OctreeMesh(box[:, 0], h0, dims, leaves)


def _as_surface_list(surfaces):
    if hasattr(surfaces, "components"):
        return [(c.level_set.value, [t.fn for t in c.trims]) for c in surfaces.components]
    out = []
    for s in surfaces:
        if callable(s):
            out.append((s, []))
        else:
            fn, trims = s
            out.append((fn, list(trims)))
    return out


def refine_near_surface(mesh, surfaces, levels, band=1.0):
    """Refine `levels` times every leaf whose inflated box straddles a surface.

    The box of each leaf is inflated by band * size on every side and probed on
    its 3x3x3 lattice of corners/face centers/center; a sign change of the
    level set marks the leaf.  For trimmed surfaces the mark additionally
    requires some sample to be within the inflated half-diagonal of the kept
    region (max over trim functions below sqrt(3) * inflated half-width), a
    conservative test that never unmarks a truly cut cell.  Each pass is
    followed by a 2:1 face/edge rebalance.
    """
    surfs = _as_surface_list(surfaces)
    offs = np.array(
        [(i, j, k) for i in (-1, 0, 1) for j in (-1, 0, 1) for k in (-1, 0, 1)],
        dtype=float,
    )
    leaves = set(mesh.leaf_keys())
    for _ in range(levels):
        keys = sorted(leaves)
        lv = np.array([c[0] for c in keys])
        ijk = np.array([c[1:] for c in keys], dtype=float)
        size = mesh.h0 / (1 << lv)
        center = mesh.origin[None, :] + (ijk + 0.5) * size[:, None]
        half = (0.5 + band) * size
        pts = center[:, None, :] + offs[None, :, :] * half[:, None, None]
        flat = pts.reshape(-1, 3)
        marked = np.zeros(len(keys), dtype=bool)
        for value, trims in surfs:
            vals = np.asarray(value(flat), dtype=float).reshape(len(keys), 27)
            if np.isnan(vals).any():
                raise GeometryInputError("level set returned NaN during refinement")
            near = (vals.min(axis=1) < 0.0) & (vals.max(axis=1) > 0.0)
            if trims:
                worst = np.full((len(keys), 27), -np.inf)
                for t in trims:
                    tv = np.asarray(t(flat), dtype=float).reshape(len(keys), 27)
                    worst = np.maximum(worst, tv)
                margin = np.sqrt(3.0) * half
                near &= worst.min(axis=1) <= margin
            marked |= near
        if not marked.any():
            break
        for key, m in zip(keys, marked):
            if m:
                _split(leaves, key)
        _balance(leaves, mesh.dims)
    return OctreeMesh(mesh.origin, mesh.h0, mesh.dims, leaves)


def is_balanced(mesh):
    """Check the 2:1 face/edge rule directly on the leaf set."""
    leaves = set(mesh.leaf_keys())
    for l, i, j, k in leaves:
        if l < 2:
            continue
        nx, ny, nz = (d << l for d in mesh.dims)
        for dx, dy, dz in _NEIGHBOR_DIRS:
            ni, nj, nk = i + dx, j + dy, k + dz
            if not (0 <= ni < nx and 0 <= nj < ny and 0 <= nk < nz):
                continue
            for L in range(l - 2, -1, -1):
                sh = l - L
                if (L, ni >> sh, nj >> sh, nk >> sh) in leaves:
                    return False
    return True
