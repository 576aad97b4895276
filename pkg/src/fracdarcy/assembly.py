"""Assembly of the stabilized mixed Darcy form on trace spaces.

With u the flux and p the pressure on the network, the discrete bilinear
form on each component integrates over the reconstructed patches

    (K^-1 u, v) + (grad p, v) - (grad q, u) + (K grad p, grad q)

using full ambient gradients of the trilinear bases, and adds

* a junction over-penalty (rho_e / h^2) sum_{k<l} (p_k - p_l, q_k - q_l)
  over every junction curve, coupling all member pairs;
* normal-derivative volume stabilization rho_u h (n . grad u, n . grad v) and
  rho_p h (n . grad p, n . grad q) integrated over the full active cells of
  each component (2x2x2 Gauss), with n the extended unit normal;
* an internal Dirichlet penalty (rho_dir / h^2) (p - p_D, q) over immersed
  boundary curves.

The load functional is f(v, q) = 2 (g, q) + (f, -v + K grad q) - 2 (psi, q)
on Neumann boundary curves with data.  Box-face Dirichlet values are imposed
by eliminating the interpolated vertex values symmetric-free (values moved to
the right-hand side at solve time).

The associated mesh-dependent norm

    |||(v, q)|||^2 = (K^-1 v, v) + sum_i rho_u h (n . grad v, n . grad v)
                   + (K grad q, grad q) + penalty terms + rho_p h (...)

is assembled by `assemble_norm_matrix` through a separate plain accumulation
path; the identity a(v, q; v, q) = |||(v, q)|||^2 holds exactly (the mixed
blocks are skew) and is what the tests check the assembly against.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .errors import ConfigurationError, GeometryConsistencyError
from .fields import evaluate_field
from .quadrature import cell_gauss_rule, segment_gauss_rule, triangle_midpoint_rule
from .spaces import FIELD_P, FIELD_UX, FIELD_UY, FIELD_UZ

_CHUNK = 20000


@dataclass
class FormParameters:
    rho_e: float = 1.0
    rho_u: float = 1.0
    rho_p: float = 1.0
    rho_dir: float = 1.0
    h_def: str = "local"

    def __post_init__(self):
        for name in ("rho_e", "rho_u", "rho_p", "rho_dir"):
            v = float(getattr(self, name))
            if not v > 0.0:
                raise ConfigurationError(f"{name} must be positive, got {v}")
            setattr(self, name, v)
        if self.h_def not in ("local", "global"):
            raise ConfigurationError("h_def must be 'local' or 'global'")


@dataclass
class LinearSystem:
    A: sp.csr_matrix
    b: np.ndarray
    space: object
    params: FormParameters
    global_h: float
    assembly_time: float = 0.0
    _reduced: Optional[tuple] = field(default=None, repr=False)

    @property
    def n(self):
        return self.b.shape[0]

    def reduce(self):
        """Eliminate essential dofs: returns (A_ff, b_f, free_idx)."""
        if self._reduced is None:
            ess = self.space.essential_idx
            free = np.ones(self.n, dtype=bool)
            free[ess] = False
            free_idx = np.nonzero(free)[0]
            A_rows = self.A.tocsr()[free_idx, :].tocsc()
            A_ff = A_rows[:, free_idx].tocsr()
            if ess.size:
                b_f = self.b[free_idx] - A_rows[:, ess] @ self.space.essential_vals
            else:
                b_f = self.b[free_idx].copy()
            self._reduced = (A_ff, b_f, free_idx)
        return self._reduced

    def expand(self, x_free):
        x = np.empty(self.n)
        _, _, free_idx = self.reduce()
        x[free_idx] = x_free
        if self.space.essential_idx.size:
            x[self.space.essential_idx] = self.space.essential_vals
        return x


# ------------------------------------------------------------------ gathering


def _active_rows(cspace, cells):
    return np.vectorize(cspace.cell_pos.__getitem__, otypes=[np.int64])(cells)


def _surface_quadrature(cspace, geom):
    """Midpoint-rule quadrature over a component's patches, with the owning
    cells and the provisional corner rows per point."""
    patches = geom.patches[cspace.component]
    pts3, w3 = triangle_midpoint_rule(patches.tris)
    pts = pts3.reshape(-1, 3)
    w = w3.reshape(-1)
    cells = np.repeat(patches.cells, 3)
    rows = _active_rows(cspace, cells)
    corner_rows = cspace.cell_corner_rows[rows]
    return pts, w, cells, corner_rows


def _volume_quadrature(cspace, geom):
    mesh = geom.mesh
    cells = cspace.active_cells
    pts8, w8 = cell_gauss_rule(mesh.cell_lower[cells], mesh.cell_sizes[cells])
    pts = pts8.reshape(-1, 3)
    w = w8.reshape(-1)
    qcells = np.repeat(cells, 8)
    corner_rows = cspace.cell_corner_rows[np.repeat(np.arange(cells.shape[0]), 8)]
    return pts, w, qcells, corner_rows


def _extended_normals(comp, geom, cells, pts):
    ls = comp.level_set
    if ls.gradient is not None:
        g = evaluate_field(ls.gradient, pts, what="level-set gradient")
    else:
        g = geom.mesh.eval_trilinear_grad(geom.phi[comp.index], cells, pts)
    nrm = np.linalg.norm(g, axis=1, keepdims=True)
    if np.any(nrm < 1e-12):
        raise GeometryConsistencyError("vanishing normal inside an active cell")
    return g / nrm


def _accumulate(nprov, corner_rows, blocks):
    """Sum per-point 8x8 blocks into an (nprov, nprov) CSR matrix, chunked."""
    nq = corner_rows.shape[0]
    out = sp.csr_matrix((nprov, nprov))
    for s in range(0, nq, _CHUNK):
        e = min(s + _CHUNK, nq)
        r = corner_rows[s:e]
        blk = blocks[s:e]
        rows = np.repeat(r, 8, axis=1).reshape(-1)
        cols = np.tile(r, (1, 8)).reshape(-1)
        out = out + sp.coo_matrix(
            (blk.reshape(-1), (rows, cols)), shape=(nprov, nprov)
        ).tocsr()
    return out


def _component_scalar_matrices(cspace, comp, geom, params):
    """Provisional-basis scalar matrices reduced to free dofs.

    Returns M (surface mass), B[a] (int N_l d_a N_m), KK (surface stiffness
    with permeability), S (normal-derivative volume stabilization including
    the local h factor, excluding rho)."""
    mesh = geom.mesh
    nprov = cspace.vertices.shape[0]
    E = cspace.expansion

    pts, w, cells, corner_rows = _surface_quadrature(cspace, geom)
    N = mesh.trilinear_basis(cells, pts)
    G = mesh.trilinear_basis_grad(cells, pts)

    M = _accumulate(nprov, corner_rows, np.einsum("q,qa,qb->qab", w, N, N))
    B = []
    for a in range(3):
        B.append(
            _accumulate(nprov, corner_rows, np.einsum("q,qa,qb->qab", w, N, G[:, :, a]))
        )
    K = comp.permeability
    KG = np.einsum("de,qbe->qbd", K, G)
    KK = _accumulate(nprov, corner_rows, np.einsum("q,qad,qbd->qab", w, G, KG))

    vpts, vw, vcells, vcorner = _volume_quadrature(cspace, geom)
    n = _extended_normals(comp, geom, vcells, vpts)
    Gv = mesh.trilinear_basis_grad(vcells, vpts)
    dn = np.einsum("qad,qd->qa", Gv, n)
    hT = mesh.cell_sizes[vcells]
    S = _accumulate(nprov, vcorner, np.einsum("q,qa,qb->qab", vw * hT, dn, dn))

    reduce = lambda X: (E.T @ (X @ E)).tocsr()
    return reduce(M), [reduce(b) for b in B], reduce(KK), reduce(S)


def _component_rhs(cspace, comp, geom, forcing, source):
    """Reduced load vectors (bux, buy, buz, bp) from 2(g,q) + (f, -v + K grad q)."""
    mesh = geom.mesh
    nprov = cspace.vertices.shape[0]
    prov = [np.zeros(nprov) for _ in range(4)]
    if forcing is None and source is None:
        return [cspace.expansion.T @ v for v in prov]
    pts, w, cells, corner_rows = _surface_quadrature(cspace, geom)
    N = mesh.trilinear_basis(cells, pts)
    if source is not None:
        g = evaluate_field(source, pts, what="source g")
        np.add.at(prov[3], corner_rows.reshape(-1), ((2.0 * w * g)[:, None] * N).reshape(-1))
    if forcing is not None:
        f = evaluate_field(forcing, pts, what="forcing f")
        if f.shape != pts.shape:
            raise ConfigurationError("forcing must return (n, 3) vectors")
        for a in range(3):
            np.add.at(
                prov[a], corner_rows.reshape(-1), (-(w * f[:, a])[:, None] * N).reshape(-1)
            )
        G = mesh.trilinear_basis_grad(cells, pts)
        Kf = f @ comp.permeability.T
        contrib = np.einsum("q,qad,qd->qa", w, G, Kf)
        np.add.at(prov[3], corner_rows.reshape(-1), contrib.reshape(-1))
    return [cspace.expansion.T @ v for v in prov]


# -------------------------------------------------------------- curve couplings


def _find_active_cell(cspace, mesh, point, prefer=None):
    """Active cell of the component containing the point.

    Junction quadrature points lie on the host's patches; generically every
    member is active on the host cell, and `prefer` (the host cell) is used
    when it is.  Otherwise search the component's active cells."""
    if prefer is not None:
        pos = cspace.cell_pos.get(int(prefer))
        if pos is not None:
            return int(prefer)
    lo = mesh.cell_lower[cspace.active_cells]
    s = mesh.cell_sizes[cspace.active_cells]
    tol = 1e-9 * s
    inside = np.all(
        (point[None, :] >= lo - tol[:, None])
        & (point[None, :] <= lo + s[:, None] + tol[:, None]),
        axis=1,
    )
    hits = np.nonzero(inside)[0]
    if hits.size == 0:
        raise GeometryConsistencyError(
            f"component {cspace.component}: no active cell contains junction point {point}"
        )
    return int(cspace.active_cells[hits[0]])


def _pressure_row(pspace, geom, index, point, host_cell):
    """(global dofs, weights) of the pressure evaluation functional at a point."""
    mesh = geom.mesh
    cspace = pspace.space(index)
    cell = _find_active_cell(cspace, mesh, point, prefer=host_cell)
    N = mesh.trilinear_basis(np.array([cell]), point[None, :])[0]
    row = cspace.cell_pos[cell]
    corner_rows = cspace.cell_corner_rows[row]
    E = cspace.expansion
    base = pspace.offsets[index] + FIELD_P * cspace.n_dofs
    acc = {}
    for a in range(8):
        r = corner_rows[a]
        for k in range(E.indptr[r], E.indptr[r + 1]):
            dof = base + E.indices[k]
            acc[dof] = acc.get(dof, 0.0) + N[a] * E.data[k]
    dofs = np.fromiter(acc.keys(), dtype=np.int64, count=len(acc))
    wts = np.fromiter(acc.values(), dtype=float, count=len(acc))
    return dofs, wts


def _penalty_length_scale(params, mesh, cells, global_h):
    if params.h_def == "global":
        return np.full(cells.shape[0], global_h)
    return mesh.cell_sizes[cells]


def _junction_penalty(pspace, geom, params, global_h, rows_acc, cols_acc, vals_acc):
    mesh = geom.mesh
    for jid in sorted(geom.junction_curves):
        cs = geom.junction_curves[jid]
        if cs.segments.shape[0] == 0:
            continue
        qp, qw = segment_gauss_rule(cs.segments)
        hseg = _penalty_length_scale(params, mesh, cs.cells, global_h)
        members = sorted(cs.components)
        for si in range(cs.segments.shape[0]):
            factor_seg = params.rho_e / hseg[si] ** 2
            for qi in range(qp.shape[1]):
                point = qp[si, qi]
                f = factor_seg * qw[si, qi]
                rows = [
                    _pressure_row(pspace, geom, m, point, int(cs.cells[si]))
                    for m in members
                ]
                for ka in range(len(members)):
                    for kb in range(ka + 1, len(members)):
                        da, wa = rows[ka]
                        db, wb = rows[kb]
                        for d1, w1, d2, w2, sgn in (
                            (da, wa, da, wa, 1.0),
                            (db, wb, db, wb, 1.0),
                            (da, wa, db, wb, -1.0),
                            (db, wb, da, wa, -1.0),
                        ):
                            rows_acc.append(np.repeat(d1, d2.shape[0]))
                            cols_acc.append(np.tile(d2, d1.shape[0]))
                            vals_acc.append(sgn * f * np.outer(w1, w2).reshape(-1))


def _internal_dirichlet(pspace, geom, params, global_h, rows_acc, cols_acc, vals_acc, b):
    mesh = geom.mesh
    for comp in geom.network.components:
        for cs in geom.internal_dirichlet_sets(comp.index):
            if cs.segments.shape[0] == 0:
                continue
            if cs.data is None:
                raise ConfigurationError(
                    f"component {comp.index}: internal Dirichlet trim without data"
                )
            qp, qw = segment_gauss_rule(cs.segments)
            hseg = _penalty_length_scale(params, mesh, cs.cells, global_h)
            pflat = qp.reshape(-1, 3)
            pd = evaluate_field(cs.data, pflat, what="Dirichlet data").reshape(qp.shape[:2])
            for si in range(cs.segments.shape[0]):
                factor_seg = params.rho_dir / hseg[si] ** 2
                for qi in range(qp.shape[1]):
                    f = factor_seg * qw[si, qi]
                    dofs, wts = _pressure_row(
                        pspace, geom, comp.index, qp[si, qi], int(cs.cells[si])
                    )
                    rows_acc.append(np.repeat(dofs, dofs.shape[0]))
                    cols_acc.append(np.tile(dofs, dofs.shape[0]))
                    vals_acc.append(f * np.outer(wts, wts).reshape(-1))
                    b[dofs] += f * pd[si, qi] * wts


def _neumann_rhs(pspace, geom, b):
    mesh = geom.mesh
    for comp in geom.network.components:
        for cs in geom.neumann_boundary_sets(comp.index):
            if cs.segments.shape[0] == 0:
                continue
            qp, qw = segment_gauss_rule(cs.segments)
            psi = evaluate_field(
                cs.data, qp.reshape(-1, 3), what="Neumann data"
            ).reshape(qp.shape[:2])
            for si in range(cs.segments.shape[0]):
                for qi in range(qp.shape[1]):
                    dofs, wts = _pressure_row(
                        pspace, geom, comp.index, qp[si, qi], int(cs.cells[si])
                    )
                    b[dofs] -= 2.0 * qw[si, qi] * psi[si, qi] * wts


# ------------------------------------------------------------------- assembly


def compute_global_h(pspace, geom):
    """Characteristic cut-cell size: the largest active-cell edge length."""
    mesh = geom.mesh
    return float(
        max(mesh.cell_sizes[s.active_cells].max() for s in pspace.spaces)
    )


def assemble(pspace, geom, params=None, forcing=None, source=None):
    """Assemble the full (pre-elimination) system on the product space.

    forcing/source: per-component dicts of vectorized callables (or None).
    """
    t0 = time.perf_counter()
    params = params or FormParameters()
    forcing = forcing or {}
    source = source or {}
    network = geom.network
    global_h = compute_global_h(pspace, geom)

    nC = len(pspace.spaces)
    grid = [[None] * (4 * nC) for _ in range(4 * nC)]
    b = np.zeros(pspace.n_total)
    for ci, cspace in enumerate(pspace.spaces):
        comp = network.component(cspace.component)
        M, B, KK, S = _component_scalar_matrices(cspace, comp, geom, params)
        Kinv = np.linalg.inv(comp.permeability)
        r0 = 4 * ci
        for a in range(3):
            for bx in range(3):
                blk = Kinv[a, bx] * M
                if a == bx:
                    blk = blk + params.rho_u * S
                grid[r0 + a][r0 + bx] = blk
            grid[r0 + a][r0 + 3] = B[a]
            grid[r0 + 3][r0 + a] = -B[a].T
        grid[r0 + 3][r0 + 3] = KK + params.rho_p * S

        rhs = _component_rhs(
            cspace, comp, geom, forcing.get(comp.index), source.get(comp.index)
        )
        for fld in range(4):
            b[pspace.field_slice(comp.index, fld)] = rhs[fld]

    A = sp.bmat(grid, format="csr")

    rows_acc, cols_acc, vals_acc = [], [], []
    _junction_penalty(pspace, geom, params, global_h, rows_acc, cols_acc, vals_acc)
    _internal_dirichlet(pspace, geom, params, global_h, rows_acc, cols_acc, vals_acc, b)
    if rows_acc:
        P = sp.coo_matrix(
            (
                np.concatenate(vals_acc),
                (np.concatenate(rows_acc), np.concatenate(cols_acc)),
            ),
            shape=(pspace.n_total, pspace.n_total),
        ).tocsr()
        A = (A + P).tocsr()
    _neumann_rhs(pspace, geom, b)

    return LinearSystem(
        A=A,
        b=b,
        space=pspace,
        params=params,
        global_h=global_h,
        assembly_time=time.perf_counter() - t0,
    )


def assemble_norm_matrix(pspace, geom, params=None):
    """Gram matrix of the mesh-dependent norm, by a separate plain walk.

    |||(v,q)|||^2 = (K^-1 v, v) + (K grad q, grad q) + junction and internal
    Dirichlet penalties + rho_u h (n.grad v)^2 + rho_p h (n.grad q)^2.
    """
    params = params or FormParameters()
    mesh = geom.mesh
    network = geom.network
    global_h = compute_global_h(pspace, geom)
    n_total = pspace.n_total
    rows_acc, cols_acc, vals_acc = [], [], []

    for cspace in pspace.spaces:
        comp = network.component(cspace.component)
        E = cspace.expansion
        nfree = cspace.n_dofs
        off = pspace.offsets[comp.index]

        pts, w, cells, corner_rows = _surface_quadrature(cspace, geom)
        N = mesh.trilinear_basis(cells, pts)
        G = mesh.trilinear_basis_grad(cells, pts)
        Kinv = np.linalg.inv(comp.permeability)
        nprov = cspace.vertices.shape[0]

        mass = _accumulate(nprov, corner_rows, np.einsum("q,qa,qb->qab", w, N, N))
        mass = (E.T @ (mass @ E)).tocsr()
        KG = np.einsum("de,qbe->qbd", comp.permeability, G)
        stiff = _accumulate(
            nprov, corner_rows, np.einsum("q,qad,qbd->qab", w, G, KG)
        )
        stiff = (E.T @ (stiff @ E)).tocsr()

        vpts, vw, vcells, vcorner = _volume_quadrature(cspace, geom)
        nrm = _extended_normals(comp, geom, vcells, vpts)
        Gv = mesh.trilinear_basis_grad(vcells, vpts)
        dn = np.einsum("qad,qd->qa", Gv, nrm)
        hT = mesh.cell_sizes[vcells]
        S = _accumulate(nprov, vcorner, np.einsum("q,qa,qb->qab", vw * hT, dn, dn))
        S = (E.T @ (S @ E)).tocsr()

        def _push(mat, fld_r, fld_c):
            coo = mat.tocoo()
            rows_acc.append(coo.row + off + fld_r * nfree)
            cols_acc.append(coo.col + off + fld_c * nfree)
            vals_acc.append(coo.data)

        for a in range(3):
            for bx in range(3):
                blk = Kinv[a, bx] * mass
                if a == bx:
                    blk = blk + params.rho_u * S
                _push(blk, a, bx)
        _push(stiff + params.rho_p * S, 3, 3)

    _junction_penalty(pspace, geom, params, global_h, rows_acc, cols_acc, vals_acc)
    bdummy = np.zeros(n_total)
    _internal_dirichlet(
        pspace, geom, params, global_h, rows_acc, cols_acc, vals_acc, bdummy
    )
    return sp.coo_matrix(
        (np.concatenate(vals_acc), (np.concatenate(rows_acc), np.concatenate(cols_acc))),
        shape=(n_total, n_total),
    ).tocsr()


def apply_form(system, norm_matrix, x, y=None):
    """(a(y; x), |||x|||^2); y defaults to x."""
    x = np.asarray(x, dtype=float)
    y = x if y is None else np.asarray(y, dtype=float)
    return float(y @ (system.A @ x)), float(x @ (norm_matrix @ x))
