"""Quadrature rules used by the surface/curve/volume integrals.

Three fixed low-order rules cover everything the discrete form needs:

* triangles: 3-point edge-midpoint rule, exact for polynomials of degree 2
  on the triangle (the integrands are products of traces of trilinears and
  are integrated on planar triangles, so degree 2 is the natural choice);
* segments: 2-point Gauss rule, exact for degree 3;
* cells: tensorized 2-point Gauss (8 points), exact for triquadratics.

All functions are vectorized over an array of elements and return points
together with weights that already include the element measure.
"""

from __future__ import annotations

import numpy as np

# 1D Gauss-Legendre abscissae for 2 points, on [0, 1]
_GAUSS2 = np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)])


def triangle_areas(tris: np.ndarray) -> np.ndarray:
    """Areas of triangles given as (n, 3, 3) vertex arrays."""
    tris = np.asarray(tris, dtype=float)
    cr = np.cross(tris[:, 1] - tris[:, 0], tris[:, 2] - tris[:, 0])
    return 0.5 * np.linalg.norm(cr, axis=1)


def triangle_midpoint_rule(tris: np.ndarray):
    """Edge-midpoint rule on each triangle.

    Returns (points, weights) with shapes (n, 3, 3) and (n, 3); weights sum
    to the triangle area. Exact for quadratic polynomials.
    """
    tris = np.asarray(tris, dtype=float)
    pts = 0.5 * (tris + np.roll(tris, -1, axis=1))
    w = (triangle_areas(tris) / 3.0)[:, None] * np.ones((1, 3))
    return pts, w


def segment_gauss_rule(segs: np.ndarray):
    """Two-point Gauss rule on each segment.

    Returns (points, weights) with shapes (n, 2, 3) and (n, 2); weights sum
    to the segment length.
    """
    segs = np.asarray(segs, dtype=float)
    a, b = segs[:, 0], segs[:, 1]
    pts = a[:, None, :] + _GAUSS2[None, :, None] * (b - a)[:, None, :]
    length = np.linalg.norm(b - a, axis=1)
    w = 0.5 * length[:, None] * np.ones((1, 2))
    return pts, w


def cell_gauss_rule(lowers: np.ndarray, sizes: np.ndarray):
    """Tensor 2x2x2 Gauss rule on cubes [lower, lower + size]^3.

    Returns (points, weights) with shapes (n, 8, 3) and (n, 8); weights sum
    to the cell volume.
    """
    lowers = np.asarray(lowers, dtype=float)
    sizes = np.asarray(sizes, dtype=float)
    g = _GAUSS2
    ref = np.array([[g[i & 1], g[(i >> 1) & 1], g[(i >> 2) & 1]] for i in range(8)])
    pts = lowers[:, None, :] + sizes[:, None, None] * ref[None, :, :]
    w = (sizes**3 / 8.0)[:, None] * np.ones((1, 8))
    return pts, w


def segment_lengths(segs: np.ndarray) -> np.ndarray:
    segs = np.asarray(segs, dtype=float)
    return np.linalg.norm(segs[:, 1] - segs[:, 0], axis=1)
