"""Implicit surface descriptions: level-set fields and rigid rotations.

A level set is a pair of vectorized callables (value, gradient) taking (n, 3)
point arrays.  All constructors below produce signed-distance fields, so the
gradient has unit length away from the medial axis; reconstruction only ever
needs the field near its zero set.  The gradient may be None, in which case
consumers fall back to the gradient of the trilinear interpolant.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import GeometryInputError


@dataclass
class LevelSetField:
    value: Callable[[np.ndarray], np.ndarray]
    gradient: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __call__(self, points):
        return self.value(points)


def evaluate_field(fn, points, what="field"):
    """Evaluate a user callable defensively; NaN or an exception is an input error."""
    try:
        vals = np.asarray(fn(np.asarray(points, dtype=float)), dtype=float)
    except Exception as exc:
        raise GeometryInputError(f"{what} evaluation failed: {exc}") from exc
    if np.isnan(vals).any():
        raise GeometryInputError(f"{what} returned NaN")
    return vals


def plane_level_set(point, normal):
    """Signed distance to the plane through `point` with the given normal."""
    point = np.asarray(point, dtype=float)
    normal = np.asarray(normal, dtype=float)
    nrm = np.linalg.norm(normal)
    if nrm == 0.0:
        raise ValueError("plane normal must be nonzero")
    normal = normal / nrm

    def value(x):
        return (np.asarray(x, dtype=float) - point) @ normal

    def gradient(x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(normal, x.shape).copy()

    return LevelSetField(value, gradient)


def sphere_level_set(center, radius):
    center = np.asarray(center, dtype=float)
    radius = float(radius)

    def value(x):
        return np.linalg.norm(np.asarray(x, dtype=float) - center, axis=-1) - radius

    def gradient(x):
        d = np.asarray(x, dtype=float) - center
        r = np.linalg.norm(d, axis=-1, keepdims=True)
        return d / np.where(r == 0.0, 1.0, r)

    return LevelSetField(value, gradient)


def torus_level_set(major_radius, minor_radius):
    """Signed distance to the torus x3^2 + (sqrt(x1^2 + x2^2) - R)^2 = r^2."""
    R = float(major_radius)
    r = float(minor_radius)

    def value(x):
        x = np.asarray(x, dtype=float)
        rho = np.hypot(x[..., 0], x[..., 1])
        return np.hypot(rho - R, x[..., 2]) - r

    def gradient(x):
        x = np.asarray(x, dtype=float)
        rho = np.hypot(x[..., 0], x[..., 1])
        q = np.hypot(rho - R, x[..., 2])
        rho_safe = np.where(rho == 0.0, 1.0, rho)
        q_safe = np.where(q == 0.0, 1.0, q)
        g = np.empty_like(x)
        g[..., 0] = (rho - R) / q_safe * x[..., 0] / rho_safe
        g[..., 1] = (rho - R) / q_safe * x[..., 1] / rho_safe
        g[..., 2] = x[..., 2] / q_safe
        return g

    return LevelSetField(value, gradient)


def cylinder_level_set(axis_point, axis_dir, radius):
    """Signed distance to an infinite cylinder around the given axis line."""
    p0 = np.asarray(axis_point, dtype=float)
    d = np.asarray(axis_dir, dtype=float)
    d = d / np.linalg.norm(d)
    radius = float(radius)

    def _rad(x):
        rel = np.asarray(x, dtype=float) - p0
        axial = rel @ d
        perp = rel - axial[..., None] * d
        return perp, np.linalg.norm(perp, axis=-1)

    def value(x):
        _, rr = _rad(x)
        return rr - radius

    def gradient(x):
        perp, rr = _rad(x)
        return perp / np.where(rr == 0.0, 1.0, rr)[..., None]

    return LevelSetField(value, gradient)


# ------------------------------------------------------------------ rotations


def rotation_about_y(alpha_deg):
    a = np.deg2rad(float(alpha_deg))
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rotation_about_z(beta_deg):
    b = np.deg2rad(float(beta_deg))
    c, s = np.cos(b), np.sin(b)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


@dataclass
class RigidRotation:
    """x -> center + R (x - center), with helpers for composing fields."""

    matrix: np.ndarray
    center: np.ndarray

    def apply(self, x):
        x = np.asarray(x, dtype=float)
        return self.center + (x - self.center) @ self.matrix.T

    def invert(self, x):
        x = np.asarray(x, dtype=float)
        return self.center + (x - self.center) @ self.matrix

    def pull_scalar(self, fn):
        """fn composed with the inverse map (scalar fields transported forward)."""
        return lambda x: fn(self.invert(x))

    def pull_vector(self, fn):
        """Tangent vector fields transported forward: R * (fn o inverse)."""
        return lambda x: np.asarray(fn(self.invert(x)), dtype=float) @ self.matrix.T

    def rotate_level_set(self, ls: LevelSetField) -> LevelSetField:
        grad = None
        if ls.gradient is not None:
            base = ls.gradient
            grad = lambda x: np.asarray(base(self.invert(x)), dtype=float) @ self.matrix.T
        return LevelSetField(self.pull_scalar(ls.value), grad)


def identity_rotation(center=(0.0, 0.0, 0.0)):
    return RigidRotation(np.eye(3), np.asarray(center, dtype=float))
