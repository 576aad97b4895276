"""Benchmark problems: manufactured solutions and network geometries.

The crossing benchmark places four planar half-fractures around a common
junction line through the cube center.  In the reference configuration the
carriers are {x = 1/2} and {y = 1/2} and component i keeps one half plane
(a pinwheel: y <= 1/2, x >= 1/2, y >= 1/2, x <= 1/2).  With the in-plane
coordinates

    t_i = d_i . x + c_i,   d_i = (d_x(i), d_y(i), 1),
    d_x = (0, 1, 0, -1),   d_y = (1, 0, -1, 0),   c = (-1/2)(1, 1, -1, -1),

the fields

    p_i = e^{cos t_i},            u_i = -grad p_i = sin(t_i) e^{cos t_i} d_i,
    g_i = div u_i = 2 (cos t_i - sin^2 t_i) e^{cos t_i},       f_i = 0,

satisfy the Darcy system on each plane (|d_i|^2 = 2, d_i tangent to the
carrier) and balance fluxes at the junction: on {x = y = 1/2} all t_i = z,
the outward conormals are (e_y, -e_x, -e_y, e_x), and the four normal fluxes
cancel in pairs.  The whole configuration may be rotated rigidly; scalar
data ride along as q o R^-1 and vectors as R (u o R^-1).

The closed-surface benchmarks have no junctions.  On the unit sphere,
p = 12 (3 x1^2 x2 - x2^3) / |x|^3 is homogeneous of degree zero (its own
normal extension), u = -grad_G p = -grad p, and since p restricts to a
degree-3 spherical harmonic, div_G u = -lap_G p = 12 p = g.  On the torus
the pair p = x3, u = (2 x1 x3, -2 x2 x3, 2 (x1^2 - x2^2)(R - rho)/rho) with
rho = sqrt(x1^2 + x2^2) is divergence free on the surface and the forcing
f = u + grad_G p closes the momentum balance.

The five-component network has no exact solution; it is judged by flux
balance and pressure bounds.  Every case's data are validated by
`strong_residual`, a finite-difference check of the strong equations at
random points of the exact surface.
"""

import numpy as np
from dataclasses import dataclass, field

from . import octree
from .assembly import FormParameters
from .errors import ConfigurationError
from .fields import (
    RigidRotation,
    cylinder_level_set,
    plane_level_set,
    rotation_about_y,
    rotation_about_z,
    sphere_level_set,
    torus_level_set,
)
from .geometry import (
    BoundarySpec,
    FractureComponent,
    FractureNetwork,
    Junction,
    TrimConstraint,
    extended_normal,
)


@dataclass(frozen=True)
class MeshPlan:
    """Background meshes of a convergence sequence.

    kind "uniform": level k is a uniform grid of uniform_n[k] root cells per
    axis.  kind "graded": every level starts from the dims0 root grid and is
    refined toward the network k times (level 0 = no refinement)."""

    kind: str
    uniform_n: tuple = ()
    dims0: tuple = ()
    n_levels: int = 0
    band: float = 1.0

    def __post_init__(self):
        if self.kind not in ("uniform", "graded"):
            raise ConfigurationError(f"unknown mesh plan kind {self.kind!r}")
        if self.kind == "uniform" and not self.uniform_n:
            raise ConfigurationError("uniform plan needs cell counts")
        if self.kind == "graded" and (len(self.dims0) != 3 or self.n_levels < 1):
            raise ConfigurationError("graded plan needs dims0 and n_levels")

    @property
    def levels(self):
        return len(self.uniform_n) if self.kind == "uniform" else self.n_levels


@dataclass
class BenchmarkCase:
    name: str
    description: str
    box: np.ndarray
    network: FractureNetwork
    plan: MeshPlan
    exact_p: dict = None          # component index -> p(x): (n,3) -> (n,)
    exact_u: dict = None          # component index -> u(x): (n,3) -> (n,3)
    forcing: dict = field(default_factory=dict)
    source: dict = field(default_factory=dict)
    params: FormParameters = field(default_factory=FormParameters)
    pin_nullspace: bool = True

    @property
    def has_exact(self):
        return bool(self.exact_p)

    def component_indices(self):
        return [c.index for c in self.network.components]


def build_mesh(case, level):
    """Background octree for one level of the case's mesh plan."""
    plan = case.plan
    if not 0 <= level < plan.levels:
        raise ConfigurationError(
            f"level {level} outside the plan's range 0..{plan.levels - 1}"
        )
    if plan.kind == "uniform":
        return octree.build_uniform(case.box, plan.uniform_n[level])
    mesh = octree.build_uniform(case.box, plan.dims0)
    if level:
        mesh = octree.refine_near_surface(mesh, case.network, level, band=plan.band)
    return mesh


def _constant(c):
    c = float(c)
    return lambda x: np.full(np.atleast_2d(x).shape[0], c)


def _rotated_linear(rot, a, c):
    """fn(x) = a . R^-1(x) + c and its constant gradient R a."""
    a = np.asarray(a, dtype=float)
    ga = rot.matrix @ a

    def fn(x):
        return rot.invert(np.atleast_2d(x)) @ a + c

    def grad(x):
        return np.broadcast_to(ga, (np.atleast_2d(x).shape[0], 3)).copy()

    return fn, grad


# ------------------------------------------------------------------- crossing

_CROSS_D = {1: (0.0, 1.0, 1.0), 2: (1.0, 0.0, 1.0),
            3: (0.0, -1.0, 1.0), 4: (-1.0, 0.0, 1.0)}
_CROSS_C = {1: -0.5, 2: -0.5, 3: 0.5, 4: 0.5}
# kept half plane of each component, as (in-plane axis, keep-below flag)
_CROSS_KEEP = {1: (1, True), 2: (0, False), 3: (1, False), 4: (0, True)}
_CROSS_NORMAL_AXIS = {1: 0, 2: 1, 3: 0, 4: 1}


def _crossing_fields(index, rot):
    d = np.asarray(_CROSS_D[index])
    c = _CROSS_C[index]

    def p_hat(x):
        return np.exp(np.cos(np.atleast_2d(x) @ d + c))

    def u_hat(x):
        t = np.atleast_2d(x) @ d + c
        return (np.sin(t) * np.exp(np.cos(t)))[:, None] * d[None, :]

    def g_hat(x):
        t = np.atleast_2d(x) @ d + c
        return 2.0 * (np.cos(t) - np.sin(t) ** 2) * np.exp(np.cos(t))

    return rot.pull_scalar(p_hat), rot.pull_vector(u_hat), rot.pull_scalar(g_hat)


def crossing_case(alpha=20.0, beta=0.0, immersed=False):
    """Four half-plane fractures crossing along a line, rigidly rotated.

    alpha rotates about the y-parallel axis through the cube center, beta
    about the z-parallel one.  With `immersed`, component 2 is truncated to
    in-plane width 1/4 from the junction and the new edge carries a
    penalized pressure condition with the exact data."""
    center = np.array([0.5, 0.5, 0.5])
    rot = RigidRotation(rotation_about_z(beta) @ rotation_about_y(alpha), center)
    w = rot.matrix @ np.array([0.0, 0.0, 1.0])
    if w[2] <= 0.0 or max(abs(w[0]), abs(w[1])) >= w[2]:
        raise ConfigurationError(
            f"angles ({alpha}, {beta}) push the junction outside the unit box"
        )

    comps = []
    exact_p, exact_u, source = {}, {}, {}
    for i in (1, 2, 3, 4):
        p_i, u_i, g_i = _crossing_fields(i, rot)
        exact_p[i], exact_u[i], source[i] = p_i, u_i, g_i

        normal = np.zeros(3)
        normal[_CROSS_NORMAL_AXIS[i]] = 1.0
        carrier = rot.rotate_level_set(plane_level_set(center, normal))

        axis, below = _CROSS_KEEP[i]
        e = np.zeros(3)
        e[axis] = 1.0
        fn, grad = _rotated_linear(rot, e if below else -e, -0.5 if below else 0.5)
        trims = [TrimConstraint(fn, kind="junction", junction_id=0, gradient=grad)]
        if immersed and i == 2:
            ifn, igrad = _rotated_linear(rot, e, -0.75)
            trims.append(
                TrimConstraint(ifn, kind="dirichlet", data=p_i, gradient=igrad)
            )
        comps.append(
            FractureComponent(
                index=i,
                level_set=carrier,
                trims=trims,
                boundary=[BoundarySpec("dirichlet", data=p_i)],
                name=f"half-plane {i}",
            )
        )

    network = FractureNetwork(
        components=comps, junctions=[Junction(id=0, members=(1, 2, 3, 4), host=1)]
    )
    name = "crossing-immersed" if immersed else "crossing"
    return BenchmarkCase(
        name=name,
        description=(
            f"four half-plane fractures crossing along a line, rotated by "
            f"({alpha}, {beta}) degrees"
            + (", component 2 truncated inside the box" if immersed else "")
        ),
        box=np.array([[0.0, 1.0], [0.0, 1.0], [0.0, 1.0]]),
        network=network,
        plan=MeshPlan(kind="uniform", uniform_n=(9, 19, 39, 79)),
        exact_p=exact_p,
        exact_u=exact_u,
        source=source,
    )


# ------------------------------------------------------------- closed surfaces


def sphere_case():
    """Darcy flow on the unit sphere driven by a degree-3 harmonic pressure."""
    amp = 12.0

    def p_exact(x):
        x = np.atleast_2d(x)
        r = np.linalg.norm(x, axis=1)
        return amp * (3.0 * x[:, 0] ** 2 * x[:, 1] - x[:, 1] ** 3) / r**3

    def u_exact(x):
        x = np.atleast_2d(x)
        r = np.linalg.norm(x, axis=1)
        q = 3.0 * x[:, 0] ** 2 * x[:, 1] - x[:, 1] ** 3
        gq = np.stack(
            [6.0 * x[:, 0] * x[:, 1],
             3.0 * x[:, 0] ** 2 - 3.0 * x[:, 1] ** 2,
             np.zeros_like(r)],
            axis=1,
        )
        gp = amp * (gq / r[:, None] ** 3 - 3.0 * (q / r**5)[:, None] * x)
        n = x / r[:, None]
        return -(gp - np.einsum("nd,nd->n", gp, n)[:, None] * n)

    def g_exact(x):
        return amp * p_exact(x)

    comp = FractureComponent(
        index=1, level_set=sphere_level_set((0.0, 0.0, 0.0), 1.0), name="unit sphere"
    )
    return BenchmarkCase(
        name="sphere",
        description="Darcy flow on the unit sphere, graded octree",
        box=np.array([[-2.0, 2.0], [-2.0, 2.0], [-2.0, 2.0]]),
        network=FractureNetwork(components=[comp]),
        plan=MeshPlan(kind="graded", dims0=(16, 16, 16), n_levels=4),
        exact_p={1: p_exact},
        exact_u={1: u_exact},
        source={1: g_exact},
    )


def torus_case(major_radius=1.0, minor_radius=0.5):
    """Darcy flow on a torus, forcing-driven with a solenoidal velocity."""
    R = float(major_radius)

    def p_exact(x):
        return np.atleast_2d(x)[:, 2]

    def u_exact(x):
        x = np.atleast_2d(x)
        rho = np.hypot(x[:, 0], x[:, 1])
        return np.stack(
            [2.0 * x[:, 0] * x[:, 2],
             -2.0 * x[:, 1] * x[:, 2],
             2.0 * (x[:, 0] ** 2 - x[:, 1] ** 2) * (R - rho) / rho],
            axis=1,
        )

    def forcing(x):
        x = np.atleast_2d(x)
        rho = np.hypot(x[:, 0], x[:, 1])
        A = (rho - R) ** 2 + x[:, 2] ** 2
        s = (1.0 - R / rho) / A
        return np.stack(
            [x[:, 0] * x[:, 2] * (2.0 - s),
             x[:, 1] * x[:, 2] * (-2.0 - s),
             1.0
             - 2.0 * (x[:, 0] ** 2 - x[:, 1] ** 2) * (rho - R) / rho
             - x[:, 2] ** 2 / A],
            axis=1,
        )

    comp = FractureComponent(
        index=1,
        level_set=torus_level_set(R, float(minor_radius)),
        name="torus",
    )
    return BenchmarkCase(
        name="torus",
        description="Darcy flow on a torus surface, graded octree",
        box=np.array([[-1.6, 1.6], [-1.6, 1.6], [-0.8, 0.8]]),
        network=FractureNetwork(components=[comp]),
        plan=MeshPlan(kind="graded", dims0=(10, 10, 5), n_levels=4),
        exact_p={1: p_exact},
        exact_u={1: u_exact},
        forcing={1: forcing},
    )


# -------------------------------------------------------- five-fracture network


def network5_case():
    """Pressure-drop flow through five fractures with two junction lines.

    Three coplanar pieces of {y = 0} (inlet plane, bridge) meet two inclined
    outlet planes along {x = 1/2, y = 0} and a cylindrical arc along
    {x = 0, y = 0}.  Pressure 2 is prescribed where the inlet meets the box
    face x = -1, zero where the outlets meet x = 1 and where the arc meets
    z = 1; every other edge carries the natural zero-flux condition."""
    ey = np.array([0.0, 1.0, 0.0])

    def lin(a, c):
        a = np.asarray(a, dtype=float)
        fn = lambda x: np.atleast_2d(x) @ a + c
        grad = lambda x: np.broadcast_to(a, (np.atleast_2d(x).shape[0], 3)).copy()
        return fn, grad

    at_face = lambda axis, val: (
        lambda m: np.abs(np.atleast_2d(m)[:, axis] - val) <= 1e-9
    )

    f1, g1 = lin((1.0, 0.0, 0.0), 0.0)        # keep x <= 0
    comp1 = FractureComponent(
        index=1,
        level_set=plane_level_set((0.0, 0.0, 0.0), ey),
        trims=[TrimConstraint(f1, kind="junction", junction_id=1, gradient=g1)],
        boundary=[
            BoundarySpec("dirichlet", data=_constant(2.0), where=at_face(0, -1.0))
        ],
        name="inlet plane",
    )

    f3a, g3a = lin((-1.0, 0.0, 0.0), 0.0)     # keep x >= 0
    f3b, g3b = lin((1.0, 0.0, 0.0), -0.5)     # keep x <= 1/2
    comp3 = FractureComponent(
        index=3,
        level_set=plane_level_set((0.0, 0.0, 0.0), ey),
        trims=[
            TrimConstraint(f3a, kind="junction", junction_id=1, gradient=g3a),
            TrimConstraint(f3b, kind="junction", junction_id=2, gradient=g3b),
        ],
        name="bridge plane",
    )

    fr, gr = lin((-1.0, 0.0, 0.0), 0.5)       # keep x >= 1/2
    outlets = []
    for index, slope in ((2, -0.8), (4, 0.8)):
        outlets.append(
            FractureComponent(
                index=index,
                level_set=plane_level_set((0.5, 0.0, 0.0), (slope, 1.0, 0.0)),
                trims=[
                    TrimConstraint(fr, kind="junction", junction_id=2, gradient=gr)
                ],
                boundary=[
                    BoundarySpec(
                        "dirichlet", data=_constant(0.0), where=at_face(0, 1.0)
                    )
                ],
                name=f"outlet plane {index}",
            )
        )

    # cylindrical arc through the first junction line: the axis is chosen so
    # the surface contains {x = 0, y = 0}; the kept arc spans 120 degrees
    # from the junction to a free edge, bounded by two half planes through
    # the axis.
    axis_pt = np.array([-0.25, 0.35, 0.0])
    radius = float(np.hypot(0.25, 0.35))
    theta0 = np.arctan2(-axis_pt[1], -axis_pt[0])

    def angular_trim(theta):
        # <= 0 on the half space swept 180 degrees counterclockwise of theta
        v = np.array([np.cos(theta), np.sin(theta), 0.0])
        a = np.array([v[1], -v[0], 0.0])
        c = -float(a[:2] @ axis_pt[:2])
        return lin(a, c)

    f5a, g5a = angular_trim(theta0)
    f5n, g5n = angular_trim(theta0 + np.deg2rad(120.0) - np.pi)
    comp5 = FractureComponent(
        index=5,
        level_set=cylinder_level_set(axis_pt, (0.0, 0.0, 1.0), radius),
        trims=[
            TrimConstraint(f5a, kind="junction", junction_id=1, gradient=g5a),
            TrimConstraint(f5n, kind="neumann", gradient=g5n),
        ],
        boundary=[
            BoundarySpec("dirichlet", data=_constant(0.0), where=at_face(2, 1.0))
        ],
        name="cylindrical arc",
    )

    network = FractureNetwork(
        components=[comp1, outlets[0], comp3, outlets[1], comp5],
        junctions=[
            Junction(id=1, members=(1, 3, 5), host=1),
            Junction(id=2, members=(2, 3, 4), host=3),
        ],
    )
    return BenchmarkCase(
        name="network5",
        description="pressure drop through five planar and cylindrical fractures",
        box=np.array([[-1.0, 1.0], [-1.0, 1.0], [-1.0, 1.0]]),
        network=network,
        plan=MeshPlan(kind="graded", dims0=(8, 8, 8), n_levels=3),
    )


# ------------------------------------------------------------ residual oracle


def surface_samples(case, index, n, seed=0, margin=0.04, interior=0.02):
    """Random points on the kept part of a component's exact surface.

    Box samples are projected onto the zero level set by Newton steps along
    the analytic gradient, then filtered to lie strictly inside the box and
    at `interior` (in units of the largest box extent) from every trim."""
    comp = case.network.component(index)
    box = np.asarray(case.box, dtype=float)
    scale = float((box[:, 1] - box[:, 0]).max())
    rng = np.random.default_rng(seed)
    lo = box[:, 0] + margin * scale
    hi = box[:, 1] - margin * scale
    kept = []
    total = 0
    while total < n:
        x = rng.uniform(lo, hi, size=(4 * n, 3))
        for _ in range(60):
            v = np.asarray(comp.level_set.value(x), dtype=float)
            if np.abs(v).max() <= 1e-13 * scale:
                break
            g = np.asarray(comp.level_set.gradient(x), dtype=float)
            gg = np.einsum("nd,nd->n", g, g)
            x = x - (v / np.where(gg == 0.0, 1.0, gg))[:, None] * g
        ok = np.abs(np.asarray(comp.level_set.value(x))) <= 1e-10 * scale
        ok &= np.all((x >= lo) & (x <= hi), axis=1)
        for t in comp.trims:
            ok &= np.asarray(t.fn(x), dtype=float) <= -interior * scale
        if ok.any():
            kept.append(x[ok])
            total += int(ok.sum())
    return np.concatenate(kept)[:n]


def strong_residual(case, index, n_points=100, seed=0, step=2e-6):
    """Max residuals of the strong equations at random exact-surface points.

    Returns (momentum, mass): the largest |K^-1 u + grad_G p - f| and
    |div_G u - g|, with tangential derivatives taken by central finite
    differences of the case's own field callables and the projector built
    from the level-set normal."""
    if not case.has_exact:
        raise ConfigurationError(f"case {case.name!r} has no exact fields")
    comp = case.network.component(index)
    x = surface_samples(case, index, n_points, seed=seed)
    nrm = extended_normal(comp, x)
    P = np.eye(3)[None, :, :] - nrm[:, :, None] * nrm[:, None, :]

    box = np.asarray(case.box, dtype=float)
    h = step * float((box[:, 1] - box[:, 0]).max())
    p_fn = case.exact_p[index]
    u_fn = case.exact_u[index]
    gp = np.empty_like(x)
    J = np.empty((x.shape[0], 3, 3))
    for a in range(3):
        e = np.zeros(3)
        e[a] = h
        gp[:, a] = (p_fn(x + e) - p_fn(x - e)) / (2.0 * h)
        J[:, :, a] = (u_fn(x + e) - u_fn(x - e)) / (2.0 * h)
    grad_g = np.einsum("nab,nb->na", P, gp)

    u = np.asarray(u_fn(x), dtype=float)
    f_fn = case.forcing.get(index)
    f = np.asarray(f_fn(x), dtype=float) if f_fn is not None else np.zeros_like(x)
    g_fn = case.source.get(index)
    g = np.asarray(g_fn(x), dtype=float) if g_fn is not None else np.zeros(x.shape[0])

    kinv = np.linalg.inv(comp.permeability)
    momentum = float(np.linalg.norm(u @ kinv.T + grad_g - f, axis=1).max())
    mass = float(np.abs(np.einsum("nab,nab->n", P, J) - g).max())
    return momentum, mass


# ------------------------------------------------------------------- registry

_BUILDERS = {
    "crossing": crossing_case,
    "crossing-immersed": lambda **kw: crossing_case(immersed=True, **kw),
    "sphere": sphere_case,
    "torus": torus_case,
    "network5": network5_case,
}


def case_names():
    return tuple(sorted(_BUILDERS))


def make_case(name, **kwargs):
    builder = _BUILDERS.get(name)
    if builder is None:
        raise ConfigurationError(
            f"unknown case {name!r}; available: {', '.join(case_names())}"
        )
    return builder(**kwargs)
