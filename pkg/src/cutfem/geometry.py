"""Analytic manifolds in R^3: level-set torus and sphere, parametric torus line.

All evaluators are vectorized over point arrays of shape ``(n, 3)``; a single
point of shape ``(3,)`` is accepted as well and gives squeezed results.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Callable

import numpy as np
from scipy import integrate

from .errors import AxisSingularity, GeometryError, MedialAxis

TORUS = "torus"
SPHERE = "sphere"
TORUS_LINE = "torus_line"
# affine manifolds, mainly used as exactly-resolved test geometries
PLANE = "plane"
LINE = "line"

AXIS_TOL = 1e-12
MEDIAL_DIST_TOL = 1e-8
MEDIAL_PARAM_TOL = 1e-3


@dataclass(frozen=True)
class ManifoldSpec:
    kind: str
    R: float = 1.0
    r: float = 0.5
    radius: float = 1.0
    N: int = 3
    offset: tuple = (0.0, 0.0, 0.0)
    axis: tuple = (0.0, 0.0, 1.0)

    def __post_init__(self):
        if self.kind not in (TORUS, SPHERE, TORUS_LINE, PLANE, LINE):
            raise GeometryError(f"unknown manifold kind {self.kind!r}")
        if self.kind in (TORUS, TORUS_LINE) and not self.R > self.r > 0:
            raise GeometryError("torus radii must satisfy R > r > 0")
        if self.kind == SPHERE and not self.radius > 0:
            raise GeometryError("sphere radius must be positive")
        if self.kind == TORUS_LINE and (int(self.N) != self.N or self.N < 1):
            raise GeometryError("winding number N must be a positive integer")
        object.__setattr__(self, "offset", tuple(float(v) for v in self.offset))
        a = np.asarray(self.axis, dtype=float)
        if a.shape != (3,) or np.linalg.norm(a) == 0:
            raise GeometryError("axis must be a nonzero 3-vector")
        object.__setattr__(self, "axis", tuple(a / np.linalg.norm(a)))

    @classmethod
    def torus(cls, R=1.0, r=0.5, offset=(0.0, 0.0, 0.0)):
        return cls(TORUS, R=R, r=r, offset=offset)

    @classmethod
    def sphere(cls, radius=1.0, offset=(0.0, 0.0, 0.0)):
        return cls(SPHERE, radius=radius, offset=offset)

    @classmethod
    def torus_line(cls, R=1.0, r=0.5, N=3, offset=(0.0, 0.0, 0.0)):
        return cls(TORUS_LINE, R=R, r=r, N=int(N), offset=offset)

    @classmethod
    def plane(cls, normal=(0.0, 0.0, 1.0), offset=(0.0, 0.0, 0.0)):
        """Plane through ``offset`` with the given normal."""
        return cls(PLANE, axis=normal, offset=offset)

    @classmethod
    def line(cls, direction=(1.0, 0.0, 0.0), offset=(0.0, 0.0, 0.0)):
        return cls(LINE, axis=direction, offset=offset)

    @property
    def codim(self) -> int:
        return 2 if self.kind in (TORUS_LINE, LINE) else 1

    @property
    def dim(self) -> int:
        return 3 - self.codim

    def translated(self, shift) -> "ManifoldSpec":
        return replace(self, offset=tuple(np.add(self.offset, shift)))

    def bounding_box(self):
        """Axis-aligned ``(lo, hi)`` enclosing the manifold (infinite for affine kinds)."""
        o = np.asarray(self.offset)
        if self.kind in (TORUS, TORUS_LINE):
            ext = np.array([self.R + self.r, self.R + self.r, self.r])
        elif self.kind == SPHERE:
            ext = np.full(3, self.radius)
        else:
            ext = np.full(3, np.inf)
        return o - ext, o + ext

    @cached_property
    def measure(self) -> float:
        """Area of the surface or length of the curve."""
        if self.kind == TORUS:
            return 4.0 * np.pi**2 * self.R * self.r
        if self.kind == SPHERE:
            return 4.0 * np.pi * self.radius**2
        if self.kind in (PLANE, LINE):
            return float("inf")
        val, _ = integrate.quad(
            lambda t: float(np.linalg.norm(curve_derivative(self, t))),
            0.0, 2.0 * np.pi, epsabs=1e-13, epsrel=1e-13, limit=500,
        )
        return val


# -- parametric curve -----------------------------------------------------

def curve_point(m: ManifoldSpec, t):
    t = np.asarray(t, dtype=float)
    a = m.R + m.r * np.cos(m.N * t)
    out = np.stack([a * np.cos(t), a * np.sin(t), m.r * np.sin(m.N * t)], axis=-1)
    return out + np.asarray(m.offset)


def curve_derivative(m: ManifoldSpec, t):
    t = np.asarray(t, dtype=float)
    N, r = m.N, m.r
    a = m.R + r * np.cos(N * t)
    da = -r * N * np.sin(N * t)
    return np.stack(
        [da * np.cos(t) - a * np.sin(t), da * np.sin(t) + a * np.cos(t), r * N * np.cos(N * t)],
        axis=-1,
    )


def curve_second_derivative(m: ManifoldSpec, t):
    t = np.asarray(t, dtype=float)
    N, r = m.N, m.r
    a = m.R + r * np.cos(N * t)
    da = -r * N * np.sin(N * t)
    dda = -r * N**2 * np.cos(N * t)
    return np.stack(
        [
            dda * np.cos(t) - 2 * da * np.sin(t) - a * np.cos(t),
            dda * np.sin(t) + 2 * da * np.cos(t) - a * np.sin(t),
            -r * N**2 * np.sin(N * t),
        ],
        axis=-1,
    )


def torus_point(m: ManifoldSpec, phi, theta):
    phi, theta = np.asarray(phi, dtype=float), np.asarray(theta, dtype=float)
    a = m.R + m.r * np.cos(theta)
    out = np.stack([a * np.cos(phi), a * np.sin(phi), m.r * np.sin(theta)], axis=-1)
    return out + np.asarray(m.offset)


# -- level sets -----------------------------------------------------------

def _as_points(x):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    return np.atleast_2d(x), single


def level_set_value(m: ManifoldSpec, x):
    """Level-set function value only; defined everywhere, including the torus axis."""
    if m.codim != 1:
        raise GeometryError("level set requested for a codimension-2 manifold")
    pts, single = _as_points(x)
    y = pts - np.asarray(m.offset)
    if m.kind == TORUS:
        rho_xy = np.hypot(y[:, 0], y[:, 1])
        val = y[:, 2] ** 2 + (rho_xy - m.R) ** 2 - m.r**2
    elif m.kind == PLANE:
        val = y @ np.asarray(m.axis)
    else:
        val = np.einsum("ij,ij->i", y, y) - m.radius**2
    return val[0] if single else val


def level_set_eval(m: ManifoldSpec, x):
    """Return ``(value, gradient)`` of the level-set function at ``x``."""
    if m.codim != 1:
        raise GeometryError("level set requested for a codimension-2 manifold")
    pts, single = _as_points(x)
    y = pts - np.asarray(m.offset)
    val = level_set_value(m, pts)
    if m.kind == TORUS:
        rho_xy = np.hypot(y[:, 0], y[:, 1])
        if np.any(rho_xy < AXIS_TOL):
            raise AxisSingularity("torus level-set gradient undefined on the symmetry axis")
        s = 2.0 * (rho_xy - m.R) / rho_xy
        grad = np.stack([s * y[:, 0], s * y[:, 1], 2.0 * y[:, 2]], axis=-1)
    elif m.kind == PLANE:
        grad = np.broadcast_to(np.asarray(m.axis), y.shape).copy()
    else:
        grad = 2.0 * y
    if single:
        return val[0], grad[0]
    return val, grad


# -- closest point projection --------------------------------------------

@dataclass
class ClosestPoint:
    """Closest point data. ``params`` is ``(phi, theta)`` for the torus,
    ``(azimuth, polar)`` for the sphere and ``t`` for the curve."""

    point: np.ndarray
    rho: np.ndarray
    params: np.ndarray
    kind: str = field(default=TORUS, repr=False)

    def __len__(self):
        return len(np.atleast_1d(self.rho))


def closest_point(m: ManifoldSpec, x) -> ClosestPoint:
    pts, single = _as_points(x)
    if m.kind == TORUS:
        cp = _closest_torus(m, pts)
    elif m.kind == SPHERE:
        cp = _closest_sphere(m, pts)
    elif m.kind in (PLANE, LINE):
        cp = _closest_affine(m, pts)
    else:
        cp = _closest_curve(m, pts)
    if single:
        cp = ClosestPoint(cp.point[0], float(cp.rho[0]), cp.params[0], cp.kind)
    return cp


def _closest_torus(m, pts):
    y = pts - np.asarray(m.offset)
    rho_xy = np.hypot(y[:, 0], y[:, 1])
    if np.any(rho_xy < AXIS_TOL):
        raise AxisSingularity("closest point undefined on the torus axis")
    phi = np.arctan2(y[:, 1], y[:, 0])
    centre = np.stack([m.R * y[:, 0] / rho_xy, m.R * y[:, 1] / rho_xy, np.zeros(len(y))], axis=-1)
    d = y - centre
    dn = np.linalg.norm(d, axis=1)
    if np.any(dn < AXIS_TOL):
        raise MedialAxis("point lies on the torus centre circle")
    theta = np.arctan2(d[:, 2], rho_xy - m.R)
    point = torus_point(m, phi, theta)
    rho = np.linalg.norm(pts - point, axis=1)
    return ClosestPoint(point, rho, np.stack([phi, theta], axis=-1), TORUS)


def _closest_sphere(m, pts):
    y = pts - np.asarray(m.offset)
    yn = np.linalg.norm(y, axis=1)
    if np.any(yn < AXIS_TOL):
        raise MedialAxis("point lies at the sphere centre")
    nrm = y / yn[:, None]
    point = m.radius * nrm + np.asarray(m.offset)
    rho = np.linalg.norm(pts - point, axis=1)
    params = np.stack([np.arctan2(nrm[:, 1], nrm[:, 0]), np.arccos(np.clip(nrm[:, 2], -1, 1))], axis=-1)
    return ClosestPoint(point, rho, params, SPHERE)


def _closest_affine(m, pts):
    a = np.asarray(m.axis)
    o = np.asarray(m.offset)
    y = pts - o
    s = y @ a
    if m.kind == PLANE:
        point = pts - s[:, None] * a
        b, c = _complete_basis(a[None])
        params = np.stack([(point - o) @ b[0], (point - o) @ c[0]], axis=-1)
    else:
        point = o + s[:, None] * a
        params = s
    rho = np.linalg.norm(pts - point, axis=1)
    return ClosestPoint(point, rho, params, m.kind)


def curve_scan_samples(m: ManifoldSpec) -> int:
    return max(1024, 64 * m.N)


def _newton_curve(m, x, t, h_t, max_steps=30, tol=1e-13):
    """Newton iterations on t -> (gamma(t) - x) . gamma'(t) = 0, steps clamped to one scan spacing."""
    t = t.copy()
    active = np.ones(len(t), dtype=bool)
    for _ in range(max_steps):
        if not active.any():
            break
        ta = t[active]
        diff = curve_point(m, ta) - x[active]
        d1 = curve_derivative(m, ta)
        d2 = curve_second_derivative(m, ta)
        g = np.einsum("ij,ij->i", diff, d1)
        dg = np.einsum("ij,ij->i", d1, d1) + np.einsum("ij,ij->i", diff, d2)
        # nonconvex spots fall back to a gradient step scaled by |gamma'|^2
        dg = np.where(dg > 0, dg, np.einsum("ij,ij->i", d1, d1))
        step = np.clip(-g / dg, -h_t, h_t)
        t[active] = ta + step
        idx = np.flatnonzero(active)
        active[idx[np.abs(step) < tol]] = False
    return t


def _closest_curve(m, pts, chunk=2048):
    M = curve_scan_samples(m)
    ts = 2.0 * np.pi * np.arange(M) / M
    samples = curve_point(m, ts)
    h_t = 2.0 * np.pi / M
    n = len(pts)
    best = np.empty(n)
    second = np.empty(n)
    for s in range(0, n, chunk):
        x = pts[s:s + chunk]
        d2 = (
            np.einsum("ij,ij->i", x, x)[:, None]
            - 2.0 * x @ samples.T
            + np.einsum("ij,ij->i", samples, samples)[None, :]
        )
        i0 = np.argmin(d2, axis=1)
        best[s:s + chunk] = ts[i0]
        # runner-up: best local minimum of the sampled distance outside the winning basin
        is_min = (d2 <= np.roll(d2, 1, axis=1)) & (d2 <= np.roll(d2, -1, axis=1))
        rows = np.arange(len(x))
        for off in (-2, -1, 0, 1, 2):
            is_min[rows, (i0 + off) % M] = False
        masked = np.where(is_min, d2, np.inf)
        i1 = np.argmin(masked, axis=1)
        none = ~np.isfinite(masked[rows, i1])
        i1[none] = i0[none]
        second[s:s + chunk] = ts[i1]
    t0 = _newton_curve(m, pts, best, h_t)
    t1 = _newton_curve(m, pts, second, h_t)
    dist0 = np.linalg.norm(pts - curve_point(m, t0), axis=1)
    dist1 = np.linalg.norm(pts - curve_point(m, t1), axis=1)
    swap = dist1 < dist0
    t_best = np.where(swap, t1, t0)
    t_other = np.where(swap, t0, t1)
    dgap = np.abs(dist1 - dist0)
    tgap = np.abs(np.angle(np.exp(1j * (t_best - t_other))))
    if np.any((dgap < MEDIAL_DIST_TOL) & (tgap > MEDIAL_PARAM_TOL)):
        raise MedialAxis("closest point on the curve is not unique")
    t_best = np.mod(t_best, 2.0 * np.pi)
    point = curve_point(m, t_best)
    rho = np.linalg.norm(pts - point, axis=1)
    return ClosestPoint(point, rho, t_best, TORUS_LINE)


# -- frames and projectors -----------------------------------------------

def _complete_basis(a):
    """Two unit vectors orthogonal to the unit vectors ``a`` (n, 3) and to each other."""
    helper = np.zeros_like(a)
    idx = np.argmin(np.abs(a), axis=1)
    helper[np.arange(len(a)), idx] = 1.0
    b = np.cross(a, helper)
    b /= np.linalg.norm(b, axis=1)[:, None]
    c = np.cross(a, b)
    return b, c


@dataclass
class Frames:
    tangents: np.ndarray  # (n, d, 3)
    normals: np.ndarray  # (n, c, 3)
    P: np.ndarray  # (n, 3, 3)
    Q: np.ndarray  # (n, 3, 3)


def frames(m: ManifoldSpec, cp: ClosestPoint) -> Frames:
    """Orthonormal tangent/normal frames and the projectors onto both spaces."""
    single = np.ndim(cp.rho) == 0
    params = np.asarray(cp.params)
    if single:
        params = params[None]
    if m.kind == TORUS:
        phi, theta = params[:, 0], params[:, 1]
        e_phi = np.stack([-np.sin(phi), np.cos(phi), np.zeros_like(phi)], axis=-1)
        e_theta = np.stack([-np.cos(phi) * np.sin(theta), -np.sin(phi) * np.sin(theta), np.cos(theta)], axis=-1)
        nrm = np.stack([np.cos(phi) * np.cos(theta), np.sin(phi) * np.cos(theta), np.sin(theta)], axis=-1)
        tangents = np.stack([e_phi, e_theta], axis=1)
        normals = nrm[:, None, :]
    elif m.kind == SPHERE:
        az, pol = params[:, 0], params[:, 1]
        nrm = np.stack([np.sin(pol) * np.cos(az), np.sin(pol) * np.sin(az), np.cos(pol)], axis=-1)
        b, c = _complete_basis(nrm)
        tangents = np.stack([b, c], axis=1)
        normals = nrm[:, None, :]
    elif m.kind == PLANE:
        nrm = np.broadcast_to(np.asarray(m.axis), (len(params), 3)).copy()
        b, c = _complete_basis(nrm)
        tangents = np.stack([b, c], axis=1)
        normals = nrm[:, None, :]
    else:
        if m.kind == LINE:
            tan = np.broadcast_to(np.asarray(m.axis), (len(params), 3)).copy()
        else:
            d1 = curve_derivative(m, params)
            tan = d1 / np.linalg.norm(d1, axis=1)[:, None]
        b, c = _complete_basis(tan)
        tangents = tan[:, None, :]
        normals = np.stack([b, c], axis=1)
    P = np.einsum("nki,nkj->nij", tangents, tangents)
    P = 0.5 * (P + P.transpose(0, 2, 1))
    Q = np.eye(3) - P
    if single:
        return Frames(tangents[0], normals[0], P[0], Q[0])
    return Frames(tangents, normals, P, Q)


def extend(m: ManifoldSpec, g: Callable[[ClosestPoint], np.ndarray], x):
    """Extension of a field on the manifold by composition with the closest point map."""
    return g(closest_point(m, x))


# -- manufactured solutions ----------------------------------------------

@dataclass(frozen=True)
class ManufacturedCase:
    """Exact solution data; every field takes a :class:`ClosestPoint`."""

    name: str
    u: Callable
    grad_u: Callable
    f: Callable
    reaction: bool = True


def _params2d(cp):
    p = np.asarray(cp.params)
    return p[..., 0], p[..., 1]


def manufactured_torus_surface(m: ManifoldSpec | None = None) -> ManufacturedCase:
    m = m or ManifoldSpec.torus()
    R, r = m.R, m.r

    def u(cp):
        phi, theta = _params2d(cp)
        return np.sin(3 * phi) * np.cos(3 * theta + phi)

    def grad_u(cp):
        phi, theta = _params2d(cp)
        du_phi = 3 * np.cos(3 * phi) * np.cos(3 * theta + phi) - np.sin(3 * phi) * np.sin(3 * theta + phi)
        du_theta = -3 * np.sin(3 * phi) * np.sin(3 * theta + phi)
        e_phi = np.stack([-np.sin(phi), np.cos(phi), np.zeros_like(phi)], axis=-1)
        e_theta = np.stack([-np.cos(phi) * np.sin(theta), -np.sin(phi) * np.sin(theta), np.cos(theta)], axis=-1)
        w = R + r * np.cos(theta)
        return (du_phi / w)[..., None] * e_phi + (du_theta / r)[..., None] * e_theta

    def f(cp):
        phi, theta = _params2d(cp)
        uu = np.sin(3 * phi) * np.cos(3 * theta + phi)
        w = R + r * np.cos(theta)
        lap = (
            9.0 * uu / r**2
            + (10.0 * uu + 6.0 * np.cos(3 * phi) * np.sin(3 * theta + phi)) / w**2
            - 3.0 * np.sin(theta) * np.sin(3 * phi) * np.sin(3 * theta + phi) / (r * w)
        )
        return lap + uu

    return ManufacturedCase("torus_surface", u, grad_u, f, reaction=True)


def _torus_line_rhs(t):
    s = np.sin
    num = (
        -64 * s(t) ** 5 - 128 * s(t) ** 4 * s(3 * t) + 2 * s(3 * t) * np.cos(3 * t)
        + 41 * s(3 * t) - 28 * s(5 * t) + 8 * s(7 * t)
    )
    den = (
        128 * s(t) ** 6 - 192 * s(t) ** 4 + 72 * s(t) ** 2 - 9 * s(3 * t) ** 2
        + 4 * np.cos(3 * t) + 14
    ) ** 2
    return 36.0 * num / den


def manufactured_torus_line(m: ManifoldSpec | None = None) -> ManufacturedCase:
    """u = sin(3t) on the torus line with R = 1, r = 0.5, N = 3.

    The closed-form negative Laplace-Beltrami term is only valid for those
    parameters.
    """
    m = m or ManifoldSpec.torus_line()
    if (m.R, m.r, m.N) != (1.0, 0.5, 3):
        raise GeometryError("torus line manufactured solution needs R=1, r=0.5, N=3")

    def u(cp):
        return np.sin(3 * np.asarray(cp.params))

    def grad_u(cp):
        t = np.asarray(cp.params)
        d1 = curve_derivative(m, t)
        speed = np.linalg.norm(d1, axis=-1)
        return (3 * np.cos(3 * t) / speed**2)[..., None] * d1

    def f(cp):
        t = np.asarray(cp.params)
        return _torus_line_rhs(t) + np.sin(3 * t)

    return ManufacturedCase("torus_line", u, grad_u, f, reaction=True)


def constant_case(value: float = 1.0) -> ManufacturedCase:
    """u = value solves -Lap u + u = value exactly."""

    def u(cp):
        return np.full(np.shape(cp.rho), float(value))

    def grad_u(cp):
        return np.zeros(np.shape(cp.rho) + (3,))

    return ManufacturedCase("constant", u, grad_u, u, reaction=True)


def manufactured_case(name: str, m: ManifoldSpec, value: float = 1.0) -> ManufacturedCase:
    if name == "torus_surface":
        return manufactured_torus_surface(m)
    if name == "torus_line":
        return manufactured_torus_line(m)
    if name == "constant":
        return constant_case(value)
    raise ValueError(f"unknown manufactured case {name!r}")
