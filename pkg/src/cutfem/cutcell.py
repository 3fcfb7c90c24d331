"""Discrete manifold as a partition into facets, each inside one background tet.

Surfaces come from marching tetrahedra on the nodal interpolant of the level
set; curves come from a parameter-uniform polyline clipped against the tets.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import geometry as geo
from .errors import DegenerateFacet, DegenerateSegment, GeometryError, ZeroGradient
from .mesh import BackgroundMesh, barycentric

# quadrature rules on the reference simplex: barycentric points, weights summing to 1
_TRI_MIDPOINT = (
    np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]]),
    np.full(3, 1.0 / 3.0),
)
_a, _b = 0.445948490915965, 0.091576213509771
_TRI_DEG4 = (
    np.array([
        [_a, _a, 1 - 2 * _a], [_a, 1 - 2 * _a, _a], [1 - 2 * _a, _a, _a],
        [_b, _b, 1 - 2 * _b], [_b, 1 - 2 * _b, _b], [1 - 2 * _b, _b, _b],
    ]),
    np.array([0.223381589678011] * 3 + [0.109951743655322] * 3),
)


def _gauss_segment(npts):
    x, w = np.polynomial.legendre.leggauss(npts)
    s = 0.5 * (x + 1.0)
    return np.stack([1.0 - s, s], axis=-1), 0.5 * w


def triangle_rule(degree):
    """Barycentric triangle rule; degree 2 (edge midpoints) or 4 (6 points)."""
    if degree <= 2:
        return _TRI_MIDPOINT
    if degree <= 4:
        return _TRI_DEG4
    return refined_triangle_rule(int(np.ceil(degree / 4)))


def refined_triangle_rule(levels):
    """Degree-4 rule on a uniform ``levels x levels`` subdivision."""
    n = levels
    pts, wts = [], []
    bp, bw = _TRI_DEG4
    corners = lambda i, j: np.array([1 - (i + j) / n, i / n, j / n])
    for i in range(n):
        for j in range(n - i):
            tris = [(corners(i, j), corners(i + 1, j), corners(i, j + 1))]
            if i + j < n - 1:
                tris.append((corners(i + 1, j), corners(i + 1, j + 1), corners(i, j + 1)))
            for a, b, c in tris:
                pts.append(bp @ np.stack([a, b, c]))
                wts.append(bw / n**2)
    return np.concatenate(pts), np.concatenate(wts)


def segment_rule(npts):
    return _gauss_segment(npts)


@dataclass
class CutFacet:
    parent_tet: int
    vertices: np.ndarray
    measure: float
    quad_points: np.ndarray
    quad_weights: np.ndarray
    P_gh: np.ndarray
    Q_gh: np.ndarray


@dataclass
class DiscreteManifold:
    """Facets stored as arrays, ordered by (parent tet id, local facet index).

    ``vertices`` has shape (nf, 3, 3) for triangles and (nf, 2, 3) for segments.
    ``nodal_levels`` holds the snapped nodal level-set values on the
    background vertices for surfaces.
    """

    codim: int
    vertices: np.ndarray
    parent: np.ndarray
    h: float
    manifold: geo.ManifoldSpec | None = None
    nodal_levels: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.measure = facet_measures(self.vertices)

    def __len__(self):
        return len(self.parent)

    @property
    def total_measure(self) -> float:
        return float(self.measure.sum())

    def rule(self, degree=2):
        if self.codim == 1:
            return triangle_rule(degree)
        return segment_rule(max(1, (degree + 2) // 2))

    def quadrature(self, degree=2):
        """Quadrature points (nf, nq, 3) and weights (nf, nq)."""
        bary, w = self.rule(degree)
        pts = np.einsum("qv,fvi->fqi", bary, self.vertices)
        return pts, self.measure[:, None] * w[None, :]

    @property
    def projectors(self) -> np.ndarray:
        if not hasattr(self, "_P"):
            self._P = facet_projectors(self.vertices)
        return self._P

    def facet(self, i) -> CutFacet:
        pts, wts = self.quadrature()
        P = self.projectors[i]
        return CutFacet(int(self.parent[i]), self.vertices[i], float(self.measure[i]), pts[i], wts[i], P, np.eye(3) - P)

    @property
    def facets(self) -> list:
        return [self.facet(i) for i in range(len(self))]


def facet_measures(verts):
    if len(verts) == 0:
        return np.zeros(0)
    if verts.shape[1] == 3:
        return 0.5 * np.linalg.norm(np.cross(verts[:, 1] - verts[:, 0], verts[:, 2] - verts[:, 0]), axis=1)
    return np.linalg.norm(verts[:, 1] - verts[:, 0], axis=1)


def facet_projectors(verts, tol=1e-14):
    """Orthogonal projectors (nf, 3, 3) onto the tangent spaces of the facets."""
    if len(verts) == 0:
        return np.zeros((0, 3, 3))
    if verts.shape[1] == 3:
        e1, e2 = verts[:, 1] - verts[:, 0], verts[:, 2] - verts[:, 0]
        nrm = np.cross(e1, e2)
        scale = np.linalg.norm(e1, axis=1) * np.linalg.norm(e2, axis=1)
        nn = np.linalg.norm(nrm, axis=1)
        if np.any(nn <= tol * np.maximum(scale, tol)):
            raise DegenerateFacet("collinear triangle vertices")
        nrm = nrm / nn[:, None]
        P = np.eye(3) - np.einsum("fi,fj->fij", nrm, nrm)
    else:
        t = verts[:, 1] - verts[:, 0]
        tn = np.linalg.norm(t, axis=1)
        if np.any(tn <= tol):
            raise DegenerateFacet("zero-length segment")
        t = t / tn[:, None]
        P = np.einsum("fi,fj->fij", t, t)
    return 0.5 * (P + P.transpose(0, 2, 1))


def facet_projector(f: CutFacet | np.ndarray) -> np.ndarray:
    verts = f.vertices if isinstance(f, CutFacet) else np.asarray(f, dtype=float)
    return facet_projectors(verts[None])[0]


# -- surfaces --------------------------------------------------------------

_OTHERS = np.array([[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]])


def _edge_root(xa, xb, fa, fb):
    return (fb[..., None] * xa - fa[..., None] * xb) / (fb - fa)[..., None]


def snap_levels(values):
    values = np.asarray(values, dtype=float).copy()
    snap_tol = 1e-10 * np.max(np.abs(values)) if values.size else 0.0
    values[np.abs(values) < snap_tol] = snap_tol
    return values


def cut_tets(coords, levels):
    """Marching tetrahedra on tets with vertex coords (k, 4, 3) and nodal values (k, 4).

    Returns ``(tet_index, triangles)`` with triangles (nt, 3, 3), ordered by tet
    then local facet index.
    """
    neg = levels < 0
    count = neg.sum(axis=1)
    out_tet, out_tri, out_local = [], [], []

    single = np.flatnonzero((count == 1) | (count == 3))
    if len(single):
        minority = np.where((count[single] == 1)[:, None], neg[single], ~neg[single])
        iso = np.argmax(minority, axis=1)
        oth = _OTHERS[iso]
        rows = np.arange(len(single))[:, None]
        c, lv = coords[single], levels[single]
        xa, fa = c[rows[:, 0], iso][:, None, :], lv[rows[:, 0], iso][:, None]
        tri = _edge_root(xa, c[rows, oth], fa, lv[rows, oth])
        out_tet.append(single)
        out_tri.append(tri)
        out_local.append(np.zeros(len(single), dtype=int))

    double = np.flatnonzero(count == 2)
    if len(double):
        c, lv, ng = coords[double], levels[double], neg[double]
        neg_idx = np.argsort(~ng, axis=1, kind="stable")  # negatives first
        a, b, cc, d = (neg_idx[:, i] for i in range(4))
        rows = np.arange(len(double))

        def root(i, j):
            return _edge_root(c[rows, i], c[rows, j], lv[rows, i], lv[rows, j])

        p0, p1, p2, p3 = root(a, cc), root(a, d), root(b, d), root(b, cc)
        short02 = np.linalg.norm(p0 - p2, axis=1) <= np.linalg.norm(p1 - p3, axis=1)
        s = short02[:, None, None]
        t1 = np.where(s, np.stack([p0, p1, p2], axis=1), np.stack([p0, p1, p3], axis=1))
        t2 = np.where(s, np.stack([p0, p2, p3], axis=1), np.stack([p1, p2, p3], axis=1))
        out_tet += [double, double]
        out_tri += [t1, t2]
        out_local += [np.zeros(len(double), dtype=int), np.ones(len(double), dtype=int)]

    if not out_tet:
        return np.zeros(0, dtype=int), np.zeros((0, 3, 3))
    tet = np.concatenate(out_tet)
    tri = np.concatenate(out_tri)
    local = np.concatenate(out_local)
    order = np.lexsort((local, tet))
    return tet[order], tri[order]


def _check_inside(bg: BackgroundMesh, m: geo.ManifoldSpec):
    lo, hi = m.bounding_box()
    if np.all(np.isfinite(lo)) and (np.any(lo <= bg.lo) or np.any(hi >= np.asarray(bg.box.hi))):
        raise GeometryError(f"{m.kind} does not fit inside the background box")


def marching_tets(bg: BackgroundMesh, m: geo.ManifoldSpec) -> DiscreteManifold:
    if m.codim != 1:
        raise GeometryError("marching tetrahedra needs a codimension-1 level set")
    _check_inside(bg, m)
    levels = snap_levels(geo.level_set_value(m, bg.vertices))
    n = bg.n
    # cubes whose 8 corners do not share one sign
    corner = bg.vertex_index(
        np.stack(np.meshgrid(np.arange(n), np.arange(n), np.arange(n), indexing="ij"), axis=-1)
        .transpose(2, 1, 0, 3).reshape(-1, 3)[:, None, :]
        + np.array([[i, j, k] for k in (0, 1) for j in (0, 1) for i in (0, 1)])[None]
    )
    sgn = levels[corner] < 0
    cubes = np.flatnonzero(sgn.any(axis=1) & ~sgn.all(axis=1))
    tet_ids = bg.tets_of_cubes(cubes)
    tv = bg.tet_vertices(tet_ids)
    local, tris = cut_tets(bg.vertex_coords(tv), levels[tv])
    return DiscreteManifold(1, tris, tet_ids[local], bg.h, m, levels)


# -- curves ----------------------------------------------------------------

_PLANE_FAMILIES = np.array([
    [1, 0, 0], [0, 1, 0], [0, 0, 1], [1, -1, 0], [1, 0, -1], [0, 1, -1],
], dtype=float)


def clip_segment(bg: BackgroundMesh, a, b, merge_tol=1e-12):
    """Split segment ``a -> b`` at every tet face crossing.

    Returns sub-segment end points (k, 2, 3) and their parent tet ids (k,).
    """
    A = (np.asarray(a) - bg.lo) / bg.h
    B = (np.asarray(b) - bg.lo) / bg.h
    la, lb = _PLANE_FAMILIES @ A, _PLANE_FAMILIES @ B
    cuts = [0.0, 1.0]
    for fa, fb in zip(la, lb):
        if fa == fb:
            continue
        lo_, hi_ = min(fa, fb), max(fa, fb)
        ms = np.arange(np.floor(lo_) + 1, np.ceil(hi_))
        cuts.extend(((ms - fa) / (fb - fa)).tolist())
    s = np.unique(np.clip(cuts, 0.0, 1.0))
    keep = np.concatenate([[True], np.diff(s) > merge_tol])
    s = s[keep]
    s[-1] = 1.0
    a, b = np.asarray(a, float), np.asarray(b, float)
    pts = a + s[:, None] * (b - a)
    segs = np.stack([pts[:-1], pts[1:]], axis=1)
    if np.any(np.linalg.norm(segs[:, 1] - segs[:, 0], axis=1) < 1e-14):
        raise DegenerateSegment("sub-segment shorter than 1e-14")
    parents = bg.locate(segs.mean(axis=1))
    return segs, parents


def polyline_vertices(m: geo.ManifoldSpec, n_segments: int):
    t = 2.0 * np.pi * np.arange(n_segments + 1) / n_segments
    pts = geo.curve_point(m, t)
    pts[-1] = pts[0]
    return pts


def clip_polyline(bg: BackgroundMesh, m: geo.ManifoldSpec, n_segments: int) -> DiscreteManifold:
    """Closed polyline through ``n_segments`` parameter-uniform curve samples, clipped to tets."""
    if m.codim != 2:
        raise GeometryError("polyline clipping needs a codimension-2 manifold")
    _check_inside(bg, m)
    pts = polyline_vertices(m, n_segments)
    return clip_points(bg, pts, m)


def clip_points(bg: BackgroundMesh, pts, m=None) -> DiscreteManifold:
    all_segs, all_par = [], []
    for a, b in zip(pts[:-1], pts[1:]):
        segs, par = clip_segment(bg, a, b)
        all_segs.append(segs)
        all_par.append(par)
    segs = np.concatenate(all_segs)
    par = np.concatenate(all_par)
    order = np.argsort(par, kind="stable")
    return DiscreteManifold(2, segs[order], par[order], bg.h, m)


# -- projectors and validation --------------------------------------------

def discrete_normal_projector(active, dm: DiscreteManifold, m: geo.ManifoldSpec | None = None):
    """Per-active-tet normal projectors (na, 3, 3)."""
    m = m or dm.manifold
    if dm.codim == 1:
        if dm.nodal_levels is not None:
            levels = dm.nodal_levels[active.tets]
        else:
            levels = geo.level_set_value(m, active.coords.reshape(-1, 3)).reshape(-1, 4)
        g = np.einsum("ki,kij->kj", levels, active.grads)
        gn = np.linalg.norm(g, axis=1)
        if np.any(gn < 1e-12):
            raise ZeroGradient("level-set interpolant has vanishing gradient in an active tet")
        nrm = g / gn[:, None]
        Q = np.einsum("ki,kj->kij", nrm, nrm)
    else:
        cp = geo.closest_point(m, active.coords.mean(axis=1))
        Q = geo.frames(m, cp).Q
    return 0.5 * (Q + Q.transpose(0, 2, 1))


@dataclass
class GeometryReport:
    rho_max: float
    proj_dev_max: float
    measure_ratio: float


def geometry_validation(dm: DiscreteManifold, m: geo.ManifoldSpec | None = None) -> GeometryReport:
    m = m or dm.manifold
    pts, _ = dm.quadrature()
    flat = pts.reshape(-1, 3)
    cp = geo.closest_point(m, flat)
    P = geo.frames(m, cp).P.reshape(len(dm), -1, 3, 3)
    dev = np.abs(P - dm.projectors[:, None])
    return GeometryReport(
        rho_max=float(np.max(cp.rho)),
        proj_dev_max=float(dev.max()),
        measure_ratio=dm.total_measure / m.measure,
    )


def facet_barycentric(active, dm: DiscreteManifold, points, local=None):
    """Barycentric coordinates in the parent tets of facet points (nf, nq, 3)."""
    if local is None:
        local, _ = active.local_index(dm.parent)
    return barycentric(active.coords[local], points)
