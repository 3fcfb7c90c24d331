"""Structured tetrahedral background mesh and the active (cut) submesh.

Each cube of the box is split into six tetrahedra along its main diagonal
(Kuhn/Freudenthal). Tetrahedron ``6*cube + k`` covers the region of the
cube where the local coordinates are ordered as ``KUHN_PERMS[k]``
(descending). All tet faces lie on the planes ``X_i = m`` and
``X_i - X_j = m`` (``X`` in cell units, ``m`` integer).
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import EmptyActiveMesh, NonCubicBox

log = logging.getLogger(__name__)

KUHN_PERMS = tuple(itertools.permutations(range(3)))


def _kuhn_local_vertices():
    """Local corner offsets (6, 4, 3) of the Kuhn tets, positively oriented."""
    out = []
    for perm in KUHN_PERMS:
        path = [np.zeros(3, dtype=int)]
        for axis in perm:
            nxt = path[-1].copy()
            nxt[axis] = 1
            path.append(nxt)
        if np.linalg.det(np.array([path[1], path[2], path[3]], dtype=float)) < 0:
            path[2], path[3] = path[3], path[2]
        out.append(path)
    return np.array(out)


KUHN_LOCAL = _kuhn_local_vertices()


@dataclass(frozen=True)
class BoxSpec:
    lo: tuple
    hi: tuple
    n: int

    def __post_init__(self):
        lo, hi = np.asarray(self.lo, float), np.asarray(self.hi, float)
        if lo.shape != (3,) or hi.shape != (3,):
            raise ValueError("box corners must be 3-vectors")
        if self.n < 1:
            raise ValueError("n must be a positive integer")
        if np.any(hi <= lo):
            raise ValueError("box needs lo < hi componentwise")
        ext = hi - lo
        if np.max(np.abs(ext - ext[0])) > 1e-12 * max(1.0, ext[0]):
            raise NonCubicBox(f"box extents {ext} do not give cubic cells")
        object.__setattr__(self, "lo", tuple(lo))
        object.__setattr__(self, "hi", tuple(hi))

    @property
    def h(self) -> float:
        return (self.hi[0] - self.lo[0]) / self.n

    @classmethod
    def cube(cls, half_width: float, n: int) -> "BoxSpec":
        return cls((-half_width,) * 3, (half_width,) * 3, n)


class BackgroundMesh:
    """Kuhn-subdivided box. Tets are generated on demand from their ids."""

    def __init__(self, box: BoxSpec):
        self.box = box
        self.n = box.n
        self.h = box.h
        self.lo = np.asarray(box.lo)

    @property
    def n_vertices(self) -> int:
        return (self.n + 1) ** 3

    @property
    def n_tets(self) -> int:
        return 6 * self.n**3

    def vertex_index(self, ijk):
        ijk = np.asarray(ijk)
        m = self.n + 1
        return ijk[..., 0] + m * (ijk[..., 1] + m * ijk[..., 2])

    def vertex_ijk(self, vid):
        vid = np.asarray(vid)
        m = self.n + 1
        return np.stack([vid % m, (vid // m) % m, vid // (m * m)], axis=-1)

    def vertex_coords(self, vid):
        return self.lo + self.h * self.vertex_ijk(vid)

    @cached_property
    def vertices(self) -> np.ndarray:
        return self.vertex_coords(np.arange(self.n_vertices))

    def cube_ijk(self, cube):
        cube = np.asarray(cube)
        n = self.n
        return np.stack([cube % n, (cube // n) % n, cube // (n * n)], axis=-1)

    def tet_vertices(self, tet_ids):
        """Global vertex ids (k, 4) of the given tets."""
        tet_ids = np.asarray(tet_ids)
        cube, local = np.divmod(tet_ids, 6)
        corner = self.cube_ijk(cube)
        ijk = corner[..., None, :] + KUHN_LOCAL[local]
        return self.vertex_index(ijk)

    @cached_property
    def tets(self) -> np.ndarray:
        return self.tet_vertices(np.arange(self.n_tets))

    def tets_of_cubes(self, cubes):
        cubes = np.asarray(cubes)
        return (6 * cubes[:, None] + np.arange(6)[None, :]).ravel()

    def locate(self, x):
        """Tet ids containing the points ``x`` (k, 3); boundary ties resolved deterministically."""
        X = (np.atleast_2d(x) - self.lo) / self.h
        cell = np.clip(np.floor(X).astype(int), 0, self.n - 1)
        frac = X - cell
        order = np.argsort(-frac, axis=1, kind="stable")
        perm_code = order[:, 0] * 9 + order[:, 1] * 3 + order[:, 2]
        lookup = {p[0] * 9 + p[1] * 3 + p[2]: k for k, p in enumerate(KUHN_PERMS)}
        local = np.array([lookup[c] for c in perm_code], dtype=int)
        cube = cell[:, 0] + self.n * (cell[:, 1] + self.n * cell[:, 2])
        return 6 * cube + local


def build_background(box: BoxSpec) -> BackgroundMesh:
    return BackgroundMesh(box)


def tet_geometry(coords):
    """Barycentric gradients (k, 4, 3) and volumes (k,) for tets with vertex coords (k, 4, 3)."""
    J = (coords[:, 1:, :] - coords[:, :1, :]).transpose(0, 2, 1)
    vol = np.linalg.det(J) / 6.0
    Jinv = np.linalg.inv(J)
    grads = np.empty_like(coords)
    grads[:, 1:, :] = Jinv
    grads[:, 0, :] = -Jinv.sum(axis=1)
    return grads, vol


def barycentric(coords, x):
    """Barycentric coordinates of points x (k, q, 3) in tets coords (k, 4, 3)."""
    grads, _ = tet_geometry(coords)
    lam = np.einsum("kij,kqj->kqi", grads, x - coords[:, None, 0, :])
    lam[..., 0] += 1.0
    return lam


@dataclass
class Face:
    tet_plus: int
    tet_minus: int
    vertices: tuple
    normal: np.ndarray
    area: float


@dataclass
class FaceSet:
    """Interior faces between active tets, stored as arrays.

    ``plus``/``minus`` are local active-tet indices, ``normal`` points from
    plus to minus.
    """

    plus: np.ndarray
    minus: np.ndarray
    vertices: np.ndarray
    normal: np.ndarray
    area: np.ndarray

    def __len__(self):
        return len(self.plus)

    def __getitem__(self, i) -> Face:
        return Face(int(self.plus[i]), int(self.minus[i]), tuple(self.vertices[i]), self.normal[i], float(self.area[i]))


@dataclass
class ActiveMesh:
    """Tets of the background mesh that carry a piece of the discrete manifold."""

    background: BackgroundMesh
    tet_ids: np.ndarray
    tets: np.ndarray  # (na, 4) global vertex ids
    dof_vertices: np.ndarray  # sorted global vertex ids; position == dof index
    dofs: np.ndarray  # (na, 4) dof ids
    coords: np.ndarray  # (na, 4, 3)
    grads: np.ndarray  # (na, 4, 3)
    volumes: np.ndarray
    faces: FaceSet | None = field(default=None, repr=False)

    @property
    def n_dof(self) -> int:
        return len(self.dof_vertices)

    @property
    def h(self) -> float:
        return self.background.h

    @property
    def dof_map(self) -> dict:
        return {int(v): i for i, v in enumerate(self.dof_vertices)}

    def local_index(self, tet_ids):
        """Positions of background tet ids within ``tet_ids``."""
        pos = np.searchsorted(self.tet_ids, tet_ids)
        pos = np.clip(pos, 0, len(self.tet_ids) - 1)
        ok = self.tet_ids[pos] == tet_ids
        return pos, ok


def active_from_tets(bg: BackgroundMesh, tet_ids) -> ActiveMesh:
    tet_ids = np.unique(np.asarray(tet_ids, dtype=np.int64))
    if len(tet_ids) == 0:
        raise EmptyActiveMesh("no background tet intersects the discrete manifold")
    tets = bg.tet_vertices(tet_ids)
    dof_vertices, inv = np.unique(tets, return_inverse=True)
    dofs = inv.reshape(tets.shape)
    coords = bg.vertex_coords(tets)
    grads, vol = tet_geometry(coords)
    am = ActiveMesh(bg, tet_ids, tets, dof_vertices, dofs, coords, grads, vol)
    am.faces = interior_faces(am, bg)
    return am


def extract_active(bg: BackgroundMesh, dm, measure_tol: float | None = None) -> ActiveMesh:
    """Active mesh of the tets owning a facet of positive measure."""
    if measure_tol is None:
        measure_tol = 1e-12 * bg.h ** (3 - dm.codim)
    keep = dm.measure > measure_tol
    am = active_from_tets(bg, dm.parent[keep])
    isolated = isolated_tets(am)
    if len(isolated):
        log.warning("%d active tets share no face with another active tet", len(isolated))
    return am


def _tet_faces(tets):
    """All faces (4k, 3) sorted by vertex id, with the owning tet position."""
    local = np.array([[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]])
    faces = np.sort(tets[:, local], axis=2).reshape(-1, 3)
    owner = np.repeat(np.arange(len(tets)), 4)
    return faces, owner


def interior_faces(active: ActiveMesh, bg: BackgroundMesh) -> FaceSet:
    faces, owner = _tet_faces(active.tets)
    uniq, inv, counts = np.unique(faces, axis=0, return_inverse=True, return_counts=True)
    inv = inv.ravel()
    shared = np.flatnonzero(counts == 2)
    order = np.argsort(inv, kind="stable")
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    plus = owner[order[starts[shared]]]
    minus = owner[order[starts[shared] + 1]]
    verts = uniq[shared]
    p = bg.vertex_coords(verts)
    nrm = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    nn = np.linalg.norm(nrm, axis=1)
    area = 0.5 * nn
    nrm = nrm / nn[:, None] if len(nn) else nrm
    cplus = active.coords[plus].mean(axis=1)
    cminus = active.coords[minus].mean(axis=1)
    flip = np.einsum("ij,ij->i", cminus - cplus, nrm) < 0
    nrm[flip] *= -1.0
    return FaceSet(plus, minus, verts, nrm, area)


def isolated_tets(active: ActiveMesh) -> np.ndarray:
    faces = active.faces if active.faces is not None else interior_faces(active, active.background)
    linked = np.zeros(len(active.tet_ids), dtype=bool)
    linked[faces.plus] = True
    linked[faces.minus] = True
    return np.flatnonzero(~linked)
