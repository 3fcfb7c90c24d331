"""Sparse assembly of the discrete bilinear forms, stabilizations and load vector.

Every element contribution is a symmetric outer product ``c * g g^T`` (or a
symmetrized mass block), accumulated as COO triplets and compressed to CSR.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.io
import scipy.sparse as sp

from . import geometry as geo
from .cutcell import DiscreteManifold, discrete_normal_projector, facet_barycentric
from .errors import DofMismatch
from .mesh import ActiveMesh

BILINEAR = ("tangential", "full")
STABILIZATIONS = ("none", "face", "full_gradient", "normal_gradient")


@dataclass(frozen=True)
class FormConfig:
    """Choice of discrete form ``a_h + tau * s_h`` (+ mass).

    ``stab_exponent`` overrides the power of h in front of the stabilization;
    ``None`` uses ``1-c``, ``2-c`` and ``alpha-c`` for the face, full gradient
    and normal gradient variants.
    """

    bilinear: str = "full"
    stabilization: str = "normal_gradient"
    tau: float = 0.1
    alpha: float = 2.0
    with_mass: bool = True
    codim: int = 1
    stab_exponent: float | None = None

    def __post_init__(self):
        if self.bilinear not in BILINEAR:
            raise ValueError(f"bilinear must be one of {BILINEAR}")
        if self.stabilization not in STABILIZATIONS:
            raise ValueError(f"stabilization must be one of {STABILIZATIONS}")
        if self.tau < 0:
            raise ValueError("tau must be nonnegative")
        if not 0.0 <= self.alpha <= 2.0:
            raise ValueError("alpha must lie in [0, 2]")
        if self.codim not in (1, 2):
            raise ValueError("codim must be 1 or 2")

    def exponent(self) -> float:
        if self.stab_exponent is not None:
            return float(self.stab_exponent)
        c = self.codim
        return {"face": 1 - c, "full_gradient": 2 - c, "normal_gradient": self.alpha - c, "none": 0.0}[self.stabilization]


@dataclass
class LinearSystem:
    A: sp.csr_matrix
    b: np.ndarray
    active: ActiveMesh
    deflate: bool = False

    @property
    def n_dof(self) -> int:
        return self.A.shape[0]


def _outer_coo(dofs, vecs, coef, n):
    """Sum of ``coef[e] * vecs[e] vecs[e]^T`` placed at ``dofs[e]``."""
    if len(dofs) == 0:
        return sp.csr_matrix((n, n))
    k = dofs.shape[1]
    vals = coef[:, None, None] * np.einsum("ei,ej->eij", vecs, vecs)
    return _coo(dofs, vals, n)


def _coo(dofs, vals, n):
    k = dofs.shape[1]
    rows = np.repeat(dofs, k, axis=1).ravel()
    cols = np.tile(dofs, (1, k)).ravel()
    A = sp.coo_matrix((vals.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    return A


def _gram_coo(dofs, grads, coef, n):
    """Sum of ``coef[e] * G_e G_e^T`` with G_e of shape (k, 3)."""
    vals = coef[:, None, None] * np.einsum("eia,eja->eij", grads, grads)
    return _coo(dofs, vals, n)


def _facet_local(active: ActiveMesh, dm: DiscreteManifold):
    local, ok = active.local_index(dm.parent)
    if not np.all(ok):
        # facets of negligible measure may sit in tets left out of the active mesh
        tiny = dm.measure[~ok]
        if np.any(tiny > 1e-12 * active.h ** (3 - dm.codim)):
            raise DofMismatch("facet parent tet is not active")
    return local, ok


def assemble_surface_bilinear(active: ActiveMesh, dm: DiscreteManifold, cfg: FormConfig) -> sp.csr_matrix:
    """Stiffness ``(grad v, grad w)`` on the facets, tangential or full, plus optional mass."""
    if cfg.codim != dm.codim:
        raise ValueError("form codimension does not match the discrete manifold")
    n = active.n_dof
    local, ok = _facet_local(active, dm)
    local, meas = local[ok], dm.measure[ok]
    G = active.grads[local]
    if cfg.bilinear == "tangential":
        G = np.einsum("fab,fib->fia", dm.projectors[ok], G)
    A = _gram_coo(active.dofs[local], G, meas, n)
    if cfg.with_mass:
        A = A + assemble_mass(active, dm)
    return A


def assemble_mass(active: ActiveMesh, dm: DiscreteManifold, degree=2) -> sp.csr_matrix:
    local, ok = _facet_local(active, dm)
    local = local[ok]
    pts, wts = dm.quadrature(degree)
    lam = facet_barycentric(active, dm, pts[ok], local)
    vals = np.einsum("fq,fqi,fqj->fij", wts[ok], lam, lam)
    vals = 0.5 * (vals + vals.transpose(0, 2, 1))
    return _coo(active.dofs[local], vals, active.n_dof)


def assemble_stab_face(active: ActiveMesh, bg=None, c: int = 1, exponent: float | None = None) -> sp.csr_matrix:
    """Normal-gradient jump penalty over interior faces of the active mesh."""
    faces = active.faces
    n = active.n_dof
    if faces is None or len(faces) == 0:
        return sp.csr_matrix((n, n))
    e = (1 - c) if exponent is None else exponent
    jp = np.einsum("fi,fki->fk", faces.normal, active.grads[faces.plus])
    jm = -np.einsum("fi,fki->fk", faces.normal, active.grads[faces.minus])
    dofs = np.concatenate([active.dofs[faces.plus], active.dofs[faces.minus]], axis=1)
    vecs = np.concatenate([jp, jm], axis=1)
    coef = active.h**e * faces.area
    return _outer_coo(dofs, vecs, coef, n)


def assemble_stab_full(active: ActiveMesh, bg=None, c: int = 1, exponent: float | None = None) -> sp.csr_matrix:
    e = (2 - c) if exponent is None else exponent
    return _gram_coo(active.dofs, active.grads, active.h**e * active.volumes, active.n_dof)


def assemble_stab_normal(active: ActiveMesh, dm: DiscreteManifold, m=None, c: int = 1,
                         alpha: float = 2.0, exponent: float | None = None, Q=None) -> sp.csr_matrix:
    e = (alpha - c) if exponent is None else exponent
    if Q is None:
        Q = discrete_normal_projector(active, dm, m)
    QG = np.einsum("kab,kib->kia", Q, active.grads)
    return _gram_coo(active.dofs, QG, active.h**e * active.volumes, active.n_dof)


def assemble_stabilization(active, dm, m, cfg: FormConfig) -> sp.csr_matrix:
    e = cfg.exponent()
    if cfg.stabilization == "face":
        return assemble_stab_face(active, None, cfg.codim, e)
    if cfg.stabilization == "full_gradient":
        return assemble_stab_full(active, None, cfg.codim, e)
    if cfg.stabilization == "normal_gradient":
        return assemble_stab_normal(active, dm, m, cfg.codim, cfg.alpha, e)
    return sp.csr_matrix((active.n_dof, active.n_dof))


def assemble_rhs(active: ActiveMesh, dm: DiscreteManifold, case: geo.ManufacturedCase | None,
                 m=None, degree=2, f=None) -> np.ndarray:
    """Load vector ``b_i = sum_K sum_q w_q f(p(x_q)) lambda_i(x_q)``.

    ``f`` may be given directly as a callable of the quadrature points (nf, nq, 3).
    """
    m = m or dm.manifold
    local, ok = _facet_local(active, dm)
    local = local[ok]
    pts, wts = dm.quadrature(degree)
    pts, wts = pts[ok], wts[ok]
    if f is not None:
        fq = f(pts)
    else:
        cp = geo.closest_point(m, pts.reshape(-1, 3))
        fq = np.asarray(case.f(cp)).reshape(wts.shape)
    lam = facet_barycentric(active, dm, pts, local)
    vals = np.einsum("fq,fqi->fi", wts * fq, lam)
    b = np.zeros(active.n_dof)
    np.add.at(b, active.dofs[local].ravel(), vals.ravel())
    return b


def symmetrize(A: sp.csr_matrix) -> sp.csr_matrix:
    S = ((A + A.T) * 0.5).tocsr()
    S.sum_duplicates()
    S.sort_indices()
    return S


def build_system(active: ActiveMesh, dm: DiscreteManifold, m, cfg: FormConfig,
                 case: geo.ManufacturedCase | None = None) -> LinearSystem:
    A = assemble_surface_bilinear(active, dm, cfg)
    if cfg.tau > 0 and cfg.stabilization != "none":
        A = A + cfg.tau * assemble_stabilization(active, dm, m, cfg)
    A = symmetrize(A)
    b = assemble_rhs(active, dm, case, m) if case is not None else np.zeros(active.n_dof)
    return LinearSystem(A, b, active, deflate=not cfg.with_mass)


def write_matrix_market(path, A, comment=""):
    scipy.io.mmwrite(str(path), sp.coo_matrix(A), comment=comment, field="real", symmetry="general")
