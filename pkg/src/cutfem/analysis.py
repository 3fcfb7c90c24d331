"""Error norms on the discrete manifold and experimental orders of convergence."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import geometry as geo
from .cutcell import DiscreteManifold, facet_barycentric
from .errors import NonPositiveError


@dataclass
class ErrorReport:
    l2: float
    h1_semi: float
    h1: float
    h: float
    n_dof: int


def error_norms(u_h, case: geo.ManufacturedCase, dm: DiscreteManifold, active, m=None,
                degree: int = 4) -> ErrorReport:
    """L2 and H1 errors of ``u_h`` against the extended exact solution on the facets.

    The tangential gradient of the exact solution is taken as
    ``P_h grad_Gamma u(p(x))``; the dropped curvature factor is O(h^2).
    """
    m = m or dm.manifold
    local, ok = active.local_index(dm.parent)
    local = local[ok]
    pts, wts = dm.quadrature(degree)
    pts, wts = pts[ok], wts[ok]
    P = dm.projectors[ok]
    cp = geo.closest_point(m, pts.reshape(-1, 3))
    u_ex = np.asarray(case.u(cp)).reshape(wts.shape)
    g_ex = np.asarray(case.grad_u(cp)).reshape(wts.shape + (3,))
    lam = facet_barycentric(active, dm, pts, local)
    coef = np.asarray(u_h)[active.dofs[local]]
    u_q = np.einsum("fqi,fi->fq", lam, coef)
    g_h = np.einsum("fi,fia->fa", coef, active.grads[local])
    g_err = np.einsum("fab,fb->fa", P, g_h)[:, None, :] - np.einsum("fab,fqb->fqa", P, g_ex)
    l2 = float(np.sqrt(np.sum(wts * (u_ex - u_q) ** 2)))
    semi = float(np.sqrt(np.sum(wts * np.einsum("fqa,fqa->fq", g_err, g_err))))
    return ErrorReport(l2, semi, float(np.hypot(l2, semi)), active.h, active.n_dof)


def interpolate(case: geo.ManufacturedCase, active, m):
    """Nodal values of the extended exact solution at the active vertices."""
    cp = geo.closest_point(m, active.background.vertex_coords(active.dof_vertices))
    return np.asarray(case.u(cp), dtype=float)


def eoc(errors) -> list:
    """Rates ``log2(E_{k-1}/E_k)`` for consecutive pairs of ``(h, E)``."""
    errs = np.array([e for _, e in errors], dtype=float)
    if np.any(errs <= 0):
        raise NonPositiveError("errors must be positive to compute convergence orders")
    hs = np.array([h for h, _ in errors], dtype=float)
    return [float(np.log(errs[k - 1] / errs[k]) / np.log(hs[k - 1] / hs[k])) for k in range(1, len(errs))]
