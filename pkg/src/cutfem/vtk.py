"""Legacy ASCII VTK writers for the active mesh and the discrete manifold."""
from __future__ import annotations

import numpy as np

VTK_LINE = 3
VTK_TRIANGLE = 5
VTK_TETRA = 10


def write_unstructured_grid(path, points, cells, cell_type, title="cutfem", point_data=None, cell_data=None):
    """Write one homogeneous cell block as DATASET UNSTRUCTURED_GRID.

    ``point_data``/``cell_data`` map names to scalar arrays.
    """
    points = np.asarray(points, dtype=float)
    cells = np.asarray(cells, dtype=np.int64)
    nc, nv = cells.shape
    with open(path, "w", encoding="ascii") as fh:
        fh.write("# vtk DataFile Version 2.0\n")
        fh.write(f"{title}\nASCII\nDATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {len(points)} double\n")
        np.savetxt(fh, points, fmt="%.17g")
        fh.write(f"CELLS {nc} {nc * (nv + 1)}\n")
        np.savetxt(fh, np.hstack([np.full((nc, 1), nv), cells]), fmt="%d")
        fh.write(f"CELL_TYPES {nc}\n")
        np.savetxt(fh, np.full(nc, cell_type), fmt="%d")
        for section, data, count in (("POINT_DATA", point_data, len(points)), ("CELL_DATA", cell_data, nc)):
            if not data:
                continue
            fh.write(f"{section} {count}\n")
            for name, values in data.items():
                fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
                np.savetxt(fh, np.asarray(values, dtype=float).reshape(-1), fmt="%.17g")


def write_active_mesh(path, active, u=None):
    """Active tets with (optional) nodal solution values."""
    pts = active.background.vertex_coords(active.dof_vertices)
    pdata = {"u_h": u} if u is not None else None
    cdata = {"tet_id": active.tet_ids.astype(float)}
    write_unstructured_grid(path, pts, active.dofs, VTK_TETRA, "active mesh", pdata, cdata)


def write_discrete_manifold(path, dm, active=None, u=None):
    """Facets of the discrete manifold; ``u`` on active dofs is sampled at facet vertices."""
    nf, nv, _ = dm.vertices.shape
    pts = dm.vertices.reshape(-1, 3)
    cells = np.arange(nf * nv).reshape(nf, nv)
    pdata = None
    if u is not None and active is not None:
        from .cutcell import facet_barycentric

        local, ok = active.local_index(dm.parent)
        lam = facet_barycentric(active, dm, dm.vertices, local)
        vals = np.einsum("fvi,fi->fv", lam, np.asarray(u)[active.dofs[local]])
        vals[~ok] = np.nan
        pdata = {"u_h": vals.reshape(-1)}
    ctype = VTK_TRIANGLE if nv == 3 else VTK_LINE
    write_unstructured_grid(path, pts, cells, ctype, "discrete manifold", pdata, {"parent_tet": dm.parent.astype(float)})
