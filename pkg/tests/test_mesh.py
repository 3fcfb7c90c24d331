import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cutfem import cutcell, geometry as geo, mesh
from cutfem.errors import EmptyActiveMesh, GeometryError, NonCubicBox
from cutfem.vtk import write_active_mesh

from oracles import face_census, simplex_measure


def test_box_validation():
    with pytest.raises(NonCubicBox):
        mesh.BoxSpec((0, 0, 0), (1, 1, 2), 4)
    with pytest.raises(ValueError):
        mesh.BoxSpec((0, 0, 0), (1, 1, 1), 0)
    with pytest.raises(ValueError):
        mesh.BoxSpec((1, 0, 0), (0, 1, 1), 2)
    assert mesh.BoxSpec.cube(1.1, 10).h == pytest.approx(0.22)


@pytest.mark.parametrize("n,tets,verts", [(1, 6, 8), (10, 6000, 1331)])
def test_background_counts(n, tets, verts):
    bg = mesh.build_background(mesh.BoxSpec.cube(1.0, n))
    assert bg.tets.shape == (tets, 4)
    assert len(bg.vertices) == verts


@pytest.mark.parametrize("n", [1, 2, 3])
def test_background_orientation_and_volume(n):
    bg = mesh.build_background(mesh.BoxSpec((0.0, -1, 2), (1.5, 0.5, 3.5), n))
    _, vol = mesh.tet_geometry(bg.vertex_coords(bg.tets))
    assert np.all(vol > 0)
    assert vol.sum() == pytest.approx(1.5**3, rel=1e-10)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_face_conformity_census(n):
    bg = mesh.build_background(mesh.BoxSpec.cube(1.0, n))
    census = face_census(bg.tets)
    coords = bg.vertices
    for face, count in census.items():
        c = coords[list(face)]
        on_boundary = any(np.allclose(c[:, a], s) for a in range(3) for s in (-1.0, 1.0))
        assert count == (1 if on_boundary else 2)


@given(st.lists(st.floats(-0.999, 0.999), min_size=3, max_size=3))
def test_locate_contains_point(x):
    bg = mesh.build_background(mesh.BoxSpec.cube(1.0, 3))
    x = np.array([x])
    t = bg.locate(x)
    lam = mesh.barycentric(bg.vertex_coords(bg.tet_vertices(t)), x[:, None, :])
    assert np.all(lam > -1e-12)


def test_extract_active_empty():
    bg = mesh.build_background(mesh.BoxSpec.cube(1.6, 4))
    dm = cutcell.DiscreteManifold(1, np.zeros((0, 3, 3)), np.zeros(0, dtype=int), bg.h)
    with pytest.raises(EmptyActiveMesh):
        mesh.extract_active(bg, dm)


def test_manifold_outside_box():
    bg = mesh.build_background(mesh.BoxSpec.cube(1.6, 4))
    m = geo.ManifoldSpec.sphere(radius=0.2, offset=(5.0, 0, 0))
    with pytest.raises(GeometryError):
        cutcell.marching_tets(bg, m)


def _sphere_active(n=8):
    bg = mesh.build_background(mesh.BoxSpec.cube(1.6, n))
    m = geo.ManifoldSpec.sphere()
    dm = cutcell.marching_tets(bg, m)
    return bg, m, dm, mesh.extract_active(bg, dm)


def test_active_count_sign_census():
    bg, m, dm, am = _sphere_active(8)
    levels = cutcell.snap_levels(geo.level_set_value(m, bg.vertices))
    neg = levels[bg.tets] < 0
    mixed = np.flatnonzero(neg.any(axis=1) & ~neg.all(axis=1))
    assert np.array_equal(am.tet_ids, mixed)


def test_dof_map_bijection():
    _, _, _, am = _sphere_active(8)
    dm = am.dof_map
    assert sorted(dm.values()) == list(range(am.n_dof))
    assert set(dm) == set(am.tets.ravel().tolist())
    assert np.array_equal(am.dof_vertices[am.dofs], am.tets)


def test_active_neighbors():
    _, _, _, am = _sphere_active(8)
    assert len(mesh.isolated_tets(am)) == 0


def test_interior_faces_pair_census():
    _, _, _, am = _sphere_active(8)
    census = face_census(am.tets)
    shared = {f for f, c in census.items() if c == 2}
    got = {tuple(sorted(int(v) for v in f)) for f in am.faces.vertices}
    assert got == shared


def test_face_normals_and_orientation():
    bg, _, _, am = _sphere_active(8)
    f = am.faces
    assert np.max(np.abs(np.linalg.norm(f.normal, axis=1) - 1.0)) < 1e-14
    p = bg.vertex_coords(f.vertices)
    for e in (p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]):
        assert np.max(np.abs(np.einsum("ij,ij->i", e, f.normal))) < 1e-14
    d = am.coords[f.minus].mean(axis=1) - am.coords[f.plus].mean(axis=1)
    assert np.all(np.einsum("ij,ij->i", d, f.normal) > 0)
    areas = np.array([simplex_measure(q) for q in p])
    np.testing.assert_allclose(f.area, areas, rtol=1e-14)


def test_single_and_pair_faces():
    bg = mesh.build_background(mesh.BoxSpec.cube(1.0, 1))
    assert len(mesh.active_from_tets(bg, [0]).faces) == 0
    # find two face-adjacent tets of the cube
    for i in range(6):
        for j in range(i + 1, 6):
            if len(set(bg.tets[i]) & set(bg.tets[j])) == 3:
                am = mesh.active_from_tets(bg, [i, j])
                assert len(am.faces) == 1
                p = bg.vertex_coords(am.faces.vertices[0])
                assert am.faces.area[0] == pytest.approx(0.5 * np.linalg.norm(np.cross(p[1] - p[0], p[2] - p[0])))
                return
    pytest.fail("no adjacent pair in one cube")


def test_active_mesh_vtk(tmp_path):
    _, _, _, am = _sphere_active(4)
    path = tmp_path / "active.vtk"
    write_active_mesh(path, am, np.arange(am.n_dof, dtype=float))
    text = path.read_text()
    assert "DATASET UNSTRUCTURED_GRID" in text and text.startswith("# vtk DataFile Version")
    types = text.split("CELL_TYPES")[1].split()[1 : 1 + len(am.tet_ids)]
    assert set(types) == {"10"}
    assert f"POINTS {am.n_dof} double" in text
