import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cutfem import analysis, cutcell, geometry as geo, mesh
from cutfem.errors import NonPositiveError

from oracles import subdivided_facet_rule


def affine_case(c0, g):
    g = np.asarray(g, float)
    u = lambda cp: c0 + np.asarray(cp.point) @ g
    grad = lambda cp: np.broadcast_to(g, np.shape(cp.point)).copy()
    return geo.ManufacturedCase("affine", u, grad, lambda cp: np.zeros(np.shape(cp.rho)))


def quadratic_case():
    u = lambda cp: np.asarray(cp.point)[..., 0] ** 2
    grad = lambda cp: np.stack([2 * np.asarray(cp.point)[..., 0], *[np.zeros(np.shape(cp.rho))] * 2], axis=-1)
    return geo.ManufacturedCase("quadratic", u, grad, lambda cp: np.zeros(np.shape(cp.rho)))


def plane_setup(n=4, z0=0.0537):
    bg = mesh.build_background(mesh.BoxSpec.cube(1.0, n))
    m = geo.ManifoldSpec.plane((0.2, -0.1, 1.0), offset=(0.0, 0.0, z0))
    dm = cutcell.marching_tets(bg, m)
    return m, dm, mesh.extract_active(bg, dm)


def line_setup(n=4):
    bg = mesh.build_background(mesh.BoxSpec.cube(1.0, n))
    m = geo.ManifoldSpec.line((1.0, 0.4, -0.3), offset=(0.05, 0.02, 0.03))
    d = np.asarray(m.axis)
    ends = np.asarray(m.offset) + np.outer([-0.7, 0.7], d)
    dm = cutcell.clip_points(bg, ends, m)
    return m, dm, mesh.extract_active(bg, dm)


@pytest.mark.parametrize("setup", [plane_setup, line_setup])
def test_affine_interpolant_is_exact(setup):
    m, dm, am = setup()
    case = affine_case(0.7, (1.0, -2.0, 0.5))
    u_h = analysis.interpolate(case, am, m)
    rep = analysis.error_norms(u_h, case, dm, am, m)
    assert rep.l2 < 1e-12 and rep.h1_semi < 1e-12
    assert rep.n_dof == am.n_dof and rep.h == am.h


def test_affine_on_snapped_plane():
    # z0 = 0.05 puts grid vertices on the plane; snapping perturbs facets by ~1e-10
    m, dm, am = plane_setup(z0=0.05)
    case = affine_case(0.7, (1.0, -2.0, 0.5))
    rep = analysis.error_norms(analysis.interpolate(case, am, m), case, dm, am, m)
    assert rep.l2 < 1e-12 and rep.h1_semi < 1e-8


def test_zero_discrete_solution_against_refined_oracle():
    m, dm, am = plane_setup()
    case = quadratic_case()
    rep = analysis.error_norms(np.zeros(am.n_dof), case, dm, am, m)
    l2sq = semi_sq = 0.0
    P = dm.projectors
    for k, facet in enumerate(dm.vertices):
        pts, wts = subdivided_facet_rule(facet, 40)
        cp = geo.closest_point(m, pts)
        l2sq += wts @ case.u(cp) ** 2
        g = case.grad_u(cp) @ P[k]
        semi_sq += wts @ np.einsum("qa,qa->q", g, g)
    assert rep.l2 == pytest.approx(np.sqrt(l2sq), rel=1e-6)
    assert rep.h1_semi == pytest.approx(np.sqrt(semi_sq), rel=1e-6)
    assert rep.h1 == pytest.approx(np.hypot(rep.l2, rep.h1_semi), rel=1e-14)


def test_eoc_examples():
    assert analysis.eoc([(0.2, 0.4), (0.1, 0.1)]) == pytest.approx([2.0])
    assert analysis.eoc([(0.2, 0.433), (0.1, 0.118)])[0] == pytest.approx(1.875, abs=1e-3)
    assert analysis.eoc([(0.2, 1.0), (0.1, 1.0), (0.05, 1.0)]) == pytest.approx([0.0, 0.0])
    # non-dyadic refinement uses the actual h ratio
    assert analysis.eoc([(0.3, 9.0), (0.1, 1.0)]) == pytest.approx([2.0])
    with pytest.raises(NonPositiveError):
        analysis.eoc([(0.2, 0.1), (0.1, 0.0)])


@given(st.floats(0.1, 3.0), st.floats(1e-6, 1e3), st.integers(2, 6))
def test_eoc_recovers_power_law(p, c, n):
    hs = 0.5 ** np.arange(n)
    rates = analysis.eoc([(h, c * h**p) for h in hs])
    np.testing.assert_allclose(rates, p, rtol=1e-9)


def torus_interpolation_errors(ns, hw=1.65):
    m = geo.ManifoldSpec.torus()
    case = geo.manufactured_case("torus_surface", m)
    out = []
    for n in ns:
        bg = mesh.build_background(mesh.BoxSpec.cube(hw, n))
        dm = cutcell.marching_tets(bg, m)
        am = mesh.extract_active(bg, dm)
        u_h = analysis.interpolate(case, am, m)
        out.append((am, dm, u_h, analysis.error_norms(u_h, case, dm, am, m)))
    return m, case, out


def test_error_report_invariants_and_interpolant_rates():
    m, case, runs = torus_interpolation_errors([15, 30, 60])
    reps = [r for *_, r in runs]
    for r in reps:
        assert 0 <= r.l2 <= r.h1 and r.h1_semi <= r.h1
    l2 = analysis.eoc([(r.h, r.l2) for r in reps])
    h1 = analysis.eoc([(r.h, r.h1) for r in reps])
    assert l2[-1] >= 1.8
    assert 0.8 <= h1[-1] <= 1.3


def test_quadrature_elevation_is_stable():
    m, case, runs = torus_interpolation_errors([15])
    am, dm, u_h, rep4 = runs[0]
    rep8 = analysis.error_norms(u_h, case, dm, am, m, degree=8)
    assert rep8.l2 == pytest.approx(rep4.l2, rel=1e-3)
    assert rep8.h1_semi == pytest.approx(rep4.h1_semi, rel=1e-3)
