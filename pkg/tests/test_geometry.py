import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cutfem import geometry as geo
from cutfem.errors import AxisSingularity, GeometryError, MedialAxis

from oracles import curve_distance_scan, curve_laplace_beltrami_fd, torus_laplace_beltrami_fd

TORUS = geo.ManifoldSpec.torus()
SPHERE = geo.ManifoldSpec.sphere()
LINE = geo.ManifoldSpec.torus_line()

angles = st.floats(0.0, 2 * np.pi, allow_nan=False)
small = st.floats(-0.3, 0.3, allow_nan=False)


def test_spec_validation():
    with pytest.raises(GeometryError):
        geo.ManifoldSpec.torus(R=0.5, r=1.0)
    with pytest.raises(GeometryError):
        geo.ManifoldSpec.torus_line(N=0)
    with pytest.raises(GeometryError):
        geo.ManifoldSpec("cube")
    assert TORUS.codim == 1 and LINE.codim == 2 and LINE.dim == 1


def test_level_set_values():
    v, _ = geo.level_set_eval(TORUS, np.array([1.5, 0.0, 0.0]))
    assert v == pytest.approx(0.0, abs=1e-15)
    v, _ = geo.level_set_eval(TORUS, np.array([0.0, 1.0, 0.0]))
    assert v == pytest.approx(-0.25)
    v, g = geo.level_set_eval(SPHERE, np.array([2.0, 0.0, 0.0]))
    assert v == pytest.approx(3.0)
    np.testing.assert_allclose(g, [4.0, 0.0, 0.0])


def test_level_set_axis_singularity():
    with pytest.raises(AxisSingularity):
        geo.level_set_eval(TORUS, np.array([0.0, 0.0, 0.3]))


def test_level_set_offset():
    m = SPHERE.translated((0.1, 0.2, 0.3))
    v, _ = geo.level_set_eval(m, np.array([1.1, 0.2, 0.3]))
    assert v == pytest.approx(0.0, abs=1e-15)


def test_closest_point_torus_examples():
    cp = geo.closest_point(TORUS, np.array([[2.0, 0, 0], [1.0, 0, 1.0]]))
    np.testing.assert_allclose(cp.point, [[1.5, 0, 0], [1.0, 0, 0.5]], atol=1e-15)
    np.testing.assert_allclose(cp.rho, [0.5, 0.5])


def test_closest_point_degenerate_center():
    with pytest.raises((MedialAxis, AxisSingularity)):
        geo.closest_point(TORUS, np.zeros((1, 3)))
    with pytest.raises(MedialAxis):
        geo.closest_point(TORUS, np.array([[1.0, 0.0, 0.0]]))
    with pytest.raises(MedialAxis):
        geo.closest_point(SPHERE, np.zeros((1, 3)))


def test_closest_point_curve_dense_scan_example():
    x = np.array([1.6, 0.0, 0.0])
    rho, _ = curve_distance_scan(LINE, x, samples=1_000_000)
    cp = geo.closest_point(LINE, x[None])
    assert abs(cp.rho[0] - rho) < 1e-8


def test_closest_point_curve_medial_axis():
    # the centre of the torus is equidistant from all windings
    with pytest.raises(MedialAxis):
        geo.closest_point(LINE, np.zeros((1, 3)))


def _torus_tube_points(rng, n, eps=0.3):
    phi, theta = rng.uniform(0, 2 * np.pi, (2, n))
    nrm = np.stack([np.cos(phi) * np.cos(theta), np.sin(phi) * np.cos(theta), np.sin(theta)], axis=-1)
    return geo.torus_point(TORUS, phi, theta) + rng.uniform(-eps, eps, n)[:, None] * nrm


@given(phi=angles, theta=angles, s=small)
def test_closest_point_torus_properties(phi, theta, s):
    p = geo.torus_point(TORUS, np.array([phi]), np.array([theta]))
    nrm = np.array([[np.cos(phi) * np.cos(theta), np.sin(phi) * np.cos(theta), np.sin(theta)]])
    x = p + s * nrm
    cp = geo.closest_point(TORUS, x)
    assert abs(np.linalg.norm(cp.point - x) - cp.rho[0]) < 1e-12
    assert abs(geo.level_set_value(TORUS, cp.point)[0]) < 1e-10
    np.testing.assert_allclose(cp.point, p, atol=1e-12)
    assert geo.closest_point(TORUS, cp.point).rho[0] < 1e-10


@given(x=st.tuples(*[st.floats(-2, 2, allow_nan=False)] * 3))
def test_closest_point_sphere_properties(x):
    x = np.array([x])
    if np.linalg.norm(x) < 1e-3:
        return
    cp = geo.closest_point(SPHERE, x)
    assert abs(np.linalg.norm(cp.point - x) - cp.rho[0]) < 1e-12
    assert abs(np.linalg.norm(cp.point) - 1.0) < 1e-12
    assert geo.closest_point(SPHERE, cp.point).rho[0] < 1e-10


def test_curve_closest_point_matches_scan_oracle(rng):
    """1000 random points in the tube of radius 0.1 around the torus line."""
    t = rng.uniform(0, 2 * np.pi, 1000)
    frames = geo.frames(LINE, geo.closest_point(LINE, geo.curve_point(LINE, t)))
    coef = rng.normal(size=(1000, 2))
    coef *= (rng.uniform(0, 0.1, 1000) / np.linalg.norm(coef, axis=1))[:, None]
    x = geo.curve_point(LINE, t) + np.einsum("kc,kci->ki", coef, frames.normals)
    cp = geo.closest_point(LINE, x)
    ref = np.array([curve_distance_scan(LINE, xi, samples=20_000)[0] for xi in x])
    assert np.max(np.abs(cp.rho - ref)) < 1e-8
    assert np.max(np.abs(np.linalg.norm(cp.point - x, axis=1) - cp.rho)) < 1e-12


def test_curve_retraction(rng):
    x = geo.curve_point(LINE, rng.uniform(0, 2 * np.pi, 50)) + rng.uniform(-0.05, 0.05, (50, 3))
    cp = geo.closest_point(LINE, x)
    assert np.max(geo.closest_point(LINE, cp.point).rho) < 1e-10


def test_frames_sphere_example():
    fr = geo.frames(SPHERE, geo.closest_point(SPHERE, np.array([[1.0, 0, 0]])))
    np.testing.assert_allclose(fr.Q[0], np.diag([1.0, 0, 0]), atol=1e-15)
    np.testing.assert_allclose(fr.P[0], np.diag([0.0, 1, 1]), atol=1e-15)


def test_frames_curve_tangent_at_zero():
    cp = geo.closest_point(LINE, geo.curve_point(LINE, np.array([0.0])))
    fr = geo.frames(LINE, cp)
    t = geo.curve_derivative(LINE, np.array([0.0]))[0]
    t /= np.linalg.norm(t)
    np.testing.assert_allclose(fr.P[0], np.outer(t, t), atol=1e-12)
    np.testing.assert_allclose(fr.Q[0], np.eye(3) - np.outer(t, t), atol=1e-12)


@pytest.mark.parametrize("m", [TORUS, SPHERE, LINE], ids=["torus", "sphere", "curve"])
def test_projector_identities(m, rng):
    if m.codim == 1:
        x = rng.normal(size=(1000, 3))
        x = x / np.linalg.norm(x, axis=1)[:, None] if m is SPHERE else _torus_tube_points(rng, 1000, 0.0)
    else:
        x = geo.curve_point(m, rng.uniform(0, 2 * np.pi, 1000))
    fr = geo.frames(m, geo.closest_point(m, x))
    P, Q, eye = fr.P, fr.Q, np.eye(3)
    assert np.max(np.abs(P + Q - eye)) < 1e-12
    assert np.max(np.abs(P @ P - P)) < 1e-12
    assert np.max(np.abs(Q @ Q - Q)) < 1e-12
    assert np.max(np.abs(P @ Q)) < 1e-12
    assert np.array_equal(P, np.swapaxes(P, 1, 2))
    np.testing.assert_allclose(np.trace(P, axis1=1, axis2=2), m.dim, atol=1e-12)


def test_extend():
    on = np.array([[1.5, 0.0, 0.0], [0.0, 1.0, 0.5]])
    vals = geo.extend(TORUS, lambda cp: cp.point[:, 0] + 2 * cp.point[:, 2], on)
    np.testing.assert_allclose(vals, [1.5, 1.0], atol=1e-15)
    five = geo.extend(TORUS, lambda cp: np.full(len(cp.rho), 5.0), np.array([[1.2, 0.3, 0.1]]))
    assert five[0] == 5.0
    case = geo.manufactured_torus_surface(TORUS)
    assert geo.extend(TORUS, case.u, np.array([[2.0, 0.0, 0.0]]))[0] == pytest.approx(0.0, abs=1e-15)


def _cp_at(m, phi, theta):
    return geo.closest_point(m, geo.torus_point(m, np.atleast_1d(phi), np.atleast_1d(theta)))


def test_torus_case_values():
    case = geo.manufactured_torus_surface(TORUS)
    assert case.u(_cp_at(TORUS, 0.0, 0.0))[0] == pytest.approx(0.0, abs=1e-15)
    assert case.u(_cp_at(TORUS, np.pi / 6, 0.0))[0] == pytest.approx(np.cos(np.pi / 6))
    assert case.reaction


def test_torus_case_rhs_fd_oracle(rng):
    case = geo.manufactured_torus_surface(TORUS)
    phi, theta = rng.uniform(0.1, 2 * np.pi - 0.1, (2, 100))
    u = lambda p, t: np.sin(3 * p) * np.cos(3 * t + p)
    ref = -torus_laplace_beltrami_fd(u, 1.0, 0.5, phi, theta) + u(phi, theta)
    got = case.f(_cp_at(TORUS, phi, theta))
    assert np.max(np.abs(got - ref)) / np.max(np.abs(ref)) < 1e-5


def test_torus_case_gradient_tangent(rng):
    case = geo.manufactured_torus_surface(TORUS)
    cp = geo.closest_point(TORUS, _torus_tube_points(rng, 100))
    g = case.grad_u(cp)
    Q = geo.frames(TORUS, cp).Q
    assert np.max(np.abs(np.einsum("kij,kj->ki", Q, g))) < 1e-10


def test_torus_case_gradient_fd(rng):
    """Directional derivative along the surface agrees with grad_u."""
    case = geo.manufactured_torus_surface(TORUS)
    phi, theta = rng.uniform(0, 2 * np.pi, (2, 20))
    h = 1e-6
    g = case.grad_u(_cp_at(TORUS, phi, theta))
    for dp, dt in ((h, 0.0), (0.0, h)):
        du = (case.u(_cp_at(TORUS, phi + dp, theta + dt)) - case.u(_cp_at(TORUS, phi - dp, theta - dt))) / (2 * h)
        dx = (geo.torus_point(TORUS, phi + dp, theta + dt) - geo.torus_point(TORUS, phi - dp, theta - dt)) / (2 * h)
        np.testing.assert_allclose(np.einsum("ki,ki->k", g, dx), du, atol=1e-6)


def test_torus_line_case_values():
    case = geo.manufactured_torus_line(LINE)
    cp = geo.closest_point(LINE, geo.curve_point(LINE, np.array([0.0, np.pi / 6])))
    np.testing.assert_allclose(case.u(cp), [0.0, 1.0], atol=1e-12)


def test_torus_line_rhs_fd_oracle(rng):
    case = geo.manufactured_torus_line(LINE)
    t = rng.uniform(0, 2 * np.pi, 100)
    ref = -curve_laplace_beltrami_fd(LINE, lambda s: np.sin(3 * s), t) + np.sin(3 * t)
    got = case.f(geo.closest_point(LINE, geo.curve_point(LINE, t)))
    assert np.max(np.abs(got - ref)) / np.max(np.abs(ref)) < 1e-5


def test_torus_line_gradient_tangent(rng):
    case = geo.manufactured_torus_line(LINE)
    t = rng.uniform(0, 2 * np.pi, 100)
    cp = geo.closest_point(LINE, geo.curve_point(LINE, t))
    g = case.grad_u(cp)
    Q = geo.frames(LINE, cp).Q
    assert np.max(np.abs(np.einsum("kij,kj->ki", Q, g))) < 1e-10


def test_curve_length_oracle():
    # fine trapezoid sum of the speed, spectrally accurate for periodic integrands
    t = np.linspace(0, 2 * np.pi, 20001)[:-1]
    length = np.sum(np.linalg.norm(geo.curve_derivative(LINE, t), axis=1)) * 2 * np.pi / len(t)
    assert LINE.measure == pytest.approx(length, rel=1e-12)
    assert TORUS.measure == pytest.approx(2 * np.pi**2)
    assert SPHERE.measure == pytest.approx(4 * np.pi)


def test_constant_case():
    case = geo.manufactured_case("constant", TORUS, 3.0)
    cp = geo.closest_point(TORUS, np.array([[1.5, 0, 0]]))
    assert case.u(cp)[0] == 3.0 and case.f(cp)[0] == 3.0
    assert np.all(case.grad_u(cp) == 0)
    with pytest.raises(ValueError):
        geo.manufactured_case("nope", TORUS)
