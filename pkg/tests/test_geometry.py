import numpy as np
import pytest

from brepae.geometry import (
    Arc,
    BumpPatch,
    Cone,
    Cylinder,
    Line,
    Plane,
    QuadraticBezier,
    Sphere,
    SurfacePatch,
    Torus,
    circle_loop,
    curve_length,
    face_area_centroid,
    face_bbox,
    points_in_polygon,
    polygon_signed_area,
)

X = np.array([1.0, 0.0, 0.0])
Y = np.array([0.0, 1.0, 0.0])
Z = np.array([0.0, 0.0, 1.0])

RNG = np.random.default_rng(1234)


def _surfaces():
    return [
        (Plane(np.array([1.0, -2.0, 0.5]), X, Y), (0.0, 2.0, 0.0, 1.5)),
        (Cylinder(np.array([0.3, 0.1, -0.2]), Z, X, 0.7), (0.2, 2.8, 0.0, 1.3)),
        (Cone(np.array([0.0, 0.0, 0.0]), Z, X, 1.0, -0.4), (0.1, 3.0, 0.0, 1.2)),
        (Sphere(np.array([0.5, 0.5, 0.5]), Z, X, 0.9), (0.0, np.pi, -0.8, 1.1)),
        (Torus(np.array([0.0, 1.0, 0.0]), Z, X, 1.5, 0.4), (0.3, 4.0, 0.5, 3.5)),
        (BumpPatch(np.array([0.0, 0.0, 1.0]), X, Y, 2.0, 1.0, -0.3), (0.0, 1.0, 0.0, 1.0)),
    ]


@pytest.mark.parametrize("idx", range(6))
def test_partials_match_finite_differences(idx):
    surf, dom = _surfaces()[idx]
    u0, u1, v0, v1 = dom
    h = 1e-6
    u = RNG.uniform(u0 + 0.01, u1 - 0.01, 20)
    v = RNG.uniform(v0 + 0.01, v1 - 0.01, 20)
    pu, pv = surf.partials(u, v)
    fd_u = (surf.point(u + h, v) - surf.point(u - h, v)) / (2 * h)
    fd_v = (surf.point(u, v + h) - surf.point(u, v - h)) / (2 * h)
    assert np.allclose(pu, fd_u, atol=1e-6)
    assert np.allclose(pv, fd_v, atol=1e-6)


@pytest.mark.parametrize("idx", range(6))
def test_normals_are_unit_and_perpendicular(idx):
    surf, dom = _surfaces()[idx]
    u = RNG.uniform(dom[0], dom[1], 50)
    v = RNG.uniform(dom[2], dom[3], 50)
    n = surf.normal(u, v)
    pu, pv = surf.partials(u, v)
    assert np.allclose(np.linalg.norm(n, axis=-1), 1.0, atol=1e-12)
    assert np.allclose(np.einsum("ij,ij->i", n, pu), 0.0, atol=1e-9)
    assert np.allclose(np.einsum("ij,ij->i", n, pv), 0.0, atol=1e-9)


@pytest.mark.parametrize("idx", range(6))
def test_uv_inversion_roundtrip(idx):
    surf, dom = _surfaces()[idx]
    u = RNG.uniform(dom[0], dom[1], 30)
    v = RNG.uniform(dom[2], dom[3], 30)
    pts = surf.point(u, v)
    for k in range(len(u)):
        uu, vv = surf.uv_of_point(pts[k], dom)
        q = surf.point(uu, vv)
        assert np.linalg.norm(q - pts[k]) < 1e-9


@pytest.mark.parametrize("idx", range(6))
def test_bbox_encloses_and_is_tight(idx):
    surf, dom = _surfaces()[idx]
    box = surf.bbox(dom)
    uu = np.linspace(dom[0], dom[1], 201)
    vv = np.linspace(dom[2], dom[3], 201)
    U, V = np.meshgrid(uu, vv, indexing="ij")
    pts = surf.point(U.ravel(), V.ravel())
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    assert np.all(box[0] <= lo + 1e-9)
    assert np.all(box[1] >= hi - 1e-9)
    # dense sampling approaches the analytic bounds
    assert np.all(box[0] >= lo - 1e-3)
    assert np.all(box[1] <= hi + 1e-3)


@pytest.mark.parametrize("idx", range(6))
def test_transformed_surface_matches_transformed_points(idx):
    surf, dom = _surfaces()[idx]
    offset = np.array([0.3, -1.2, 2.0])
    scale = 1.7
    patch = SurfacePatch(surf, dom)
    moved = patch.transformed(offset, scale)
    u = RNG.uniform(dom[0], dom[1], 10)
    v = RNG.uniform(dom[2], dom[3], 10)
    su, sv = surf.uv_scale(scale)
    expect = (surf.point(u, v) + offset) * scale
    got = moved.surface.point(u * su, v * sv)
    assert np.allclose(got, expect, atol=1e-12)
    # normals invariant under translation + uniform scaling
    assert np.allclose(moved.surface.normal(u * su, v * sv), surf.normal(u, v),
                       atol=1e-12)


def test_curve_evaluators():
    line = Line(np.zeros(3), np.array([3.0, 4.0, 0.0]))
    t = np.linspace(0, 1, 13)
    tan = line.tangent(t)
    assert np.allclose(tan, np.array([0.6, 0.8, 0.0]))
    assert np.isclose(curve_length(line, 0, 1), 5.0)

    arc = Arc(np.zeros(3), X, Y, 1.0)
    tt = np.array([0.0, 0.7, 2.0])
    assert np.allclose(arc.tangent(tt),
                       np.stack([-np.sin(tt), np.cos(tt), np.zeros(3)], axis=1),
                       atol=1e-12)
    assert np.isclose(curve_length(arc, 0.2, 1.9), 1.7)

    bez = QuadraticBezier(np.zeros(3), np.array([1.0, 2.0, 0.0]),
                          np.array([2.0, 0.0, 0.0]))
    assert np.allclose(bez.point(0.0), np.zeros(3))
    assert np.allclose(bez.point(1.0), np.array([2.0, 0.0, 0.0]))
    h = 1e-6
    fd = (bez.point(0.4 + h) - bez.point(0.4 - h)) / (2 * h)
    assert np.allclose(bez.deriv(0.4), fd, atol=1e-6)


def test_polygon_area_and_containment():
    square = np.array([[0.0, 0.0], [2.0, 0.0], [2.0, 2.0], [0.0, 2.0]])
    assert np.isclose(polygon_signed_area(square), 4.0)
    assert np.isclose(polygon_signed_area(square[::-1]), -4.0)

    pts = np.array([[1.0, 1.0], [3.0, 1.0], [2.0, 0.0], [0.0, 0.0]])
    inside, on = points_in_polygon(square, pts)
    assert on.tolist() == [False, False, True, True]
    # off-boundary points get a definite verdict; boundary points rely on `on`
    assert inside.tolist()[:2] == [True, False]


def test_retained_with_hole_and_outer_loop():
    plane = Plane(np.zeros(3), X, Y)
    hole = circle_loop((0.5, 0.5), 0.2, ccw=False)
    patch = SurfacePatch(plane, (0.0, 1.0, 0.0, 1.0), [hole])
    uv = np.array([[0.05, 0.05], [0.5, 0.5], [0.5, 0.72]])
    keep = patch.retained(uv)
    assert keep.tolist() == [True, False, True]

    disc = SurfacePatch(plane, (0.0, 1.0, 0.0, 1.0),
                        [circle_loop((0.5, 0.5), 0.4, ccw=True)])
    keep = disc.retained(np.array([[0.5, 0.5], [0.95, 0.95]]))
    assert keep.tolist() == [True, False]


def test_plane_area_exact_with_hole():
    plane = Plane(np.zeros(3), X, Y)
    hole = circle_loop((1.0, 0.75), 0.25, ccw=False, n=256)
    patch = SurfacePatch(plane, (0.0, 2.0, 0.0, 1.5), [hole])
    area, centroid = face_area_centroid(patch)
    # retained region is the rectangle minus the polygonal hole
    expect = 3.0 - abs(polygon_signed_area(hole))
    assert np.isclose(area, expect, atol=1e-12)
    # hole is centered, so the centroid stays at the rectangle center
    assert np.allclose(centroid, [1.0, 0.75, 0.0], atol=1e-9)


def test_curved_area_quadrature_matches_closed_forms():
    cyl = SurfacePatch(Cylinder(np.zeros(3), Z, X, 1.0), (0.0, 2 * np.pi, 0.0, 2.0))
    area, centroid = face_area_centroid(cyl)
    assert np.isclose(area, 4 * np.pi, rtol=1e-10)
    assert np.allclose(centroid, [0.0, 0.0, 1.0], atol=1e-9)

    hemi = SurfacePatch(Sphere(np.zeros(3), Z, X, 1.0), (0.0, 2 * np.pi, 0.0, np.pi / 2))
    area, _ = face_area_centroid(hemi)
    assert np.isclose(area, 2 * np.pi, rtol=1e-10)


def test_face_bbox_plane_uses_trim_polygon():
    plane = Plane(np.zeros(3), X, Y)
    disc = SurfacePatch(plane, (0.0, 2.0, 0.0, 2.0),
                        [circle_loop((1.0, 1.0), 0.5, ccw=True)])
    box = face_bbox(disc)
    assert np.allclose(box[0], [0.5, 0.5, 0.0], atol=1e-12)
    assert np.allclose(box[1], [1.5, 1.5, 0.0], atol=1e-12)
