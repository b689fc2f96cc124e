"""Analytic surfaces, curves, and UV trimming for synthetic BRep solids.

Everything is exact closed-form geometry: no tessellation and no CAD
kernel. Surfaces evaluate points and outward normals over a rectangular
UV domain, invert on-surface points back to UV, expose analytic partial
derivatives (for first-fundamental-form quadrature), and compute exact
axis-aligned bounds. Trimming is defined by closed polylines in UV
space: counter-clockwise loops mark the retained region, clockwise loops
mark holes. A point exactly on a loop counts as retained.

All evaluators broadcast over numpy arrays of parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidGeometryError

Vec3 = np.ndarray


def unit(v: Vec3) -> Vec3:
    n = np.linalg.norm(v)
    if n == 0:
        raise InvalidGeometryError("cannot normalize a zero vector")
    return v / n


def _normalize_rows(a: np.ndarray) -> np.ndarray:
    return a / np.linalg.norm(a, axis=-1, keepdims=True)


def gauss_legendre_2d(n: int, u0: float, u1: float, v0: float, v1: float):
    """Tensor-product Gauss-Legendre nodes/weights on [u0,u1]x[v0,v1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    uu = 0.5 * (u1 - u0) * (x + 1.0) + u0
    vv = 0.5 * (v1 - v0) * (x + 1.0) + v0
    wu = w * 0.5 * (u1 - u0)
    wv = w * 0.5 * (v1 - v0)
    U, V = np.meshgrid(uu, vv, indexing="ij")
    W = np.outer(wu, wv)
    return U.ravel(), V.ravel(), W.ravel()


def _trig_extrema(phase: float, lo: float, hi: float) -> np.ndarray:
    """Parameter values in [lo,hi] where cos(t - phase) can be extremal."""
    cands = [lo, hi]
    k0 = np.floor((lo - phase) / np.pi)
    t = phase + k0 * np.pi
    while t <= hi + 1e-12:
        if t >= lo - 1e-12:
            cands.append(min(max(t, lo), hi))
        t += np.pi
    return np.array(cands)


# ---------------------------------------------------------------------------
# Surfaces
# ---------------------------------------------------------------------------


class Surface:
    """Base class. `flip` reverses the natural normal so that the stored
    normal is always the solid's outward normal."""

    flip: bool = False

    def point(self, u, v) -> np.ndarray:
        raise NotImplementedError

    def natural_normal(self, u, v) -> np.ndarray:
        raise NotImplementedError

    def normal(self, u, v) -> np.ndarray:
        n = self.natural_normal(u, v)
        return -n if self.flip else n

    def partials(self, u, v):
        raise NotImplementedError

    def uv_of_point(self, p: Vec3, domain) -> tuple:
        raise NotImplementedError

    def bbox(self, domain) -> np.ndarray:
        """Exact AABB of the untrimmed patch over `domain`, rows (min, max)."""
        raise NotImplementedError

    def transformed(self, offset: Vec3, scale: float) -> "Surface":
        """The surface after p -> (p + offset) * scale."""
        raise NotImplementedError

    def uv_scale(self, scale: float) -> tuple:
        """How (u, v) coordinates rescale when the surface is scaled.

        Angular parameters are scale-invariant; length-like parameters
        scale with the geometry.
        """
        raise NotImplementedError


def _wrap_angle(t: float, lo: float, hi: float) -> float:
    """Map an atan2 angle into the periodic domain [lo, hi]."""
    w = lo + (t - lo) % (2.0 * np.pi)
    if w > hi:
        # tolerate round-off just past the seam
        if w - hi < 1e-9:
            return hi
        if (w - 2.0 * np.pi) >= lo - 1e-9:
            return max(w - 2.0 * np.pi, lo)
    return min(max(w, lo), hi) if hi - lo >= 2 * np.pi - 1e-9 else w


@dataclass
class Plane(Surface):
    origin: Vec3
    axis_u: Vec3  # unit
    axis_v: Vec3  # unit, orthogonal to axis_u
    flip: bool = False

    def point(self, u, v):
        u = np.asarray(u, dtype=float)[..., None]
        v = np.asarray(v, dtype=float)[..., None]
        return self.origin + u * self.axis_u + v * self.axis_v

    def natural_normal(self, u, v):
        n = unit(np.cross(self.axis_u, self.axis_v))
        shape = np.broadcast(np.asarray(u), np.asarray(v)).shape
        return np.broadcast_to(n, shape + (3,)).copy()

    def partials(self, u, v):
        shape = np.broadcast(np.asarray(u), np.asarray(v)).shape
        pu = np.broadcast_to(self.axis_u, shape + (3,)).copy()
        pv = np.broadcast_to(self.axis_v, shape + (3,)).copy()
        return pu, pv

    def uv_of_point(self, p, domain):
        d = np.asarray(p, dtype=float) - self.origin
        return float(d @ self.axis_u), float(d @ self.axis_v)

    def bbox(self, domain):
        u0, u1, v0, v1 = domain
        corners = self.point(np.array([u0, u0, u1, u1]), np.array([v0, v1, v0, v1]))
        return np.stack([corners.min(axis=0), corners.max(axis=0)])

    def transformed(self, offset, scale):
        return Plane((self.origin + offset) * scale, self.axis_u, self.axis_v, self.flip)

    def uv_scale(self, scale):
        return scale, scale


@dataclass
class Cylinder(Surface):
    center: Vec3  # point on the axis at v = 0
    axis: Vec3  # unit
    ref: Vec3  # unit, perpendicular to axis; u is measured from it
    radius: float
    flip: bool = False

    @property
    def ydir(self) -> Vec3:
        return np.cross(self.axis, self.ref)

    def _radial(self, u):
        u = np.asarray(u, dtype=float)[..., None]
        return np.cos(u) * self.ref + np.sin(u) * self.ydir

    def point(self, u, v):
        v = np.asarray(v, dtype=float)[..., None]
        return self.center + self.radius * self._radial(u) + v * self.axis

    def natural_normal(self, u, v):
        rad = self._radial(u)
        shape = np.broadcast(np.asarray(u), np.asarray(v)).shape
        return np.broadcast_to(rad, shape + (3,)).copy()

    def partials(self, u, v):
        u = np.asarray(u, dtype=float)[..., None]
        shape = np.broadcast(np.asarray(u)[..., 0], np.asarray(v)).shape
        pu = self.radius * (-np.sin(u) * self.ref + np.cos(u) * self.ydir)
        pu = np.broadcast_to(pu, shape + (3,)).copy()
        pv = np.broadcast_to(self.axis, shape + (3,)).copy()
        return pu, pv

    def uv_of_point(self, p, domain):
        d = np.asarray(p, dtype=float) - self.center
        v = float(d @ self.axis)
        w = d - v * self.axis
        u = float(np.arctan2(w @ self.ydir, w @ self.ref))
        return _wrap_angle(u, domain[0], domain[1]), v

    def bbox(self, domain):
        u0, u1, v0, v1 = domain
        lo, hi = np.full(3, np.inf), np.full(3, -np.inf)
        for k in range(3):
            amp = float(np.hypot(self.ref[k], self.ydir[k]))
            phase = float(np.arctan2(self.ydir[k], self.ref[k]))
            us = _trig_extrema(phase, u0, u1)
            for vv in (v0, v1):
                pts = self.point(us, np.full_like(us, vv))[:, k]
                lo[k] = min(lo[k], pts.min())
                hi[k] = max(hi[k], pts.max())
            del amp
        return np.stack([lo, hi])

    def transformed(self, offset, scale):
        return Cylinder((self.center + offset) * scale, self.axis, self.ref,
                        self.radius * scale, self.flip)

    def uv_scale(self, scale):
        return 1.0, scale


@dataclass
class Cone(Surface):
    """Cone/frustum around `axis`; radius(v) = radius0 + slope * v."""

    center: Vec3
    axis: Vec3
    ref: Vec3
    radius0: float
    slope: float
    flip: bool = False

    @property
    def ydir(self) -> Vec3:
        return np.cross(self.axis, self.ref)

    def _radial(self, u):
        u = np.asarray(u, dtype=float)[..., None]
        return np.cos(u) * self.ref + np.sin(u) * self.ydir

    def point(self, u, v):
        v = np.asarray(v, dtype=float)[..., None]
        r = self.radius0 + self.slope * v
        return self.center + r * self._radial(u) + v * self.axis

    def natural_normal(self, u, v):
        rad = self._radial(u)
        shape = np.broadcast(np.asarray(u), np.asarray(v)).shape
        n = (rad - self.slope * self.axis) / np.sqrt(1.0 + self.slope**2)
        return np.broadcast_to(n, shape + (3,)).copy()

    def partials(self, u, v):
        u_arr = np.asarray(u, dtype=float)[..., None]
        v_arr = np.asarray(v, dtype=float)[..., None]
        r = self.radius0 + self.slope * v_arr
        pu = r * (-np.sin(u_arr) * self.ref + np.cos(u_arr) * self.ydir)
        pv = self.slope * self._radial(u) + self.axis
        shape = np.broadcast(np.asarray(u), np.asarray(v)).shape
        return (np.broadcast_to(pu, shape + (3,)).copy(),
                np.broadcast_to(pv, shape + (3,)).copy())

    def uv_of_point(self, p, domain):
        d = np.asarray(p, dtype=float) - self.center
        v = float(d @ self.axis)
        w = d - v * self.axis
        u = float(np.arctan2(w @ self.ydir, w @ self.ref))
        return _wrap_angle(u, domain[0], domain[1]), v

    def bbox(self, domain):
        u0, u1, v0, v1 = domain
        lo, hi = np.full(3, np.inf), np.full(3, -np.inf)
        for k in range(3):
            phase = float(np.arctan2(self.ydir[k], self.ref[k]))
            us = _trig_extrema(phase, u0, u1)
            for vv in (v0, v1):  # linear in v, extremes at endpoints
                pts = self.point(us, np.full_like(us, vv))[:, k]
                lo[k] = min(lo[k], pts.min())
                hi[k] = max(hi[k], pts.max())
        return np.stack([lo, hi])

    def transformed(self, offset, scale):
        return Cone((self.center + offset) * scale, self.axis, self.ref,
                    self.radius0 * scale, self.slope, self.flip)

    def uv_scale(self, scale):
        return 1.0, scale


@dataclass
class Sphere(Surface):
    """u is longitude from `ref`, v is latitude toward `axis` (v in [-pi/2, pi/2])."""

    center: Vec3
    axis: Vec3
    ref: Vec3
    radius: float
    flip: bool = False

    @property
    def ydir(self) -> Vec3:
        return np.cross(self.axis, self.ref)

    def point(self, u, v):
        u = np.asarray(u, dtype=float)[..., None]
        v = np.asarray(v, dtype=float)[..., None]
        rad = np.cos(u) * self.ref + np.sin(u) * self.ydir
        return self.center + self.radius * (np.cos(v) * rad + np.sin(v) * self.axis)

    def natural_normal(self, u, v):
        return (self.point(u, v) - self.center) / self.radius

    def partials(self, u, v):
        u = np.asarray(u, dtype=float)[..., None]
        v = np.asarray(v, dtype=float)[..., None]
        rad = np.cos(u) * self.ref + np.sin(u) * self.ydir
        tan_u = -np.sin(u) * self.ref + np.cos(u) * self.ydir
        pu = self.radius * np.cos(v) * tan_u
        pv = self.radius * (-np.sin(v) * rad + np.cos(v) * self.axis)
        shape = np.broadcast(np.asarray(u)[..., 0], np.asarray(v)[..., 0]).shape
        return (np.broadcast_to(pu, shape + (3,)).copy(),
                np.broadcast_to(pv, shape + (3,)).copy())

    def uv_of_point(self, p, domain):
        d = (np.asarray(p, dtype=float) - self.center) / self.radius
        sv = float(np.clip(d @ self.axis, -1.0, 1.0))
        v = float(np.arcsin(sv))
        w = d - sv * self.axis
        if np.linalg.norm(w) < 1e-9:  # pole: longitude is arbitrary
            u = 0.5 * (domain[0] + domain[1])
        else:
            u = _wrap_angle(float(np.arctan2(w @ self.ydir, w @ self.ref)),
                            domain[0], domain[1])
        return u, float(np.clip(v, domain[2], domain[3]))

    def bbox(self, domain):
        u0, u1, v0, v1 = domain
        lo, hi = np.full(3, np.inf), np.full(3, -np.inf)
        for k in range(3):
            phase = float(np.arctan2(self.ydir[k], self.ref[k]))
            us = _trig_extrema(phase, u0, u1)
            for uu in us:
                a = float(np.hypot(self.ref[k], self.ydir[k])) * np.cos(uu - phase)
                b = float(self.axis[k])
                vph = float(np.arctan2(b, a))
                vs = _trig_extrema(vph, v0, v1)
                pts = self.point(np.full_like(vs, uu), vs)[:, k]
                lo[k] = min(lo[k], pts.min())
                hi[k] = max(hi[k], pts.max())
        return np.stack([lo, hi])

    def transformed(self, offset, scale):
        return Sphere((self.center + offset) * scale, self.axis, self.ref,
                      self.radius * scale, self.flip)

    def uv_scale(self, scale):
        return 1.0, 1.0


@dataclass
class Torus(Surface):
    """Tube of radius `minor` swept around a circle of radius `major`.

    u is the sweep angle, v the tube angle; v = 0 points radially outward,
    v = pi/2 along `axis`.
    """

    center: Vec3
    axis: Vec3
    ref: Vec3
    major: float
    minor: float
    flip: bool = False

    @property
    def ydir(self) -> Vec3:
        return np.cross(self.axis, self.ref)

    def _radial(self, u):
        u = np.asarray(u, dtype=float)[..., None]
        return np.cos(u) * self.ref + np.sin(u) * self.ydir

    def point(self, u, v):
        v = np.asarray(v, dtype=float)[..., None]
        rad = self._radial(u)
        return (self.center + (self.major + self.minor * np.cos(v)) * rad
                + self.minor * np.sin(v) * self.axis)

    def natural_normal(self, u, v):
        v = np.asarray(v, dtype=float)[..., None]
        rad = self._radial(u)
        n = np.cos(v) * rad + np.sin(v) * np.broadcast_to(self.axis, rad.shape)
        shape = np.broadcast(np.asarray(u), np.asarray(v)[..., 0]).shape
        return np.broadcast_to(n, shape + (3,)).copy()

    def partials(self, u, v):
        u_arr = np.asarray(u, dtype=float)[..., None]
        v_arr = np.asarray(v, dtype=float)[..., None]
        rad = self._radial(u)
        tan_u = -np.sin(u_arr) * self.ref + np.cos(u_arr) * self.ydir
        pu = (self.major + self.minor * np.cos(v_arr)) * tan_u
        pv = self.minor * (-np.sin(v_arr) * rad + np.cos(v_arr) * self.axis)
        shape = np.broadcast(np.asarray(u), np.asarray(v)).shape
        return (np.broadcast_to(pu, shape + (3,)).copy(),
                np.broadcast_to(pv, shape + (3,)).copy())

    def uv_of_point(self, p, domain):
        d = np.asarray(p, dtype=float) - self.center
        z = float(d @ self.axis)
        w = d - z * self.axis
        rho = float(np.linalg.norm(w))
        u = _wrap_angle(float(np.arctan2(w @ self.ydir, w @ self.ref)),
                        domain[0], domain[1])
        v = float(np.arctan2(z / self.minor, (rho - self.major) / self.minor))
        return u, _wrap_angle(v, domain[2], domain[3])

    def bbox(self, domain):
        u0, u1, v0, v1 = domain
        lo, hi = np.full(3, np.inf), np.full(3, -np.inf)
        for k in range(3):
            phase = float(np.arctan2(self.ydir[k], self.ref[k]))
            us = _trig_extrema(phase, u0, u1)
            for uu in us:
                a = (float(np.hypot(self.ref[k], self.ydir[k]))
                     * np.cos(uu - phase) * self.minor)
                b = float(self.axis[k]) * self.minor
                vph = float(np.arctan2(b, a))
                vs = _trig_extrema(vph, v0, v1)
                pts = self.point(np.full_like(vs, uu), vs)[:, k]
                lo[k] = min(lo[k], pts.min())
                hi[k] = max(hi[k], pts.max())
        return np.stack([lo, hi])

    def transformed(self, offset, scale):
        return Torus((self.center + offset) * scale, self.axis, self.ref,
                     self.major * scale, self.minor * scale, self.flip)

    def uv_scale(self, scale):
        return 1.0, 1.0


@dataclass
class BumpPatch(Surface):
    """Quadratic stand-in for a freeform surface.

    A planar rectangle of extents (len_u, len_v) displaced along its plane
    normal by height * 4u(1-u) with u, v in [0, 1]. The displacement
    vanishes on the u = 0/1 boundaries and is constant along v, so the
    v-boundary curves are parabolas and the u-boundaries stay straight.
    """

    origin: Vec3
    axis_u: Vec3
    axis_v: Vec3
    len_u: float
    len_v: float
    height: float
    flip: bool = False

    @property
    def zdir(self) -> Vec3:
        return unit(np.cross(self.axis_u, self.axis_v))

    def _bump(self, u):
        return 4.0 * u * (1.0 - u)

    def point(self, u, v):
        u = np.asarray(u, dtype=float)[..., None]
        v = np.asarray(v, dtype=float)[..., None]
        return (self.origin + u * self.len_u * self.axis_u
                + v * self.len_v * self.axis_v
                + self.height * self._bump(u) * self.zdir)

    def natural_normal(self, u, v):
        pu, pv = self.partials(u, v)
        return _normalize_rows(np.cross(pu, pv))

    def partials(self, u, v):
        u = np.asarray(u, dtype=float)[..., None]
        pu = (self.len_u * self.axis_u
              + self.height * 4.0 * (1.0 - 2.0 * u) * self.zdir)
        shape = np.broadcast(np.asarray(u)[..., 0], np.asarray(v)).shape
        pu = np.broadcast_to(pu, shape + (3,)).copy()
        pv = np.broadcast_to(self.len_v * self.axis_v, shape + (3,)).copy()
        return pu, pv

    def uv_of_point(self, p, domain):
        d = np.asarray(p, dtype=float) - self.origin
        return float(d @ self.axis_u) / self.len_u, float(d @ self.axis_v) / self.len_v

    def bbox(self, domain):
        u0, u1, v0, v1 = domain
        us = [u0, u1]
        zd = self.zdir
        for k in range(3):
            # d/du of P_k is linear; vertex of the parabola may be interior
            if abs(self.height * zd[k]) > 1e-15:
                ustar = 0.5 + self.len_u * self.axis_u[k] / (8.0 * self.height * zd[k])
                if u0 < ustar < u1:
                    us.append(float(ustar))
        us = np.array(sorted(set(us)))
        lo, hi = np.full(3, np.inf), np.full(3, -np.inf)
        for vv in (v0, v1):  # linear in v
            pts = self.point(us, np.full_like(us, vv))
            lo = np.minimum(lo, pts.min(axis=0))
            hi = np.maximum(hi, pts.max(axis=0))
        return np.stack([lo, hi])

    def transformed(self, offset, scale):
        return BumpPatch((self.origin + offset) * scale, self.axis_u, self.axis_v,
                         self.len_u * scale, self.len_v * scale,
                         self.height * scale, self.flip)

    def uv_scale(self, scale):
        return 1.0, 1.0


SURFACE_TYPE_NAMES = ("plane", "cylinder", "cone", "sphere", "torus", "nurbs-proxy")

_SURFACE_TYPE_OF = {
    Plane: "plane",
    Cylinder: "cylinder",
    Cone: "cone",
    Sphere: "sphere",
    Torus: "torus",
    BumpPatch: "nurbs-proxy",
}


def surface_type_name(surface: Surface) -> str:
    return _SURFACE_TYPE_OF[type(surface)]


# ---------------------------------------------------------------------------
# Curves
# ---------------------------------------------------------------------------


class Curve:
    def point(self, t) -> np.ndarray:
        raise NotImplementedError

    def deriv(self, t) -> np.ndarray:
        raise NotImplementedError

    def tangent(self, t) -> np.ndarray:
        return _normalize_rows(self.deriv(t))

    def transformed(self, offset: Vec3, scale: float) -> "Curve":
        raise NotImplementedError


@dataclass
class Line(Curve):
    start: Vec3
    end: Vec3

    def point(self, t):
        t = np.asarray(t, dtype=float)[..., None]
        return self.start + t * (self.end - self.start)

    def deriv(self, t):
        shape = np.asarray(t).shape
        return np.broadcast_to(self.end - self.start, shape + (3,)).copy()

    def transformed(self, offset, scale):
        return Line((self.start + offset) * scale, (self.end + offset) * scale)


@dataclass
class Arc(Curve):
    """Circular arc: center + radius * (cos t * axis_x + sin t * axis_y)."""

    center: Vec3
    axis_x: Vec3
    axis_y: Vec3
    radius: float

    def point(self, t):
        t = np.asarray(t, dtype=float)[..., None]
        return self.center + self.radius * (np.cos(t) * self.axis_x
                                            + np.sin(t) * self.axis_y)

    def deriv(self, t):
        t = np.asarray(t, dtype=float)[..., None]
        return self.radius * (-np.sin(t) * self.axis_x + np.cos(t) * self.axis_y)

    def transformed(self, offset, scale):
        return Arc((self.center + offset) * scale, self.axis_x, self.axis_y,
                   self.radius * scale)


@dataclass
class EllipseArc(Curve):
    center: Vec3
    axis_x: Vec3
    axis_y: Vec3
    radius_x: float
    radius_y: float

    def point(self, t):
        t = np.asarray(t, dtype=float)[..., None]
        return (self.center + self.radius_x * np.cos(t) * self.axis_x
                + self.radius_y * np.sin(t) * self.axis_y)

    def deriv(self, t):
        t = np.asarray(t, dtype=float)[..., None]
        return (-self.radius_x * np.sin(t) * self.axis_x
                + self.radius_y * np.cos(t) * self.axis_y)

    def transformed(self, offset, scale):
        return EllipseArc((self.center + offset) * scale, self.axis_x, self.axis_y,
                          self.radius_x * scale, self.radius_y * scale)


@dataclass
class QuadraticBezier(Curve):
    p0: Vec3
    p1: Vec3
    p2: Vec3

    def point(self, t):
        t = np.asarray(t, dtype=float)[..., None]
        return ((1 - t) ** 2 * self.p0 + 2 * t * (1 - t) * self.p1
                + t**2 * self.p2)

    def deriv(self, t):
        t = np.asarray(t, dtype=float)[..., None]
        return 2 * ((1 - t) * (self.p1 - self.p0) + t * (self.p2 - self.p1))

    def transformed(self, offset, scale):
        return QuadraticBezier((self.p0 + offset) * scale, (self.p1 + offset) * scale,
                               (self.p2 + offset) * scale)


CURVE_TYPE_NAMES = ("line", "circle", "ellipse", "bspline-proxy", "other")

_CURVE_TYPE_OF = {
    Line: "line",
    Arc: "circle",
    EllipseArc: "ellipse",
    QuadraticBezier: "bspline-proxy",
}


def curve_type_name(curve: Curve) -> str:
    return _CURVE_TYPE_OF.get(type(curve), "other")


def curve_length(curve: Curve, t0: float, t1: float, n: int = 32) -> float:
    """Arc length of curve over [t0, t1] by Gauss-Legendre quadrature."""
    x, w = np.polynomial.legendre.leggauss(n)
    t = 0.5 * (t1 - t0) * (x + 1.0) + t0
    speed = np.linalg.norm(curve.deriv(t), axis=-1)
    return float(np.sum(w * speed) * 0.5 * (t1 - t0))


# ---------------------------------------------------------------------------
# UV polygons and trimming
# ---------------------------------------------------------------------------


def polygon_signed_area(loop: np.ndarray) -> float:
    x, y = loop[:, 0], loop[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    return float(0.5 * np.sum(x * yn - xn * y))


def polygon_centroid(loop: np.ndarray) -> np.ndarray:
    """Signed-area-weighted centroid contribution (times the signed area)."""
    x, y = loop[:, 0], loop[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    cx = np.sum((x + xn) * cross) / 6.0
    cy = np.sum((y + yn) * cross) / 6.0
    return np.array([cx, cy])


def points_in_polygon(loop: np.ndarray, pts: np.ndarray, eps: float = 1e-9):
    """Vectorized even-odd containment test.

    Returns (inside, on_boundary) boolean arrays; `inside` is the strict
    crossing-number result and is unreliable exactly on the boundary, which
    is why `on_boundary` is reported separately.
    """
    pts = np.asarray(pts, dtype=float)
    x = pts[:, 0:1]
    y = pts[:, 1:2]
    x1 = loop[:, 0][None, :]
    y1 = loop[:, 1][None, :]
    x2 = np.roll(loop[:, 0], -1)[None, :]
    y2 = np.roll(loop[:, 1], -1)[None, :]
    dx, dy = x2 - x1, y2 - y1
    seg2 = dx * dx + dy * dy
    tproj = np.clip(((x - x1) * dx + (y - y1) * dy) / np.where(seg2 == 0, 1.0, seg2),
                    0.0, 1.0)
    px, py = x1 + tproj * dx, y1 + tproj * dy
    on = (((x - px) ** 2 + (y - py) ** 2) <= eps * eps).any(axis=1)
    straddle = (y1 <= y) != (y2 <= y)
    xint = x1 + (y - y1) * dx / np.where(dy == 0, 1.0, dy)
    crossings = (straddle & (x < xint)).sum(axis=1)
    return (crossings % 2 == 1), on


# ---------------------------------------------------------------------------
# Patches (surface + domain + trims)
# ---------------------------------------------------------------------------


@dataclass
class SurfacePatch:
    """A trimmed parametric face.

    trim_loops are closed polylines in UV space (the closing segment from
    the last vertex back to the first is implicit). Counter-clockwise
    loops bound the retained region; clockwise loops are holes. Without
    loops the whole rectangular domain is retained.
    """

    surface: Surface
    uv_domain: tuple  # (u0, u1, v0, v1)
    trim_loops: list = field(default_factory=list)

    @property
    def surface_type(self) -> str:
        return surface_type_name(self.surface)

    def uv_grid(self, n: int):
        u0, u1, v0, v1 = self.uv_domain
        u = np.linspace(u0, u1, n)
        v = np.linspace(v0, v1, n)
        return np.meshgrid(u, v, indexing="ij")

    def retained(self, uv_pts: np.ndarray) -> np.ndarray:
        """Trimming indicator for an (n, 2) array of UV points."""
        uv_pts = np.asarray(uv_pts, dtype=float)
        u0, u1, v0, v1 = self.uv_domain
        scale = max(u1 - u0, v1 - v0, 1e-12)
        keep = np.ones(len(uv_pts), dtype=bool)
        for loop in self.trim_loops:
            inside, on = points_in_polygon(loop, uv_pts, eps=1e-9 * scale)
            if polygon_signed_area(loop) >= 0.0:
                keep &= inside | on  # retained region lies inside CCW loops
            else:
                keep &= ~inside | on  # holes exclude their strict interior
        return keep

    def transformed(self, offset: Vec3, scale: float) -> "SurfacePatch":
        su, sv = self.surface.uv_scale(scale)
        u0, u1, v0, v1 = self.uv_domain
        loops = [l * np.array([su, sv]) for l in self.trim_loops]
        return SurfacePatch(self.surface.transformed(offset, scale),
                            (u0 * su, u1 * su, v0 * sv, v1 * sv), loops)


@dataclass
class CurveSegment:
    """A BRep edge: a bounded curve plus its two incident face indices."""

    curve: Curve
    t_domain: tuple  # (t0, t1)
    faces: tuple  # (face_i, face_j)

    @property
    def curve_type(self) -> str:
        return curve_type_name(self.curve)

    def sample_params(self, n: int) -> np.ndarray:
        return np.linspace(self.t_domain[0], self.t_domain[1], n)

    def length(self) -> float:
        return curve_length(self.curve, *self.t_domain)

    def transformed(self, offset: Vec3, scale: float) -> "CurveSegment":
        return CurveSegment(self.curve.transformed(offset, scale),
                            self.t_domain, self.faces)


def circle_loop(center_uv, radius: float, n: int = 64, ccw: bool = True) -> np.ndarray:
    """Closed polyline approximating a circle in UV space."""
    t = np.linspace(0.0, 2.0 * np.pi, n, endpoint=False)
    if not ccw:
        t = -t
    return np.stack([center_uv[0] + radius * np.cos(t),
                     center_uv[1] + radius * np.sin(t)], axis=1)


def face_bbox(patch: SurfacePatch) -> np.ndarray:
    """AABB enclosing the retained region of a patch, rows (min, max).

    Planes use trim-polygon vertices exactly (holes cannot extend the
    box); curved patches use the analytic untrimmed bounds.
    """
    if isinstance(patch.surface, Plane):
        u0, u1, v0, v1 = patch.uv_domain
        ccw = [l for l in patch.trim_loops if polygon_signed_area(l) >= 0.0]
        if ccw:
            uv = np.concatenate(ccw, axis=0)
        else:
            uv = np.array([[u0, v0], [u0, v1], [u1, v0], [u1, v1]])
        pts = patch.surface.point(uv[:, 0], uv[:, 1])
        return np.stack([pts.min(axis=0), pts.max(axis=0)])
    return patch.surface.bbox(patch.uv_domain)


def face_area_centroid(patch: SurfacePatch, quad_n: int = 32):
    """Area and area-weighted centroid of the retained region.

    Planar faces are computed exactly from the trim polygons; curved
    untrimmed faces use Gauss-Legendre quadrature of the first fundamental
    form; curved trimmed faces fall back to a dense masked quadrature.
    """
    u0, u1, v0, v1 = patch.uv_domain
    surf = patch.surface
    if isinstance(surf, Plane):
        area_uv = 0.0
        moment_uv = np.zeros(2)
        has_ccw = False
        for loop in patch.trim_loops:
            a = polygon_signed_area(loop)
            if a >= 0.0:
                has_ccw = True
            area_uv += a
            moment_uv += polygon_centroid(loop)
        if not has_ccw:
            rect = (u1 - u0) * (v1 - v0)
            area_uv += rect
            moment_uv += rect * np.array([0.5 * (u0 + u1), 0.5 * (v0 + v1)])
        if area_uv <= 0.0:
            raise InvalidGeometryError("face has zero trimmed area")
        c_uv = moment_uv / area_uv
        centroid = surf.point(c_uv[0], c_uv[1])
        return float(area_uv), np.asarray(centroid, dtype=float)
    n = quad_n if not patch.trim_loops else max(quad_n, 96)
    uu, vv, ww = gauss_legendre_2d(n, u0, u1, v0, v1)
    pu, pv = surf.partials(uu, vv)
    jac = np.linalg.norm(np.cross(pu, pv), axis=-1)
    if patch.trim_loops:
        mask = patch.retained(np.stack([uu, vv], axis=1))
        ww = ww * mask
    area = float(np.sum(ww * jac))
    if area <= 0.0:
        raise InvalidGeometryError("face has zero trimmed area")
    pts = surf.point(uu, vv)
    centroid = (ww * jac) @ pts / area
    return area, centroid
