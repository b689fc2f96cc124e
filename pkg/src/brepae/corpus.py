"""Synthetic labeled BRep solids built from parametric primitives.

Six templates cover four shape classes and five per-face labels, so both
shape classification and per-face segmentation are exercised without any
external dataset or CAD kernel. Every model is a pure function of
(template_id, seed): identical inputs reproduce bit-identical solids.

Template structure (face / edge counts vary with seeded dimensions):
  box        block, 6 planar faces, all faces labeled stock
  box_hole   block with a circular through-hole (two half-cylinder walls)
  box_slot   block with a full-width rectangular slot; half the seeds get
             a scooped (quadratic) slot floor with parabolic rim edges
  box_step   block with a step cut along one edge (L-shaped side faces)
  l_bracket  thin L-profile; side faces split into coplanar rectangles
             meeting at a smooth seam
  cyl_boss   plate with a cylindrical boss; seed picks the cap (flat disc,
             hemisphere, or cone frustum) and an optional torus base fillet
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, InvalidGeometryError
from .geometry import (
    Arc,
    BumpPatch,
    Cone,
    CurveSegment,
    Cylinder,
    Line,
    Plane,
    QuadraticBezier,
    Sphere,
    SurfacePatch,
    Torus,
    circle_loop,
    face_bbox,
    unit,
)

X = np.array([1.0, 0.0, 0.0])
Y = np.array([0.0, 1.0, 0.0])
Z = np.array([0.0, 0.0, 1.0])

FACE_LABEL_NAMES = ("stock", "hole", "slot", "step", "boss")
STOCK, HOLE, SLOT, STEP, BOSS = range(5)

SHAPE_CLASS_NAMES = ("block", "pierced_block", "bracket", "bossed_block")
TEMPLATE_NAMES = ("box", "box_hole", "box_slot", "box_step", "l_bracket", "cyl_boss")
TEMPLATE_SHAPE_CLASS = {
    "box": 0,
    "box_slot": 0,
    "box_step": 0,
    "box_hole": 1,
    "l_bracket": 2,
    "cyl_boss": 3,
}

EDGE_ON_SURFACE_TOL = 1e-6


@dataclass
class BRepModel:
    faces: list  # SurfacePatch
    edges: list  # CurveSegment
    face_labels: list
    shape_label: int
    template: str
    seed: int


def _plane_face(origin, au, av, lu, lv, outward, loops=None) -> SurfacePatch:
    flip = bool(np.dot(np.cross(au, av), outward) < 0)
    surf = Plane(np.asarray(origin, dtype=float), au, av, flip=flip)
    return SurfacePatch(surf, (0.0, lu, 0.0, lv), list(loops or []))


def _line(a, b, fi, fj) -> CurveSegment:
    return CurveSegment(Line(np.asarray(a, dtype=float), np.asarray(b, dtype=float)),
                        (0.0, 1.0), (fi, fj))


def _arc(center, ax, ay, r, t0, t1, fi, fj) -> CurveSegment:
    return CurveSegment(Arc(np.asarray(center, dtype=float), ax, ay, r),
                        (t0, t1), (fi, fj))


def _box_faces(L, W, H):
    """The six faces of [0,L]x[0,W]x[0,H], indices (x0,x1,y0,y1,z0,z1)."""
    return [
        _plane_face((0, 0, 0), Y, Z, W, H, -X),
        _plane_face((L, 0, 0), Y, Z, W, H, X),
        _plane_face((0, 0, 0), X, Z, L, H, -Y),
        _plane_face((0, W, 0), X, Z, L, H, Y),
        _plane_face((0, 0, 0), X, Y, L, W, -Z),
        _plane_face((0, 0, H), X, Y, L, W, Z),
    ]


def _box_edges(L, W, H):
    x0, x1, y0, y1, z0, z1 = range(6)
    return [
        _line((0, 0, 0), (L, 0, 0), y0, z0),
        _line((L, 0, 0), (L, W, 0), x1, z0),
        _line((L, W, 0), (0, W, 0), y1, z0),
        _line((0, W, 0), (0, 0, 0), x0, z0),
        _line((0, 0, H), (L, 0, H), y0, z1),
        _line((L, 0, H), (L, W, H), x1, z1),
        _line((L, W, H), (0, W, H), y1, z1),
        _line((0, W, H), (0, 0, H), x0, z1),
        _line((0, 0, 0), (0, 0, H), x0, y0),
        _line((L, 0, 0), (L, 0, H), x1, y0),
        _line((L, W, 0), (L, W, H), x1, y1),
        _line((0, W, 0), (0, W, H), x0, y1),
    ]


def _build_box(rng):
    L, W, H = rng.uniform(0.6, 2.0, 3)
    faces = _box_faces(L, W, H)
    edges = _box_edges(L, W, H)
    return faces, edges, [STOCK] * 6


def _build_box_hole(rng):
    L, W, H = rng.uniform(0.8, 2.0, 3)
    r = float(rng.uniform(0.12, 0.30) * min(L, W))
    jx = max(L / 2 - r - 0.08 * L, 0.0)
    jy = max(W / 2 - r - 0.08 * W, 0.0)
    cx = float(L / 2 + rng.uniform(-1, 1) * 0.8 * jx)
    cy = float(W / 2 + rng.uniform(-1, 1) * 0.8 * jy)

    faces = _box_faces(L, W, H)
    faces[4].trim_loops.append(circle_loop((cx, cy), r, ccw=False))
    faces[5].trim_loops.append(circle_loop((cx, cy), r, ccw=False))
    axis_pt = np.array([cx, cy, 0.0])
    wall = Cylinder(axis_pt, Z, X, r, flip=True)  # outward normal points into the hole
    faces.append(SurfacePatch(wall, (0.0, np.pi, 0.0, H)))
    faces.append(SurfacePatch(dataclasses.replace(wall), (np.pi, 2 * np.pi, 0.0, H)))
    wa, wb = 6, 7

    edges = _box_edges(L, W, H)
    top_c, bot_c = np.array([cx, cy, H]), np.array([cx, cy, 0.0])
    edges += [
        _arc(top_c, X, Y, r, 0.0, np.pi, 5, wa),
        _arc(top_c, X, Y, r, np.pi, 2 * np.pi, 5, wb),
        _arc(bot_c, X, Y, r, 0.0, np.pi, 4, wa),
        _arc(bot_c, X, Y, r, np.pi, 2 * np.pi, 4, wb),
        _line((cx + r, cy, 0), (cx + r, cy, H), wa, wb),
        _line((cx - r, cy, 0), (cx - r, cy, H), wa, wb),
    ]
    labels = [STOCK] * 6 + [HOLE, HOLE]
    return faces, edges, labels


def _build_box_slot(rng):
    L = float(rng.uniform(1.0, 2.0))
    W = float(rng.uniform(0.7, 1.6))
    H = float(rng.uniform(0.7, 1.4))
    sw = float(rng.uniform(0.18, 0.38) * L)
    jx = max(L / 2 - sw / 2 - 0.12 * L, 0.0)
    sx = float(L / 2 + rng.uniform(-1, 1) * 0.8 * jx)
    a, b = sx - sw / 2, sx + sw / 2
    d = float(H * (1.0 - rng.uniform(0.35, 0.70)))  # slot floor height
    scooped = bool(rng.random() < 0.5)
    s = float(rng.uniform(0.15, 0.50) * d * 0.8) if scooped else 0.0

    def floor_z(x):
        t = (x - a) / (b - a)
        return d - 4.0 * s * t * (1.0 - t)

    # U-shaped side profile in the (x, z) plane, counter-clockwise
    notch = []
    if scooped:
        xs = np.linspace(b, a, 17)[1:-1]
        notch = [(float(x), float(floor_z(x))) for x in xs]
    u_loop = np.array([(0, 0), (L, 0), (L, H), (b, H), (b, d), *notch,
                       (a, d), (a, H), (0, H)], dtype=float)

    faces = [
        _plane_face((0, 0, 0), Y, Z, W, H, -X),
        _plane_face((L, 0, 0), Y, Z, W, H, X),
        _plane_face((0, 0, 0), X, Z, L, H, -Y, loops=[u_loop]),
        _plane_face((0, W, 0), X, Z, L, H, Y, loops=[u_loop]),
        _plane_face((0, 0, 0), X, Y, L, W, -Z),
        _plane_face((0, 0, H), X, Y, a, W, Z),
        _plane_face((b, 0, H), X, Y, L - b, W, Z),
        _plane_face((a, 0, d), Y, Z, W, H - d, X),
        _plane_face((b, 0, d), Y, Z, W, H - d, -X),
    ]
    if scooped:
        floor = BumpPatch(np.array([a, 0.0, d]), X, Y, b - a, W, -s)
        faces.append(SurfacePatch(floor, (0.0, 1.0, 0.0, 1.0)))
    else:
        faces.append(_plane_face((a, 0, d), X, Y, b - a, W, Z))

    edges = [
        _line((0, 0, 0), (L, 0, 0), 2, 4),
        _line((L, 0, 0), (L, W, 0), 1, 4),
        _line((L, W, 0), (0, W, 0), 3, 4),
        _line((0, W, 0), (0, 0, 0), 0, 4),
        _line((0, 0, 0), (0, 0, H), 0, 2),
        _line((L, 0, 0), (L, 0, H), 1, 2),
        _line((L, W, 0), (L, W, H), 1, 3),
        _line((0, W, 0), (0, W, H), 0, 3),
        _line((0, 0, H), (0, W, H), 0, 5),
        _line((a, 0, H), (a, W, H), 5, 7),
        _line((0, 0, H), (a, 0, H), 2, 5),
        _line((0, W, H), (a, W, H), 3, 5),
        _line((L, 0, H), (L, W, H), 1, 6),
        _line((b, 0, H), (b, W, H), 6, 8),
        _line((b, 0, H), (L, 0, H), 2, 6),
        _line((b, W, H), (L, W, H), 3, 6),
        _line((a, 0, d), (a, 0, H), 2, 7),
        _line((a, W, d), (a, W, H), 3, 7),
        _line((b, 0, d), (b, 0, H), 2, 8),
        _line((b, W, d), (b, W, H), 3, 8),
        _line((a, 0, d), (a, W, d), 7, 9),
        _line((b, 0, d), (b, W, d), 8, 9),
    ]
    if scooped:
        mid = np.array([(a + b) / 2, 0.0, d - 2.0 * s])
        edges.append(CurveSegment(QuadraticBezier(np.array([a, 0.0, d]), mid,
                                                  np.array([b, 0.0, d])),
                                  (0.0, 1.0), (2, 9)))
        midw = mid + W * Y
        edges.append(CurveSegment(QuadraticBezier(np.array([a, W, d]), midw,
                                                  np.array([b, W, d])),
                                  (0.0, 1.0), (3, 9)))
    else:
        edges.append(_line((a, 0, d), (b, 0, d), 2, 9))
        edges.append(_line((a, W, d), (b, W, d), 3, 9))

    labels = [STOCK] * 7 + [SLOT, SLOT, SLOT]
    return faces, edges, labels


def _build_box_step(rng):
    L = float(rng.uniform(1.0, 2.0))
    W = float(rng.uniform(0.7, 1.6))
    H = float(rng.uniform(0.7, 1.4))
    bs = float(L - rng.uniform(0.20, 0.45) * L)
    d = float(H - rng.uniform(0.25, 0.50) * H)

    l_loop = np.array([(0, 0), (L, 0), (L, d), (bs, d), (bs, H), (0, H)], dtype=float)
    faces = [
        _plane_face((0, 0, 0), Y, Z, W, H, -X),
        _plane_face((L, 0, 0), Y, Z, W, d, X),
        _plane_face((0, 0, 0), X, Z, L, H, -Y, loops=[l_loop]),
        _plane_face((0, W, 0), X, Z, L, H, Y, loops=[l_loop]),
        _plane_face((0, 0, 0), X, Y, L, W, -Z),
        _plane_face((0, 0, H), X, Y, bs, W, Z),
        _plane_face((bs, 0, d), Y, Z, W, H - d, X),
        _plane_face((bs, 0, d), X, Y, L - bs, W, Z),
    ]
    edges = [
        _line((0, 0, 0), (L, 0, 0), 2, 4),
        _line((L, 0, 0), (L, W, 0), 1, 4),
        _line((L, W, 0), (0, W, 0), 3, 4),
        _line((0, W, 0), (0, 0, 0), 0, 4),
        _line((0, 0, 0), (0, 0, H), 0, 2),
        _line((0, W, 0), (0, W, H), 0, 3),
        _line((L, 0, 0), (L, 0, d), 1, 2),
        _line((L, W, 0), (L, W, d), 1, 3),
        _line((0, 0, H), (0, W, H), 0, 5),
        _line((bs, 0, H), (bs, W, H), 5, 6),
        _line((0, 0, H), (bs, 0, H), 2, 5),
        _line((0, W, H), (bs, W, H), 3, 5),
        _line((bs, 0, d), (bs, 0, H), 2, 6),
        _line((bs, W, d), (bs, W, H), 3, 6),
        _line((bs, 0, d), (bs, W, d), 6, 7),
        _line((L, 0, d), (L, W, d), 1, 7),
        _line((bs, 0, d), (L, 0, d), 2, 7),
        _line((bs, W, d), (L, W, d), 3, 7),
    ]
    labels = [STOCK] * 6 + [STEP, STEP]
    return faces, edges, labels


def _build_l_bracket(rng):
    Lx = float(rng.uniform(1.2, 2.0))
    Lz = float(rng.uniform(1.2, 2.0))
    T = float(rng.uniform(0.12, 0.25))
    T2 = float(rng.uniform(0.12, 0.25))
    W = float(rng.uniform(0.5, 1.2))

    faces = [
        _plane_face((0, 0, 0), Y, Z, W, Lz, -X),
        _plane_face((Lx, 0, 0), Y, Z, W, T, X),
        _plane_face((0, 0, 0), X, Y, Lx, W, -Z),
        _plane_face((T2, 0, T), X, Y, Lx - T2, W, Z),
        _plane_face((T2, 0, T), Y, Z, W, Lz - T, X),
        _plane_face((0, 0, Lz), X, Y, T2, W, Z),
        _plane_face((0, 0, 0), X, Z, Lx, T, -Y),
        _plane_face((0, 0, T), X, Z, T2, Lz - T, -Y),
        _plane_face((0, W, 0), X, Z, Lx, T, Y),
        _plane_face((0, W, T), X, Z, T2, Lz - T, Y),
    ]
    edges = [
        _line((0, 0, 0), (Lx, 0, 0), 6, 2),
        _line((Lx, 0, 0), (Lx, W, 0), 1, 2),
        _line((Lx, W, 0), (0, W, 0), 8, 2),
        _line((0, W, 0), (0, 0, 0), 0, 2),
        _line((0, 0, 0), (0, 0, T), 0, 6),
        _line((0, 0, T), (0, 0, Lz), 0, 7),
        _line((0, W, 0), (0, W, T), 0, 8),
        _line((0, W, T), (0, W, Lz), 0, 9),
        _line((Lx, 0, 0), (Lx, 0, T), 1, 6),
        _line((Lx, W, 0), (Lx, W, T), 1, 8),
        _line((Lx, 0, T), (Lx, W, T), 1, 3),
        _line((T2, 0, T), (Lx, 0, T), 3, 6),
        _line((T2, W, T), (Lx, W, T), 3, 8),
        _line((T2, 0, T), (T2, W, T), 3, 4),
        _line((T2, 0, T), (T2, 0, Lz), 4, 7),
        _line((T2, W, T), (T2, W, Lz), 4, 9),
        _line((0, 0, Lz), (0, W, Lz), 0, 5),
        _line((T2, 0, Lz), (T2, W, Lz), 4, 5),
        _line((0, 0, Lz), (T2, 0, Lz), 5, 7),
        _line((0, W, Lz), (T2, W, Lz), 5, 9),
        _line((0, 0, T), (T2, 0, T), 6, 7),  # coplanar seam, smooth
        _line((0, W, T), (T2, W, T), 8, 9),
    ]
    return faces, edges, [STOCK] * 10


def _build_cyl_boss(rng):
    L, W = rng.uniform(1.2, 2.0, 2)
    H = float(rng.uniform(0.3, 0.6))
    r = float(rng.uniform(0.15, 0.28) * min(L, W))
    hb = float(rng.uniform(0.5, 0.9))
    cap_style = int(rng.integers(0, 3))  # 0 flat, 1 hemisphere, 2 cone
    with_fillet = bool(rng.random() < 0.5)
    rf = float(rng.uniform(0.25, 0.50) * r) if with_fillet else 0.0
    r2 = float(rng.uniform(0.50, 0.75) * r)
    hcone = float(rng.uniform(0.25, 0.45) * hb)

    cap_extra = {0: 0.0, 1: r, 2: hcone}[cap_style]
    hb = max(hb, rf + cap_extra + 0.15)
    margin = r + rf + 0.08 * min(L, W)
    jx = max(L / 2 - margin, 0.0)
    jy = max(W / 2 - margin, 0.0)
    cx = float(L / 2 + rng.uniform(-1, 1) * 0.8 * jx)
    cy = float(W / 2 + rng.uniform(-1, 1) * 0.8 * jy)

    z0c = H + rf  # cylinder wall bottom
    z1c = H + hb - cap_extra  # cylinder wall top
    zt = H + hb
    hole_r = r + rf

    faces = _box_faces(L, W, H)
    faces[5].trim_loops.append(circle_loop((cx, cy), hole_r, ccw=False))
    axis_pt = np.array([cx, cy, 0.0])
    side = Cylinder(axis_pt, Z, X, r)
    faces.append(SurfacePatch(side, (0.0, np.pi, z0c, z1c)))
    faces.append(SurfacePatch(dataclasses.replace(side), (np.pi, 2 * np.pi, z0c, z1c)))
    ca, cb = 6, 7
    labels = [STOCK] * 6 + [BOSS, BOSS]

    edges = _box_edges(L, W, H)
    base_c = np.array([cx, cy, H])
    nxt = 8
    if with_fillet:
        fillet = Torus(np.array([cx, cy, H + rf]), Z, X, r + rf, rf, flip=True)
        faces.append(SurfacePatch(dataclasses.replace(fillet), (0.0, np.pi, np.pi, 1.5 * np.pi)))
        faces.append(SurfacePatch(dataclasses.replace(fillet), (np.pi, 2 * np.pi, np.pi, 1.5 * np.pi)))
        fa, fb = nxt, nxt + 1
        nxt += 2
        labels += [BOSS, BOSS]
        edges += [
            _arc(base_c, X, Y, hole_r, 0.0, np.pi, 5, fa),
            _arc(base_c, X, Y, hole_r, np.pi, 2 * np.pi, 5, fb),
            _arc(np.array([cx, cy, z0c]), X, Y, r, 0.0, np.pi, fa, ca),
            _arc(np.array([cx, cy, z0c]), X, Y, r, np.pi, 2 * np.pi, fb, cb),
            _arc(np.array([cx + r + rf, cy, H + rf]), X, Z, rf, np.pi, 1.5 * np.pi, fa, fb),
            _arc(np.array([cx - r - rf, cy, H + rf]), -X, Z, rf, np.pi, 1.5 * np.pi, fa, fb),
        ]
    else:
        edges += [
            _arc(base_c, X, Y, r, 0.0, np.pi, 5, ca),
            _arc(base_c, X, Y, r, np.pi, 2 * np.pi, 5, cb),
        ]
    edges += [
        _line((cx + r, cy, z0c), (cx + r, cy, z1c), ca, cb),
        _line((cx - r, cy, z0c), (cx - r, cy, z1c), ca, cb),
    ]

    top_c = np.array([cx, cy, z1c])
    if cap_style == 0:
        disc = _plane_face((cx - r, cy - r, zt), X, Y, 2 * r, 2 * r, Z,
                           loops=[circle_loop((r, r), r, ccw=True)])
        faces.append(disc)
        labels.append(BOSS)
        edges += [
            _arc(top_c, X, Y, r, 0.0, np.pi, ca, nxt),
            _arc(top_c, X, Y, r, np.pi, 2 * np.pi, cb, nxt),
        ]
    elif cap_style == 1:
        dome = Sphere(top_c, Z, X, r)
        faces.append(SurfacePatch(dataclasses.replace(dome), (0.0, np.pi, 0.0, np.pi / 2)))
        faces.append(SurfacePatch(dataclasses.replace(dome), (np.pi, 2 * np.pi, 0.0, np.pi / 2)))
        labels += [BOSS, BOSS]
        edges += [
            _arc(top_c, X, Y, r, 0.0, np.pi, ca, nxt),
            _arc(top_c, X, Y, r, np.pi, 2 * np.pi, cb, nxt + 1),
            _arc(top_c, X, Z, r, 0.0, np.pi / 2, nxt, nxt + 1),
            _arc(top_c, -X, Z, r, 0.0, np.pi / 2, nxt, nxt + 1),
        ]
    else:
        slope = (r2 - r) / hcone
        cone = Cone(top_c, Z, X, r, slope)
        faces.append(SurfacePatch(dataclasses.replace(cone), (0.0, np.pi, 0.0, hcone)))
        faces.append(SurfacePatch(dataclasses.replace(cone), (np.pi, 2 * np.pi, 0.0, hcone)))
        disc = _plane_face((cx - r2, cy - r2, zt), X, Y, 2 * r2, 2 * r2, Z,
                           loops=[circle_loop((r2, r2), r2, ccw=True)])
        faces.append(disc)
        labels += [BOSS, BOSS, BOSS]
        di = nxt + 2
        edges += [
            _arc(top_c, X, Y, r, 0.0, np.pi, ca, nxt),
            _arc(top_c, X, Y, r, np.pi, 2 * np.pi, cb, nxt + 1),
            _arc(np.array([cx, cy, zt]), X, Y, r2, 0.0, np.pi, nxt, di),
            _arc(np.array([cx, cy, zt]), X, Y, r2, np.pi, 2 * np.pi, nxt + 1, di),
            _line((cx + r, cy, z1c), (cx + r2, cy, zt), nxt, nxt + 1),
            _line((cx - r, cy, z1c), (cx - r2, cy, zt), nxt, nxt + 1),
        ]
    return faces, edges, labels


_BUILDERS = {
    "box": _build_box,
    "box_hole": _build_box_hole,
    "box_slot": _build_box_slot,
    "box_step": _build_box_step,
    "l_bracket": _build_l_bracket,
    "cyl_boss": _build_cyl_boss,
}


def generate_model(template_id: str, seed: int) -> BRepModel:
    """Build, normalize, and validate one synthetic solid."""
    if template_id not in _BUILDERS:
        raise ConfigurationError(
            f"unknown template {template_id!r}; expected one of {TEMPLATE_NAMES}")
    rng = np.random.default_rng(seed)
    faces, edges, labels = _BUILDERS[template_id](rng)
    model = BRepModel(faces, edges, labels, TEMPLATE_SHAPE_CLASS[template_id],
                      template_id, int(seed))
    model = normalize_model(model)
    validate_model(model)
    return model


def model_bbox(model: BRepModel) -> np.ndarray:
    boxes = np.stack([face_bbox(f) for f in model.faces])
    return np.stack([boxes[:, 0].min(axis=0), boxes[:, 1].max(axis=0)])


def normalize_model(model: BRepModel) -> BRepModel:
    """Center the bounding box at the origin and scale its longest edge to 2.

    An already-normalized model is returned unchanged (offset and scale are
    snapped to identity below 1e-12) so normalization is idempotent.
    """
    bbox = model_bbox(model)
    extents = bbox[1] - bbox[0]
    if not np.all(np.isfinite(bbox)) or np.max(extents) <= 1e-12:
        raise InvalidGeometryError("model has a degenerate bounding box")
    center = 0.5 * (bbox[0] + bbox[1])
    scale = 2.0 / float(np.max(extents))
    if np.max(np.abs(center)) < 1e-12 and abs(scale - 1.0) < 1e-12:
        return model
    offset = -center
    faces = [f.transformed(offset, scale) for f in model.faces]
    edges = [e.transformed(offset, scale) for e in model.edges]
    return BRepModel(faces, edges, list(model.face_labels), model.shape_label,
                     model.template, model.seed)


def validate_model(model: BRepModel, tol: float = EDGE_ON_SURFACE_TOL) -> None:
    """Check manifold bookkeeping and that edges lie on their surfaces."""
    n = len(model.faces)
    if len(model.face_labels) != n:
        raise InvalidGeometryError("face label count does not match face count")
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for edge in model.edges:
        fi, fj = edge.faces
        if not (0 <= fi < n and 0 <= fj < n) or fi == fj:
            raise InvalidGeometryError(f"edge has invalid incident faces {edge.faces}")
        ts = edge.sample_params(13)
        pts = edge.curve.point(ts)
        if not np.all(np.isfinite(pts)):
            raise InvalidGeometryError("edge evaluates to non-finite points")
        for f in (fi, fj):
            patch = model.faces[f]
            u0, u1, v0, v1 = patch.uv_domain
            slack_u = 1e-9 * (1.0 + abs(u1 - u0))
            slack_v = 1e-9 * (1.0 + abs(v1 - v0))
            for p in pts:
                u, v = patch.surface.uv_of_point(p, patch.uv_domain)
                q = patch.surface.point(u, v)
                if np.linalg.norm(q - p) > tol:
                    raise InvalidGeometryError(
                        f"edge sample off face {f} by {np.linalg.norm(q - p):.2e}")
                if not (u0 - slack_u <= u <= u1 + slack_u
                        and v0 - slack_v <= v <= v1 + slack_v):
                    raise InvalidGeometryError(
                        f"edge sample maps outside face {f} domain: uv=({u:.4g},{v:.4g})")
        parent[find(fi)] = find(fj)
    if n > 1 and len({find(i) for i in range(n)}) != 1:
        raise InvalidGeometryError("face adjacency graph is not connected")


# ---------------------------------------------------------------------------
# Corpus generation
# ---------------------------------------------------------------------------


@dataclass
class CorpusConfig:
    counts: dict  # template -> number of models
    split: tuple = (0.70, 0.15, 0.15)
    master_seed: int = 0
    extra: dict = field(default_factory=dict)  # provenance only


def model_seed(master_seed: int, index: int) -> int:
    return int((master_seed * 1_000_003 + index) % 2**31)


def split_counts(n: int, fractions) -> tuple:
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    n_train = min(n_train, n)
    n_val = min(n_val, n - n_train)
    return n_train, n_val, n - n_train - n_val


def generate_corpus(config: CorpusConfig, out_dir) -> dict:
    """Write one gAAG file per model and a manifest; returns the manifest."""
    from .gaag import build_gaag, write_gaag

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for t in config.counts:
        if t not in _BUILDERS:
            raise ConfigurationError(f"unknown template {t!r} in corpus config")

    specs = []
    idx = 0
    for template in sorted(config.counts):
        for _ in range(int(config.counts[template])):
            specs.append((f"{template}-{idx:05d}", template,
                          model_seed(config.master_seed, idx)))
            idx += 1

    rng = np.random.default_rng(config.master_seed)
    order = rng.permutation(len(specs))
    n_train, n_val, n_test = split_counts(len(specs), config.split)
    split_of = {}
    for rank, k in enumerate(order):
        if rank < n_train:
            split_of[k] = "train"
        elif rank < n_train + n_val:
            split_of[k] = "val"
        else:
            split_of[k] = "test"

    entries = []
    for k, (mid, template, seed) in enumerate(specs):
        model = generate_model(template, seed)
        gaag = build_gaag(model)
        path = f"{mid}.json"
        write_gaag(gaag, out_dir / path)
        entries.append({
            "id": mid,
            "template": template,
            "seed": seed,
            "shape_label": model.shape_label,
            "split": split_of[k],
            "gaag_path": path,
        })

    manifest = {
        "version": "1",
        "master_seed": int(config.master_seed),
        "entries": entries,
        "config": {
            "counts": {k: int(v) for k, v in sorted(config.counts.items())},
            "split": list(config.split),
            "master_seed": int(config.master_seed),
            **config.extra,
        },
    }
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=1, allow_nan=False)
    return manifest


def load_manifest(corpus_dir) -> dict:
    path = Path(corpus_dir) / "manifest.json"
    try:
        with open(path) as fh:
            manifest = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        from .errors import DataFormatError
        raise DataFormatError(f"cannot read manifest at {path}: {exc}") from exc
    return manifest


def manifest_hash(corpus_dir) -> str:
    path = Path(corpus_dir) / "manifest.json"
    return hashlib.sha256(path.read_bytes()).hexdigest()
