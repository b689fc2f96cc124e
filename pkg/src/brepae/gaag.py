"""Geometric attributed adjacency graph extraction and serialization.

Each BRep face becomes a graph node carrying two UV sample grids (3x3 and
13x13, seven channels per point: position, normal, trimming indicator)
plus a 16D attribute vector; each BRep edge becomes a graph edge carrying
13 curve samples (twelve channels: position, tangent, both incident-face
normals) plus a 9D attribute vector. The graph is stored once per
undirected edge and serialized as a self-describing JSON document.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import BRepModel
from .errors import DataFormatError, InvalidGeometryError
from .geometry import (
    CURVE_TYPE_NAMES,
    SURFACE_TYPE_NAMES,
    CurveSegment,
    SurfacePatch,
    curve_length,
    face_area_centroid,
    face_bbox,
)

GRID_LOW = 3
GRID_HIGH = 13
EDGE_SAMPLES = 13

# Dihedral angles within this band around pi classify an edge as smooth.
SMOOTH_ANGLE_TOL_DEG = 5.0

FORMAT_VERSION = "1"


def sample_face_grid(face: SurfacePatch, n: int) -> np.ndarray:
    """(n, n, 7) grid of [position, normal, trim indicator] samples.

    Grid point (r, c) evaluates the untrimmed surface at the (r, c)-th
    point of the inclusive uniform lattice over the UV domain; the trim
    indicator is 1 where the point falls in the retained region.
    """
    if n not in (GRID_LOW, GRID_HIGH):
        raise InvalidGeometryError(f"unsupported grid resolution {n}")
    uu, vv = face.uv_grid(n)
    pts = face.surface.point(uu, vv)
    nrm = face.surface.normal(uu, vv)
    if not (np.all(np.isfinite(pts)) and np.all(np.isfinite(nrm))):
        raise InvalidGeometryError("face grid evaluated to non-finite values")
    tau = face.retained(np.stack([uu.ravel(), vv.ravel()], axis=1))
    tau = tau.reshape(n, n).astype(float)
    return np.concatenate([pts, nrm, tau[..., None]], axis=-1)


def compute_face_attributes(face: SurfacePatch) -> np.ndarray:
    """16D attribute vector: type one-hot (6), area (1), centroid (3), bbox (6)."""
    onehot = np.zeros(len(SURFACE_TYPE_NAMES))
    onehot[SURFACE_TYPE_NAMES.index(face.surface_type)] = 1.0
    area, centroid = face_area_centroid(face)
    bbox = face_bbox(face)
    return np.concatenate([onehot, [area], centroid, bbox[0], bbox[1]])


def _interior_direction(face: SurfacePatch, p: np.ndarray, w: np.ndarray):
    """Pick the sign of tangent direction w that points into the face.

    w is tangent to the surface at p and perpendicular to the edge. The
    test steps a small distance along +/-w in UV space and keeps the side
    that lands inside the domain and the retained region.
    """
    surf = face.surface
    u0, u1, v0, v1 = face.uv_domain
    u, v = surf.uv_of_point(p, face.uv_domain)
    pu, pv = surf.partials(np.array([u]), np.array([v]))
    basis = np.stack([pu[0], pv[0]], axis=1)  # (3, 2)
    duv, *_ = np.linalg.lstsq(basis, w, rcond=None)
    span = max(u1 - u0, v1 - v0)
    nrm = np.linalg.norm(duv)
    if nrm < 1e-14:
        raise InvalidGeometryError("degenerate tangent basis at edge sample")
    duv = duv / nrm
    for step in (0.02, 0.005, 0.001):
        ok = []
        for sgn in (1.0, -1.0):
            uu = u + sgn * duv[0] * step * span
            vv = v + sgn * duv[1] * step * span
            inside = (u0 - 1e-12 <= uu <= u1 + 1e-12
                      and v0 - 1e-12 <= vv <= v1 + 1e-12
                      and bool(face.retained(np.array([[uu, vv]]))[0]))
            ok.append(inside)
        if ok[0] != ok[1]:
            return w if ok[0] else -w
    raise InvalidGeometryError("cannot determine interior direction at edge")


def dihedral_angle(edge: CurveSegment, model: BRepModel, t: float | None = None) -> float:
    """Angle through the material between the two incident faces, in (0, 2pi).

    Measured at the mid-sample in the plane perpendicular to the edge
    tangent, sweeping from the first face's interior direction through the
    material (the side opposite its outward normal) to the second face's
    interior direction.
    """
    if t is None:
        t = 0.5 * (edge.t_domain[0] + edge.t_domain[1])
    p = edge.curve.point(t)
    that = edge.curve.tangent(t)
    fi, fj = edge.faces
    face_a, face_b = model.faces[fi], model.faces[fj]
    ua = face_a.surface.uv_of_point(p, face_a.uv_domain)
    ub = face_b.surface.uv_of_point(p, face_b.uv_domain)
    na = face_a.surface.normal(*ua)
    nb = face_b.surface.normal(*ub)
    if not (np.all(np.isfinite(na)) and np.all(np.isfinite(nb))):
        raise InvalidGeometryError("undefined incident normals at edge mid-sample")

    def into_face(face, nrm):
        w = np.cross(nrm, that)
        w = w / np.linalg.norm(w)
        return _interior_direction(face, p, w)

    da = into_face(face_a, na)
    db = into_face(face_b, nb)
    # project everything into the plane perpendicular to the tangent
    def perp(v):
        v = v - (v @ that) * that
        return v / np.linalg.norm(v)

    e1 = perp(da)
    e2 = perp(-na)
    dbp = perp(db)
    theta = math.atan2(float(dbp @ e2), float(dbp @ e1))
    return theta % (2.0 * math.pi)


def edge_convexity(edge: CurveSegment, model: BRepModel) -> int:
    """0 concave, 1 convex, 2 smooth, from the mid-sample dihedral angle."""
    theta = dihedral_angle(edge, model)
    tol = math.radians(SMOOTH_ANGLE_TOL_DEG)
    if abs(theta - math.pi) <= tol:
        return 2
    return 1 if theta < math.pi else 0


def sample_edge(edge: CurveSegment, model: BRepModel) -> np.ndarray:
    """(13, 12) samples: position, unit tangent, then the normals of
    face_i and face_j (in the stored incident-face order) at each point."""
    ts = edge.sample_params(EDGE_SAMPLES)
    pts = edge.curve.point(ts)
    tan = edge.curve.tangent(ts)
    normals = []
    for f in edge.faces:
        patch = model.faces[f]
        rows = []
        for p in pts:
            u, v = patch.surface.uv_of_point(p, patch.uv_domain)
            q = patch.surface.point(u, v)
            if np.linalg.norm(q - p) > 1e-6:
                raise InvalidGeometryError(
                    f"edge sample off incident face {f} by {np.linalg.norm(q - p):.2e}")
            rows.append(patch.surface.normal(u, v))
        normals.append(np.asarray(rows))
    out = np.concatenate([pts, tan, normals[0], normals[1]], axis=1)
    if not np.all(np.isfinite(out)):
        raise InvalidGeometryError("edge samples evaluated to non-finite values")
    return out


def compute_edge_attributes(edge: CurveSegment, model: BRepModel) -> np.ndarray:
    """9D attribute vector: type one-hot (5), length (1), convexity one-hot (3)."""
    onehot = np.zeros(len(CURVE_TYPE_NAMES))
    onehot[CURVE_TYPE_NAMES.index(edge.curve_type)] = 1.0
    length = curve_length(edge.curve, *edge.t_domain)
    if length <= 0:
        raise InvalidGeometryError("edge has non-positive length")
    convexity = np.zeros(3)
    convexity[[0, 1, 2][edge_convexity(edge, model)]] = 1.0
    return np.concatenate([onehot, [length], convexity])


@dataclass
class GAAG:
    """The per-model graph: dual-resolution node samples, edge samples,
    attribute vectors, and face-face adjacency (stored once per edge)."""

    n_faces: int
    n_edges: int
    face_grids_low: np.ndarray  # (n_faces, 3, 3, 7)
    face_grids_high: np.ndarray  # (n_faces, 13, 13, 7)
    face_attrs: np.ndarray  # (n_faces, 16)
    edge_samples: np.ndarray  # (n_edges, 13, 12)
    edge_attrs: np.ndarray  # (n_edges, 9)
    adjacency: list  # [(face_i, face_j, edge_id)]
    face_labels: list | None = None
    shape_label: int | None = None

    def validate(self) -> None:
        checks = [
            (self.face_grids_low.shape, (self.n_faces, GRID_LOW, GRID_LOW, 7)),
            (self.face_grids_high.shape, (self.n_faces, GRID_HIGH, GRID_HIGH, 7)),
            (self.face_attrs.shape, (self.n_faces, 16)),
            (self.edge_samples.shape, (self.n_edges, EDGE_SAMPLES, 12)),
            (self.edge_attrs.shape, (self.n_edges, 9)),
        ]
        for got, want in checks:
            if tuple(got) != want:
                raise DataFormatError(f"bad array shape {got}, expected {want}")
        ids = sorted(e for _, _, e in self.adjacency)
        if ids != list(range(self.n_edges)):
            raise DataFormatError("adjacency must reference every edge id exactly once")
        for i, j, _ in self.adjacency:
            if not (0 <= i < self.n_faces and 0 <= j < self.n_faces):
                raise DataFormatError("adjacency face index out of range")
        for a in (self.face_grids_low, self.face_grids_high, self.face_attrs,
                  self.edge_samples, self.edge_attrs):
            if not np.all(np.isfinite(a)):
                raise DataFormatError("non-finite values in gAAG payload")
        if self.face_labels is not None and len(self.face_labels) != self.n_faces:
            raise DataFormatError("face_labels length mismatch")


def build_gaag(model: BRepModel) -> GAAG:
    n_f, n_e = len(model.faces), len(model.edges)
    low = np.stack([sample_face_grid(f, GRID_LOW) for f in model.faces]) \
        if n_f else np.zeros((0, GRID_LOW, GRID_LOW, 7))
    high = np.stack([sample_face_grid(f, GRID_HIGH) for f in model.faces]) \
        if n_f else np.zeros((0, GRID_HIGH, GRID_HIGH, 7))
    fattr = np.stack([compute_face_attributes(f) for f in model.faces]) \
        if n_f else np.zeros((0, 16))
    esamp = np.stack([sample_edge(e, model) for e in model.edges]) \
        if n_e else np.zeros((0, EDGE_SAMPLES, 12))
    eattr = np.stack([compute_edge_attributes(e, model) for e in model.edges]) \
        if n_e else np.zeros((0, 9))
    adjacency = [(int(e.faces[0]), int(e.faces[1]), k)
                 for k, e in enumerate(model.edges)]
    g = GAAG(n_f, n_e, low, high, fattr, esamp, eattr, adjacency,
             list(model.face_labels), int(model.shape_label))
    g.validate()
    return g


def write_gaag(g: GAAG, path) -> None:
    g.validate()
    doc = {
        "version": FORMAT_VERSION,
        "n_faces": g.n_faces,
        "n_edges": g.n_edges,
        "face_grids_low": g.face_grids_low.tolist(),
        "face_grids_high": g.face_grids_high.tolist(),
        "face_attrs": g.face_attrs.tolist(),
        "edge_samples": g.edge_samples.tolist(),
        "edge_attrs": g.edge_attrs.tolist(),
        "adjacency": [[int(i), int(j), int(e)] for i, j, e in g.adjacency],
        "face_labels": None if g.face_labels is None else [int(x) for x in g.face_labels],
        "shape_label": None if g.shape_label is None else int(g.shape_label),
    }
    try:
        payload = json.dumps(doc, allow_nan=False)
    except ValueError as exc:
        raise DataFormatError(f"refusing to serialize non-finite payload: {exc}") from exc
    Path(path).write_text(payload)


def _reject_constant(name):
    raise DataFormatError(f"non-finite constant {name!r} in gAAG file")


def read_gaag(path) -> GAAG:
    try:
        text = Path(path).read_text()
        doc = json.loads(text, parse_constant=_reject_constant)
    except OSError as exc:
        raise DataFormatError(f"cannot read gAAG file {path}: {exc}") from exc
    except (json.JSONDecodeError, ValueError) as exc:
        if isinstance(exc, DataFormatError):
            raise
        raise DataFormatError(f"malformed gAAG file {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise DataFormatError(f"gAAG file {path} is not a JSON object")
    version = doc.get("version")
    if version != FORMAT_VERSION:
        raise DataFormatError(
            f"unsupported gAAG version {version!r} (reader supports {FORMAT_VERSION!r})")
    required = ("n_faces", "n_edges", "face_grids_low", "face_grids_high",
                "face_attrs", "edge_samples", "edge_attrs", "adjacency")
    for key in required:
        if key not in doc:
            raise DataFormatError(f"gAAG file missing key {key!r}")
    n_f, n_e = int(doc["n_faces"]), int(doc["n_edges"])

    def arr(key, shape):
        a = np.asarray(doc[key], dtype=np.float64)
        if a.size == 0:
            a = np.zeros(shape)
        if a.shape != shape:
            raise DataFormatError(f"{key} has shape {a.shape}, expected {shape}")
        return a

    g = GAAG(
        n_faces=n_f,
        n_edges=n_e,
        face_grids_low=arr("face_grids_low", (n_f, GRID_LOW, GRID_LOW, 7)),
        face_grids_high=arr("face_grids_high", (n_f, GRID_HIGH, GRID_HIGH, 7)),
        face_attrs=arr("face_attrs", (n_f, 16)),
        edge_samples=arr("edge_samples", (n_e, EDGE_SAMPLES, 12)),
        edge_attrs=arr("edge_attrs", (n_e, 9)),
        adjacency=[(int(i), int(j), int(e)) for i, j, e in doc["adjacency"]],
        face_labels=(None if doc.get("face_labels") is None
                     else [int(x) for x in doc["face_labels"]]),
        shape_label=(None if doc.get("shape_label") is None
                     else int(doc["shape_label"])),
    )
    g.validate()
    return g
