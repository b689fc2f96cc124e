"""Entity embedding: five parallel branches mapping raw face/edge samples
and attributes to 256-wide node and edge features, plus input-level masking.

Faces get two 2D CNNs (one per grid resolution) and an attribute MLP; the
pooled geometry codes are each fused with the attribute code by a shared
MLP into the decoupled low/high node features. Edges get a 1D CNN plus an
attribute MLP fused the same way. Masking zeroes the raw inputs of the
selected entities before encoding and then overwrites their encoder
outputs with learned per-stream mask tokens, leaving graph topology
untouched.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .errors import ConfigurationError, ContractError
from .gaag import GAAG

EMBED_DIM = 256


def gaag_to_tensors(g: GAAG, dtype=torch.float32) -> dict:
    """Collate a gAAG into the raw tensors the encoder consumes.

    Face grids become channels-first images, edge samples channels-first
    sequences. Adjacency pairs are ordered by edge id so edge k of the
    tensor stack corresponds to row k of `pairs`.
    """
    pairs = np.zeros((g.n_edges, 2), dtype=np.int64)
    for i, j, e in g.adjacency:
        pairs[e] = (i, j)
    return {
        "face_low": torch.as_tensor(
            np.ascontiguousarray(g.face_grids_low.transpose(0, 3, 1, 2)), dtype=dtype),
        "face_high": torch.as_tensor(
            np.ascontiguousarray(g.face_grids_high.transpose(0, 3, 1, 2)), dtype=dtype),
        "face_attr": torch.as_tensor(g.face_attrs, dtype=dtype),
        "edge_geom": torch.as_tensor(
            np.ascontiguousarray(g.edge_samples.transpose(0, 2, 1)), dtype=dtype),
        "edge_attr": torch.as_tensor(g.edge_attrs, dtype=dtype),
        "pairs": torch.as_tensor(pairs),
        "face_labels": (None if g.face_labels is None
                        else torch.as_tensor(g.face_labels, dtype=torch.long)),
        "shape_label": g.shape_label,
    }


@dataclass
class FeatureBundle:
    """Embedded node features (both resolutions) and edge features."""

    f_low: torch.Tensor  # (n_faces, 256)
    f_high: torch.Tensor  # (n_faces, 256)
    e: torch.Tensor  # (n_edges, 256)


@dataclass
class MaskSpec:
    """Index sets of masked faces and edges for one model."""

    masked_faces: np.ndarray
    masked_edges: np.ndarray
    ratio: float
    seed: int


def mask_count(n: int, ratio: float, keep_one: bool) -> int:
    m = int(np.floor(ratio * n + 0.5))  # round half up
    hi = max(n - 1, 0) if keep_one else n
    return int(np.clip(m, 0, hi))


def make_mask(n_faces: int, n_edges: int, ratio: float, seed: int) -> MaskSpec:
    """Uniform random masking without replacement, independently for faces
    and edges; at least one face (and one edge, if any exist) stays visible."""
    if not 0.0 <= ratio <= 1.0:
        raise ConfigurationError(f"mask ratio must be in [0, 1], got {ratio}")
    if n_faces < 2:
        raise ConfigurationError("masking needs at least two faces")
    rng = np.random.default_rng(seed)
    n_mf = mask_count(n_faces, ratio, keep_one=True)
    n_me = mask_count(n_edges, ratio, keep_one=n_edges >= 1)
    faces = np.sort(rng.choice(n_faces, size=n_mf, replace=False))
    edges = np.sort(rng.choice(n_edges, size=n_me, replace=False))
    return MaskSpec(faces.astype(np.int64), edges.astype(np.int64),
                    float(ratio), int(seed))


def zero_masked_inputs(tensors: dict, mask: MaskSpec) -> dict:
    """Raw grids and attributes of masked entities are zeroed before encoding."""
    out = dict(tensors)
    mf = torch.as_tensor(mask.masked_faces)
    me = torch.as_tensor(mask.masked_edges)
    if mf.numel() and int(mf.max()) >= tensors["face_low"].shape[0]:
        raise ContractError("masked face index out of range")
    if me.numel() and tensors["edge_geom"].shape[0] and \
            int(me.max()) >= tensors["edge_geom"].shape[0]:
        raise ContractError("masked edge index out of range")
    for key in ("face_low", "face_high", "face_attr"):
        t = tensors[key].clone()
        t[mf] = 0.0
        out[key] = t
    for key in ("edge_geom", "edge_attr"):
        t = tensors[key].clone()
        if me.numel():
            t[me] = 0.0
        out[key] = t
    return out


def apply_mask(bundle: FeatureBundle, mask: MaskSpec,
               mask_tokens: "MaskTokens") -> FeatureBundle:
    """Replace masked rows of each stream with its learned mask token."""
    n_f = bundle.f_low.shape[0]
    n_e = bundle.e.shape[0]
    mf = torch.as_tensor(mask.masked_faces)
    me = torch.as_tensor(mask.masked_edges)
    if mf.numel() and int(mf.max()) >= n_f:
        raise ContractError("masked face index out of range")
    if me.numel() and int(me.max()) >= n_e:
        raise ContractError("masked edge index out of range")
    f_low = bundle.f_low.clone()
    f_high = bundle.f_high.clone()
    e = bundle.e.clone()
    f_low[mf] = mask_tokens.face_low.to(f_low.dtype)
    f_high[mf] = mask_tokens.face_high.to(f_high.dtype)
    if me.numel():
        e[me] = mask_tokens.edge.to(e.dtype)
    return FeatureBundle(f_low, f_high, e)


class MaskTokens(nn.Module):
    """One learned 256-wide token per masked stream."""

    def __init__(self, dim: int = EMBED_DIM):
        super().__init__()
        self.face_low = nn.Parameter(torch.randn(dim) * 0.02)
        self.face_high = nn.Parameter(torch.randn(dim) * 0.02)
        self.edge = nn.Parameter(torch.randn(dim) * 0.02)


def _face_cnn() -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(7, 64, 3, padding=1), nn.GroupNorm(8, 64), nn.ReLU(),
        nn.Conv2d(64, 128, 3, padding=1), nn.GroupNorm(16, 128), nn.ReLU(),
        nn.Conv2d(128, 256, 3, padding=1), nn.GroupNorm(32, 256), nn.ReLU(),
        nn.AdaptiveAvgPool2d(1), nn.Flatten(),
    )


def _edge_cnn() -> nn.Sequential:
    return nn.Sequential(
        nn.Conv1d(12, 64, 3, padding=1), nn.GroupNorm(8, 64), nn.ReLU(),
        nn.Conv1d(64, 256, 3, padding=1), nn.GroupNorm(32, 256), nn.ReLU(),
        nn.AdaptiveAvgPool1d(1), nn.Flatten(),
    )


def _attr_mlp(in_dim: int) -> nn.Sequential:
    return nn.Sequential(
        nn.Linear(in_dim, 128), nn.LayerNorm(128), nn.GELU(), nn.Linear(128, 128),
    )


def _fusion_mlp() -> nn.Sequential:
    return nn.Sequential(
        nn.Linear(256 + 128, 256), nn.LayerNorm(256), nn.GELU(), nn.Linear(256, 256),
    )


class BRepEncoder(nn.Module):
    """Five parallel branches plus two fusion MLPs (seven modules total).

    The low- and high-resolution grids go through separate CNN instances
    of the same architecture; one fusion MLP is shared between the two
    resulting face streams.
    """

    def __init__(self):
        super().__init__()
        self.face_cnn_low = _face_cnn()
        self.face_cnn_high = _face_cnn()
        self.edge_cnn = _edge_cnn()
        self.face_attr_mlp = _attr_mlp(16)
        self.edge_attr_mlp = _attr_mlp(9)
        self.face_fusion = _fusion_mlp()
        self.edge_fusion = _fusion_mlp()

    def forward(self, tensors: dict) -> FeatureBundle:
        face_low = tensors["face_low"]
        face_high = tensors["face_high"]
        face_attr = tensors["face_attr"]
        edge_geom = tensors["edge_geom"]
        edge_attr = tensors["edge_attr"]
        if face_low.shape[0] != face_attr.shape[0]:
            raise ContractError("face tensor row counts disagree")
        if edge_geom.shape[0] != edge_attr.shape[0]:
            raise ContractError("edge tensor row counts disagree")
        if face_low.shape[1:] != (7, 3, 3) or face_high.shape[1:] != (7, 13, 13):
            raise ContractError("face grid tensors have the wrong shape")
        if edge_geom.shape[0] and edge_geom.shape[1:] != (12, 13):
            raise ContractError("edge sample tensor has the wrong shape")

        a_face = self.face_attr_mlp(face_attr)
        g_low = self.face_cnn_low(face_low)
        g_high = self.face_cnn_high(face_high)
        f_low = self.face_fusion(torch.cat([g_low, a_face], dim=1))
        f_high = self.face_fusion(torch.cat([g_high, a_face], dim=1))

        if edge_geom.shape[0] == 0:
            ref = next(self.edge_fusion.parameters())
            e = torch.zeros(0, EMBED_DIM, dtype=ref.dtype, device=ref.device)
        else:
            a_edge = self.edge_attr_mlp(edge_attr)
            g_edge = self.edge_cnn(edge_geom)
            e = self.edge_fusion(torch.cat([g_edge, a_edge], dim=1))
        return FeatureBundle(f_low, f_high, e)
