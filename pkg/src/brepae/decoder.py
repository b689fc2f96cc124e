"""Two-stage decoder: a graph decoder mirrors the encoder's message
passing to recover intermediate features, then four parallel branches map
them back to explicit geometry and attributes.

The geometry branches are folding decoders: a fixed uniform lattice
([0,1]^2 for faces, [0,1] for edges) is concatenated with the feature
code, lifted through a first MLP, re-concatenated with the code, and
decoded to the per-point channels. The seventh face channel is the
trimming indicator stored as a pre-sigmoid logit.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

from .embed import EMBED_DIM
from .encoder import LatentBundle, MPNNLayer
from .gaag import EDGE_SAMPLES, GRID_HIGH


@dataclass
class ReconBundle:
    f_recon: torch.Tensor  # (n_faces, 256)
    e_recon: torch.Tensor  # (n_edges, 256)
    face_geom: torch.Tensor  # (n_faces, 13, 13, 7); channel 7 is a trim logit
    face_attr: torch.Tensor  # (n_faces, 16)
    edge_geom: torch.Tensor  # (n_edges, 13, 12)
    edge_attr: torch.Tensor  # (n_edges, 9)


class GraphDecoder(nn.Module):
    """Two message-passing layers with their own parameters."""

    def __init__(self, dim: int = EMBED_DIM):
        super().__init__()
        self.mpnn1 = MPNNLayer(dim)
        self.mpnn2 = MPNNLayer(dim)

    def forward(self, latent: LatentBundle, pairs: torch.Tensor):
        f, e = self.mpnn1(latent.f_latent, latent.e_latent, pairs)
        f, e = self.mpnn2(f, e, pairs)
        return f, e


def _stage_mlp(in_dim: int, out_dim: int) -> nn.Sequential:
    return nn.Sequential(
        nn.Linear(in_dim, 512), nn.ReLU(),
        nn.Linear(512, 512), nn.ReLU(),
        nn.Linear(512, out_dim),
    )


class FoldingFaceDecoder(nn.Module):
    """Folds a fixed 13x13 UV lattice into per-point 7D face geometry."""

    def __init__(self, dim: int = EMBED_DIM, grid: int = GRID_HIGH):
        super().__init__()
        self.grid = grid
        self.stage1 = _stage_mlp(dim + 2, 64)
        self.stage2 = _stage_mlp(dim + 64, 7)
        uv = torch.linspace(0.0, 1.0, grid)
        uu, vv = torch.meshgrid(uv, uv, indexing="ij")
        self.register_buffer("lattice", torch.stack([uu, vv], dim=-1).reshape(-1, 2))

    def forward(self, codes: torch.Tensor) -> torch.Tensor:
        n = codes.shape[0]
        m = self.lattice.shape[0]
        lattice = self.lattice.to(codes.dtype).unsqueeze(0).expand(n, m, 2)
        rep = codes.unsqueeze(1).expand(n, m, codes.shape[1])
        mid = self.stage1(torch.cat([rep, lattice], dim=-1))
        out = self.stage2(torch.cat([rep, mid], dim=-1))
        return out.reshape(n, self.grid, self.grid, 7)


class FoldingEdgeDecoder(nn.Module):
    """Folds a fixed 13-point parameter lattice into 12D edge geometry."""

    def __init__(self, dim: int = EMBED_DIM, samples: int = EDGE_SAMPLES):
        super().__init__()
        self.samples = samples
        self.stage1 = _stage_mlp(dim + 1, 64)
        self.stage2 = _stage_mlp(dim + 64, 12)
        self.register_buffer("lattice", torch.linspace(0.0, 1.0, samples).reshape(-1, 1))

    def forward(self, codes: torch.Tensor) -> torch.Tensor:
        n = codes.shape[0]
        m = self.samples
        lattice = self.lattice.to(codes.dtype).unsqueeze(0).expand(n, m, 1)
        rep = codes.unsqueeze(1).expand(n, m, codes.shape[1])
        mid = self.stage1(torch.cat([rep, lattice], dim=-1))
        out = self.stage2(torch.cat([rep, mid], dim=-1))
        return out.reshape(n, m, 12)


def _attr_head(out_dim: int, dim: int = EMBED_DIM) -> nn.Sequential:
    return nn.Sequential(
        nn.Linear(dim, dim), nn.LayerNorm(dim), nn.GELU(), nn.Linear(dim, out_dim),
    )


class BRepDecoder(nn.Module):
    """Four parallel branches: face/edge folding plus attribute heads."""

    def __init__(self, dim: int = EMBED_DIM):
        super().__init__()
        self.face_fold = FoldingFaceDecoder(dim)
        self.edge_fold = FoldingEdgeDecoder(dim)
        self.face_attr_head = _attr_head(16, dim)
        self.edge_attr_head = _attr_head(9, dim)

    def forward(self, f_recon: torch.Tensor, e_recon: torch.Tensor):
        face_geom = self.face_fold(f_recon)
        face_attr = self.face_attr_head(f_recon)
        if e_recon.shape[0] == 0:
            edge_geom = f_recon.new_zeros(0, EDGE_SAMPLES, 12)
            edge_attr = f_recon.new_zeros(0, 9)
        else:
            edge_geom = self.edge_fold(e_recon)
            edge_attr = self.edge_attr_head(e_recon)
        return face_geom, face_attr, edge_geom, edge_attr
