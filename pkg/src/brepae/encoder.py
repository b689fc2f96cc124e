"""Hierarchical graph-transformer encoder.

Two stacked cross-scale blocks let the sparse low-resolution face stream
query the dense high-resolution stream (then refine itself with
self-attention), after which the high stream queries the refined low
stream and the edge features. Attention is global across all faces of
one model; the explicit adjacency only enters afterwards, through two
message-passing layers that update node and edge features jointly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
from torch import nn

from .embed import EMBED_DIM, FeatureBundle
from .errors import ContractError

ATTN_HEADS = 8
FFN_HIDDEN = 1024
DROPOUT = 0.3


@dataclass
class LatentBundle:
    f_latent: torch.Tensor  # (n_faces, 256)
    e_latent: torch.Tensor  # (n_edges, 256)


class MultiHeadAttention(nn.Module):
    """Plain scaled dot-product attention over unbatched (n, dim) rows.

    `attn_mask` (n_q, n_kv, True = may attend) restricts attention, e.g.
    to block-diagonal per-model scopes when several graphs share one
    tensor. Rows with no allowed key fall back to uniform attention and
    are expected to be overwritten by the caller.
    """

    def __init__(self, dim: int = EMBED_DIM, heads: int = ATTN_HEADS):
        super().__init__()
        if dim % heads:
            raise ContractError("embedding dim must be divisible by head count")
        self.heads = heads
        self.head_dim = dim // heads
        self.q_proj = nn.Linear(dim, dim)
        self.k_proj = nn.Linear(dim, dim)
        self.v_proj = nn.Linear(dim, dim)
        self.out_proj = nn.Linear(dim, dim)

    def forward(self, query: torch.Tensor, keyval: torch.Tensor,
                attn_mask: torch.Tensor | None = None) -> torch.Tensor:
        n_q = query.shape[0]
        n_kv = keyval.shape[0]
        h, d = self.heads, self.head_dim
        q = self.q_proj(query).reshape(n_q, h, d).transpose(0, 1)
        k = self.k_proj(keyval).reshape(n_kv, h, d).transpose(0, 1)
        v = self.v_proj(keyval).reshape(n_kv, h, d).transpose(0, 1)
        scores = q @ k.transpose(-1, -2) / math.sqrt(d)
        if attn_mask is not None:
            scores = scores.masked_fill(~attn_mask.unsqueeze(0), float("-inf"))
            dead = ~attn_mask.any(dim=-1)
            if bool(dead.any()):
                # keep softmax finite; caller discards these rows
                scores = torch.where(dead[None, :, None],
                                     torch.zeros_like(scores), scores)
        att = torch.softmax(scores, dim=-1)
        out = (att @ v).transpose(0, 1).reshape(n_q, h * d)
        return self.out_proj(out)


class SelfAttentionBlock(nn.Module):
    """Post-LayerNorm transformer encoder layer."""

    def __init__(self, dim: int = EMBED_DIM, dropout: float = DROPOUT):
        super().__init__()
        self.mha = MultiHeadAttention(dim)
        self.norm1 = nn.LayerNorm(dim)
        self.norm2 = nn.LayerNorm(dim)
        self.ffn = nn.Sequential(
            nn.Linear(dim, FFN_HIDDEN), nn.GELU(), nn.Dropout(dropout),
            nn.Linear(FFN_HIDDEN, dim), nn.Dropout(dropout),
        )

    def forward(self, x: torch.Tensor,
                attn_mask: torch.Tensor | None = None) -> torch.Tensor:
        if x.shape[0] == 0:
            raise ContractError("self-attention needs at least one row")
        x = self.norm1(x + self.mha(x, x, attn_mask))
        return self.norm2(x + self.ffn(x))


class CrossAttentionBlock(nn.Module):
    """A bare multi-head attention aggregator: no residual, no FFN.

    An empty key/value set degenerates to the identity so single-face or
    edgeless graphs still flow through; in a batch the same rule applies
    per query row via the attention mask.
    """

    def __init__(self, dim: int = EMBED_DIM):
        super().__init__()
        self.mha = MultiHeadAttention(dim)

    def forward(self, query: torch.Tensor, keyval: torch.Tensor,
                attn_mask: torch.Tensor | None = None) -> torch.Tensor:
        if keyval.shape[0] == 0:
            return query
        out = self.mha(query, keyval, attn_mask)
        if attn_mask is not None:
            dead = ~attn_mask.any(dim=-1)
            if bool(dead.any()):
                out = torch.where(dead[:, None], query, out)
        return out


class CSMABlock(nn.Module):
    """One cross-scale mutual attention block.

    low' = SA(CA(low, high)); high' = CA(CA(high, low'), edges). Attention
    is global within the model; adjacency plays no role here.
    """

    def __init__(self, dim: int = EMBED_DIM, dropout: float = DROPOUT):
        super().__init__()
        self.ca_low = CrossAttentionBlock(dim)
        self.sa_low = SelfAttentionBlock(dim, dropout)
        self.ca_high_low = CrossAttentionBlock(dim)
        self.ca_high_edge = CrossAttentionBlock(dim)

    def forward(self, f_low, f_high, e, face_mask=None, edge_mask=None):
        if f_low.shape[0] == 0:
            raise ContractError("cross-scale attention needs at least one face")
        low = self.sa_low(self.ca_low(f_low, f_high, face_mask), face_mask)
        high = self.ca_high_edge(self.ca_high_low(f_high, low, face_mask),
                                 e, edge_mask)
        return low, high


class MPNNLayer(nn.Module):
    """Edge update, attention-weighted aggregation, and node update.

    Each stored undirected edge is expanded into both directions; the two
    directed edge updates are averaged back into one stored edge feature.
    Aggregation is single-head additive attention over incoming messages,
    with the updated edge feature entering both the logits and the
    messages. Isolated nodes aggregate a zero message.
    """

    def __init__(self, dim: int = EMBED_DIM):
        super().__init__()
        self.edge_mlp = nn.Sequential(
            nn.Linear(3 * dim, dim), nn.ReLU(), nn.Linear(dim, dim),
        )
        self.att_dst = nn.Linear(dim, dim)
        self.att_src = nn.Linear(dim, dim)
        self.att_edge = nn.Linear(dim, dim)
        self.att_vec = nn.Parameter(torch.empty(dim))
        nn.init.uniform_(self.att_vec, -1.0 / math.sqrt(dim), 1.0 / math.sqrt(dim))
        self.leaky = nn.LeakyReLU(0.2)
        self.value = nn.Linear(dim, dim)
        self.ffn = nn.Sequential(
            nn.Linear(dim, 2 * dim), nn.GELU(), nn.Linear(2 * dim, dim),
        )
        self.norm = nn.LayerNorm(dim)

    def forward(self, f: torch.Tensor, e: torch.Tensor, pairs: torch.Tensor):
        n = f.shape[0]
        n_e = e.shape[0]
        if pairs.shape[0] != n_e:
            raise ContractError("adjacency rows must match edge feature rows")
        if n_e == 0:
            msg = torch.zeros_like(f)
            return self.norm(f + self.ffn(msg)), e
        i, j = pairs[:, 0], pairs[:, 1]
        src = torch.cat([j, i])
        dst = torch.cat([i, j])
        eid = torch.arange(n_e, device=f.device).repeat(2)
        e_dir = self.edge_mlp(torch.cat([f[src], f[dst], e[eid]], dim=1))
        e_new = 0.5 * (e_dir[:n_e] + e_dir[n_e:])

        logits = self.leaky(self.att_dst(f[dst]) + self.att_src(f[src])
                            + self.att_edge(e_dir)) @ self.att_vec
        top = torch.full((n,), -torch.inf, dtype=logits.dtype, device=f.device)
        top = top.scatter_reduce(0, dst, logits, reduce="amax", include_self=True)
        ex = torch.exp(logits - top[dst])
        denom = torch.zeros(n, dtype=ex.dtype, device=f.device).index_add(0, dst, ex)
        alpha = ex / denom[dst]
        contrib = alpha.unsqueeze(1) * (self.value(f[src]) + e_dir)
        msg = torch.zeros_like(f).index_add(0, dst, contrib)
        return self.norm(f + self.ffn(msg)), e_new


def block_diagonal_mask(q_slices, kv_slices, n_q: int, n_kv: int,
                        device=None) -> torch.Tensor:
    """True where a query row and key column belong to the same model."""
    mask = torch.zeros(n_q, n_kv, dtype=torch.bool, device=device)
    for (qs, qe), (ks, ke) in zip(q_slices, kv_slices):
        mask[qs:qe, ks:ke] = True
    return mask


class GraphEncoder(nn.Module):
    """Two cross-scale blocks, then two message-passing layers on the
    high-resolution stream and the explicit adjacency.

    When `face_slices`/`edge_slices` describe several models packed into
    one tensor, block-diagonal masks keep all attention within each model;
    message passing is scoped by the adjacency itself.
    """

    def __init__(self, dim: int = EMBED_DIM, dropout: float = DROPOUT):
        super().__init__()
        self.csma1 = CSMABlock(dim, dropout)
        self.csma2 = CSMABlock(dim, dropout)
        self.mpnn1 = MPNNLayer(dim)
        self.mpnn2 = MPNNLayer(dim)

    def forward(self, bundle: FeatureBundle, pairs: torch.Tensor,
                face_slices=None, edge_slices=None) -> LatentBundle:
        face_mask = edge_mask = None
        if face_slices is not None:
            n_f = bundle.f_low.shape[0]
            n_e = bundle.e.shape[0]
            dev = bundle.f_low.device
            face_mask = block_diagonal_mask(face_slices, face_slices, n_f, n_f, dev)
            edge_mask = block_diagonal_mask(face_slices, edge_slices, n_f, n_e, dev)
        low, high = self.csma1(bundle.f_low, bundle.f_high, bundle.e,
                               face_mask, edge_mask)
        low, high = self.csma2(low, high, bundle.e, face_mask, edge_mask)
        f, e = self.mpnn1(high, bundle.e, pairs)
        f, e = self.mpnn2(f, e, pairs)
        return LatentBundle(f, e)
