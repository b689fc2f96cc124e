"""Shared test helpers: synthetic graph tensors and naive reference
implementations used as independent oracles."""

import numpy as np
import torch

from brepae.gaag import GAAG
from brepae.embed import gaag_to_tensors


def ring_adjacency(n_faces: int, n_edges: int):
    """A connected adjacency: a face ring plus extra chords."""
    adj = []
    for k in range(n_edges):
        i = k % n_faces
        j = (i + 1 + (k // n_faces)) % n_faces
        if i == j:
            j = (j + 1) % n_faces
        adj.append((i, j, k))
    return adj


def random_gaag(n_faces: int, n_edges: int, seed: int = 0) -> GAAG:
    """Structurally valid gAAG with random payloads (no real geometry)."""
    rng = np.random.default_rng(seed)
    return GAAG(
        n_faces=n_faces,
        n_edges=n_edges,
        face_grids_low=rng.normal(size=(n_faces, 3, 3, 7)),
        face_grids_high=rng.normal(size=(n_faces, 13, 13, 7)),
        face_attrs=rng.normal(size=(n_faces, 16)),
        edge_samples=rng.normal(size=(n_edges, 13, 12)),
        edge_attrs=rng.normal(size=(n_edges, 9)),
        adjacency=ring_adjacency(n_faces, n_edges),
        face_labels=[int(x) for x in rng.integers(0, 5, n_faces)],
        shape_label=int(rng.integers(0, 4)),
    )


def random_tensors(n_faces: int, n_edges: int, seed: int = 0,
                   dtype=torch.float32) -> dict:
    g = random_gaag(n_faces, n_edges, seed)
    g.face_grids_high[..., 6] = (g.face_grids_high[..., 6] > 0).astype(float)
    return gaag_to_tensors(g, dtype=dtype)


def naive_mha(mha, query: np.ndarray, keyval: np.ndarray) -> np.ndarray:
    """Reference multi-head attention with explicit per-head loops."""
    def lin(layer, x):
        return x @ layer.weight.detach().numpy().T + layer.bias.detach().numpy()

    q = lin(mha.q_proj, query)
    k = lin(mha.k_proj, keyval)
    v = lin(mha.v_proj, keyval)
    h, d = mha.heads, mha.head_dim
    outs = []
    for head in range(h):
        qs = q[:, head * d:(head + 1) * d]
        ks = k[:, head * d:(head + 1) * d]
        vs = v[:, head * d:(head + 1) * d]
        scores = qs @ ks.T / np.sqrt(d)
        scores = scores - scores.max(axis=1, keepdims=True)
        p = np.exp(scores)
        p = p / p.sum(axis=1, keepdims=True)
        outs.append(p @ vs)
    return lin(mha.out_proj, np.concatenate(outs, axis=1))


def naive_layer_norm(x: np.ndarray, ln) -> np.ndarray:
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    xhat = (x - mu) / np.sqrt(var + ln.eps)
    return xhat * ln.weight.detach().numpy() + ln.bias.detach().numpy()


def gelu(x: np.ndarray) -> np.ndarray:
    from scipy.special import erf

    return 0.5 * x * (1.0 + erf(x / np.sqrt(2.0)))


def naive_self_attention_block(block, x: np.ndarray) -> np.ndarray:
    """Post-LN transformer layer replicated in numpy (eval mode)."""
    def lin(layer, v):
        return v @ layer.weight.detach().numpy().T + layer.bias.detach().numpy()

    x1 = naive_layer_norm(x + naive_mha(block.mha, x, x), block.norm1)
    hidden = gelu(lin(block.ffn[0], x1))
    ffn = lin(block.ffn[3], hidden)
    return naive_layer_norm(x1 + ffn, block.norm2)


def naive_mpnn(layer, f: np.ndarray, e: np.ndarray, pairs: np.ndarray):
    """Reference message-passing layer with explicit loops."""
    def lin(mod, x):
        return x @ mod.weight.detach().numpy().T + mod.bias.detach().numpy()

    def relu(x):
        return np.maximum(x, 0.0)

    def leaky(x):
        return np.where(x >= 0, x, 0.2 * x)

    n, n_e = f.shape[0], e.shape[0]
    a = layer.att_vec.detach().numpy()
    e_dir = {}
    for k in range(n_e):
        i, j = pairs[k]
        for src, dst in ((j, i), (i, j)):
            z = np.concatenate([f[src], f[dst], e[k]])
            e_dir[(src, dst, k)] = lin(layer.edge_mlp[2],
                                       relu(lin(layer.edge_mlp[0], z)))
    e_new = np.stack([
        0.5 * (e_dir[(pairs[k][1], pairs[k][0], k)]
               + e_dir[(pairs[k][0], pairs[k][1], k)])
        for k in range(n_e)]) if n_e else e.copy()

    f_out = np.zeros_like(f)
    for node in range(n):
        incoming = [(src, dst, k) for (src, dst, k) in e_dir if dst == node]
        if incoming:
            logits = np.array([
                leaky(lin(layer.att_dst, f[node]) + lin(layer.att_src, f[src])
                      + lin(layer.att_edge, e_dir[key])) @ a
                for key in incoming for src in [key[0]]])
            logits = logits - logits.max()
            alpha = np.exp(logits) / np.exp(logits).sum()
            msg = sum(w * (lin(layer.value, f[key[0]]) + e_dir[key])
                      for w, key in zip(alpha, incoming))
        else:
            msg = np.zeros(f.shape[1])
        hidden = gelu(lin(layer.ffn[0], msg))
        upd = f[node] + lin(layer.ffn[2], hidden)
        f_out[node] = naive_layer_norm(upd, layer.norm)
    return f_out, e_new
