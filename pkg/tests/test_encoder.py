import numpy as np
import pytest
import torch

from brepae.embed import FeatureBundle
from brepae.encoder import (
    CSMABlock,
    CrossAttentionBlock,
    GraphEncoder,
    MPNNLayer,
    MultiHeadAttention,
    SelfAttentionBlock,
)
from brepae.errors import ContractError
from brepae.pretrain import collate_models

from util import (
    naive_layer_norm,
    naive_mha,
    naive_mpnn,
    naive_self_attention_block,
    random_tensors,
)


def _rand(n, dim=256, seed=0, dtype=torch.float32):
    g = torch.Generator().manual_seed(seed)
    return torch.randn(n, dim, generator=g, dtype=dtype)


def test_self_attention_matches_naive_oracle():
    torch.manual_seed(0)
    block = SelfAttentionBlock().eval()
    x = _rand(4, seed=1)
    with torch.no_grad():
        got = block(x).numpy()
    want = naive_self_attention_block(block, x.numpy().astype(np.float64))
    assert np.max(np.abs(got - want)) < 1e-5


def test_single_token_self_attention_closed_form():
    torch.manual_seed(1)
    block = SelfAttentionBlock().eval()
    x = _rand(1, seed=2)
    with torch.no_grad():
        got = block(x).numpy()
    # softmax over one key is exactly 1: attention reduces to out(v(x))
    xf = x.numpy().astype(np.float64)

    def lin(layer, v):
        return v @ layer.weight.detach().numpy().T + layer.bias.detach().numpy()

    att = lin(block.mha.out_proj, lin(block.mha.v_proj, xf))
    x1 = naive_layer_norm(xf + att, block.norm1)
    from util import gelu
    ffn = lin(block.ffn[3], gelu(lin(block.ffn[0], x1)))
    want = naive_layer_norm(x1 + ffn, block.norm2)
    assert np.max(np.abs(got - want)) < 1e-5


def test_identical_rows_stay_identical():
    torch.manual_seed(2)
    block = SelfAttentionBlock().eval()
    row = _rand(1, seed=3)
    x = torch.cat([row, row], dim=0)
    with torch.no_grad():
        out = block(x)
    assert torch.allclose(out[0], out[1], atol=1e-7)


def test_cross_attention_matches_naive_oracle():
    torch.manual_seed(3)
    ca = CrossAttentionBlock().eval()
    q, kv = _rand(3, seed=4), _rand(5, seed=5)
    with torch.no_grad():
        got = ca(q, kv).numpy()
    want = naive_mha(ca.mha, q.numpy().astype(np.float64),
                     kv.numpy().astype(np.float64))
    assert np.max(np.abs(got - want)) < 1e-5


def test_cross_attention_single_key():
    torch.manual_seed(4)
    ca = CrossAttentionBlock().eval()
    q, kv = _rand(6, seed=6), _rand(1, seed=7)
    with torch.no_grad():
        out = ca(q, kv)
    # softmax over a single key ignores the queries entirely
    expect = ca.mha.out_proj(ca.mha.v_proj(kv))
    assert torch.allclose(out, expect.expand_as(out), atol=1e-6)


def test_cross_attention_identical_keys():
    torch.manual_seed(5)
    ca = CrossAttentionBlock().eval()
    q = _rand(4, seed=8)
    kv = _rand(1, seed=9).repeat(7, 1)
    with torch.no_grad():
        out = ca(q, kv)
    expect = ca.mha.out_proj(ca.mha.v_proj(kv[:1]))
    assert torch.allclose(out, expect.expand_as(out), atol=1e-5)


def test_cross_attention_empty_kv_is_identity():
    torch.manual_seed(6)
    ca = CrossAttentionBlock().eval()
    q = _rand(3, seed=10)
    assert torch.equal(ca(q, torch.zeros(0, 256)), q)


def test_csma_shapes_and_empty_edges():
    torch.manual_seed(7)
    block = CSMABlock().eval()
    f_low, f_high, e = _rand(6, seed=11), _rand(6, seed=12), _rand(12, seed=13)
    with torch.no_grad():
        low, high = block(f_low, f_high, e)
    assert low.shape == (6, 256) and high.shape == (6, 256)

    with torch.no_grad():
        low2, high2 = block(f_low, f_high, torch.zeros(0, 256))
        inner = block.ca_high_low(f_high, block.sa_low(block.ca_low(f_low, f_high)))
    assert torch.equal(high2, inner)  # second CA skipped on empty edges

    with pytest.raises(ContractError):
        block(torch.zeros(0, 256), torch.zeros(0, 256), e)


def test_csma_face_permutation_equivariance():
    torch.manual_seed(8)
    block = CSMABlock().double().eval()
    f_low, f_high = _rand(6, seed=14, dtype=torch.float64), _rand(6, seed=15, dtype=torch.float64)
    e = _rand(9, seed=16, dtype=torch.float64)
    perm = torch.randperm(6, generator=torch.Generator().manual_seed(0))
    with torch.no_grad():
        low, high = block(f_low, f_high, e)
        low_p, high_p = block(f_low[perm], f_high[perm], e)
    assert torch.allclose(low[perm], low_p, atol=1e-10)
    assert torch.allclose(high[perm], high_p, atol=1e-10)
    # permuting edge rows leaves the face streams untouched
    eperm = torch.randperm(9, generator=torch.Generator().manual_seed(1))
    with torch.no_grad():
        low_e, high_e = block(f_low, f_high, e[eperm])
    assert torch.allclose(high, high_e, atol=1e-10)


def test_mpnn_isolated_node_rule():
    torch.manual_seed(9)
    layer = MPNNLayer().eval()
    f = _rand(3, seed=17)
    e = torch.zeros(0, 256)
    pairs = torch.zeros(0, 2, dtype=torch.long)
    with torch.no_grad():
        out, e_out = layer(f, e, pairs)
        expect = layer.norm(f + layer.ffn(torch.zeros_like(f)))
    assert torch.equal(out, expect)
    assert e_out.shape == (0, 256)


def test_mpnn_matches_hand_unrolled_oracle():
    torch.manual_seed(10)
    layer = MPNNLayer().double().eval()
    f = _rand(2, seed=18, dtype=torch.float64)
    e = _rand(1, seed=19, dtype=torch.float64)
    pairs = torch.tensor([[0, 1]])
    with torch.no_grad():
        got_f, got_e = layer(f, e, pairs)
    want_f, want_e = naive_mpnn(layer, f.numpy(), e.numpy(), pairs.numpy())
    assert np.max(np.abs(got_f.numpy() - want_f)) < 1e-6
    assert np.max(np.abs(got_e.numpy() - want_e)) < 1e-6


def test_mpnn_matches_oracle_on_larger_graph():
    torch.manual_seed(11)
    layer = MPNNLayer().double().eval()
    t = random_tensors(5, 7, seed=20, dtype=torch.float64)
    f = _rand(5, seed=21, dtype=torch.float64)
    e = _rand(7, seed=22, dtype=torch.float64)
    pairs = t["pairs"]
    with torch.no_grad():
        got_f, got_e = layer(f, e, pairs)
    want_f, want_e = naive_mpnn(layer, f.numpy(), e.numpy(), pairs.numpy())
    assert np.max(np.abs(got_f.numpy() - want_f)) < 1e-6
    assert np.max(np.abs(got_e.numpy() - want_e)) < 1e-6


def test_mpnn_permutation_equivariance():
    torch.manual_seed(12)
    layer = MPNNLayer().double().eval()
    f = _rand(5, seed=23, dtype=torch.float64)
    e = _rand(6, seed=24, dtype=torch.float64)
    pairs = torch.tensor([[0, 1], [1, 2], [2, 3], [3, 4], [4, 0], [1, 3]])
    perm = torch.tensor([2, 0, 4, 1, 3])  # node relabeling
    inv = torch.argsort(perm)
    pairs_relabel = inv[pairs]
    with torch.no_grad():
        out_f, out_e = layer(f, e, pairs)
        out_f2, out_e2 = layer(f[perm], e, pairs_relabel)
    assert torch.allclose(out_f[perm], out_f2, atol=1e-10)
    assert torch.allclose(out_e, out_e2, atol=1e-10)


def _bundle(t, seed=0, dtype=torch.float32):
    n_f = t["face_low"].shape[0]
    n_e = t["edge_geom"].shape[0]
    return FeatureBundle(_rand(n_f, seed=seed, dtype=dtype),
                         _rand(n_f, seed=seed + 1, dtype=dtype),
                         _rand(n_e, seed=seed + 2, dtype=dtype))


def test_graph_encode_shapes_and_determinism():
    torch.manual_seed(13)
    enc = GraphEncoder().eval()
    t = random_tensors(6, 9, seed=25)
    bundle = _bundle(t, seed=26)
    with torch.no_grad():
        a = enc(bundle, t["pairs"])
        b = enc(bundle, t["pairs"])
    assert a.f_latent.shape == (6, 256)
    assert a.e_latent.shape == (9, 256)
    assert torch.equal(a.f_latent, b.f_latent)
    assert torch.equal(a.e_latent, b.e_latent)


def test_adjacency_does_not_leak_into_csma():
    torch.manual_seed(14)
    enc = GraphEncoder().eval()
    t = random_tensors(6, 9, seed=27)
    bundle = _bundle(t, seed=28)
    shuffled = t["pairs"][torch.randperm(9, generator=torch.Generator().manual_seed(2))]
    rewired = torch.stack([shuffled[:, 1], shuffled[:, 0]], dim=1)
    with torch.no_grad():
        low1, high1 = enc.csma2(*enc.csma1(bundle.f_low, bundle.f_high, bundle.e),
                                bundle.e)
        low2, high2 = enc.csma2(*enc.csma1(bundle.f_low, bundle.f_high, bundle.e),
                                bundle.e)
        full_a = enc(bundle, t["pairs"])
        full_b = enc(bundle, rewired)
    assert torch.equal(low1, low2) and torch.equal(high1, high2)
    # rewiring the adjacency only moves the message-passing outputs
    assert not torch.equal(full_a.f_latent, full_b.f_latent)


def test_graph_encode_end_to_end_permutation_equivariance():
    torch.manual_seed(15)
    enc = GraphEncoder().double().eval()
    t = random_tensors(7, 11, seed=29, dtype=torch.float64)
    bundle = _bundle(t, seed=30, dtype=torch.float64)
    perm = torch.randperm(7, generator=torch.Generator().manual_seed(3))
    inv = torch.argsort(perm)
    eperm = torch.randperm(11, generator=torch.Generator().manual_seed(4))
    pairs_p = inv[t["pairs"]][eperm]
    bundle_p = FeatureBundle(bundle.f_low[perm], bundle.f_high[perm],
                             bundle.e[eperm])
    with torch.no_grad():
        a = enc(bundle, t["pairs"])
        b = enc(bundle_p, pairs_p)
    assert torch.allclose(a.f_latent[perm], b.f_latent, atol=1e-8)
    assert torch.allclose(a.e_latent[eperm], b.e_latent, atol=1e-8)


def test_attention_rows_sum_to_one():
    torch.manual_seed(16)
    mha = MultiHeadAttention().eval()
    q, kv = _rand(5, seed=31), _rand(8, seed=32)
    qh = mha.q_proj(q).reshape(5, 8, 32).transpose(0, 1)
    kh = mha.k_proj(kv).reshape(8, 8, 32).transpose(0, 1)
    att = torch.softmax(qh @ kh.transpose(-1, -2) / np.sqrt(32), dim=-1)
    assert torch.allclose(att.sum(dim=-1), torch.ones(8, 5), atol=1e-6)


def test_batched_equals_per_model():
    torch.manual_seed(17)
    enc = GraphEncoder().eval()
    t1 = random_tensors(5, 7, seed=33)
    t2 = random_tensors(4, 6, seed=34)
    batch, _ = collate_models([t1, t2])
    b1, b2 = _bundle(t1, seed=35), _bundle(t2, seed=36)
    joint = FeatureBundle(torch.cat([b1.f_low, b2.f_low]),
                          torch.cat([b1.f_high, b2.f_high]),
                          torch.cat([b1.e, b2.e]))
    with torch.no_grad():
        packed = enc(joint, batch["pairs"], batch["face_slices"],
                     batch["edge_slices"])
        solo1 = enc(b1, t1["pairs"])
        solo2 = enc(b2, t2["pairs"])
    assert torch.allclose(packed.f_latent[:5], solo1.f_latent, atol=1e-5)
    assert torch.allclose(packed.f_latent[5:], solo2.f_latent, atol=1e-5)
    assert torch.allclose(packed.e_latent[:7], solo1.e_latent, atol=1e-5)
    assert torch.allclose(packed.e_latent[7:], solo2.e_latent, atol=1e-5)
