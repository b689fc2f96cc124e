import math

import numpy as np
import pytest
import torch

from brepae.embed import MaskSpec, make_mask
from brepae.pretrain import (
    LossWeights,
    MaskedBRepAutoencoder,
    batched_losses,
    collate_models,
    loss_edge_attr,
    loss_edge_geom,
    loss_face_attr,
    loss_face_geom,
    loss_feat,
)

from util import random_tensors


def _mask(faces, edges):
    return MaskSpec(np.asarray(faces, dtype=np.int64),
                    np.asarray(edges, dtype=np.int64), 0.0, 0)


def _randn(*shape, seed=0, dtype=torch.float64):
    g = torch.Generator().manual_seed(seed)
    return torch.randn(*shape, generator=g, dtype=dtype)


def test_loss_feat_zero_on_exact_reconstruction():
    f = _randn(5, 256, seed=1)
    e = _randn(7, 256, seed=2)
    mask = _mask([0, 2], [1, 3, 4])
    assert float(loss_feat(f, e, f.clone(), e.clone(), mask)) == 0.0


def test_loss_feat_empty_mask_is_zero():
    f = _randn(5, 256, seed=3)
    e = _randn(7, 256, seed=4)
    assert float(loss_feat(f, e, f + 1, e + 1, _mask([], []))) == 0.0


def test_loss_feat_matches_double_loop_oracle():
    f_r, f_t = _randn(3, 256, seed=5), _randn(3, 256, seed=6)
    e_r, e_t = _randn(4, 256, seed=7), _randn(4, 256, seed=8)
    mask = _mask([0, 2], [1, 3])
    got = float(loss_feat(f_r, e_r, f_t, e_t, mask))
    # mean squared error over the masked rows and all 256 channels
    want = 0.0
    for i in mask.masked_faces:
        want += sum((float(f_r[i, c]) - float(f_t[i, c])) ** 2
                    for c in range(256)) / (len(mask.masked_faces) * 256)
    for i in mask.masked_edges:
        want += sum((float(e_r[i, c]) - float(e_t[i, c])) ** 2
                    for c in range(256)) / (len(mask.masked_edges) * 256)
    assert abs(got - want) < 1e-10


def test_loss_face_geom_perfect_prediction():
    truth = _randn(2, 13, 13, 7, seed=9)
    truth[..., 3:6] /= truth[..., 3:6].norm(dim=-1, keepdim=True)
    truth[..., 6] = (truth[..., 6] > 0).double()
    pred = truth.clone()
    pred[..., 6] = torch.where(truth[..., 6] > 0.5, 40.0, -40.0)  # saturate
    total, coord, normal, trim = loss_face_geom(pred, truth, LossWeights())
    assert float(coord) == 0.0
    assert float(normal) == 0.0
    assert float(trim) <= 2e-7  # clamp floor


def test_loss_face_geom_trim_half_probability_is_ln2():
    truth = torch.zeros(1, 13, 13, 7, dtype=torch.float64)
    truth[..., 6] = 1.0
    pred = truth.clone()
    pred[..., 6] = 0.0  # sigmoid(0) = 0.5
    _, _, _, trim = loss_face_geom(pred, truth, LossWeights())
    assert abs(float(trim) - math.log(2.0)) < 1e-12


def test_loss_face_geom_matches_loop_oracle():
    w = LossWeights()
    truth = _randn(2, 13, 13, 7, seed=10)
    truth[..., 6] = (truth[..., 6] > 0).double()
    pred = _randn(2, 13, 13, 7, seed=11)
    total, coord, normal, trim = loss_face_geom(pred, truth, w)
    pc = pred.reshape(-1, 7).numpy()
    tc = truth.reshape(-1, 7).numpy()
    n = len(pc)
    coord_o = sum(np.sum((pc[i, 0:3] - tc[i, 0:3]) ** 2) for i in range(n)) / n
    normal_o = sum(np.sum((pc[i, 3:6] - tc[i, 3:6]) ** 2) for i in range(n)) / n
    eps = 1e-7
    trim_o = 0.0
    for i in range(n):
        p = min(max(1.0 / (1.0 + math.exp(-pc[i, 6])), eps), 1 - eps)
        trim_o += -(tc[i, 6] * math.log(p) + (1 - tc[i, 6]) * math.log(1 - p))
    trim_o /= n
    assert abs(float(coord) - coord_o) < 1e-9
    assert abs(float(normal) - normal_o) < 1e-9
    assert abs(float(trim) - trim_o) < 1e-9
    assert abs(float(total) - (w.coord * coord_o + w.normal * normal_o
                               + w.trim * trim_o)) < 1e-9


def test_loss_face_attr_single_channel_unit_error():
    truth = torch.zeros(1, 16, dtype=torch.float64)
    pred = truth.clone()
    pred[0, 3] = 1.0
    assert float(loss_face_attr(pred, truth)) == 1.0


def test_attr_and_edge_losses_match_loop_oracles():
    fp, ft = _randn(3, 16, seed=12), _randn(3, 16, seed=13)
    got = float(loss_face_attr(fp, ft))
    want = np.mean([np.sum((fp[i].numpy() - ft[i].numpy()) ** 2) for i in range(3)])
    assert abs(got - want) < 1e-10

    ep, et = _randn(4, 13, 12, seed=14), _randn(4, 13, 12, seed=15)
    got = float(loss_edge_geom(ep, et))
    want = np.mean([np.sum((ep.reshape(-1, 12)[i].numpy()
                            - et.reshape(-1, 12)[i].numpy()) ** 2)
                    for i in range(4 * 13)])
    assert abs(got - want) < 1e-10

    ap, at = _randn(5, 9, seed=16), _randn(5, 9, seed=17)
    got = float(loss_edge_attr(ap, at))
    want = np.mean([np.sum((ap[i].numpy() - at[i].numpy()) ** 2) for i in range(5)])
    assert abs(got - want) < 1e-10

    empty = torch.zeros(0, 13, 12, dtype=torch.float64)
    assert float(loss_edge_geom(empty, empty)) == 0.0
    assert float(loss_edge_attr(empty[:, 0, :9], empty[:, 0, :9])) == 0.0


def test_total_is_exact_weighted_sum():
    torch.manual_seed(0)
    model = MaskedBRepAutoencoder().eval()
    t = random_tensors(6, 9, seed=18)
    mask = make_mask(6, 9, 0.7, seed=19)
    w = LossWeights()
    rep = model.losses(t, mask, w)
    expect = (w.feat * rep.feat + w.face_geom * rep.face_geom
              + w.face_attr * rep.face_attr + w.edge_geom * rep.edge_geom
              + w.edge_attr * rep.edge_attr)
    assert torch.equal(rep.total, expect)
    for name in ("feat", "face_geom", "face_attr", "edge_geom", "edge_attr"):
        assert rep.detached()[name] >= 0.0


def test_targets_are_detached_and_change_with_input():
    torch.manual_seed(1)
    model = MaskedBRepAutoencoder().eval()
    t = random_tensors(5, 7, seed=20)
    f_t, e_t = model.build_targets(t)
    assert not f_t.requires_grad
    assert not e_t.requires_grad

    # a loss made only of targets sends no gradient into the embedder
    params = list(model.brep_encoder.parameters())
    fake = torch.zeros_like(f_t, requires_grad=True)
    loss = (fake - f_t).square().sum()
    loss.backward()
    assert all(p.grad is None for p in params)

    t2 = {k: (v.clone() if torch.is_tensor(v) else v) for k, v in t.items()}
    t2["face_high"][0] += 1.0
    f_t2, _ = model.build_targets(t2)
    assert not torch.equal(f_t, f_t2)


def test_empty_mask_targets_equal_masked_branch():
    torch.manual_seed(2)
    model = MaskedBRepAutoencoder().eval()
    t = random_tensors(4, 6, seed=21)
    mask = make_mask(4, 6, 0.0, seed=0)
    bundle = model.embed_masked(t, mask)
    f_t, e_t = model.build_targets(t)
    assert torch.allclose(bundle.f_high, f_t, atol=1e-7)
    assert torch.allclose(bundle.e, e_t, atol=1e-7)


def test_feature_loss_only_sees_masked_entities():
    torch.manual_seed(3)
    model = MaskedBRepAutoencoder().eval()
    t = random_tensors(6, 9, seed=22)
    mask = make_mask(6, 9, 0.5, seed=23)
    recon = model.reconstruct(t, mask)
    f_t, e_t = model.build_targets(t)
    base = float(loss_feat(recon.f_recon, recon.e_recon, f_t, e_t, mask))
    visible = [i for i in range(6) if i not in mask.masked_faces]
    f_t2 = f_t.clone()
    f_t2[visible[0]] += 5.0
    assert float(loss_feat(recon.f_recon, recon.e_recon, f_t2, e_t, mask)) == base
    f_t3 = f_t.clone()
    f_t3[mask.masked_faces[0]] += 5.0
    assert float(loss_feat(recon.f_recon, recon.e_recon, f_t3, e_t, mask)) != base


def test_batched_losses_match_sequential():
    torch.manual_seed(4)
    model = MaskedBRepAutoencoder().eval()
    tl = [random_tensors(5, 7, seed=24), random_tensors(7, 10, seed=25)]
    ml = [make_mask(5, 7, 0.7, seed=26), make_mask(7, 10, 0.7, seed=27)]
    with torch.no_grad():
        mean_rep, reports = batched_losses(model, tl, ml, LossWeights())
        solo = [model.losses(t, m) for t, m in zip(tl, ml)]
    for got, want in zip(reports, solo):
        for name in ("feat", "face_geom", "face_attr", "edge_geom",
                     "edge_attr", "total"):
            a, b = float(getattr(got, name)), float(getattr(want, name))
            assert abs(a - b) <= 1e-4 * max(1.0, abs(b))
    stacked = float(torch.stack([r.total for r in reports]).mean())
    assert abs(float(mean_rep.total) - stacked) < 1e-6
