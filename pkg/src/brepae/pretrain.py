"""Masked pre-training: target construction with stop-gradient, the
five-term objective, and the optimization loop.

The latent feature term compares decoder-reconstructed node/edge features
against detached targets produced by re-encoding the original (unmasked)
inputs, and is averaged over the masked entities only. The four explicit
reconstruction terms (face geometry split into coordinate / normal / trim
parts, face attributes, edge geometry, edge attributes) are averaged over
every entity of the model. Squared-error terms sum over channels and
average over entities or sample points.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .corpus import load_manifest
from .decoder import BRepDecoder, GraphDecoder, ReconBundle
from .embed import (
    BRepEncoder,
    FeatureBundle,
    MaskSpec,
    MaskTokens,
    apply_mask,
    gaag_to_tensors,
    make_mask,
    zero_masked_inputs,
)
from .encoder import GraphEncoder
from .errors import NumericError
from .gaag import read_gaag

BCE_EPS = 1e-7

LOSS_COLUMNS = ("total", "feat", "face_geom", "face_attr", "edge_geom", "edge_attr")


@dataclass
class LossWeights:
    feat: float = 1.0
    face_geom: float = 1.0
    face_attr: float = 0.3
    edge_geom: float = 0.5
    edge_attr: float = 0.3
    coord: float = 1.0
    normal: float = 0.5
    trim: float = 0.3


@dataclass
class LossReport:
    """The five loss components, their sub-terms, and the weighted total."""

    feat: torch.Tensor
    face_geom: torch.Tensor
    face_attr: torch.Tensor
    edge_geom: torch.Tensor
    edge_attr: torch.Tensor
    coord: torch.Tensor
    normal: torch.Tensor
    trim: torch.Tensor
    total: torch.Tensor

    def detached(self) -> dict:
        return {f.name: float(getattr(self, f.name).detach()) for f in fields(self)}


@dataclass
class TrainConfig:
    lr: float = 1e-4
    batch_size: int = 8  # desk-scale default; large-scale runs use 128
    epochs: int = 50
    mask_ratio: float = 0.7
    seed: int = 0
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    weights: LossWeights = field(default_factory=LossWeights)


def loss_feat(f_recon, e_recon, f_target, e_target, mask: MaskSpec) -> torch.Tensor:
    """Feature alignment on masked rows only; empty sets contribute 0.

    Averaged over the masked entities and the 256 channels. Channel
    averaging keeps this term on the same scale as the explicit
    reconstruction terms; with a channel sum it is two orders of magnitude
    larger, swamps the geometry anchors, and drives the online encoder
    toward constant features.
    """
    total = f_recon.new_zeros(())
    mf = mask.masked_faces
    me = mask.masked_edges
    if len(mf):
        total = total + (f_recon[mf] - f_target[mf]).square().mean()
    if len(me):
        total = total + (e_recon[me] - e_target[me]).square().mean()
    return total


def loss_face_geom(pred, truth, weights: LossWeights):
    """Weighted coordinate/normal MSE plus trim BCE over all grid points.

    `pred` carries a pre-sigmoid trim logit in channel 7; the probability
    is clamped away from {0, 1} before the log.
    """
    coord = (pred[..., 0:3] - truth[..., 0:3]).square().sum(dim=-1).mean()
    normal = (pred[..., 3:6] - truth[..., 3:6]).square().sum(dim=-1).mean()
    prob = torch.sigmoid(pred[..., 6]).clamp(BCE_EPS, 1.0 - BCE_EPS)
    tau = truth[..., 6]
    trim = -(tau * torch.log(prob) + (1.0 - tau) * torch.log(1.0 - prob)).mean()
    total = weights.coord * coord + weights.normal * normal + weights.trim * trim
    return total, coord, normal, trim


def loss_face_attr(pred, truth) -> torch.Tensor:
    return (pred - truth).square().sum(dim=1).mean()


def loss_edge_geom(pred, truth) -> torch.Tensor:
    if pred.shape[0] == 0:
        return pred.new_zeros(())
    return (pred - truth).square().sum(dim=-1).mean()


def loss_edge_attr(pred, truth) -> torch.Tensor:
    if pred.shape[0] == 0:
        return pred.new_zeros(())
    return (pred - truth).square().sum(dim=1).mean()


class MaskedBRepAutoencoder(nn.Module):
    """The full pre-training network: entity embedder, mask tokens,
    hierarchical graph encoder, graph decoder, and explicit decoders."""

    def __init__(self):
        super().__init__()
        self.brep_encoder = BRepEncoder()
        self.mask_tokens = MaskTokens()
        self.graph_encoder = GraphEncoder()
        self.graph_decoder = GraphDecoder()
        self.brep_decoder = BRepDecoder()

    def embed_masked(self, tensors: dict, mask: MaskSpec) -> FeatureBundle:
        """Zero masked raw inputs, encode, then substitute the mask tokens."""
        bundle = self.brep_encoder(zero_masked_inputs(tensors, mask))
        return apply_mask(bundle, mask, self.mask_tokens)

    def build_targets(self, tensors: dict):
        """Re-encode the original inputs; targets carry no gradient."""
        with torch.no_grad():
            bundle = self.brep_encoder(tensors)
        return bundle.f_high.detach(), bundle.e.detach()

    def reconstruct(self, tensors: dict, mask: MaskSpec) -> ReconBundle:
        bundle = self.embed_masked(tensors, mask)
        latent = self.graph_encoder(bundle, tensors["pairs"],
                                    tensors.get("face_slices"),
                                    tensors.get("edge_slices"))
        f_recon, e_recon = self.graph_decoder(latent, tensors["pairs"])
        face_geom, face_attr, edge_geom, edge_attr = self.brep_decoder(f_recon, e_recon)
        return ReconBundle(f_recon, e_recon, face_geom, face_attr,
                           edge_geom, edge_attr)

    def losses(self, tensors: dict, mask: MaskSpec,
               weights: LossWeights | None = None) -> LossReport:
        w = weights or LossWeights()
        recon = self.reconstruct(tensors, mask)
        f_t, e_t = self.build_targets(tensors)
        return compute_losses(recon, tensors, f_t, e_t, mask, w)


def compute_losses(recon: ReconBundle, tensors: dict, f_target, e_target,
                   mask: MaskSpec, weights: LossWeights) -> LossReport:
    face_truth = tensors["face_high"].permute(0, 2, 3, 1)
    edge_truth = tensors["edge_geom"].permute(0, 2, 1)
    l_feat = loss_feat(recon.f_recon, recon.e_recon, f_target, e_target, mask)
    l_fg, c, n, t = loss_face_geom(recon.face_geom, face_truth, weights)
    l_fa = loss_face_attr(recon.face_attr, tensors["face_attr"])
    l_eg = loss_edge_geom(recon.edge_geom, edge_truth)
    l_ea = loss_edge_attr(recon.edge_attr, tensors["edge_attr"])
    total = (weights.feat * l_feat + weights.face_geom * l_fg
             + weights.face_attr * l_fa + weights.edge_geom * l_eg
             + weights.edge_attr * l_ea)
    return LossReport(l_feat, l_fg, l_fa, l_eg, l_ea, c, n, t, total)


def _mean_report(reports: list) -> LossReport:
    def avg(name):
        return torch.stack([getattr(r, name) for r in reports]).mean()

    return LossReport(*[avg(k) for k in (
        "feat", "face_geom", "face_attr", "edge_geom", "edge_attr",
        "coord", "normal", "trim", "total")])


def collate_models(tensor_list: list, mask_list: list | None = None):
    """Pack several models into one tensor set for a batched forward pass.

    Faces and edges concatenate along dim 0; adjacency pairs shift by each
    model's face offset; per-model slices let the encoder scope attention
    and the loss code slice results apart. Per-model masks (local indices)
    combine into one global MaskSpec.
    """
    face_slices, edge_slices, pairs = [], [], []
    fo = eo = 0
    for t in tensor_list:
        n_f = t["face_low"].shape[0]
        n_e = t["edge_geom"].shape[0]
        face_slices.append((fo, fo + n_f))
        edge_slices.append((eo, eo + n_e))
        pairs.append(t["pairs"] + fo)
        fo += n_f
        eo += n_e
    batch = {
        key: torch.cat([t[key] for t in tensor_list], dim=0)
        for key in ("face_low", "face_high", "face_attr", "edge_geom", "edge_attr")
    }
    batch["pairs"] = torch.cat(pairs, dim=0)
    batch["face_slices"] = face_slices
    batch["edge_slices"] = edge_slices
    if mask_list is None:
        return batch, None
    mf = np.concatenate([m.masked_faces + fs for m, (fs, _) in
                         zip(mask_list, face_slices)]).astype(np.int64)
    me = np.concatenate([m.masked_edges + es for m, (es, _) in
                         zip(mask_list, edge_slices)]).astype(np.int64)
    global_mask = MaskSpec(mf, me, mask_list[0].ratio if mask_list else 0.0, -1)
    return batch, global_mask


def batched_losses(model: "MaskedBRepAutoencoder", tensor_list: list,
                   mask_list: list, weights: LossWeights):
    """One collated forward pass; losses still average per model first."""
    batch, gmask = collate_models(tensor_list, mask_list)
    recon = model.reconstruct(batch, gmask)
    f_t, e_t = model.build_targets(batch)
    reports = []
    for idx, tensors in enumerate(tensor_list):
        fs, fe = batch["face_slices"][idx]
        es, ee = batch["edge_slices"][idx]
        sub = ReconBundle(recon.f_recon[fs:fe], recon.e_recon[es:ee],
                          recon.face_geom[fs:fe], recon.face_attr[fs:fe],
                          recon.edge_geom[es:ee], recon.edge_attr[es:ee])
        reports.append(compute_losses(sub, tensors, f_t[fs:fe], e_t[es:ee],
                                      mask_list[idx], weights))
    return _mean_report(reports), reports


def load_split_tensors(corpus_dir, split: str, dtype=torch.float32):
    """All gAAGs of one split, collated and keyed by manifest id."""
    manifest = load_manifest(corpus_dir)
    out = {}
    for entry in manifest["entries"]:
        if entry["split"] == split:
            g = read_gaag(Path(corpus_dir) / entry["gaag_path"])
            out[entry["id"]] = gaag_to_tensors(g, dtype=dtype)
    return manifest, out


def mask_seed_for(seed: int, counter: int) -> int:
    return int((seed * 1_000_003 + counter + 1) % 2**31)


def pretrain(corpus_dir, config: TrainConfig, stop_fn=None):
    """Run masked pre-training over the corpus' training split.

    Returns (model, history); history holds one row per epoch with the
    total loss and the five components, averaged over the epoch's steps.
    `stop_fn(row)` may end training early once a convergence target is met.
    Any non-finite loss aborts with the offending term named.
    """
    torch.manual_seed(config.seed)
    model = MaskedBRepAutoencoder()
    _, data = load_split_tensors(corpus_dir, "train")
    if not data:
        raise NumericError("training split is empty")
    ids = sorted(data)
    opt = torch.optim.AdamW(model.parameters(), lr=config.lr,
                            betas=(config.beta1, config.beta2),
                            weight_decay=config.weight_decay)
    sched = torch.optim.lr_scheduler.CosineAnnealingLR(opt, T_max=config.epochs)
    shuffle_rng = np.random.default_rng(config.seed)
    history = []
    counter = 0
    model.train()
    for epoch in range(config.epochs):
        order = shuffle_rng.permutation(len(ids))
        epoch_rows = []
        for start in range(0, len(order), config.batch_size):
            batch_ids = order[start:start + config.batch_size]
            tensor_list, mask_list = [], []
            for k in batch_ids:
                tensors = data[ids[k]]
                n_f = tensors["face_low"].shape[0]
                n_e = tensors["edge_geom"].shape[0]
                mask_list.append(make_mask(n_f, n_e, config.mask_ratio,
                                           mask_seed_for(config.seed, counter)))
                counter += 1
                tensor_list.append(tensors)
            report, _ = batched_losses(model, tensor_list, mask_list, config.weights)
            for name in ("feat", "face_geom", "face_attr", "edge_geom",
                         "edge_attr", "total"):
                if not torch.isfinite(getattr(report, name)):
                    raise NumericError(
                        f"loss term {name!r} became non-finite at epoch {epoch}")
            opt.zero_grad()
            report.total.backward()
            opt.step()
            epoch_rows.append(report.detached())
        sched.step()
        row = {"epoch": epoch}
        for key in LOSS_COLUMNS:
            row[key] = float(np.mean([r[key] for r in epoch_rows]))
        history.append(row)
        if stop_fn is not None and stop_fn(row):
            break
    model.eval()
    return model, history


def write_loss_history(path, history, config_dict=None) -> None:
    """Loss-curve CSV: epoch, total, and the five components per row."""
    lines = []
    if config_dict is not None:
        lines.append("# config: " + json.dumps(config_dict, sort_keys=True))
    lines.append("epoch," + ",".join(LOSS_COLUMNS))
    for row in history:
        lines.append(",".join([str(row["epoch"])]
                              + [repr(row[k]) for k in LOSS_COLUMNS]))
    Path(path).write_text("\n".join(lines) + "\n")
