"""Downstream adaptation: task heads, pooling, cross-entropy losses,
few-shot subset sampling, and the fine-tuning loop.

Per-face segmentation and shape classification share one code path: both
attach a three-layer head to the pre-trained encoder's latent face
features; classification first aggregates them with a global max pool.
The encoder and head train with separate learning rates; a frozen encoder
receives no updates at all.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as torch_fn
from torch import nn

from .corpus import SHAPE_CLASS_NAMES, FACE_LABEL_NAMES
from .embed import EMBED_DIM, BRepEncoder
from .encoder import GraphEncoder
from .errors import ConfigurationError
from .metrics import evaluate
from .pretrain import collate_models, load_split_tensors

TASKS = ("segmentation", "classification")


def task_class_count(task: str) -> int:
    return len(FACE_LABEL_NAMES) if task == "segmentation" else len(SHAPE_CLASS_NAMES)


@dataclass
class FinetuneConfig:
    task: str = "classification"
    lr_head: float = 1e-4
    lr_encoder: float = 1e-5
    epochs: int = 50  # desk-scale default; large-scale runs use 200
    batch_size: int = 8
    freeze_encoder: bool = False
    shots: int | None = None  # labeled models per class
    ratio: float | None = None  # fraction of the train split
    seed: int = 0
    weight_decay: float = 0.01

    def __post_init__(self):
        if self.task not in TASKS:
            raise ConfigurationError(f"unknown task {self.task!r}")
        if self.lr_head <= 0 or self.lr_encoder <= 0:
            raise ConfigurationError("learning rates must be positive")


class TaskHead(nn.Module):
    """Three linear layers with GELU and dropout after each hidden layer."""

    def __init__(self, n_classes: int, dim: int = EMBED_DIM, dropout: float = 0.3):
        super().__init__()
        if n_classes < 2:
            raise ConfigurationError("a task head needs at least two classes")
        self.net = nn.Sequential(
            nn.Linear(dim, 1024), nn.GELU(), nn.Dropout(dropout),
            nn.Linear(1024, dim), nn.GELU(), nn.Dropout(dropout),
            nn.Linear(dim, n_classes),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.net(x)


def global_max_pool(f_latent: torch.Tensor) -> torch.Tensor:
    """Channel-wise maximum over a model's face features."""
    if f_latent.shape[0] == 0:
        raise ConfigurationError("cannot pool an empty feature matrix")
    return f_latent.max(dim=0).values


class TaskModel(nn.Module):
    """Pre-trainable encoder plus a task head.

    Segmentation emits one logit row per face; classification max-pools
    the latent face features first and emits a single logit vector.
    """

    def __init__(self, task: str, n_classes: int | None = None):
        super().__init__()
        if task not in TASKS:
            raise ConfigurationError(f"unknown task {task!r}")
        self.task = task
        self.n_classes = n_classes or task_class_count(task)
        self.brep_encoder = BRepEncoder()
        self.graph_encoder = GraphEncoder()
        self.head = TaskHead(self.n_classes)

    def encoder_parameters(self):
        yield from self.brep_encoder.parameters()
        yield from self.graph_encoder.parameters()

    def latent_faces(self, tensors: dict) -> torch.Tensor:
        bundle = self.brep_encoder(tensors)
        latent = self.graph_encoder(bundle, tensors["pairs"],
                                    tensors.get("face_slices"),
                                    tensors.get("edge_slices"))
        return latent.f_latent

    def forward(self, tensors: dict) -> torch.Tensor:
        f_latent = self.latent_faces(tensors)
        if self.task == "segmentation":
            return self.head(f_latent)
        return self.head(global_max_pool(f_latent))

    def load_pretrained(self, state_dict: dict) -> None:
        """Adopt the encoder weights of a pre-trained autoencoder."""
        own = self.state_dict()
        picked = {k: v for k, v in state_dict.items()
                  if k in own and (k.startswith("brep_encoder.")
                                   or k.startswith("graph_encoder."))}
        missing = [k for k in own if (k.startswith("brep_encoder.")
                                      or k.startswith("graph_encoder."))
                   and k not in picked]
        if missing:
            raise ConfigurationError(
                f"checkpoint lacks encoder parameters, e.g. {missing[0]!r}")
        own.update(picked)
        self.load_state_dict(own)


def task_loss(logits: torch.Tensor, labels: torch.Tensor, task: str) -> torch.Tensor:
    """Mean per-face cross-entropy (segmentation) or a single cross-entropy
    on the pooled logits (classification)."""
    if task == "segmentation":
        return torch_fn.cross_entropy(logits, labels)
    return torch_fn.cross_entropy(logits.unsqueeze(0), labels.reshape(1))


def few_shot_sample(manifest: dict, shots: int | None = None,
                    ratio: float | None = None, seed: int = 0) -> list:
    """Choose a labeled training subset; validation and test stay untouched.

    shots: exactly that many models per shape class (class-balanced).
    ratio: ceil(ratio * N) models drawn uniformly from the train split.
    """
    train = [e for e in manifest["entries"] if e["split"] == "train"]
    if not train:
        raise ConfigurationError("manifest has an empty train split")
    if (shots is None) == (ratio is None):
        raise ConfigurationError("specify exactly one of shots or ratio")
    rng = np.random.default_rng(seed)
    if ratio is not None:
        if not 0.0 < ratio <= 1.0:
            raise ConfigurationError("ratio must be in (0, 1]")
        n = math.ceil(ratio * len(train))
        picked = rng.choice(len(train), size=n, replace=False)
        return sorted(train[int(k)]["id"] for k in picked)
    by_class: dict = {}
    for e in train:
        by_class.setdefault(e["shape_label"], []).append(e["id"])
    out = []
    for label in sorted(by_class):
        ids = sorted(by_class[label])
        if len(ids) < shots:
            raise ConfigurationError(
                f"class {label} has only {len(ids)} train models, need {shots}")
        picked = rng.choice(len(ids), size=shots, replace=False)
        out.extend(ids[int(k)] for k in picked)
    return sorted(out)


def finetune(corpus_dir, config: FinetuneConfig, pretrained_state: dict | None = None,
             subset_ids: list | None = None, data: tuple | None = None):
    """Train a task model on a (possibly few-shot) subset of the train split.

    Returns (model, trace); the model carries the weights of the epoch with
    the best validation accuracy. A frozen encoder never enters the
    optimizer, so its parameters stay bit-identical. `data` may carry
    preloaded (manifest, train_tensors, val_tensors) to skip re-reading
    the corpus.
    """
    torch.manual_seed(config.seed)
    model = TaskModel(config.task)
    if pretrained_state is not None:
        model.load_pretrained(pretrained_state)

    if data is not None:
        manifest, train_data, val_data = data
    else:
        manifest, train_data = load_split_tensors(corpus_dir, "train")
        _, val_data = load_split_tensors(corpus_dir, "val")
    if subset_ids is None:
        if config.shots is not None or config.ratio is not None:
            subset_ids = few_shot_sample(manifest, config.shots, config.ratio,
                                         config.seed)
        else:
            subset_ids = sorted(train_data)
    missing = [i for i in subset_ids if i not in train_data]
    if missing:
        raise ConfigurationError(f"subset ids not in train split: {missing[:3]}")
    subset = [train_data[i] for i in subset_ids]
    for t in subset:
        label_ok = (t["face_labels"] is not None if config.task == "segmentation"
                    else t["shape_label"] is not None)
        if not label_ok:
            raise ConfigurationError("subset contains unlabeled models")

    if config.freeze_encoder:
        for p in model.encoder_parameters():
            p.requires_grad_(False)
        groups = [{"params": model.head.parameters(), "lr": config.lr_head}]
    else:
        groups = [
            {"params": model.head.parameters(), "lr": config.lr_head},
            {"params": model.encoder_parameters(), "lr": config.lr_encoder},
        ]
    opt = torch.optim.AdamW(groups, weight_decay=config.weight_decay)

    rng = np.random.default_rng(config.seed)
    trace = []
    best_acc = -1.0
    best_state = None
    for epoch in range(config.epochs):
        model.train()
        order = rng.permutation(len(subset))
        losses = []
        for start in range(0, len(order), config.batch_size):
            chunk = [subset[k] for k in order[start:start + config.batch_size]]
            batch, _ = collate_models(chunk)
            f_latent = model.latent_faces(batch)
            per_model = []
            for idx, t in enumerate(chunk):
                fs, fe = batch["face_slices"][idx]
                if config.task == "segmentation":
                    logits = model.head(f_latent[fs:fe])
                    per_model.append(task_loss(logits, t["face_labels"], "segmentation"))
                else:
                    logits = model.head(global_max_pool(f_latent[fs:fe]))
                    label = torch.tensor(int(t["shape_label"]))
                    per_model.append(task_loss(logits, label, "classification"))
            loss = torch.stack(per_model).mean()
            opt.zero_grad()
            loss.backward()
            opt.step()
            losses.append(float(loss.detach()))
        row = {"epoch": epoch, "train_loss": float(np.mean(losses)),
               "val_acc": float("nan"), "val_miou": float("nan")}
        if val_data:
            report = evaluate(model, val_data, config.task, model.n_classes)
            row["val_acc"] = report.accuracy
            if config.task == "segmentation":
                row["val_miou"] = report.miou
            if report.accuracy > best_acc:
                best_acc = report.accuracy
                best_state = copy.deepcopy(model.state_dict())
        trace.append(row)
    if best_state is not None:
        model.load_state_dict(best_state)
    model.eval()
    return model, trace


def write_metrics_trace(path, trace, config_dict=None) -> None:
    """Per-epoch CSV: train loss, validation accuracy, validation mIoU
    (blank for classification)."""
    import json
    from pathlib import Path

    lines = []
    if config_dict is not None:
        lines.append("# config: " + json.dumps(config_dict, sort_keys=True))
    lines.append("epoch,train_loss,val_acc,val_miou")
    for row in trace:
        miou = "" if math.isnan(row["val_miou"]) else repr(row["val_miou"])
        acc = "" if math.isnan(row["val_acc"]) else repr(row["val_acc"])
        lines.append(f"{row['epoch']},{row['train_loss']!r},{acc},{miou}")
    Path(path).write_text("\n".join(lines) + "\n")
