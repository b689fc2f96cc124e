"""Command-line shell: corpus generation, feature extraction, pre-training,
fine-tuning, evaluation, and reconstruction export.

Every subcommand accepts `--config <file>` (a JSON object whose keys match
the subcommand's options; unknown keys are an error) with explicit
command-line flags taking precedence. Relative output paths resolve under
$BREPAE_OUT when it is set. The effective merged configuration is embedded
in every artifact a run writes.

Exit codes: 0 ok, 2 usage/configuration, 3 data or geometry failure,
4 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np
import torch

from .checkpoint import load_checkpoint, save_checkpoint
from .corpus import (
    CorpusConfig,
    TEMPLATE_NAMES,
    generate_corpus,
    generate_model,
    load_manifest,
    manifest_hash,
)
from .embed import gaag_to_tensors, make_mask
from .errors import (
    ConfigurationError,
    ContractError,
    DataFormatError,
    InvalidGeometryError,
    NumericError,
)
from .finetune import (
    FinetuneConfig,
    TaskModel,
    finetune,
    write_metrics_trace,
)
from .gaag import build_gaag, read_gaag, write_gaag
from .metrics import evaluate
from .pretrain import (
    MaskedBRepAutoencoder,
    TrainConfig,
    load_split_tensors,
    pretrain,
    write_loss_history,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def _out_root() -> Path:
    return Path(os.environ.get("BREPAE_OUT", "."))


def _resolve(path: str) -> Path:
    p = Path(path)
    return p if p.is_absolute() else _out_root() / p


def _merge_config(args: argparse.Namespace, defaults: dict) -> dict:
    """defaults < config file < explicit command-line flags."""
    merged = dict(defaults)
    cfg_path = getattr(args, "config", None)
    if cfg_path:
        try:
            with open(cfg_path) as fh:
                file_cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise DataFormatError(f"cannot read config {cfg_path}: {exc}") from exc
        if not isinstance(file_cfg, dict):
            raise ConfigurationError("config file must hold a JSON object")
        unknown = sorted(set(file_cfg) - set(defaults))
        if unknown:
            raise ConfigurationError(f"unknown config keys: {unknown}")
        merged.update(file_cfg)
    for key in defaults:
        val = getattr(args, key, None)
        if val is not None:
            merged[key] = val
    return merged


def _parse_templates(spec: str) -> dict:
    counts = {}
    for part in spec.split(","):
        part = part.strip()
        if not part:
            continue
        if ":" not in part:
            raise ConfigurationError(
                f"bad template spec {part!r}; expected name:count")
        name, _, num = part.partition(":")
        if name not in TEMPLATE_NAMES:
            raise ConfigurationError(f"unknown template {name!r}")
        try:
            counts[name] = counts.get(name, 0) + int(num)
        except ValueError as exc:
            raise ConfigurationError(f"bad count in {part!r}") from exc
    if not counts:
        raise ConfigurationError("template spec selected no models")
    return counts


def _parse_split(spec: str) -> tuple:
    try:
        parts = [float(x) for x in spec.split(",")]
    except ValueError as exc:
        raise ConfigurationError(f"bad split spec {spec!r}") from exc
    if len(parts) != 3 or any(p < 0 for p in parts) or sum(parts) <= 0:
        raise ConfigurationError("split needs three non-negative numbers")
    total = sum(parts)
    return tuple(p / total for p in parts)


# --- subcommands ------------------------------------------------------------

GENERATE_DEFAULTS = {
    "templates": ",".join(f"{t}:10" for t in TEMPLATE_NAMES),
    "split": "70,15,15",
    "seed": 0,
    "out": "corpus",
}


def cmd_generate(args) -> int:
    cfg = _merge_config(args, GENERATE_DEFAULTS)
    counts = _parse_templates(cfg["templates"])
    split = _parse_split(cfg["split"])
    out_dir = _resolve(cfg["out"])
    corpus_cfg = CorpusConfig(counts=counts, split=split,
                              master_seed=int(cfg["seed"]),
                              extra={"cli": cfg})
    manifest = generate_corpus(corpus_cfg, out_dir)
    splits = [e["split"] for e in manifest["entries"]]
    print(f"wrote {len(manifest['entries'])} models to {out_dir} "
          f"(train={splits.count('train')}, val={splits.count('val')}, "
          f"test={splits.count('test')})")
    return EXIT_OK


EXTRACT_DEFAULTS = {"in_path": None, "out": "gaag.json"}


def cmd_extract(args) -> int:
    cfg = _merge_config(args, EXTRACT_DEFAULTS)
    if not cfg["in_path"]:
        raise ConfigurationError("extract needs --in <model-spec.json>")
    try:
        with open(cfg["in_path"]) as fh:
            spec = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise DataFormatError(f"cannot read model spec: {exc}") from exc
    unknown = sorted(set(spec) - {"template", "seed"})
    if unknown:
        raise ConfigurationError(f"unknown model-spec keys: {unknown}")
    if "template" not in spec:
        raise ConfigurationError("model spec needs a 'template' key")
    model = generate_model(spec["template"], int(spec.get("seed", 0)))
    gaag = build_gaag(model)
    out = _resolve(cfg["out"])
    out.parent.mkdir(parents=True, exist_ok=True)
    write_gaag(gaag, out)
    print(f"wrote {out} ({gaag.n_faces} faces, {gaag.n_edges} edges)")
    return EXIT_OK


PRETRAIN_DEFAULTS = {
    "corpus": None,
    "out": "pretrain",
    "epochs": 50,
    "batch_size": 8,
    "mask_ratio": 0.7,
    "lr": 1e-4,
    "seed": 0,
}


def cmd_pretrain(args) -> int:
    cfg = _merge_config(args, PRETRAIN_DEFAULTS)
    if not cfg["corpus"]:
        raise ConfigurationError("pretrain needs --corpus <dir>")
    corpus = _resolve(cfg["corpus"])
    train_cfg = TrainConfig(lr=float(cfg["lr"]), batch_size=int(cfg["batch_size"]),
                            epochs=int(cfg["epochs"]),
                            mask_ratio=float(cfg["mask_ratio"]),
                            seed=int(cfg["seed"]))
    model, history = pretrain(corpus, train_cfg)
    out_dir = _resolve(cfg["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out_dir / "checkpoint.pt", model.state_dict(), cfg,
                    manifest_hash(corpus), extra={"kind": "pretrain"})
    write_loss_history(out_dir / "loss_history.csv", history, cfg)
    print(f"pre-trained {train_cfg.epochs} epochs; final total loss "
          f"{history[-1]['total']:.6f}; wrote {out_dir}")
    return EXIT_OK


FINETUNE_DEFAULTS = {
    "corpus": None,
    "checkpoint": "",
    "task": "classification",
    "shots": 0,
    "ratio": 0.0,
    "epochs": 50,
    "lr_head": 1e-4,
    "lr_encoder": 1e-5,
    "freeze_encoder": False,
    "seed": 0,
    "out": "finetune",
}


def cmd_finetune(args) -> int:
    cfg = _merge_config(args, FINETUNE_DEFAULTS)
    if not cfg["corpus"]:
        raise ConfigurationError("finetune needs --corpus <dir>")
    corpus = _resolve(cfg["corpus"])
    pretrained = None
    if cfg["checkpoint"]:
        pretrained = load_checkpoint(_resolve(cfg["checkpoint"]))["state_dict"]
    ft_cfg = FinetuneConfig(
        task=cfg["task"],
        lr_head=float(cfg["lr_head"]),
        lr_encoder=float(cfg["lr_encoder"]),
        epochs=int(cfg["epochs"]),
        freeze_encoder=bool(cfg["freeze_encoder"]),
        shots=int(cfg["shots"]) or None,
        ratio=float(cfg["ratio"]) or None,
        seed=int(cfg["seed"]),
    )
    model, trace = finetune(corpus, ft_cfg, pretrained_state=pretrained)
    out_dir = _resolve(cfg["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out_dir / "task_checkpoint.pt", model.state_dict(), cfg,
                    manifest_hash(corpus),
                    extra={"kind": "task", "task": model.task,
                           "n_classes": model.n_classes})
    write_metrics_trace(out_dir / "metrics.csv", trace, cfg)
    best = max((r["val_acc"] for r in trace), default=float("nan"))
    print(f"fine-tuned {ft_cfg.epochs} epochs on {ft_cfg.task}; "
          f"best val acc {best:.4f}; wrote {out_dir}")
    return EXIT_OK


EVAL_DEFAULTS = {
    "corpus": None,
    "checkpoint": None,
    "split": "test",
    "out": "eval_report.json",
}


def cmd_eval(args) -> int:
    cfg = _merge_config(args, EVAL_DEFAULTS)
    if not cfg["corpus"] or not cfg["checkpoint"]:
        raise ConfigurationError("eval needs --corpus and --checkpoint")
    corpus = _resolve(cfg["corpus"])
    payload = load_checkpoint(_resolve(cfg["checkpoint"]))
    extra = payload.get("extra", {})
    if extra.get("kind") != "task":
        raise ConfigurationError("eval needs a fine-tuned task checkpoint")
    model = TaskModel(extra["task"], extra["n_classes"])
    model.load_state_dict(payload["state_dict"])
    _, data = load_split_tensors(corpus, cfg["split"])
    if not data:
        raise ConfigurationError(f"split {cfg['split']!r} is empty")
    report = evaluate(model, data, extra["task"], extra["n_classes"])
    doc = report.to_dict()
    doc["config"] = cfg
    out = _resolve(cfg["out"])
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(doc, indent=1))
    print(report.table())
    return EXIT_OK


RECONSTRUCT_DEFAULTS = {
    "corpus": None,
    "id": None,
    "checkpoint": None,
    "mask_ratio": 0.7,
    "seed": 0,
    "out": "reconstruction",
}


def export_reconstruction(model: MaskedBRepAutoencoder, tensors: dict, mask,
                          out_dir: Path, stem: str, config: dict) -> dict:
    """Write the four point-cloud artifacts for one model.

    Rows are face-major, grid row-major. `<stem>_original.txt` holds
    "x y z nx ny nz tau" for every high-resolution grid point;
    `<stem>_masked.txt` holds "x y z flag" with flag 1 on masked faces;
    `<stem>_recon.txt` holds the decoded channels (trim as a probability);
    `<stem>_error.txt` holds one coordinate-space L2 error per row.
    """
    out_dir.mkdir(parents=True, exist_ok=True)
    model.eval()
    with torch.no_grad():
        recon = model.reconstruct(tensors, mask)
    truth = tensors["face_high"].permute(0, 2, 3, 1).reshape(-1, 7).numpy()
    pred = recon.face_geom.reshape(-1, 7).numpy().copy()
    pred[:, 6] = 1.0 / (1.0 + np.exp(-pred[:, 6]))
    n_faces = tensors["face_high"].shape[0]
    flags = np.zeros(n_faces)
    flags[mask.masked_faces] = 1.0
    flags = np.repeat(flags, truth.shape[0] // n_faces)
    err = np.linalg.norm(pred[:, :3] - truth[:, :3], axis=1)

    header = "# config: " + json.dumps(config, sort_keys=True)
    paths = {}

    def dump(name, rows):
        path = out_dir / f"{stem}_{name}.txt"
        lines = [header] + [" ".join(repr(float(v)) for v in row) for row in rows]
        path.write_text("\n".join(lines) + "\n")
        paths[name] = path

    dump("original", truth)
    dump("masked", np.concatenate([truth[:, :3], flags[:, None]], axis=1))
    dump("recon", pred)
    dump("error", err[:, None])
    return paths


def cmd_reconstruct(args) -> int:
    cfg = _merge_config(args, RECONSTRUCT_DEFAULTS)
    if not cfg["corpus"] or not cfg["checkpoint"] or not cfg["id"]:
        raise ConfigurationError("reconstruct needs --corpus, --checkpoint, --id")
    corpus = _resolve(cfg["corpus"])
    manifest = load_manifest(corpus)
    entry = next((e for e in manifest["entries"] if e["id"] == cfg["id"]), None)
    if entry is None:
        raise ConfigurationError(f"model id {cfg['id']!r} not in manifest")
    gaag = read_gaag(corpus / entry["gaag_path"])
    tensors = gaag_to_tensors(gaag)
    payload = load_checkpoint(_resolve(cfg["checkpoint"]))
    model = MaskedBRepAutoencoder()
    model.load_state_dict(payload["state_dict"])
    mask = make_mask(gaag.n_faces, gaag.n_edges, float(cfg["mask_ratio"]),
                     int(cfg["seed"]))
    out_dir = _resolve(cfg["out"])
    paths = export_reconstruction(model, tensors, mask, out_dir, cfg["id"], cfg)
    print("\n".join(str(p) for p in paths.values()))
    return EXIT_OK


# --- argument parsing -------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="brepae",
        description="masked pre-training and few-shot evaluation on "
                    "synthetic BRep solids")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="JSON file with option overrides")
        p.add_argument("--seed", type=int)

    p = sub.add_parser("generate", help="write a synthetic corpus + manifest")
    add_common(p)
    p.add_argument("--templates", help="e.g. box:10,box_hole:5")
    p.add_argument("--split", help="train,val,test weights, e.g. 70,15,15")
    p.add_argument("--out")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("extract", help="model spec JSON -> gAAG JSON")
    p.add_argument("--config", help="JSON file with option overrides")
    p.add_argument("--in", dest="in_path", help="model spec {template, seed}")
    p.add_argument("--out")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("pretrain", help="masked pre-training on a corpus")
    add_common(p)
    p.add_argument("--corpus")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--mask-ratio", dest="mask_ratio", type=float)
    p.add_argument("--lr", type=float)
    p.add_argument("--out")
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("finetune", help="task adaptation from a checkpoint")
    add_common(p)
    p.add_argument("--corpus")
    p.add_argument("--checkpoint", help="pre-training checkpoint; omit for scratch")
    p.add_argument("--task", choices=("segmentation", "classification"))
    p.add_argument("--shots", type=int, help="labeled models per class")
    p.add_argument("--ratio", type=float, help="fraction of the train split")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr-head", dest="lr_head", type=float)
    p.add_argument("--lr-encoder", dest="lr_encoder", type=float)
    p.add_argument("--freeze-encoder", dest="freeze_encoder",
                   action="store_const", const=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("eval", help="metrics over a split")
    p.add_argument("--config", help="JSON file with option overrides")
    p.add_argument("--corpus")
    p.add_argument("--checkpoint")
    p.add_argument("--split", choices=("train", "val", "test"))
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("reconstruct", help="export reconstruction point clouds")
    add_common(p)
    p.add_argument("--corpus")
    p.add_argument("--id")
    p.add_argument("--checkpoint")
    p.add_argument("--mask-ratio", dest="mask_ratio", type=float)
    p.add_argument("--out")
    p.set_defaults(func=cmd_reconstruct)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_USAGE
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataFormatError, InvalidGeometryError, ContractError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
