"""Versioned checkpoint container.

The contract is behavioral, not byte-layout: loading a saved checkpoint
must reproduce bit-identical forward outputs on a probe input. Every
checkpoint embeds the effective run configuration, the corpus manifest
hash, and the RNG state at save time.
"""

from __future__ import annotations

from pathlib import Path

import torch

from .errors import DataFormatError

CHECKPOINT_VERSION = 1


def save_checkpoint(path, state_dict: dict, config: dict, manifest_hash: str,
                    extra: dict | None = None) -> None:
    payload = {
        "format_version": CHECKPOINT_VERSION,
        "state_dict": state_dict,
        "config": config,
        "manifest_hash": manifest_hash,
        "rng_state": torch.get_rng_state(),
        "extra": extra or {},
    }
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    torch.save(payload, path)


def load_checkpoint(path) -> dict:
    try:
        payload = torch.load(path, map_location="cpu", weights_only=True)
    except (OSError, RuntimeError, ValueError, EOFError) as exc:
        raise DataFormatError(f"cannot load checkpoint {path}: {exc}") from exc
    if not isinstance(payload, dict) or "format_version" not in payload:
        raise DataFormatError(f"{path} is not a checkpoint")
    if payload["format_version"] != CHECKPOINT_VERSION:
        raise DataFormatError(
            f"unsupported checkpoint version {payload['format_version']!r} "
            f"(reader supports {CHECKPOINT_VERSION!r})")
    return payload
