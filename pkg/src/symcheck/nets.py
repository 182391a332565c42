"""Small shared helpers for the torch models: MLP builder, checkpoints, hashing."""

from __future__ import annotations

import hashlib
from pathlib import Path

import torch
from torch import nn

from .errors import CompatibilityError


def mlp(sizes, activation=nn.ReLU, out_activation=None) -> nn.Sequential:
    """Fully connected stack: Linear/activation pairs over ``sizes``."""
    layers = []
    for i in range(len(sizes) - 1):
        layers.append(nn.Linear(sizes[i], sizes[i + 1]))
        if i < len(sizes) - 2:
            layers.append(activation())
    if out_activation is not None:
        layers.append(out_activation())
    return nn.Sequential(*layers)


def save_checkpoint(path, kind: str, state_dict: dict, meta: dict) -> None:
    """Write a self-describing checkpoint (parameters + orderings + config)."""
    payload = {"kind": kind, "state_dict": state_dict, "meta": meta}
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    torch.save(payload, path)


def load_checkpoint(path, expect_kind: str) -> tuple[dict, dict]:
    payload = torch.load(path, map_location="cpu", weights_only=False)
    if not isinstance(payload, dict) or payload.get("kind") != expect_kind:
        raise CompatibilityError(
            f"{path}: expected a {expect_kind!r} checkpoint, "
            f"got {payload.get('kind') if isinstance(payload, dict) else type(payload)}"
        )
    return payload["state_dict"], payload["meta"]


def params_fingerprint(module: nn.Module) -> str:
    """sha256 over the module's parameters and buffers, in state_dict order."""
    digest = hashlib.sha256()
    for name, tensor in module.state_dict().items():
        digest.update(name.encode())
        digest.update(tensor.detach().cpu().numpy().tobytes())
    return digest.hexdigest()


def file_fingerprint(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def check_same_ordering(kind: str, expected: list, actual: list) -> None:
    if list(expected) != list(actual):
        raise CompatibilityError(
            f"{kind} ordering mismatch between checkpoints "
            f"({len(expected)} vs {len(actual)} entries)"
        )
