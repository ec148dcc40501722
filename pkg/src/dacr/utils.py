"""Seeding, hashing and checkpoint checksum helpers."""

from __future__ import annotations

import hashlib
import io

import numpy as np
import torch


def derive_seed(base_seed: int, *tags: object) -> int:
    """Derive an independent 32-bit seed from a base seed and a tag tuple.

    Stage seeds are derived this way so that resuming a pipeline from a
    checkpoint draws exactly the same random streams as an uninterrupted run.
    """
    payload = repr((int(base_seed),) + tuple(tags)).encode()
    digest = hashlib.sha256(payload).digest()
    return int.from_bytes(digest[:4], "little")


def seed_torch(seed: int) -> None:
    torch.manual_seed(seed % (2**63))


def state_checksum(module: torch.nn.Module) -> str:
    """SHA-256 over a module's parameter/buffer bytes, order-stable."""
    h = hashlib.sha256()
    state = module.state_dict()
    for key in sorted(state):
        h.update(key.encode())
        h.update(state[key].detach().cpu().numpy().tobytes())
    return h.hexdigest()


def file_checksum(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def stable_config_hash(items: dict) -> str:
    """Deterministic hash of a flat config mapping (sorted key=value lines)."""
    text = "\n".join(f"{k}={items[k]}" for k in sorted(items))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def tensor_from_array(values: np.ndarray) -> torch.Tensor:
    """float32 torch view of a numpy array, copying to guarantee ownership."""
    buf = np.ascontiguousarray(values, dtype=np.float32)
    return torch.from_numpy(buf.copy())


def save_checkpoint(path, kind: str, hyperparams: dict, state_dict) -> None:
    """Versioned binary checkpoint: header with hyperparameters + weights."""
    payload = {
        "format_version": 1,
        "kind": kind,
        "hyperparams": dict(hyperparams),
        "state_dict": state_dict,
    }
    buf = io.BytesIO()
    torch.save(payload, buf)
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_checkpoint(path, kind: str) -> tuple[dict, dict]:
    from .exceptions import FormatError

    try:
        payload = torch.load(path, map_location="cpu", weights_only=False)
    except Exception as exc:  # torch raises several unrelated types here
        raise FormatError(f"cannot read checkpoint {path}: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("kind") != kind:
        raise FormatError(f"{path} is not a '{kind}' checkpoint")
    return payload["hyperparams"], payload["state_dict"]
