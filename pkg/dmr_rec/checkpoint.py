from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError
from .model import TRAINABLE, ModelParams
from .training import AdamState

MAGIC = b"DMRCKPT\x00"
VERSION = 1
# d, s, |V|, time_power, time_scale, neg_weight, adam step, epochs done, has state, id block bytes
HEADER = struct.Struct("<IIIdddQQBQ")
PREFIX = struct.Struct("<8sI")
DTYPE = np.dtype("<f8")


@dataclass
class Checkpoint:
    params: ModelParams
    state: AdamState | None
    epochs_done: int = 0


def _shapes(dim: int, trends: int, n_items: int) -> dict[str, tuple[int, int]]:
    return {
        "item_embeddings": (n_items, dim),
        "trend_init": (trends, dim),
        "coattention": (dim, dim),
        "fusion_projection": (2 * dim, dim),
    }


def manifest_path(path: str) -> Path:
    return Path(f"{path}.manifest")


def save_checkpoint(
    params: ModelParams,
    state: AdamState | None,
    path: str,
    epochs_done: int = 0,
    config_hash: str = "",
) -> str:
    ids = "\n".join(params.item_ids).encode("utf-8")
    blocks = [params.tensors()]
    if state is not None:
        blocks += [state.first, state.second]
    header = HEADER.pack(
        params.dim,
        params.trends,
        len(params.item_ids),
        params.time_power,
        params.time_scale,
        params.neg_weight,
        state.step if state is not None else 0,
        epochs_done,
        int(state is not None),
        len(ids),
    )
    payload = b"".join(
        np.ascontiguousarray(block[name], dtype=DTYPE).tobytes() for block in blocks for name in TRAINABLE
    )
    data = PREFIX.pack(MAGIC, VERSION) + header + payload + ids

    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_bytes(data)
    manifest = [
        f"version={VERSION}",
        f"config_hash={config_hash}",
        f"dim={params.dim}",
        f"trends={params.trends}",
        f"items={len(params.item_ids)}",
        f"epochs_done={epochs_done}",
        f"adam_state={int(state is not None)}",
        f"sha256={hashlib.sha256(data).hexdigest()}",
    ]
    manifest_path(path).write_text("\n".join(manifest) + "\n", encoding="utf-8")
    return str(out)


def load_checkpoint(path: str) -> Checkpoint:
    ckpt_path = Path(path)
    if not ckpt_path.exists():
        raise FileNotFoundError(f"Checkpoint not found: {path}")
    data = ckpt_path.read_bytes()
    fixed = PREFIX.size + HEADER.size
    if len(data) < fixed:
        raise DataError(f"{path}: truncated checkpoint: expected at least {fixed} bytes, found {len(data)}")
    magic, version = PREFIX.unpack_from(data)
    if magic != MAGIC:
        raise DataError(f"{path}: not a checkpoint file")
    if version != VERSION:
        raise DataError(f"{path}: checkpoint version {version}, expected {VERSION}")
    dim, trends, n_items, time_power, time_scale, neg_weight, step, epochs_done, has_state, id_bytes = (
        HEADER.unpack_from(data, PREFIX.size)
    )

    shapes = _shapes(dim, trends, n_items)
    floats = sum(r * c for r, c in shapes.values()) * (3 if has_state else 1)
    expected = fixed + floats * DTYPE.itemsize + id_bytes
    if len(data) != expected:
        raise DataError(f"{path}: truncated checkpoint: expected {expected} bytes, found {len(data)}")

    offset = fixed
    blocks: list[dict[str, np.ndarray]] = []
    for _ in range(3 if has_state else 1):
        block = {}
        for name in TRAINABLE:
            count = shapes[name][0] * shapes[name][1]
            block[name] = np.frombuffer(data, dtype=DTYPE, count=count, offset=offset).reshape(shapes[name]).astype(float)
            offset += count * DTYPE.itemsize
        blocks.append(block)
    ids = data[offset:].decode("utf-8")
    item_ids = tuple(ids.split("\n")) if n_items else ()

    params = ModelParams(
        **blocks[0],
        time_scale=time_scale,
        time_power=time_power,
        neg_weight=neg_weight,
        item_ids=item_ids,
    )
    state = AdamState(first=blocks[1], second=blocks[2], step=step) if has_state else None
    return Checkpoint(params=params, state=state, epochs_done=epochs_done)


def read_manifest(path: str) -> dict[str, str]:
    target = manifest_path(path)
    if not target.exists():
        raise FileNotFoundError(f"Checkpoint manifest not found: {target}")
    lines = target.read_text(encoding="utf-8").splitlines()
    return dict(line.split("=", 1) for line in lines if "=" in line)
