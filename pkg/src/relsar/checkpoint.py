"""Self-describing ``.npz`` checkpoints.

Layout: ``__meta__`` holds a JSON document (format version, kind, config
echo); every other entry is ``<module>/param/<name>``,
``<module>/buffer/<name>`` or ``optim/<key>``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import CheckpointError
from .model import EncoderConfig, Module

FORMAT_VERSION = 1


def save_checkpoint(path, modules: dict, meta: dict, optimizer=None) -> None:
    arrays = {}
    for mod_name, mod in modules.items():
        for k, v in mod.state().items():
            arrays[f"{mod_name}/{k}"] = v
    if optimizer is not None:
        for k, v in optimizer.state_dict().items():
            arrays[f"optim/{k}"] = v
    meta = {"format_version": FORMAT_VERSION, **meta}
    arrays["__meta__"] = np.array(json.dumps(meta, sort_keys=True))
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


@dataclass
class Checkpoint:
    meta: dict
    arrays: dict

    @property
    def kind(self) -> str:
        return self.meta.get("kind", "")

    @property
    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig(**self.meta["encoder"])

    def modules(self) -> list:
        return sorted({k.split("/", 1)[0] for k in self.arrays if k != "__meta__"} - {"optim"})

    def module_state(self, name: str) -> dict:
        prefix = name + "/"
        state = {k[len(prefix):]: v for k, v in self.arrays.items() if k.startswith(prefix)}
        if not state:
            raise CheckpointError(f"checkpoint has no module {name!r} (has {self.modules()})")
        return state

    def load_into(self, name: str, module: Module) -> None:
        module.load_state(self.module_state(name))

    def optimizer_state(self) -> dict:
        return {k[6:]: v for k, v in self.arrays.items() if k.startswith("optim/")}


def load_checkpoint(path) -> Checkpoint:
    try:
        with np.load(path, allow_pickle=False) as z:
            arrays = {k: z[k] for k in z.files}
    except (OSError, ValueError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if "__meta__" not in arrays:
        raise CheckpointError(f"{path} is not a checkpoint (no __meta__ entry)")
    meta = json.loads(str(arrays.pop("__meta__")))
    if meta.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {meta.get('format_version')}")
    return Checkpoint(meta, arrays)


def encoder_state_from(ckpt: Checkpoint) -> dict:
    """Encoder weights for downstream use: the online encoder of a BYOL run,
    or the encoder of an encoder-only / supervised checkpoint."""
    for name in ("online_encoder", "encoder"):
        if name in ckpt.modules():
            return ckpt.module_state(name)
    raise CheckpointError(f"checkpoint of kind {ckpt.kind!r} holds no encoder")
