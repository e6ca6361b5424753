"""Experiment configuration: one YAML document, every default defined here.

Example::

    seed: 0
    output_dir: runs
    dataset:
      synth: {classes: 4, samples_per_class: 50, T: 30}
    encoder: {F: 32, L: 2, H: 2, D_model: 32}
    byol: {epochs: 30, batch_size: 16}
    recipes:
      - {mode: full_finetune, epochs: 50}
      - {mode: freeze_conv1, epochs: 50}
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import yaml

from .augment import AugmentConfig
from .byol import ByolConfig
from .errors import ConfigError
from .model import EncoderConfig
from .skeleton import get_joint_map
from .supervised import TrainRecipe
from .synth import SynthSpec


@dataclass
class DatasetConfig:
    manifest: str | None = None
    synth: dict | None = None
    dir: str | None = None              # where synthetic data is written
    stride: int | None = None           # window stride, default T // 2
    min_confidence: float = 0.3


@dataclass
class SemiSupConfig:
    budgets: list = field(default_factory=lambda: [1, 5, 20, 50])
    finetune_encoder: bool = False
    epochs: int | None = None           # None: the recipe default


@dataclass
class SweepConfig:
    T: list = field(default_factory=lambda: [5, 10, 20, 30, 40])
    joint_maps: list = field(default_factory=lambda: ["default15", "raw25"])
    recipe: dict = field(default_factory=lambda: {"mode": "baseline", "epochs": 30})


@dataclass
class ExperimentConfig:
    seed: int = 0
    output_dir: str = "runs"
    checkpoint: str | None = None       # BYOL or supervised checkpoint for finetune/semisup/eval
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    byol: ByolConfig = field(default_factory=ByolConfig)
    recipes: list = field(default_factory=lambda: [TrainRecipe()])
    semisup: SemiSupConfig = field(default_factory=SemiSupConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["augment"]["scale_range"] = list(d["augment"]["scale_range"])
        return d

    def run_id(self, command: str) -> str:
        blob = json.dumps({"command": command, **self.to_dict()}, sort_keys=True)
        return f"{command}-{hashlib.sha256(blob.encode()).hexdigest()[:12]}"

    def dump(self, path) -> None:
        with open(path, "w") as fh:
            yaml.safe_dump(self.to_dict(), fh, sort_keys=False)


_SECTIONS = {
    "dataset": DatasetConfig, "encoder": EncoderConfig, "augment": AugmentConfig,
    "byol": ByolConfig, "semisup": SemiSupConfig, "sweep": SweepConfig,
}


def _build(cls, section: str, values) -> object:
    if values is None:
        values = {}
    if not isinstance(values, dict):
        raise ConfigError(f"{section}: expected a mapping, got {type(values).__name__}")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"{section}: unknown field(s) {', '.join(unknown)}")
    try:
        return cls(**values)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{section}: {exc}") from exc


def from_dict(raw: dict | None) -> ExperimentConfig:
    raw = dict(raw or {})
    top = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = sorted(set(raw) - top)
    if unknown:
        raise ConfigError(f"unknown top-level field(s) {', '.join(unknown)}")
    kw = {name: _build(cls, name, raw.get(name)) for name, cls in _SECTIONS.items()}
    ds = kw["dataset"]
    if ds.manifest is None and ds.synth is None:
        ds.synth = {}
    if ds.synth is not None:
        ds.synth = asdict(_build(SynthSpec, "dataset.synth", ds.synth))
    recipes = raw.get("recipes")
    if recipes is None:
        recipes = [{}]
    if not isinstance(recipes, list):
        raise ConfigError("recipes: expected a list of recipe mappings")
    kw["recipes"] = [_build(TrainRecipe, f"recipes[{i}]", r) for i, r in enumerate(recipes)]
    _build(TrainRecipe, "sweep.recipe", kw["sweep"].recipe)
    for jm in kw["sweep"].joint_maps:
        get_joint_map(jm)
    try:
        seed = int(raw.get("seed", 0))
    except (TypeError, ValueError):
        raise ConfigError(f"seed: expected an integer, got {raw.get('seed')!r}") from None
    ckpt = raw.get("checkpoint")
    cfg = ExperimentConfig(seed=seed, output_dir=str(raw.get("output_dir", "runs")),
                           checkpoint=None if ckpt is None else str(ckpt), **kw)
    explicit = {k: v for k, v in (raw.get("encoder") or {}).items() if k in ("T", "J")}
    cfg = reconcile(cfg)
    for k, v in explicit.items():
        if getattr(cfg.encoder, k) != v:
            raise ConfigError(f"encoder.{k}={v} contradicts the dataset "
                              f"({k}={getattr(cfg.encoder, k)})")
    return cfg


def reconcile(cfg: ExperimentConfig) -> ExperimentConfig:
    """Tie encoder T and J to the dataset description."""
    ds = cfg.dataset
    if ds.synth is not None:
        spec = SynthSpec(**ds.synth)
        T_data, jm = spec.T, spec.joint_map
    else:
        if not Path(ds.manifest).exists():
            raise ConfigError(f"dataset.manifest: {ds.manifest} does not exist")
        p = Path(ds.manifest)
        with open(p / "manifest.json" if p.is_dir() else p) as fh:
            m = json.load(fh)
        T_data, jm = int(m["T"]), m["joint_map"]
    J = len(get_joint_map(jm))
    enc = asdict(cfg.encoder)
    if enc["T"] != T_data or enc["J"] != J:
        enc.update(T=T_data, J=J)
        cfg.encoder = EncoderConfig(**enc)
    return cfg


def load_config(path) -> ExperimentConfig:
    if path is None:
        return from_dict({})
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from exc
    return from_dict(raw)
