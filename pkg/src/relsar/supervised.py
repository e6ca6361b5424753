"""Supervised training, fine-tuning protocols, semi-supervised probe, evaluation."""
from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import nn
from . import tensor as T
from .checkpoint import Checkpoint, encoder_state_from, load_checkpoint, save_checkpoint
from .errors import CheckpointError, ConfigError, NonFiniteError
from .model import Encoder, EncoderConfig, LinearClassifier
from .optim import AdamW, warmup_step_drop_lr
from .skeleton import ExperimentManifest, WindowSet, load_split

log = logging.getLogger(__name__)

MODES = ("baseline", "full_finetune", "freeze_conv1", "freeze_conv2", "linear_only")
FROZEN = {
    "freeze_conv1": ("conv1.w", "conv1.b", "bn1.gamma", "bn1.beta"),
    "freeze_conv2": ("conv2.w", "conv2.b", "bn2.gamma", "bn2.beta"),
}


@dataclass
class TrainRecipe:
    mode: str = "baseline"
    epochs: int = 500
    batch_size: int = 128
    peak_lr: float = 1e-3
    dropped_lr: float = 1e-4
    warmup_frac: float = 0.4
    drop_frac: float = 0.8
    weight_decay: float = 1e-4
    label_smoothing: float = 0.1
    init: str = "random"        # or a checkpoint path
    standardize: bool = False   # linear_only: fit on z-scored features, folded back afterwards

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"recipe.mode must be one of {MODES}, got {self.mode!r}")
        if self.mode in FROZEN and self.init == "random":
            raise ConfigError(f"recipe.mode={self.mode} requires a checkpoint init")
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigError("recipe.epochs must be >= 0 and batch_size >= 1")
        if self.peak_lr <= 0 or self.dropped_lr <= 0:
            raise ConfigError("recipe learning rates must be positive")
        if not 0 <= self.label_smoothing < 1:
            raise ConfigError("recipe.label_smoothing must be in [0, 1)")

    @classmethod
    def linear_probe(cls, init: str = "random", **kw) -> "TrainRecipe":
        """Classifier-only recipe. ``init="random"`` probes an untrained encoder."""
        kw = {"epochs": 1000, "batch_size": 32, "peak_lr": 0.1, "label_smoothing": 0.0, **kw}
        return cls(mode="linear_only", init=init, **kw)


@dataclass
class EvalReport:
    window_accuracy: float
    video_accuracy: float
    confusion: list                 # video-level, rows = true class
    num_windows: int
    num_videos: int
    params: int
    runtime_s: float = 0.0

    def to_dict(self, include_runtime: bool = False) -> dict:
        d = asdict(self)
        if not include_runtime:
            d.pop("runtime_s")
        return d

    def to_json(self, include_runtime: bool = False) -> str:
        return json.dumps(self.to_dict(include_runtime), sort_keys=True, indent=1)

    def save(self, out_dir, name: str = "report") -> None:
        out_dir = Path(out_dir)
        (out_dir / f"{name}.json").write_text(self.to_json() + "\n")
        (out_dir / f"{name}_timing.json").write_text(json.dumps({"runtime_s": self.runtime_s}) + "\n")
        with open(out_dir / f"{name}_confusion.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            n = len(self.confusion)
            w.writerow(["true\\pred"] + [str(c) for c in range(n)])
            for i, row in enumerate(self.confusion):
                w.writerow([str(i)] + [str(v) for v in row])


# ---------------------------------------------------------------- evaluation

def majority_vote(probs: np.ndarray, video: np.ndarray, n_videos: int) -> np.ndarray:
    """Per-video label: most frequent window argmax; ties go to the tied class
    with the highest mean probability."""
    n_classes = probs.shape[1]
    pred = probs.argmax(axis=1)
    votes = np.zeros((n_videos, n_classes))
    np.add.at(votes, (video, pred), 1)
    mean_p = np.zeros((n_videos, n_classes))
    np.add.at(mean_p, video, probs)
    counts = np.bincount(video, minlength=n_videos)[:, None]
    mean_p = mean_p / np.maximum(counts, 1)
    top = votes == votes.max(axis=1, keepdims=True)
    return np.where(top, mean_p, -np.inf).argmax(axis=1)


def predict_proba(encoder: Encoder, classifier: LinearClassifier, x: np.ndarray,
                  batch_size: int = 256) -> np.ndarray:
    out = []
    for s in range(0, len(x), batch_size):
        logits = classifier(encoder(x[s:s + batch_size], training=False))
        out.append(T.softmax(logits, axis=-1).data)
    return np.concatenate(out).astype(np.float64)


def report_from_probs(probs: np.ndarray, ws: WindowSet, n_classes: int, params: int,
                      runtime: float = 0.0) -> EvalReport:
    win_pred = probs.argmax(axis=1)
    vid_pred = majority_vote(probs, ws.video, len(ws.videos))
    vid_true = ws.video_labels()
    conf = np.zeros((n_classes, n_classes), dtype=int)
    np.add.at(conf, (vid_true, vid_pred), 1)
    return EvalReport(float((win_pred == ws.y).mean()), float((vid_pred == vid_true).mean()),
                      conf.tolist(), len(ws), len(ws.videos), params, runtime)


def evaluate(encoder: Encoder, classifier: LinearClassifier, ws: WindowSet,
             n_classes: int | None = None) -> EvalReport:
    """Eval-mode accuracy (per window and per video) on ``ws``; no side effects."""
    if len(ws) == 0:
        raise ConfigError("cannot evaluate an empty split")
    t0 = time.perf_counter()
    probs = predict_proba(encoder, classifier, ws.x)
    n_classes = n_classes or probs.shape[1]
    params = encoder.num_params() + classifier.num_params()
    return report_from_probs(probs, ws, n_classes, params, time.perf_counter() - t0)


# ---------------------------------------------------------------- training

@dataclass
class SupervisedResult:
    encoder: Encoder
    classifier: LinearClassifier
    report: EvalReport | None = None            # test split
    train_report: EvalReport | None = None
    history: list = field(default_factory=list)
    checkpoint: str | None = None


def _streams(seed: int) -> tuple:
    init, data, drop = np.random.SeedSequence(seed).spawn(3)
    return (np.random.default_rng(init), np.random.default_rng(data),
            np.random.default_rng(drop))


def build_models(enc_cfg: EncoderConfig, n_classes: int, init_rng, init=None):
    """Encoder (random or loaded) and a fresh linear classifier.

    ``init`` may be None, a checkpoint path, or a loaded :class:`Checkpoint`.
    """
    encoder = Encoder(enc_cfg, init_rng)
    classifier = LinearClassifier(enc_cfg.D_model, n_classes, init_rng)
    if init is not None and init != "random":
        ckpt = init if isinstance(init, Checkpoint) else load_checkpoint(init)
        if ckpt.meta.get("encoder") != enc_cfg.to_dict():
            raise CheckpointError(f"checkpoint encoder config {ckpt.meta.get('encoder')} "
                                  f"does not match {enc_cfg.to_dict()}")
        encoder.load_state(encoder_state_from(ckpt))
    return encoder, classifier


def _features(encoder: Encoder, x: np.ndarray, batch_size: int = 256) -> np.ndarray:
    return np.concatenate([encoder(x[s:s + batch_size], training=False).data
                           for s in range(0, len(x), batch_size)])


def fit(encoder: Encoder, classifier: LinearClassifier, train: WindowSet, recipe: TrainRecipe,
        data_rng, drop_rng, log_path=None) -> list:
    """Train in place according to ``recipe.mode``; returns per-epoch history."""
    mode = recipe.mode
    frozen = FROZEN.get(mode, ())
    frozen_bn = {name.split(".")[0] for name in frozen if name.startswith("bn")}
    snapshot = {k: encoder.params[k].data.copy() for k in frozen}
    snapshot.update({f"{b}.{s}": encoder.buffers[f"{b}.{s}"].copy()
                     for b in frozen_bn for s in ("mean", "var")})
    linear_only = mode == "linear_only"
    if linear_only:
        params = {f"classifier/{k}": p for k, p in classifier.params.items()}
        feats = _features(encoder, train.x)
        mu, sd = np.zeros(feats.shape[1]), np.ones(feats.shape[1])
        if recipe.standardize:
            mu, sd = feats.mean(axis=0), np.maximum(feats.std(axis=0), 1e-6)
        feats = (feats - mu) / sd
    else:
        params = {f"encoder/{k}": p for k, p in encoder.params.items() if k not in frozen}
        params.update({f"classifier/{k}": p for k, p in classifier.params.items()})
    opt = AdamW(weight_decay=recipe.weight_decay)
    n = len(train)
    steps_per_epoch = max(1, int(np.ceil(n / recipe.batch_size)))
    total = recipe.epochs * steps_per_epoch
    history, step = [], 0
    log_fh = open(log_path, "w") if log_path else None
    try:
        for epoch in range(1, recipe.epochs + 1):
            order = data_rng.permutation(n)
            losses, correct = [], 0
            for s in range(0, n, recipe.batch_size):
                idx = order[s:s + recipe.batch_size]
                if not linear_only and len(idx) < 2:
                    continue            # batch statistics need two samples
                lr = warmup_step_drop_lr(step, total, recipe.peak_lr, recipe.dropped_lr,
                                         recipe.warmup_frac, recipe.drop_frac)
                encoder.zero_grad()
                classifier.zero_grad()
                if linear_only:
                    y = T.Tensor(feats[idx])
                else:
                    y = encoder(train.x[idx], training=True, rng=drop_rng, frozen_bn=frozen_bn)
                logits = classifier(y)
                loss = nn.cross_entropy(logits, train.y[idx], recipe.label_smoothing)
                T.backward(loss)
                if not np.isfinite(loss.data):
                    raise NonFiniteError(f"non-finite supervised loss at step {step}")
                grads = {k: p.grad for k, p in params.items() if p.grad is not None}
                opt.step(params, grads, lr)
                losses.append(float(loss.data))
                correct += int((logits.data.argmax(axis=1) == train.y[idx]).sum())
                step += 1
            rec = {"epoch": epoch, "loss": float(np.mean(losses)) if losses else None,
                   "train_accuracy": correct / n, "lr": lr if losses else None}
            history.append(rec)
            if log_fh:
                log_fh.write(json.dumps(rec) + "\n")
    finally:
        if log_fh:
            log_fh.close()
    if linear_only:
        w, b = classifier.params["w"], classifier.params["b"]
        b.data = (b.data - (mu / sd) @ w.data).astype(b.data.dtype)
        w.data = (w.data / sd[:, None]).astype(w.data.dtype)
    for k, v in snapshot.items():
        now = encoder.params[k].data if k in encoder.params else encoder.buffers[k]
        if not np.array_equal(now, v):
            raise AssertionError(f"frozen tensor {k!r} changed during {mode} training")
    return history


def _load_splits(manifest: ExperimentManifest, T_len: int) -> tuple:
    return load_split(manifest, "train", T=T_len), load_split(manifest, "test", T=T_len)


def run_recipe(train: WindowSet, test: WindowSet | None, enc_cfg: EncoderConfig,
               recipe: TrainRecipe, seed: int, n_classes: int, init=None,
               out_dir=None) -> SupervisedResult:
    """Build models, train per ``recipe`` and evaluate on both splits."""
    init_rng, data_rng, drop_rng = _streams(seed)
    init = init if init is not None else (None if recipe.init == "random" else recipe.init)
    encoder, classifier = build_models(enc_cfg, n_classes, init_rng, init)
    out_dir = Path(out_dir) if out_dir else None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)
    history = fit(encoder, classifier, train, recipe, data_rng, drop_rng,
                  out_dir / "train_log.jsonl" if out_dir else None)
    res = SupervisedResult(encoder, classifier, history=history)
    res.train_report = evaluate(encoder, classifier, train, n_classes)
    if test is not None:
        res.report = evaluate(encoder, classifier, test, n_classes)
    if out_dir:
        res.checkpoint = str(out_dir / "model.npz")
        meta = {"kind": "supervised", "encoder": enc_cfg.to_dict(), "recipe": asdict(recipe),
                "num_classes": n_classes, "seed": seed}
        save_checkpoint(res.checkpoint, {"encoder": encoder, "classifier": classifier}, meta)
        if res.report is not None:
            res.report.save(out_dir, "report")
        res.train_report.save(out_dir, "train_report")
    return res


def train_supervised(manifest: ExperimentManifest, recipe: TrainRecipe, seed: int,
                     enc_cfg: EncoderConfig, out_dir=None) -> SupervisedResult:
    if not manifest.split("train"):
        raise ConfigError(f"manifest {manifest.name!r} has an empty train split")
    train, test = _load_splits(manifest, enc_cfg.T)
    return run_recipe(train, test, enc_cfg, recipe, seed, len(manifest.classes), out_dir=out_dir)


def finetune(manifest: ExperimentManifest, recipe: TrainRecipe, byol_checkpoint, seed: int,
             enc_cfg: EncoderConfig | None = None, out_dir=None) -> SupervisedResult:
    ckpt = load_checkpoint(byol_checkpoint) if not isinstance(byol_checkpoint, Checkpoint) else byol_checkpoint
    enc_cfg = enc_cfg or ckpt.encoder_config
    train, test = _load_splits(manifest, enc_cfg.T)
    return run_recipe(train, test, enc_cfg, recipe, seed, len(manifest.classes), init=ckpt,
                      out_dir=out_dir)


def sample_budget(ws: WindowSet, videos_per_class: int, rng: np.random.Generator) -> list:
    """Sorted video indices: ``videos_per_class`` distinct videos of every class."""
    labels = ws.video_labels()
    chosen = []
    for c in np.unique(labels):
        pool = np.flatnonzero(labels == c)
        if videos_per_class > len(pool):
            raise ConfigError(f"budget {videos_per_class} exceeds the {len(pool)} "
                              f"training videos of class {c}")
        chosen.extend(rng.choice(pool, size=videos_per_class, replace=False).tolist())
    return sorted(chosen)


def semi_supervised(manifest_or_splits, videos_per_class: int, byol_checkpoint, seed: int,
                    recipe: TrainRecipe | None = None, finetune_encoder: bool = False,
                    enc_cfg: EncoderConfig | None = None, out_dir=None) -> SupervisedResult:
    """Train on ``videos_per_class`` labeled videos per class, evaluate on the full test split.

    By default only the linear classifier is trained on the frozen encoder;
    ``finetune_encoder`` switches to full fine-tuning.
    """
    if videos_per_class < 1:
        raise ConfigError("videos_per_class must be >= 1")
    ckpt = load_checkpoint(byol_checkpoint) if not isinstance(byol_checkpoint, Checkpoint) else byol_checkpoint
    enc_cfg = enc_cfg or ckpt.encoder_config
    if isinstance(manifest_or_splits, ExperimentManifest):
        train, test = _load_splits(manifest_or_splits, enc_cfg.T)
        n_classes = len(manifest_or_splits.classes)
    else:
        train, test = manifest_or_splits
        n_classes = int(max(train.y.max(), test.y.max())) + 1
    budget_rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    subset = train.subset_videos(sample_budget(train, videos_per_class, budget_rng))
    if recipe is None:
        recipe = TrainRecipe(mode="full_finetune", init="checkpoint") if finetune_encoder \
            else TrainRecipe.linear_probe(init="checkpoint")
    return run_recipe(subset, test, enc_cfg, recipe, seed, n_classes, init=ckpt, out_dir=out_dir)
