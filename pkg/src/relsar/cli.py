"""Command-line entry point: ``relsar <command> --config exp.yaml``."""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .byol import pretrain
from .checkpoint import load_checkpoint
from .config import ExperimentConfig, load_config
from .errors import ConfigError, NonFiniteError, RelsarError
from .model import EncoderConfig, LinearClassifier, Encoder, count_params, estimate_flops
from .skeleton import ExperimentManifest, get_joint_map, load_split
from .supervised import (TrainRecipe, evaluate, finetune, run_recipe, semi_supervised,
                         train_supervised)
from .synth import SynthSpec, synth_dataset

log = logging.getLogger("relsar")

EXIT_OK, EXIT_ERROR, EXIT_CONFIG, EXIT_NONFINITE = 0, 1, 2, 3


# ---------------------------------------------------------------- helpers

def _dataset_dir(cfg: ExperimentConfig) -> Path:
    ds = cfg.dataset
    if ds.dir:
        return Path(ds.dir)
    spec_hash = ExperimentConfig(seed=0, dataset=dataclasses.replace(ds, dir=None)).run_id("data")
    return Path(cfg.output_dir) / "data" / spec_hash


def ensure_dataset(cfg: ExperimentConfig) -> ExperimentManifest:
    """Load the configured manifest, synthesizing it first if needed."""
    ds = cfg.dataset
    if ds.manifest:
        return ExperimentManifest.load(ds.manifest)
    out = _dataset_dir(cfg)
    if not (out / "manifest.json").exists():
        log.info("synthesizing dataset into %s", out)
        synth_dataset(out, SynthSpec(**ds.synth))
    return ExperimentManifest.load(out)


def _splits(cfg: ExperimentConfig, manifest: ExperimentManifest, T=None, joint_map=None):
    kw = dict(T=T or cfg.encoder.T, joint_map=joint_map, stride=cfg.dataset.stride,
              min_confidence=cfg.dataset.min_confidence)
    return load_split(manifest, "train", **kw), load_split(manifest, "test", **kw)


def _run_dir(cfg: ExperimentConfig, command: str, out: str | None) -> Path:
    d = Path(out or cfg.output_dir) / cfg.run_id(command)
    d.mkdir(parents=True, exist_ok=True)
    cfg.dump(d / "config.resolved.yaml")
    return d


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def _write_csv(path: Path, rows: list) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
    _require(path)


def _require(path: Path) -> None:
    if not path.exists() or path.stat().st_size == 0:
        raise RelsarError(f"expected artifact {path} was not written")


# ---------------------------------------------------------------- commands

def cmd_synth(cfg, args) -> Path:
    if cfg.dataset.synth is None:
        raise ConfigError("dataset.synth: the synth command needs a synth section")
    out = Path(args.out) if args.out else _dataset_dir(cfg)
    synth_dataset(out, SynthSpec(**cfg.dataset.synth))
    _require(out / "manifest.json")
    print(out / "manifest.json")
    return out


def cmd_ingest(cfg, args) -> Path:
    manifest = ensure_dataset(cfg)
    run = _run_dir(cfg, "ingest", args.out)
    summary = {}
    for split in ("train", "test"):
        ws = load_split(manifest, split, T=cfg.encoder.T, stride=cfg.dataset.stride,
                        min_confidence=cfg.dataset.min_confidence)
        np.savez(run / f"windows_{split}.npz", x=ws.x, y=ws.y, video=ws.video)
        summary[split] = {"windows": len(ws), "videos": len(ws.videos),
                          "skipped": len(manifest.split(split)) - len(ws.videos)}
    _write_json(run / "ingest.json", summary)
    print(json.dumps(summary))
    return run


def cmd_pretrain(cfg, args) -> Path:
    manifest = ensure_dataset(cfg)
    run = _run_dir(cfg, "pretrain", args.out)
    train, _ = _splits(cfg, manifest)
    res = pretrain(train, cfg.encoder, cfg.augment, cfg.byol, cfg.seed, out_dir=run)
    _write_json(run / "history.json", res.history)
    for name in ("byol.npz", "encoder.npz", "train_log.jsonl", "history.json"):
        _require(run / name)
    print(run / "encoder.npz")
    return run


def _train_many(cfg, args, command, recipes, init) -> Path:
    manifest = ensure_dataset(cfg)
    run = _run_dir(cfg, command, args.out)
    train, test = _splits(cfg, manifest)
    summary = []
    for i, recipe in enumerate(recipes):
        sub = run / f"{i:02d}-{recipe.mode}"
        res = run_recipe(train, test, cfg.encoder, recipe, cfg.seed, len(manifest.classes),
                         init=init, out_dir=sub)
        _require(sub / "report.json")
        summary.append({"recipe": i, "mode": recipe.mode, **res.report.to_dict()})
        print(f"{recipe.mode}: window acc {res.report.window_accuracy:.4f} "
              f"video acc {res.report.video_accuracy:.4f}")
    _write_json(run / "summary.json", summary)
    return run


def _checkpoint(cfg):
    if not cfg.checkpoint:
        raise ConfigError("checkpoint: this command needs --checkpoint or a checkpoint field")
    return load_checkpoint(cfg.checkpoint)


def cmd_train(cfg, args) -> Path:
    recipes = [r for r in cfg.recipes if r.mode == "baseline"]
    if not recipes:
        raise ConfigError("recipes: train needs at least one baseline recipe")
    return _train_many(cfg, args, "train", recipes, None)


def cmd_finetune(cfg, args) -> Path:
    ckpt = _checkpoint(cfg)
    recipes = [r for r in cfg.recipes if r.mode != "baseline"]
    if not recipes:
        raise ConfigError("recipes: finetune needs at least one non-baseline recipe")
    return _train_many(cfg, args, "finetune", recipes, ckpt)


def cmd_semisup(cfg, args) -> Path:
    ckpt = _checkpoint(cfg)
    manifest = ensure_dataset(cfg)
    run = _run_dir(cfg, "semisup", args.out)
    splits = _splits(cfg, manifest)
    ss = cfg.semisup
    rows = []
    for v in ss.budgets:
        recipe = None
        if ss.epochs is not None:
            base = TrainRecipe(mode="full_finetune", init="checkpoint") if ss.finetune_encoder \
                else TrainRecipe.linear_probe(init="checkpoint")
            recipe = dataclasses.replace(base, epochs=ss.epochs)
        res = semi_supervised(splits, int(v), ckpt, cfg.seed, recipe, ss.finetune_encoder,
                              cfg.encoder, out_dir=run / f"budget-{v}")
        rows.append({"videos_per_class": int(v), "window_accuracy": res.report.window_accuracy,
                     "video_accuracy": res.report.video_accuracy})
        print(f"budget {v}: video acc {res.report.video_accuracy:.4f}")
    _write_csv(run / "semisup.csv", rows)
    return run


def cmd_eval(cfg, args) -> Path:
    manifest = ensure_dataset(cfg)
    ckpt = _checkpoint(cfg)
    if "classifier" not in ckpt.modules():
        raise ConfigError(f"checkpoint: {cfg.checkpoint} is not a supervised checkpoint")
    enc_cfg = ckpt.encoder_config
    rng = np.random.default_rng(0)
    encoder = Encoder(enc_cfg, rng)
    classifier = LinearClassifier(enc_cfg.D_model, int(ckpt.meta["num_classes"]), rng)
    ckpt.load_into("encoder", encoder)
    ckpt.load_into("classifier", classifier)
    ws = load_split(manifest, args.split, T=enc_cfg.T, stride=cfg.dataset.stride,
                    min_confidence=cfg.dataset.min_confidence)
    report = evaluate(encoder, classifier, ws, len(manifest.classes))
    run = _run_dir(cfg, "eval", args.out)
    report.save(run, f"report_{args.split}")
    _require(run / f"report_{args.split}.json")
    print(report.to_json())
    return run


def cmd_sweep(cfg, args) -> Path:
    """Accuracy over a grid of sequence lengths x joint maps."""
    sw = cfg.sweep
    ds = cfg.dataset
    if ds.synth is not None:
        need = max(sw.T)
        synth = dict(ds.synth)
        if (synth.get("frames_per_video") or synth["T"]) < need:
            synth["frames_per_video"] = need
        cfg = dataclasses.replace(cfg, dataset=dataclasses.replace(ds, synth=synth))
    manifest = ensure_dataset(cfg)
    run = _run_dir(cfg, "sweep", args.out)
    recipe = TrainRecipe(**sw.recipe)
    rows = []
    for T_len in sw.T:
        for jm_name in sw.joint_maps:
            jm = get_joint_map(jm_name)
            enc = dataclasses.replace(cfg.encoder, T=int(T_len), J=len(jm))
            train, test = _splits(cfg, manifest, T=int(T_len), joint_map=jm)
            res = run_recipe(train, test, enc, recipe, cfg.seed, len(manifest.classes))
            rows.append({"T": int(T_len), "joint_map": jm.name, "J": len(jm),
                         "window_accuracy": res.report.window_accuracy,
                         "video_accuracy": res.report.video_accuracy})
            print(f"T={T_len} {jm.name}: {res.report.window_accuracy:.4f}")
    _write_csv(run / "sweep.csv", rows)
    return run


def cmd_inspect(cfg, args) -> None:
    enc: EncoderConfig = cfg.encoder
    params = count_params(enc)
    flops = estimate_flops(enc)
    print(json.dumps(enc.to_dict(), sort_keys=True))
    print(f"tokens into transformer: {enc.n_tokens}")
    print(f"params: {params} ({params / 1e6:.2f}M)")
    print(f"flops: {flops:.4g} ({flops / 1e9:.3f}G)")


COMMANDS = {
    "synth": cmd_synth, "ingest": cmd_ingest, "pretrain": cmd_pretrain, "train": cmd_train,
    "finetune": cmd_finetune, "semisup": cmd_semisup, "eval": cmd_eval, "sweep": cmd_sweep,
    "inspect": cmd_inspect,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="relsar", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="experiment YAML (defaults used if omitted)")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", help="output directory (overrides output_dir)")
        p.add_argument("-v", "--verbose", action="store_true")
        if name in ("train", "finetune", "semisup", "sweep", "pretrain"):
            p.add_argument("--epochs", type=int, help="override training epochs")
        if name in ("finetune", "semisup", "eval"):
            p.add_argument("--checkpoint", help="checkpoint .npz (overrides the config field)")
        if name == "semisup":
            p.add_argument("--budget", type=int, help="labeled videos per class")
        if name == "eval":
            p.add_argument("--split", default="test", choices=("train", "test"))
    return parser


def apply_overrides(cfg: ExperimentConfig, args) -> None:
    """Fold command-line overrides into the config so the frozen copy reflects them."""
    if args.seed is not None:
        cfg.seed = args.seed
    if getattr(args, "checkpoint", None):
        cfg.checkpoint = args.checkpoint
    if getattr(args, "budget", None) is not None:
        cfg.semisup.budgets = [args.budget]
    epochs = getattr(args, "epochs", None)
    if epochs is None:
        return
    if args.command == "pretrain":
        cfg.byol = dataclasses.replace(cfg.byol, epochs=epochs)
    elif args.command in ("train", "finetune"):
        cfg.recipes = [dataclasses.replace(r, epochs=epochs) for r in cfg.recipes]
    elif args.command == "semisup":
        cfg.semisup.epochs = epochs
    elif args.command == "sweep":
        cfg.sweep.recipe = {**cfg.sweep.recipe, "epochs": epochs}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        apply_overrides(cfg, args)
        COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NonFiniteError as exc:
        where = f"; diagnostics written to {exc.dump_path}" if exc.dump_path else ""
        print(f"training diverged: {exc}{where}", file=sys.stderr)
        return EXIT_NONFINITE
    except RelsarError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
