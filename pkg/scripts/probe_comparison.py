"""Linear probe on a BYOL encoder versus a randomly initialized one.

Per seed: synthesize a 4-class set, pre-train with BYOL on the train split,
then fit the same linear probe on frozen features from both encoders.

    python scripts/probe_comparison.py --seeds 0 1 2 --out runs/probe
"""
import argparse
import tempfile
from pathlib import Path

import numpy as np

from relsar import (AugmentConfig, ByolConfig, EncoderConfig, SynthSpec, TrainRecipe,
                    load_checkpoint, load_split, pretrain, run_recipe, synth_dataset)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--epochs", type=int, default=30, help="BYOL epochs")
    ap.add_argument("--per-class", type=int, default=80)
    ap.add_argument("--out", default=None, help="keep artifacts here (default: temp dir)")
    args = ap.parse_args()

    enc = EncoderConfig(F=32, L=2, H=2, D_model=32, T=30, J=15)
    byol = ByolConfig(epochs=args.epochs, batch_size=16, proj_hidden=64, proj_dim=32)
    root = Path(args.out or tempfile.mkdtemp(prefix="probe-"))
    gaps = []
    print(f"{'seed':>4} {'random':>8} {'byol':>8} {'gap':>8}")
    for seed in args.seeds:
        m = synth_dataset(root / f"s{seed}" / "data",
                          SynthSpec(classes=4, samples_per_class=args.per_class, T=30, seed=seed))
        train, test = load_split(m, "train"), load_split(m, "test")
        res = pretrain(train, enc, AugmentConfig(noise_std=0.1), byol, seed=seed,
                       out_dir=root / f"s{seed}" / "byol")
        probe = TrainRecipe.linear_probe()
        rand = run_recipe(train, test, enc, probe, seed, 4).report.window_accuracy
        ours = run_recipe(train, test, enc, probe, seed, 4,
                          init=load_checkpoint(res.encoder_checkpoint)).report.window_accuracy
        gaps.append(ours - rand)
        print(f"{seed:>4} {rand:8.3f} {ours:8.3f} {ours - rand:+8.3f}")
    print(f"median gap: {np.median(gaps):+.3f}  (artifacts in {root})")


if __name__ == "__main__":
    main()
