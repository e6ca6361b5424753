"""Test video accuracy versus labeled videos per class, BYOL encoder frozen.

    python scripts/semisup_curve.py --budgets 1 5 20 50 --csv curve.csv
"""
import argparse
import csv
import tempfile
from pathlib import Path

import numpy as np

from relsar import (AugmentConfig, ByolConfig, EncoderConfig, SynthSpec, load_checkpoint,
                    load_split, pretrain, semi_supervised, synth_dataset)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--budgets", type=int, nargs="+", default=[1, 5, 20, 50])
    ap.add_argument("--epochs", type=int, default=30, help="BYOL epochs")
    ap.add_argument("--csv", default=None)
    args = ap.parse_args()

    enc = EncoderConfig(F=32, L=2, H=2, D_model=32, T=30, J=15)
    byol = ByolConfig(epochs=args.epochs, batch_size=16, proj_hidden=64, proj_dim=32)
    root = Path(tempfile.mkdtemp(prefix="semisup-"))
    rows = []
    for seed in args.seeds:
        m = synth_dataset(root / f"s{seed}" / "data", SynthSpec(classes=4, samples_per_class=80, T=30, seed=seed))
        train, test = load_split(m, "train"), load_split(m, "test")
        res = pretrain(train, enc, AugmentConfig(noise_std=0.1), byol, seed=seed,
                       out_dir=root / f"s{seed}" / "byol")
        ckpt = load_checkpoint(res.encoder_checkpoint)
        for v in args.budgets:
            acc = semi_supervised((train, test), v, ckpt, seed).report.video_accuracy
            rows.append({"seed": seed, "videos_per_class": v, "video_accuracy": acc})
            print(f"seed {seed}  budget {v:>3}  video accuracy {acc:.3f}")
    for v in args.budgets:
        med = np.median([r["video_accuracy"] for r in rows if r["videos_per_class"] == v])
        print(f"median @ {v:>3}: {med:.3f}")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)


if __name__ == "__main__":
    main()
