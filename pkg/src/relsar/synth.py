"""Synthetic labeled skeleton videos for desk-scale experiments.

Each class drives the five body regions with its own sinusoidal motif
(amplitude, frequency, phase), led by one region that moves strongly. Samples differ by a random time offset,
amplitude wobble, Gaussian keypoint noise, and a random placement/size in
the image. Head and foot joints are noisier and carry lower confidence,
mimicking the joints that pose estimators find hard.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .skeleton import (BODY_25, ExperimentManifest, PoseFrame, SampleRecord,
                       get_joint_map, write_keypoints)

_BASE_POSE = {
    "nose": (0.0, -0.75), "neck": (0.0, -0.6),
    "r_shoulder": (-0.15, -0.58), "r_elbow": (-0.2, -0.35), "r_wrist": (-0.22, -0.12),
    "l_shoulder": (0.15, -0.58), "l_elbow": (0.2, -0.35), "l_wrist": (0.22, -0.12),
    "mid_hip": (0.0, 0.0), "r_hip": (-0.1, 0.0), "r_knee": (-0.11, 0.4), "r_ankle": (-0.12, 0.8),
    "l_hip": (0.1, 0.0), "l_knee": (0.11, 0.4), "l_ankle": (0.12, 0.8),
    "r_eye": (-0.03, -0.78), "l_eye": (0.03, -0.78), "r_ear": (-0.06, -0.76), "l_ear": (0.06, -0.76),
    "l_big_toe": (0.16, 0.86), "l_small_toe": (0.19, 0.85), "l_heel": (0.1, 0.84),
    "r_big_toe": (-0.16, 0.86), "r_small_toe": (-0.19, 0.85), "r_heel": (-0.1, 0.84),
}

# joint -> (region index, motion weight); region order: torso, l-arm, r-arm, l-leg, r-leg
_DRIVE = {
    "nose": (0, 1.0), "neck": (0, 0.8), "mid_hip": (0, 0.2),
    "r_eye": (0, 1.0), "l_eye": (0, 1.0), "r_ear": (0, 1.0), "l_ear": (0, 1.0),
    "l_shoulder": (1, 0.3), "l_elbow": (1, 0.7), "l_wrist": (1, 1.0),
    "r_shoulder": (2, 0.3), "r_elbow": (2, 0.7), "r_wrist": (2, 1.0),
    "l_hip": (3, 0.2), "l_knee": (3, 0.6), "l_ankle": (3, 1.0),
    "l_big_toe": (3, 1.0), "l_small_toe": (3, 1.0), "l_heel": (3, 1.0),
    "r_hip": (4, 0.2), "r_knee": (4, 0.6), "r_ankle": (4, 1.0),
    "r_big_toe": (4, 1.0), "r_small_toe": (4, 1.0), "r_heel": (4, 1.0),
}
_UNRELIABLE = {"nose", "r_eye", "l_eye", "r_ear", "l_ear", "l_big_toe", "l_small_toe",
               "l_heel", "r_big_toe", "r_small_toe", "r_heel"}


@dataclass
class SynthSpec:
    classes: int = 4
    samples_per_class: int = 50
    T: int = 30
    joint_map: str = "default15"
    seed: int = 7
    frames_per_video: int | None = None     # default: T (one window per video)
    noise: float = 0.02                     # keypoint noise, body-height units
    jitter: float = 1.0                     # per-sample time-offset / amplitude variation
    reverse_prob: float = 0.0               # chance a sample plays backwards in time
    test_fraction: float = 0.3


def _class_motifs(n_classes: int, rng: np.random.Generator) -> dict:
    """Class c is led by one region (l-arm, r-arm, l-leg, r-leg, torso, cycling)
    moving with a large amplitude; the other regions move faintly."""
    amp = rng.uniform(0.01, 0.04, size=(n_classes, 5))
    lead = np.array([(1, 2, 3, 4, 0)[c % 5] for c in range(n_classes)])
    amp[np.arange(n_classes), lead] = rng.uniform(0.12, 0.18, size=n_classes)
    # classes sharing a lead region (n_classes > 5) also get a second one
    second = (lead + 1 + np.arange(n_classes) // 5) % 5
    extra = np.arange(n_classes) >= 5
    amp[np.flatnonzero(extra), second[extra]] = rng.uniform(0.12, 0.18, size=extra.sum())
    return {
        "amp": amp,
        "freq": rng.integers(1, 4, size=(n_classes, 5)).astype(float),
        "phase": rng.uniform(0, 2 * np.pi, size=(n_classes, 5)),
    }


def render_video(label: int, motifs: dict, n_frames: int, T: int, spec: SynthSpec,
                 rng: np.random.Generator) -> np.ndarray:
    """(n_frames, 25, 3) pixel-space keypoints with confidences."""
    t = np.arange(n_frames)[:, None] + spec.jitter * rng.uniform(0, T)
    amp = motifs["amp"][label] * (1 + 0.2 * spec.jitter * rng.standard_normal(5))
    arg = 2 * np.pi * motifs["freq"][label] * t / T + motifs["phase"][label]   # (n, 5)
    out = np.zeros((n_frames, len(BODY_25), 3))
    for j, name in enumerate(BODY_25):
        region, weight = _DRIVE[name]
        bx, by = _BASE_POSE[name]
        a = amp[region] * weight
        out[:, j, 0] = bx + a * np.sin(arg[:, region])
        out[:, j, 1] = by + a * np.cos(arg[:, region]) * 0.5
    noise_scale = np.array([5.0 if n in _UNRELIABLE else 1.0 for n in BODY_25])
    out[:, :, :2] += spec.noise * noise_scale[None, :, None] * rng.standard_normal((n_frames, 25, 2))
    height = rng.uniform(80, 160)
    center = rng.uniform([160, 120], [480, 360])
    out[:, :, :2] = out[:, :, :2] * height + center
    lo = np.array([0.2 if n in _UNRELIABLE else 0.7 for n in BODY_25])
    out[:, :, 2] = rng.uniform(lo, 1.0, size=(n_frames, 25))
    if rng.random() < spec.reverse_prob:
        out = out[::-1]
    return np.round(out, 4)


def synth_dataset(out_dir, spec: SynthSpec | None = None, **overrides) -> ExperimentManifest:
    """Write keypoint files plus ``manifest.json`` under ``out_dir``."""
    spec = spec or SynthSpec()
    if overrides:
        spec = SynthSpec(**{**spec.__dict__, **overrides})
    if spec.classes < 2:
        raise ValueError("synthetic dataset needs at least two classes")
    get_joint_map(spec.joint_map)
    out_dir = Path(out_dir)
    (out_dir / "videos").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(spec.seed)
    motifs = _class_motifs(spec.classes, rng)
    n_frames = spec.frames_per_video or spec.T
    n_test = int(round(spec.test_fraction * spec.samples_per_class))
    samples = []
    for label in range(spec.classes):
        for i in range(spec.samples_per_class):
            kp = render_video(label, motifs, n_frames, spec.T, spec, rng)
            rel = f"videos/c{label}_{i:04d}.jsonl"
            write_keypoints(out_dir / rel, [PoseFrame(f, kp[f]) for f in range(n_frames)])
            split = "test" if i < n_test else "train"
            samples.append(SampleRecord(rel, label, split))
    manifest = ExperimentManifest(f"synth-{spec.classes}c-s{spec.seed}", spec.T, spec.joint_map,
                                  [f"class_{c}" for c in range(spec.classes)], samples,
                                  root=str(out_dir))
    manifest.save(out_dir / "manifest.json")
    return manifest
