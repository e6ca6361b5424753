"""Keypoint ingestion, joint Selection-Permutation, normalization and windowing.

Raw keypoints follow the 25-joint BODY_25 layout. A keypoint file is JSON
lines, one record per frame::

    {"frame": 0, "joints": [[x, y, confidence], ...]}
"""
from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DegenerateInputError, ManifestError, ShapeError

log = logging.getLogger(__name__)

BODY_25 = (
    "nose", "neck", "r_shoulder", "r_elbow", "r_wrist", "l_shoulder", "l_elbow",
    "l_wrist", "mid_hip", "r_hip", "r_knee", "r_ankle", "l_hip", "l_knee", "l_ankle",
    "r_eye", "l_eye", "r_ear", "l_ear", "l_big_toe", "l_small_toe", "l_heel",
    "r_big_toe", "r_small_toe", "r_heel",
)
REGIONS = ("torso", "left_arm", "right_arm", "left_leg", "right_leg")


@dataclass(frozen=True)
class JointMap:
    """Ordered selection of raw joints, each tagged with a body region.

    ``root`` is the position (in output order) of the joint whose mean
    position becomes the origin under :func:`normalize`.
    """
    name: str
    entries: tuple          # ((source_index, region_tag), ...)
    root: int = 0
    grouped: bool = True    # enforce contiguous five-region blocks

    def __post_init__(self):
        src = [s for s, _ in self.entries]
        if len(set(src)) != len(src):
            raise ManifestError(f"joint map {self.name!r} repeats a source joint")
        if not 0 <= self.root < len(self.entries):
            raise ManifestError(f"joint map {self.name!r} root {self.root} out of range")
        if self.grouped:
            tags = [r for _, r in self.entries]
            blocks = [t for i, t in enumerate(tags) if i == 0 or tags[i - 1] != t]
            if sorted(blocks) != sorted(REGIONS):
                raise ManifestError(
                    f"joint map {self.name!r} must group joints into the five regions "
                    f"{REGIONS} contiguously, got blocks {blocks}")

    @classmethod
    def from_names(cls, name: str, joints, root: str, layout=BODY_25, grouped=True):
        """Build from ``[(joint_name, region), ...]`` against a raw ``layout``."""
        lookup = {n: i for i, n in enumerate(layout)}
        try:
            entries = tuple((lookup[j], r) for j, r in joints)
        except KeyError as exc:
            raise ManifestError(f"unknown joint name {exc.args[0]!r}") from None
        names = [j for j, _ in joints]
        return cls(name, entries, names.index(root), grouped)

    @classmethod
    def identity(cls, n: int = 25, name: str = "raw25", root: int = 8):
        return cls(name, tuple((i, "raw") for i in range(n)), root, grouped=False)

    @property
    def indices(self) -> np.ndarray:
        return np.array([s for s, _ in self.entries], dtype=int)

    @property
    def regions(self) -> list:
        return [r for _, r in self.entries]

    def __len__(self):
        return len(self.entries)

    def validate_for(self, j_raw: int) -> None:
        bad = [s for s, _ in self.entries if not 0 <= s < j_raw]
        if bad:
            raise ManifestError(f"joint map {self.name!r} indexes {bad} beyond {j_raw} raw joints")

    def to_dict(self) -> dict:
        return {"name": self.name, "root": self.root, "grouped": self.grouped,
                "entries": [[s, r] for s, r in self.entries]}

    @classmethod
    def from_dict(cls, d: dict) -> "JointMap":
        return cls(d["name"], tuple((int(s), str(r)) for s, r in d["entries"]),
                   int(d.get("root", 0)), bool(d.get("grouped", True)))


# Removing eyes, ears, nose, toes and heels from BODY_25 leaves 14 joints; the
# nose is kept as the 15th (head) joint so the torso block has three members.
DEFAULT_JOINT_MAP = JointMap.from_names("default15", [
    ("nose", "torso"), ("neck", "torso"), ("mid_hip", "torso"),
    ("l_shoulder", "left_arm"), ("l_elbow", "left_arm"), ("l_wrist", "left_arm"),
    ("r_shoulder", "right_arm"), ("r_elbow", "right_arm"), ("r_wrist", "right_arm"),
    ("l_hip", "left_leg"), ("l_knee", "left_leg"), ("l_ankle", "left_leg"),
    ("r_hip", "right_leg"), ("r_knee", "right_leg"), ("r_ankle", "right_leg"),
], root="mid_hip")

RAW_JOINT_MAP = JointMap.identity(25)

JOINT_MAPS = {m.name: m for m in (DEFAULT_JOINT_MAP, RAW_JOINT_MAP)}


def get_joint_map(spec) -> JointMap:
    """Resolve a map from a registered name, a JSON file path, or a dict."""
    if isinstance(spec, JointMap):
        return spec
    if isinstance(spec, dict):
        return JointMap.from_dict(spec)
    if spec in JOINT_MAPS:
        return JOINT_MAPS[spec]
    if os.path.exists(str(spec)):
        with open(spec) as fh:
            return JointMap.from_dict(json.load(fh))
    raise ManifestError(f"unknown joint map {spec!r}")


# ---------------------------------------------------------------- frames & files

@dataclass
class PoseFrame:
    frame: int
    joints: np.ndarray      # (J_raw, 3): x px, y px, confidence

    def __post_init__(self):
        self.joints = np.asarray(self.joints, dtype=np.float64)
        if self.joints.ndim != 2 or self.joints.shape[1] != 3:
            raise ManifestError(f"frame {self.frame}: joints must be (J, 3), got {self.joints.shape}")
        if not np.all(np.isfinite(self.joints)):
            raise ManifestError(f"frame {self.frame}: non-finite keypoint")
        c = self.joints[:, 2]
        if np.any((c < 0) | (c > 1)):
            raise ManifestError(f"frame {self.frame}: confidence outside [0, 1]")


def write_keypoints(path, frames) -> None:
    with open(path, "w") as fh:
        for f in frames:
            rec = {"frame": int(f.frame), "joints": [[float(v) for v in j] for j in f.joints]}
            fh.write(json.dumps(rec) + "\n")


def read_keypoints(path) -> list:
    frames = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                frames.append(PoseFrame(int(rec["frame"]), rec["joints"]))
            except (KeyError, TypeError, ValueError) as exc:
                raise ManifestError(f"{path}:{lineno}: {exc}") from exc
    return frames


def stack_frames(frames) -> np.ndarray:
    """(T, J_raw, 3) array from a list of :class:`PoseFrame`."""
    return np.stack([f.joints for f in frames])


def select_permute(frame, joint_map: JointMap) -> np.ndarray:
    """Coordinates of the mapped joints, in map order, confidence dropped.

    Accepts a :class:`PoseFrame`, a (J_raw, 3) array, or a (T, J_raw, 3) stack.
    """
    joints = frame.joints if isinstance(frame, PoseFrame) else np.asarray(frame)
    joint_map.validate_for(joints.shape[-2])
    return joints[..., joint_map.indices, :2]


def normalize(seq: np.ndarray, root: int = 0) -> np.ndarray:
    """Center a (T, J, 2) sequence on the root joint's mean position and scale
    by the largest per-axis extent, so every coordinate lies in [-1, 1]."""
    seq = np.asarray(seq, dtype=np.float64)
    extent = (seq.max(axis=(0, 1)) - seq.min(axis=(0, 1))).max()
    if not extent > 0:
        raise DegenerateInputError("all joints coincide across the sequence")
    origin = seq[:, root].mean(axis=0)
    return (seq - origin) / extent


def sample_windows(frames, T: int, stride: int | None = None) -> list:
    """All length-``T`` windows of ``frames`` at ``stride`` (default T // 2)."""
    n = len(frames)
    if T <= 0:
        raise ShapeError(f"window length must be positive, got {T}")
    if n < T:
        raise ShapeError(f"sequence of {n} frames is shorter than T={T}")
    stride = stride or max(T // 2, 1)
    return [frames[s:s + T] for s in range(0, n - T + 1, stride)]


@dataclass
class SkeletonSequence:
    data: np.ndarray            # (T, J_sel, 2) normalized coordinates
    label: int | None = None
    source_id: str = ""


# ---------------------------------------------------------------- manifests

@dataclass
class SampleRecord:
    path: str
    label: int
    split: str


@dataclass
class ExperimentManifest:
    name: str
    T: int
    joint_map: str
    classes: list
    samples: list = field(default_factory=list)
    label_budget: int | None = None
    root: str = "."             # directory that sample paths are relative to

    def validate(self, check_files: bool = True) -> None:
        seen = {}
        for s in self.samples:
            if s.split not in ("train", "test"):
                raise ManifestError(f"{s.path}: split must be train/test, got {s.split!r}")
            if not 0 <= s.label < len(self.classes):
                raise ManifestError(f"{s.path}: label {s.label} outside {len(self.classes)} classes")
            if seen.setdefault(s.path, s.split) != s.split:
                raise ManifestError(f"{s.path} appears in both splits")
            if check_files and not os.path.exists(self.resolve(s.path)):
                raise ManifestError(f"missing keypoint file {self.resolve(s.path)}")
        get_joint_map(self.joint_map)

    def resolve(self, path: str) -> str:
        return path if os.path.isabs(path) else os.path.join(self.root, path)

    def split(self, name: str) -> list:
        return [s for s in self.samples if s.split == name]

    def to_dict(self) -> dict:
        return {"name": self.name, "T": self.T, "joint_map": self.joint_map,
                "classes": list(self.classes), "label_budget": self.label_budget,
                "samples": [{"path": s.path, "label": s.label, "split": s.split}
                            for s in self.samples]}

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "ExperimentManifest":
        path = Path(path)
        if path.is_dir():
            path = path / "manifest.json"
        try:
            with open(path) as fh:
                d = json.load(fh)
            m = cls(d["name"], int(d["T"]), d["joint_map"], list(d["classes"]),
                    [SampleRecord(s["path"], int(s["label"]), s["split"]) for s in d["samples"]],
                    d.get("label_budget"), str(path.parent))
        except (OSError, KeyError, ValueError) as exc:
            raise ManifestError(f"cannot read manifest {path}: {exc}") from exc
        m.validate()
        return m


@dataclass
class WindowSet:
    """Stacked model inputs for one split."""
    x: np.ndarray               # (N, T, J, 2)
    y: np.ndarray               # (N,) int
    video: np.ndarray           # (N,) int index into ``videos``
    videos: list                # source path per video

    def __len__(self):
        return len(self.y)

    def subset_videos(self, keep) -> "WindowSet":
        keep = sorted(set(int(v) for v in keep))
        mask = np.isin(self.video, keep)
        remap = {v: i for i, v in enumerate(keep)}
        return WindowSet(self.x[mask], self.y[mask],
                         np.array([remap[v] for v in self.video[mask]], dtype=int),
                         [self.videos[v] for v in keep])

    def video_labels(self) -> np.ndarray:
        out = np.full(len(self.videos), -1, dtype=int)
        out[self.video] = self.y
        return out


def video_windows(frames, T: int, joint_map: JointMap, stride: int | None = None,
                  min_confidence: float = 0.3) -> list:
    """Normalized (T, J, 2) windows of one video; low-confidence windows dropped."""
    raw = stack_frames(frames)
    out = []
    for w in sample_windows(raw, T, stride):
        sel_conf = w[:, joint_map.indices, 2]
        if sel_conf.mean() < min_confidence:
            continue
        out.append(normalize(select_permute(w, joint_map), joint_map.root))
    return out


def load_split(manifest: ExperimentManifest, split: str, T: int | None = None,
               joint_map=None, stride: int | None = None,
               min_confidence: float = 0.3) -> WindowSet:
    """Read, select, normalize and window every video of ``split``.

    Videos shorter than ``T`` are skipped with a warning.
    """
    T = T or manifest.T
    jm = get_joint_map(joint_map if joint_map is not None else manifest.joint_map)
    xs, ys, vids, names = [], [], [], []
    for rec in manifest.split(split):
        frames = read_keypoints(manifest.resolve(rec.path))
        try:
            wins = video_windows(frames, T, jm, stride, min_confidence)
        except ShapeError as exc:
            log.warning("skipping %s: %s", rec.path, exc)
            continue
        if not wins:
            log.warning("skipping %s: no window passed the confidence filter", rec.path)
            continue
        vid = len(names)
        names.append(rec.path)
        xs.extend(wins)
        ys.extend([rec.label] * len(wins))
        vids.extend([vid] * len(wins))
    if not xs:
        raise ManifestError(f"split {split!r} of {manifest.name!r} yielded no windows")
    return WindowSet(np.stack(xs), np.array(ys, dtype=int), np.array(vids, dtype=int), names)
