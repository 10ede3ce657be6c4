"""Synthetic video generation, clip sampling, sub-clip shuffling and augmentation.

Videos are sequences of frame vectors. Each class owns a centroid; a video's
frames follow a smooth random drift path around the class centroid plus
per-frame noise, so inter-video and intra-video variance are independently
controllable. All scale parameters (class_separation, drift_scale,
noise_scale, jitter_scale) refer to expected vector norms: per-dimension
standard deviations are scaled by 1/sqrt(frame_dim).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ClipRangeError, ConfigurationError, ShapeError


@dataclass(frozen=True)
class VideoSpec:
    """Knobs for a labeled synthetic video dataset."""

    num_classes: int
    videos_per_class: int
    frames_per_video: int
    frame_dim: int
    class_separation: float = 4.0
    drift_scale: float = 0.5
    noise_scale: float = 0.1
    seed: int = 0

    def __post_init__(self):
        for name in ("num_classes", "videos_per_class", "frames_per_video", "frame_dim"):
            v = getattr(self, name)
            if not isinstance(v, int) or v <= 0:
                raise ConfigurationError(f"{name} must be a positive integer, got {v!r}")
        for name in ("class_separation", "drift_scale", "noise_scale"):
            v = getattr(self, name)
            if v < 0:
                raise ConfigurationError(f"{name} must be non-negative, got {v!r}")

    @property
    def num_videos(self) -> int:
        return self.num_classes * self.videos_per_class


@dataclass(frozen=True)
class Video:
    id: int
    class_label: int
    frames: np.ndarray  # (frames_per_video, frame_dim), float64


@dataclass(frozen=True)
class Clip:
    """A fixed-length, fixed-stride contiguous sample of frames from one video."""

    video_id: int
    start_frame: int
    stride: int
    frames: np.ndarray  # (length, frame_dim), float64

    def __len__(self) -> int:
        return self.frames.shape[0]


@dataclass(frozen=True)
class AugmentConfig:
    """Temporally consistent augmentation: one parameter draw applied to every frame.

    jitter_scale       additive noise offset (expected norm), shared by all frames
    channel_scale_range per-dimension multiplicative factors drawn uniformly once
    crop_fraction      contiguous dimension window kept, rest zeroed (crop analog)
    """

    jitter_scale: float = 0.0
    channel_scale_range: tuple[float, float] = (1.0, 1.0)
    crop_fraction: float = 1.0

    def __post_init__(self):
        if self.jitter_scale < 0:
            raise ConfigurationError(f"jitter_scale must be non-negative, got {self.jitter_scale!r}")
        lo, hi = self.channel_scale_range
        if lo > hi:
            raise ConfigurationError(f"channel_scale_range must be (lo, hi) with lo <= hi, got {self.channel_scale_range!r}")
        if not (0.0 < self.crop_fraction <= 1.0):
            raise ConfigurationError(f"crop_fraction must be in (0, 1], got {self.crop_fraction!r}")


@dataclass(frozen=True)
class AugmentParams:
    """A recorded augmentation draw; applying it twice gives identical output."""

    scale: np.ndarray   # (frame_dim,) multiplicative, shared across frames
    offset: np.ndarray  # (frame_dim,) additive, shared across frames
    keep_mask: np.ndarray  # (frame_dim,) 0/1 crop mask, shared across frames


def generate_dataset(spec: VideoSpec) -> list[Video]:
    """Generate the full labeled dataset deterministically from spec.seed.

    Class centroids are random Gaussian points rescaled so the minimum pairwise
    distance equals class_separation. Each video drifts from its class centroid
    along a Gaussian random walk with per-frame step norm ~ drift_scale, plus
    i.i.d. per-frame noise with norm ~ noise_scale.
    """
    rng = np.random.default_rng(spec.seed)
    d = spec.frame_dim

    centroids = rng.normal(size=(spec.num_classes, d))
    if spec.num_classes > 1:
        diffs = centroids[:, None, :] - centroids[None, :, :]
        dist = np.sqrt((diffs ** 2).sum(-1))
        min_dist = dist[~np.eye(spec.num_classes, dtype=bool)].min()
        while min_dist == 0.0:  # measure-zero, but keep the guarantee exact
            centroids = rng.normal(size=(spec.num_classes, d))
            diffs = centroids[:, None, :] - centroids[None, :, :]
            dist = np.sqrt((diffs ** 2).sum(-1))
            min_dist = dist[~np.eye(spec.num_classes, dtype=bool)].min()
        centroids *= spec.class_separation / min_dist

    videos = []
    vid = 0
    for label in range(spec.num_classes):
        for _ in range(spec.videos_per_class):
            steps = rng.normal(scale=spec.drift_scale / math.sqrt(d),
                               size=(spec.frames_per_video, d))
            drift = np.cumsum(steps, axis=0)
            noise = rng.normal(scale=spec.noise_scale / math.sqrt(d),
                               size=(spec.frames_per_video, d))
            frames = centroids[label] + drift + noise
            videos.append(Video(id=vid, class_label=label, frames=frames))
            vid += 1
    return videos


def sample_clip(video: Video, length: int, stride: int, rng: np.random.Generator) -> Clip:
    """Sample a clip of `length` frames at temporal interval `stride`, start uniform."""
    if length < 1 or stride < 1:
        raise ConfigurationError(f"length and stride must be >= 1, got {length}, {stride}")
    num_frames = video.frames.shape[0]
    if length * stride > num_frames:
        raise ClipRangeError(
            f"clip window length*stride={length * stride} exceeds video of {num_frames} frames")
    max_start = num_frames - (length - 1) * stride - 1
    start = int(rng.integers(0, max_start + 1))
    frames = video.frames[start: start + length * stride: stride].copy()
    return Clip(video_id=video.id, start_frame=start, stride=stride, frames=frames)


def split_subclips(frames: np.ndarray, segments: int) -> list[np.ndarray]:
    """Split a clip's frames into `segments` contiguous equal-length pieces."""
    length = frames.shape[0]
    if segments < 1:
        raise ConfigurationError(f"segments must be >= 1, got {segments}")
    if length % segments != 0:
        raise ShapeError(f"clip of {length} frames is not divisible into {segments} segments")
    seg_len = length // segments
    return [frames[k * seg_len: (k + 1) * seg_len] for k in range(segments)]


def shuffle_subclips(clip: Clip, segments: int, rng: np.random.Generator) -> tuple[Clip, tuple[int, ...]]:
    """Shuffle a clip's sub-clips; returns the shuffled clip and the permutation.

    For segments=2 the permutation is always the swap (1, 0). For more segments
    a uniformly random non-identity permutation of segment order is drawn.
    Output position j holds original segment perm[j].
    """
    if segments < 2:
        raise ConfigurationError(f"shuffling needs segments >= 2, got {segments}")
    subs = split_subclips(clip.frames, segments)
    if segments == 2:
        perm: tuple[int, ...] = (1, 0)
    else:
        identity = tuple(range(segments))
        perm = identity
        while perm == identity:
            perm = tuple(int(i) for i in rng.permutation(segments))
    shuffled = np.concatenate([subs[p] for p in perm], axis=0)
    return Clip(video_id=clip.video_id, start_frame=clip.start_frame,
                stride=clip.stride, frames=shuffled), perm


def invert_permutation(perm: Sequence[int]) -> tuple[int, ...]:
    inv = [0] * len(perm)
    for j, p in enumerate(perm):
        inv[p] = j
    return tuple(inv)


def unshuffle_subclips(clip: Clip, segments: int, perm: Sequence[int]) -> Clip:
    """Undo shuffle_subclips given the permutation it returned."""
    subs = split_subclips(clip.frames, segments)
    restored = np.concatenate([subs[j] for j in invert_permutation(perm)], axis=0)
    return Clip(video_id=clip.video_id, start_frame=clip.start_frame,
                stride=clip.stride, frames=restored)


def permutation_index(perm: Sequence[int]) -> int:
    """Lexicographic rank of a permutation among all len(perm)! orderings (Lehmer code)."""
    n = len(perm)
    index = 0
    for i in range(n):
        smaller = sum(1 for j in range(i + 1, n) if perm[j] < perm[i])
        index += smaller * math.factorial(n - 1 - i)
    return index


def draw_augment_params(cfg: AugmentConfig, frame_dim: int, rng: np.random.Generator) -> AugmentParams:
    """Draw one set of augmentation parameters (shared by every frame of a clip)."""
    lo, hi = cfg.channel_scale_range
    scale = rng.uniform(lo, hi, size=frame_dim)
    offset = rng.normal(scale=cfg.jitter_scale / math.sqrt(frame_dim), size=frame_dim)
    n_keep = max(1, math.ceil(cfg.crop_fraction * frame_dim))
    crop_start = int(rng.integers(0, frame_dim - n_keep + 1))
    keep_mask = np.zeros(frame_dim)
    keep_mask[crop_start: crop_start + n_keep] = 1.0
    return AugmentParams(scale=scale, offset=offset, keep_mask=keep_mask)


def apply_augment(clip: Clip, params: AugmentParams) -> Clip:
    frames = (clip.frames * params.scale + params.offset) * params.keep_mask
    return Clip(video_id=clip.video_id, start_frame=clip.start_frame,
                stride=clip.stride, frames=frames)


def augment(clip: Clip, cfg: AugmentConfig, rng: np.random.Generator) -> Clip:
    """Augment a clip with a single temporally consistent parameter draw."""
    return apply_augment(clip, draw_augment_params(cfg, clip.frames.shape[1], rng))


@dataclass(frozen=True)
class TrainingTuple:
    """One pretext-task instance: raw clip, its augmented version, and the
    shuffled augmented version (shuffle applied on top of the same augmentation
    draw), plus the shuffle permutation."""

    clip: Clip
    augmented: Clip
    shuffled: Clip
    permutation: tuple[int, ...]


def make_training_tuple(video: Video, length: int, stride: int, segments: int,
                        cfg: AugmentConfig, rng: np.random.Generator) -> TrainingTuple:
    clip = sample_clip(video, length, stride, rng)
    augmented = augment(clip, cfg, rng)
    shuffled, perm = shuffle_subclips(augmented, segments, rng)
    return TrainingTuple(clip=clip, augmented=augmented, shuffled=shuffled, permutation=perm)


# --- dataset serialization: manifest (key/value text) + flat float64 LE array ---

_MANIFEST_NAME = "manifest.txt"
_FRAMES_NAME = "frames.bin"


def save_dataset(videos: list[Video], spec: VideoSpec, out_dir: str | Path) -> None:
    """Write manifest.txt (spec fields) and frames.bin (row-major float64 LE).

    Frames of all videos are concatenated in video-id order; labels are implied
    by the class-major generation order (video v has label v // videos_per_class).
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lines = ["format=dualrep-dataset-v1"]
    for name in ("num_classes", "videos_per_class", "frames_per_video", "frame_dim",
                 "class_separation", "drift_scale", "noise_scale", "seed"):
        lines.append(f"{name}={getattr(spec, name)!r}")
    (out / _MANIFEST_NAME).write_text("\n".join(lines) + "\n")
    flat = np.concatenate([v.frames.reshape(-1) for v in videos])
    flat.astype("<f8").tofile(out / _FRAMES_NAME)


def load_dataset(in_dir: str | Path) -> tuple[VideoSpec, list[Video]]:
    src = Path(in_dir)
    fields: dict[str, str] = {}
    for line in (src / _MANIFEST_NAME).read_text().splitlines():
        if not line.strip():
            continue
        key, _, value = line.partition("=")
        fields[key] = value
    if fields.get("format") != "dualrep-dataset-v1":
        raise ConfigurationError(f"unrecognized dataset format in {src / _MANIFEST_NAME}")
    spec = VideoSpec(
        num_classes=int(fields["num_classes"]),
        videos_per_class=int(fields["videos_per_class"]),
        frames_per_video=int(fields["frames_per_video"]),
        frame_dim=int(fields["frame_dim"]),
        class_separation=float(fields["class_separation"]),
        drift_scale=float(fields["drift_scale"]),
        noise_scale=float(fields["noise_scale"]),
        seed=int(fields["seed"]),
    )
    flat = np.fromfile(src / _FRAMES_NAME, dtype="<f8")
    expected = spec.num_videos * spec.frames_per_video * spec.frame_dim
    if flat.size != expected:
        raise ShapeError(f"frames.bin holds {flat.size} floats, expected {expected}")
    frames = flat.reshape(spec.num_videos, spec.frames_per_video, spec.frame_dim)
    return spec, [
        Video(id=v, class_label=v // spec.videos_per_class, frames=frames[v])
        for v in range(spec.num_videos)
    ]
