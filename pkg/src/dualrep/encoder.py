"""Tiny differentiable clip encoder with clip and dual projection heads.

The backbone applies a per-frame affine map + tanh, mean-pools over frames,
then applies a second affine map. The clip head projects the pooled vector to
a unit-norm feature; the dual head runs the shared backbone on each of the S
sub-clips independently and projects each to a unit-norm feature, giving the
ordered dual representation (one part per sub-clip, temporal order preserved).

Everything runs in float64 on CPU. All stochastic initialization comes from a
numpy Generator so training state serializes losslessly.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .archive import load_archive, save_archive
from .errors import NormalizationError, ShapeError

Tensor = torch.Tensor


def l2_normalize(x: Tensor, dim: int = -1) -> Tensor:
    """Normalize to unit L2 norm; a zero vector is an error, not an epsilon."""
    norm = x.norm(dim=dim, keepdim=True)
    if (norm == 0).any():
        raise NormalizationError("cannot normalize a zero vector")
    return x / norm


def _init_linear(layer: nn.Linear, rng: np.random.Generator) -> None:
    # uniform(-a, a) with a = 1/sqrt(fan_in), for both weight and bias
    bound = 1.0 / math.sqrt(layer.in_features)
    with torch.no_grad():
        layer.weight.copy_(torch.from_numpy(
            rng.uniform(-bound, bound, size=tuple(layer.weight.shape))))
        layer.bias.copy_(torch.from_numpy(
            rng.uniform(-bound, bound, size=tuple(layer.bias.shape))))


class DualEncoder(nn.Module):
    """Backbone f plus clip projector and dual projector heads."""

    def __init__(self, frame_dim: int, hidden_dim: int = 32, embed_dim: int = 16,
                 segments: int = 2, rng: np.random.Generator | None = None):
        super().__init__()
        if segments < 1:
            raise ShapeError(f"segments must be >= 1, got {segments}")
        self.frame_dim = frame_dim
        self.hidden_dim = hidden_dim
        self.embed_dim = embed_dim
        self.segments = segments
        self.frame_map = nn.Linear(frame_dim, hidden_dim)
        self.temporal_map = nn.Linear(hidden_dim, hidden_dim)
        self.clip_head_hidden = nn.Linear(hidden_dim, hidden_dim)
        self.clip_head_out = nn.Linear(hidden_dim, embed_dim)
        self.dual_head_hidden = nn.Linear(hidden_dim, hidden_dim)
        self.dual_head_out = nn.Linear(hidden_dim, embed_dim)
        self.double()
        rng = rng if rng is not None else np.random.default_rng(0)
        for layer in (self.frame_map, self.temporal_map, self.clip_head_hidden,
                      self.clip_head_out, self.dual_head_hidden, self.dual_head_out):
            _init_linear(layer, rng)

    def backbone(self, clip: Tensor) -> Tensor:
        """Encode frames (..., L, frame_dim) into a hidden vector (..., hidden_dim)."""
        if clip.shape[-1] != self.frame_dim:
            raise ShapeError(f"expected frame dim {self.frame_dim}, got {clip.shape[-1]}")
        per_frame = torch.tanh(self.frame_map(clip))
        pooled = per_frame.mean(dim=-2)
        return self.temporal_map(pooled)

    def project_clip(self, hidden: Tensor) -> Tensor:
        """Project a backbone vector to a unit-norm clip feature."""
        out = self.clip_head_out(torch.tanh(self.clip_head_hidden(hidden)))
        return l2_normalize(out)

    def encode_clip(self, clip: Tensor) -> Tensor:
        return self.project_clip(self.backbone(clip))

    def project_dual(self, clip: Tensor) -> Tensor:
        """Encode each of the S sub-clips into a unit-norm part.

        Input (..., L, frame_dim) with L divisible by segments; output
        (..., S, embed_dim), parts in temporal order.
        """
        length = clip.shape[-2]
        if length % self.segments != 0:
            raise ShapeError(f"clip length {length} not divisible into {self.segments} segments")
        seg_len = length // self.segments
        split = clip.reshape(*clip.shape[:-2], self.segments, seg_len, self.frame_dim)
        hidden = self.backbone(split)
        out = self.dual_head_out(torch.tanh(self.dual_head_hidden(hidden)))
        return l2_normalize(out)


class OrderPredictionHead(nn.Module):
    """Affine map from concatenated dual-rep parts to shuffle-permutation logits."""

    def __init__(self, embed_dim: int, segments: int, rng: np.random.Generator | None = None):
        super().__init__()
        self.segments = segments
        self.num_permutations = math.factorial(segments)
        self.linear = nn.Linear(segments * embed_dim, self.num_permutations)
        self.double()
        _init_linear(self.linear, rng if rng is not None else np.random.default_rng(0))

    def forward(self, dual_parts: Tensor) -> Tensor:
        """dual_parts (..., S, embed_dim) -> logits (..., S!)."""
        flat = dual_parts.reshape(*dual_parts.shape[:-2], -1)
        return self.linear(flat)


def parameter_manifest(module: nn.Module) -> list[tuple[str, tuple[int, ...]]]:
    return [(name, tuple(p.shape)) for name, p in module.named_parameters()]


@torch.no_grad()
def momentum_update(key_module: nn.Module, query_module: nn.Module, m: float) -> None:
    """key <- m*key + (1-m)*query, elementwise, for every parameter."""
    if parameter_manifest(key_module) != parameter_manifest(query_module):
        raise ShapeError("key/query parameter manifests do not match")
    for pk, pq in zip(key_module.parameters(), query_module.parameters()):
        pk.mul_(m).add_(pq, alpha=1.0 - m)


def encoder_state_arrays(encoder: DualEncoder, prefix: str = "") -> dict[str, np.ndarray]:
    return {prefix + name: p.detach().numpy().copy()
            for name, p in encoder.named_parameters()}


def load_encoder_state(encoder: DualEncoder, arrays: dict[str, np.ndarray], prefix: str = "") -> None:
    with torch.no_grad():
        for name, p in encoder.named_parameters():
            key = prefix + name
            if key not in arrays:
                raise ShapeError(f"missing parameter {key} in checkpoint")
            arr = arrays[key]
            if tuple(arr.shape) != tuple(p.shape):
                raise ShapeError(f"parameter {key} has shape {arr.shape}, expected {tuple(p.shape)}")
            p.copy_(torch.from_numpy(arr))


def save_encoder(encoder: DualEncoder, prefix: str | Path) -> None:
    meta = {"frame_dim": encoder.frame_dim, "hidden_dim": encoder.hidden_dim,
            "embed_dim": encoder.embed_dim, "segments": encoder.segments}
    save_archive(prefix, encoder_state_arrays(encoder), meta)


def load_encoder(prefix: str | Path) -> DualEncoder:
    arrays, meta = load_archive(prefix)
    enc = DualEncoder(frame_dim=int(meta["frame_dim"]), hidden_dim=int(meta["hidden_dim"]),
                      embed_dim=int(meta["embed_dim"]), segments=int(meta["segments"]))
    load_encoder_state(enc, arrays)
    return enc
