"""
Tensor helpers shared by the encoders, detector and scorers.
"""

import hashlib
import math

import torch

DTYPE = torch.float64
LOGIT_BOUND = 80.0
LOG_FLOOR = 1e-12


def l2_normalize(x: torch.Tensor, dim: int = -1, eps: float = 1e-12) -> torch.Tensor:
    """Unit-normalize along ``dim``."""
    return x / x.norm(dim=dim, keepdim=True).clamp_min(eps)


def clamp_logits(x: torch.Tensor) -> torch.Tensor:
    return x.clamp(-LOGIT_BOUND, LOGIT_BOUND)


def seed_from_key(key: str) -> int:
    """Stable 63-bit seed derived from a string key."""
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") & ((1 << 63) - 1)


def seeded_direction(key: str, dim: int) -> torch.Tensor:
    """Unit vector drawn from a generator seeded by ``key``."""
    generator = torch.Generator().manual_seed(seed_from_key(key))
    return l2_normalize(torch.randn(dim, generator=generator, dtype=DTYPE))


def inverse_sigmoid(x: torch.Tensor, eps: float = 1e-6) -> torch.Tensor:
    x = x.clamp(eps, 1.0 - eps)
    return torch.log(x / (1.0 - x))


def sine_position_encoding(points: torch.Tensor, dim: int, temperature: float = 10000.0) -> torch.Tensor:
    """Sinusoidal encoding of normalized (x, y) points: (m, 2) -> (m, dim).

    Half of the channels encode y and half x; each half interleaves sin/cos
    over geometric frequency bands.
    """
    half = dim // 2
    y_dims = half
    x_dims = dim - half
    out = []
    for coord, width in ((points[:, 1], y_dims), (points[:, 0], x_dims)):
        bands = torch.arange(width, dtype=DTYPE)
        freq = temperature ** (2 * torch.div(bands, 2, rounding_mode="floor") / max(width, 1))
        angles = coord[:, None] * 2 * math.pi / freq
        enc = torch.where(bands.long() % 2 == 0, angles.sin(), angles.cos())
        out.append(enc)
    return torch.cat(out, dim=1)


def box_iou(boxes_a: torch.Tensor, boxes_b: torch.Tensor) -> torch.Tensor:
    """(a, b) IoU matrix of (cx, cy, w, h) boxes; empty unions give 0."""
    a = torch.cat([boxes_a[:, :2] - boxes_a[:, 2:] / 2, boxes_a[:, :2] + boxes_a[:, 2:] / 2], dim=1)
    b = torch.cat([boxes_b[:, :2] - boxes_b[:, 2:] / 2, boxes_b[:, :2] + boxes_b[:, 2:] / 2], dim=1)
    top_left = torch.maximum(a[:, None, :2], b[None, :, :2])
    bottom_right = torch.minimum(a[:, None, 2:], b[None, :, 2:])
    inter = (bottom_right - top_left).clamp_min(0.0).prod(dim=-1)
    area_a = boxes_a[:, 2:].clamp_min(0.0).prod(dim=-1)
    area_b = boxes_b[:, 2:].clamp_min(0.0).prod(dim=-1)
    union = area_a[:, None] + area_b[None, :] - inter
    return torch.where(union > 0, inter / union.clamp_min(1e-300), torch.zeros_like(inter))
