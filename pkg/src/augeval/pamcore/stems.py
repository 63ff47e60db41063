"""Condition packing and the per-condition convolutional stems."""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ValidationError
from .params import StemParams

PACK_CHANNELS = 21
# (start, stop) channel slices in the 21-channel packed tensor.
PACK_SLICES = {"edge": (0, 3), "depth": (15, 18), "seg": (18, 21)}


def pack_conditions(edge: np.ndarray, depth: np.ndarray,
                    seg: np.ndarray) -> np.ndarray:
    """Place three 3-channel maps into the 21-channel layout.

    Non-designated channels are identically zero.
    """
    maps = {"edge": np.asarray(edge), "depth": np.asarray(depth),
            "seg": np.asarray(seg)}
    shapes = {k: m.shape for k, m in maps.items()}
    for k, m in maps.items():
        if m.ndim != 3 or m.shape[0] != 3:
            raise ValidationError(f"{k} must be 3xHxW, got {m.shape}")
    if len(set(shapes.values())) != 1:
        raise ValidationError(f"condition shapes differ: {shapes}")
    h, w = maps["edge"].shape[1:]
    pack = np.zeros((PACK_CHANNELS, h, w), dtype=np.float64)
    for k, (lo, hi) in PACK_SLICES.items():
        pack[lo:hi] = maps[k]
    return pack


def unpack_conditions(pack: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    pack = np.asarray(pack)
    if pack.ndim != 3 or pack.shape[0] != PACK_CHANNELS:
        raise ValidationError(f"expected {PACK_CHANNELS}xHxW, got {pack.shape}")
    return tuple(pack[lo:hi].copy() for lo, hi in PACK_SLICES.values())


def silu(x: np.ndarray) -> np.ndarray:
    return x / (1.0 + np.exp(-x))


def conv2d(x: np.ndarray, w: np.ndarray, b: np.ndarray,
           stride: int = 2) -> np.ndarray:
    """Zero-padded (k//2) strided convolution, x: (Cin, H, W)."""
    k = w.shape[-1]
    p = k // 2
    xp = np.pad(x, ((0, 0), (p, p), (p, p)))
    win = sliding_window_view(xp, (k, k), axis=(1, 2))[:, ::stride, ::stride]
    return np.einsum("cijxy,ocxy->oij", win, w, optimize=True) + b[:, None, None]


def stem_forward(cond: np.ndarray, stem: StemParams) -> np.ndarray:
    """Lift a 3-channel condition map to a (D, H/s, W/s) feature grid.

    Spatial dims must be divisible by the stem's total stride.
    """
    cond = np.asarray(cond, dtype=np.float64)
    if cond.ndim != 3:
        raise ValidationError(f"condition must be CxHxW, got {cond.shape}")
    s = stem.total_stride
    _, h, w = cond.shape
    if h % s or w % s:
        raise ValidationError(f"spatial dims {h}x{w} not divisible by stride {s}")
    x = cond
    for i, (wgt, bias) in enumerate(zip(stem.weights, stem.biases)):
        x = conv2d(x, wgt, bias, stride=2)
        if stem.activation:
            x = silu(x)
    return x
