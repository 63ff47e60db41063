"""Deterministic image operators: grayscale, blur, Sobel, Canny, masks.

All images are (H, W) float arrays in [0, 1] unless stated otherwise.
Edge maps and masks are (H, W) uint8 arrays with values in {0, 1}.
"""

from __future__ import annotations

import os
from collections import deque

import numpy as np
from PIL import Image

from .errors import ValidationError
from .tensorio import SIGN_CLASSES, DetectionSet

# BT.601 luma weights.
_LUMA = np.array([0.299, 0.587, 0.114])


def read_image_gray(path: str | os.PathLike) -> np.ndarray:
    """Load an 8-bit gray or RGB PNG and return luma in [0, 1]."""
    with Image.open(path) as im:
        if im.mode == "L":
            return np.asarray(im, dtype=np.float64) / 255.0
        if im.mode in ("RGB", "RGBA", "P"):
            rgb = np.asarray(im.convert("RGB"), dtype=np.float64)
            return to_grayscale(rgb)
    raise ValidationError(f"{path}: unsupported image mode {im.mode}")


def to_grayscale(rgb: np.ndarray) -> np.ndarray:
    """Luma (0.299 R + 0.587 G + 0.114 B) / 255 from an 8-bit RGB array."""
    rgb = np.asarray(rgb, dtype=np.float64)
    if rgb.ndim != 3 or rgb.shape[2] != 3 or rgb.shape[0] == 0 or rgb.shape[1] == 0:
        raise ValidationError(f"expected non-empty HxWx3 image, got shape {rgb.shape}")
    return rgb @ _LUMA / 255.0


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Normalized 1-d Gaussian with radius ceil(3 sigma)."""
    if sigma <= 0:
        raise ValidationError(f"sigma must be > 0, got {sigma}")
    r = int(np.ceil(3.0 * sigma))
    x = np.arange(-r, r + 1, dtype=np.float64)
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


def _convolve_axis(img: np.ndarray, kernel: np.ndarray, axis: int) -> np.ndarray:
    # Edge-inclusive mirror padding; preserves the image mean exactly for
    # symmetric kernels, which the blur invariants rely on.
    r = len(kernel) // 2
    pad = [(0, 0), (0, 0)]
    pad[axis] = (r, r)
    padded = np.pad(img, pad, mode="symmetric")
    out = np.zeros_like(img)
    for i, w in enumerate(kernel):
        if axis == 0:
            out += w * padded[i:i + img.shape[0], :]
        else:
            out += w * padded[:, i:i + img.shape[1]]
    return out


def gaussian_blur(img: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur, output shape unchanged."""
    img = np.asarray(img, dtype=np.float64)
    k = gaussian_kernel(sigma)
    return _convolve_axis(_convolve_axis(img, k, 0), k, 1)


def sobel_gradients(img: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Sobel gx (left-to-right) and gy (top-to-bottom) with mirror padding."""
    img = np.asarray(img, dtype=np.float64)
    smooth = np.array([1.0, 2.0, 1.0])
    diff = np.array([-1.0, 0.0, 1.0])
    gx = _convolve_axis(_convolve_axis(img, smooth, 0), diff, 1)
    gy = _convolve_axis(_convolve_axis(img, smooth, 1), diff, 0)
    return gx, gy


def _nms(mag: np.ndarray, gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    """Non-maximum suppression over 4 quantized gradient directions.

    A pixel survives iff its magnitude is >= the previous neighbour and
    strictly > the next neighbour along the gradient axis, so an ideal
    two-pixel Sobel plateau keeps exactly one line.
    """
    h, w = mag.shape
    angle = np.mod(np.degrees(np.arctan2(gy, gx)), 180.0)
    # Bins: 0 -> horizontal gradient, 1 -> 45deg, 2 -> vertical, 3 -> 135deg.
    dbin = np.zeros(mag.shape, dtype=np.uint8)
    dbin[(angle >= 22.5) & (angle < 67.5)] = 1
    dbin[(angle >= 67.5) & (angle < 112.5)] = 2
    dbin[(angle >= 112.5) & (angle < 157.5)] = 3

    padded = np.pad(mag, 1, mode="constant")

    def shifted(dy: int, dx: int) -> np.ndarray:
        return padded[1 + dy:1 + dy + h, 1 + dx:1 + dx + w]

    # (prev, next) neighbour offsets per direction bin, as (dy, dx).
    offsets = {
        0: ((0, -1), (0, 1)),
        1: ((-1, 1), (1, -1)),
        2: ((-1, 0), (1, 0)),
        3: ((-1, -1), (1, 1)),
    }
    keep = np.zeros(mag.shape, dtype=bool)
    for d, ((py, px), (ny, nx)) in offsets.items():
        sel = dbin == d
        keep |= sel & (mag >= shifted(py, px)) & (mag > shifted(ny, nx))
    return np.where(keep, mag, 0.0)


def hysteresis(strong: np.ndarray, weak: np.ndarray) -> np.ndarray:
    """Keep strong pixels plus weak pixels 8-connected to a strong one."""
    strong = np.asarray(strong, dtype=bool)
    weak = np.asarray(weak, dtype=bool)
    h, w = strong.shape
    out = strong.copy()
    queue = deque(zip(*np.nonzero(strong)))
    while queue:
        y, x = queue.popleft()
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                ny, nx = y + dy, x + dx
                if 0 <= ny < h and 0 <= nx < w and weak[ny, nx] and not out[ny, nx]:
                    out[ny, nx] = True
                    queue.append((ny, nx))
    return out.astype(np.uint8)


def canny(img: np.ndarray, low: float = 0.1, high: float = 0.2,
          sigma: float = 1.4) -> np.ndarray:
    """Classical Canny: blur, Sobel, 4-direction NMS, hysteresis.

    Thresholds apply to the gradient magnitude normalized by its maximum,
    so low/high live on [0, 1] regardless of image contrast.
    """
    if not (0.0 <= low < high <= 1.0):
        raise ValidationError(f"need 0 <= low < high <= 1, got low={low} high={high}")
    img = np.asarray(img, dtype=np.float64)
    blurred = gaussian_blur(img, sigma)
    gx, gy = sobel_gradients(blurred)
    mag = np.hypot(gx, gy)
    peak = mag.max()
    if peak == 0.0:
        return np.zeros(img.shape, dtype=np.uint8)
    mag = mag / peak
    thin = _nms(mag, gx, gy)
    strong = thin >= high
    weak = thin >= low
    return hysteresis(strong, weak)


def build_edge_mask(height: int, width: int, sign_boxes: DetectionSet) -> np.ndarray:
    """Union of the lower image half and any traffic-sign boxes.

    The lower half is rows r >= floor(H/2). Boxes of non-sign classes are
    ignored. Box pixels are floor/ceil rasterized and clamped to bounds.
    """
    mask = np.zeros((height, width), dtype=np.uint8)
    mask[height // 2:, :] = 1
    for b in sign_boxes.boxes:
        if b.cls not in SIGN_CLASSES:
            continue
        y1 = max(0, int(np.floor(b.y1)))
        y2 = min(height, int(np.ceil(b.y2)))
        x1 = max(0, int(np.floor(b.x1)))
        x2 = min(width, int(np.ceil(b.x2)))
        if y1 < y2 and x1 < x2:
            mask[y1:y2, x1:x2] = 1
    return mask


def write_edge_png(edge: np.ndarray, path: str | os.PathLike) -> None:
    """Edge map as 8-bit PNG with values {0, 255}."""
    Image.fromarray((np.asarray(edge) > 0).astype(np.uint8) * 255, mode="L").save(
        path, format="PNG"
    )
