"""Realism and diversity metrics: kernel MMD, LPIPS, MS-SSIM.

The MMD estimator keeps the unbiased within-set sums (i != j) plus the
full cross sum and is reported as-is, including slightly negative
values. LPIPS operates on producer-normalized feature stacks. MS-SSIM
follows the standard 5-scale formulation on [0, 1] gray images.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import MetricError, ValidationError

MSSSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
MSSSIM_WIN = 11
MSSSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


@dataclass(frozen=True)
class KernelConfig:
    """Gaussian RBF kernel settings for the MMD realism score."""

    sigma: float = 10.0
    normalize: bool = True

    def __post_init__(self):
        if not (np.isfinite(self.sigma) and self.sigma > 0):
            raise ValidationError(f"kernel sigma must be finite positive, got {self.sigma}")


def _l2_normalize(x: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(x, axis=-1, keepdims=True)
    return x / np.where(norms == 0, 1.0, norms)


def rbf_kernel(a: np.ndarray, b: np.ndarray, cfg: KernelConfig) -> float:
    """exp(-||a - b||^2 / (2 sigma^2)), optionally on L2-normalized inputs."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValidationError(f"kernel dim mismatch: {a.shape} vs {b.shape}")
    if cfg.normalize:
        a = _l2_normalize(a)
        b = _l2_normalize(b)
    d = a - b
    return float(np.exp(-np.dot(d, d) / (2.0 * cfg.sigma ** 2)))


def _kernel_matrix(x: np.ndarray, y: np.ndarray, sigma: float) -> np.ndarray:
    sq = (
        np.sum(x * x, axis=1)[:, None]
        + np.sum(y * y, axis=1)[None, :]
        - 2.0 * (x @ y.T)
    )
    np.maximum(sq, 0.0, out=sq)
    return np.exp(-sq / (2.0 * sigma ** 2))


def cmmd(x: np.ndarray, y: np.ndarray, cfg: KernelConfig = KernelConfig()) -> float:
    """Squared MMD between two embedding sets.

    1/(N(N-1)) sum_{i!=j} k(x_i,x_j) + 1/(M(M-1)) sum_{i!=j} k(y_i,y_j)
    - 2/(NM) sum_ij k(x_i,y_j). Exactly 0 on all-identical points; may be
    slightly negative in general and is never clamped.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or y.ndim != 2 or x.shape[1] != y.shape[1]:
        raise ValidationError(f"embedding sets must be NxD with equal D: {x.shape}, {y.shape}")
    n, m = len(x), len(y)
    if n < 2 or m < 2:
        raise MetricError(f"MMD needs at least 2 vectors per set, got {n} and {m}")
    if not (np.isfinite(x).all() and np.isfinite(y).all()):
        raise ValidationError("embeddings contain non-finite values")
    if cfg.normalize:
        x = _l2_normalize(x)
        y = _l2_normalize(y)
    kxx = _kernel_matrix(x, x, cfg.sigma)
    kyy = _kernel_matrix(y, y, cfg.sigma)
    kxy = _kernel_matrix(x, y, cfg.sigma)
    term_x = (kxx.sum() - np.trace(kxx)) / (n * (n - 1))
    term_y = (kyy.sum() - np.trace(kyy)) / (m * (m - 1))
    cross = 2.0 * kxy.sum() / (n * m)
    return float(term_x + term_y - cross)


@dataclass
class FeatureStack:
    """Per-layer feature maps (C_l, H_l, W_l) with non-negative weights."""

    layers: list[np.ndarray]
    weights: list = field(default_factory=list)

    def __post_init__(self):
        if not self.weights:
            self.weights = [1.0] * len(self.layers)
        if len(self.weights) != len(self.layers):
            raise ValidationError("one weight per layer required")


def lpips(a: FeatureStack, b: FeatureStack) -> float:
    """Layer-weighted squared feature distance.

    sum_l (1 / (H_l W_l)) ||w_l * (phi_l(a) - phi_l(b))||^2 with the
    weight inside the squared norm. Weights may be scalars or per-channel
    vectors. Inputs are assumed channel-normalized by their producer.
    """
    if len(a.layers) != len(b.layers):
        raise ValidationError(
            f"layer count mismatch: {len(a.layers)} vs {len(b.layers)}"
        )
    total = 0.0
    for fa, fb, w in zip(a.layers, b.layers, a.weights):
        fa = np.asarray(fa, dtype=np.float64)
        fb = np.asarray(fb, dtype=np.float64)
        if fa.shape != fb.shape:
            raise ValidationError(f"layer shape mismatch: {fa.shape} vs {fb.shape}")
        if fa.ndim != 3:
            raise ValidationError(f"layers must be CxHxW, got shape {fa.shape}")
        w = np.asarray(w, dtype=np.float64)
        if w.ndim == 1:
            w = w[:, None, None]
        diff = w * (fa - fb)
        _, h, wdt = fa.shape
        total += float(np.sum(diff * diff)) / (h * wdt)
    return total


def _ssim_terms(a: np.ndarray, b: np.ndarray) -> tuple[float, float]:
    """Mean luminance*cs and mean cs over valid 11x11 Gaussian windows."""
    k = np.arange(MSSSIM_WIN, dtype=np.float64) - MSSSIM_WIN // 2
    g = np.exp(-(k * k) / (2.0 * MSSSIM_SIGMA ** 2))
    g /= g.sum()

    def filt(img: np.ndarray) -> np.ndarray:
        # Valid-mode separable filtering (no padding).
        from numpy.lib.stride_tricks import sliding_window_view
        rows = sliding_window_view(img, MSSSIM_WIN, axis=1) @ g
        return sliding_window_view(rows, MSSSIM_WIN, axis=0) @ g

    c1 = SSIM_K1 ** 2
    c2 = SSIM_K2 ** 2
    mu_a = filt(a)
    mu_b = filt(b)
    mu_aa = mu_a * mu_a
    mu_bb = mu_b * mu_b
    mu_ab = mu_a * mu_b
    var_a = filt(a * a) - mu_aa
    var_b = filt(b * b) - mu_bb
    cov = filt(a * b) - mu_ab
    lum = (2.0 * mu_ab + c1) / (mu_aa + mu_bb + c1)
    cs = (2.0 * cov + c2) / (var_a + var_b + c2)
    return float(np.mean(lum * cs)), float(np.mean(cs))


def _downsample2(img: np.ndarray) -> np.ndarray:
    # Crop a trailing odd row/column, then 2x2 mean pooling; constant
    # images stay exactly constant.
    h, w = img.shape
    img = img[: h - h % 2, : w - w % 2]
    return (img[0::2, 0::2] + img[0::2, 1::2] + img[1::2, 0::2] + img[1::2, 1::2]) / 4.0


def ms_ssim(a: np.ndarray, b: np.ndarray, scales: int = 5) -> float:
    """Multi-scale SSIM in (0, 1]; 1 exactly iff the inputs are identical.

    Contrast/structure terms enter at every scale, luminance only at the
    final one; exponents follow the standard 5-scale weights. When the
    image is too small for the requested scale count, scales are reduced
    with a warning and the exponents renormalized.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValidationError(f"image shapes differ: {a.shape} vs {b.shape}")
    if not 1 <= scales <= len(MSSSIM_WEIGHTS):
        raise ValidationError(f"scales must be in [1, {len(MSSSIM_WEIGHTS)}]")
    min_side = min(a.shape)
    usable = scales
    while usable > 1 and min_side < MSSSIM_WIN * 2 ** (usable - 1):
        usable -= 1
    if min_side < MSSSIM_WIN:
        raise MetricError(f"image min side {min_side} below the {MSSSIM_WIN}px window")
    if usable < scales:
        warnings.warn(
            f"min side {min_side} supports only {usable} of {scales} scales; reducing",
            stacklevel=2,
        )
    weights = np.asarray(MSSSIM_WEIGHTS[:usable], dtype=np.float64)
    if usable < len(MSSSIM_WEIGHTS):
        # The published 5-scale exponents are used as-is; truncated sets
        # are renormalized to keep the score range comparable.
        weights = weights / weights.sum()
    value = 1.0
    for level in range(usable):
        ssim_full, cs = _ssim_terms(a, b)
        if level < usable - 1:
            value *= cs ** weights[level]
            a = _downsample2(a)
            b = _downsample2(b)
        else:
            value *= ssim_full ** weights[level]
    return float(value)


def _unrank_pair(m: int, n: int) -> tuple[int, int]:
    # m-th unordered pair (i < j) in lexicographic order over n items.
    i = 0
    row = n - 1
    while m >= row:
        m -= row
        i += 1
        row -= 1
    return i, i + 1 + m


def sample_pairs(n_images: int, n_pairs: int, seed: int) -> list[tuple[int, int]]:
    """Uniform sample of unordered index pairs without replacement.

    Deterministic per seed; returned sorted by (i, j).
    """
    if n_images < 2:
        raise ValidationError("need at least 2 images to form a pair")
    total = n_images * (n_images - 1) // 2
    if not 1 <= n_pairs <= total:
        raise ValidationError(f"cannot sample {n_pairs} of {total} unordered pairs")
    if n_pairs == total:
        chosen = np.arange(total)
    else:
        rng = np.random.default_rng(seed)
        chosen = np.sort(rng.choice(total, size=n_pairs, replace=False))
    return [_unrank_pair(int(m), n_images) for m in chosen]


def diversity_report(
    feature_stacks: list[FeatureStack],
    gray_images: list[np.ndarray],
    pairs: list[tuple[int, int]],
    scales: int = 5,
) -> tuple[float, float]:
    """Mean LPIPS and mean 1 - MS-SSIM over the sampled pairs."""
    if not pairs:
        raise MetricError("diversity undefined: empty pair list")
    lp_sum = 0.0
    ms_sum = 0.0
    for i, j in pairs:
        lp_sum += lpips(feature_stacks[i], feature_stacks[j])
        ms_sum += 1.0 - ms_ssim(gray_images[i], gray_images[j], scales=scales)
    return lp_sum / len(pairs), ms_sum / len(pairs)
