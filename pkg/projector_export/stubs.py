"""Deterministic stub projectors.

Stubs are first-class, not test-only: they let the whole evaluation
pipeline run in CI with zero model weights, no GPU, and no network.
Each pair's artifacts are derived from a per-pair RNG plus the image
content itself, so original and generated sides stay structurally
close (high IoU, overlapping boxes) without being identical.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

from features import normalize_lpips_features

BACKEND_NAMES = ("segmentation", "depth", "detection", "embedding", "caption")

ALIASES = {
    "seg": "segmentation",
    "det": "detection",
    "embed": "embedding",
    "emb": "embedding",
    "cap": "caption",
}

# Optional real-model adapters are pinned by identifier; none ship here.
DEFAULT_MODEL_IDS = {
    "segmentation": "shi-labs/oneformer_cityscapes_swin_large",
    "depth": "metric3d_vit_large",
    "detection": "IDEA-Research/grounding-dino-base",
    "embedding": "openai/clip-vit-large-patch14",
    "caption": "Qwen/Qwen3-VL-32B-Instruct",
}

EMBED_DIM = 16

STUB_DET_CLASSES = ("car", "truck", "bus", "person", "traffic light",
                    "traffic sign", "traffic cone")

# Instruction constraints any caption backend (stub or model adapter)
# must apply: concise layout description, no weather/time vocabulary,
# capped decode length.
CAPTION_MAX_NEW_TOKENS = 96
CAPTION_INSTRUCTION = (
    "Describe this driving scene in one or two concise sentences focused "
    "on the listed objects, their spatial relations, the background, the "
    "viewpoint, and image quality. Do not mention rain, snow, fog, "
    "clear or sunny conditions, day, night, dawn, or twilight."
)

# Word banks free of weather/time vocabulary (the caption instruction
# forbids them; see the prompt pipeline's validation scan).
_CAPTION_ADJ = ("busy", "quiet", "wide", "narrow", "curved", "straight")
_CAPTION_OBJ = ("parked cars", "a delivery truck", "several pedestrians",
                "a city bus", "traffic cones", "overhead signs")
_CAPTION_BG = ("tall buildings", "a tree-lined median", "storefronts",
               "an overpass", "residential houses", "a guard rail")


class BackendLoadError(Exception):
    """A requested model-mode backend cannot be loaded."""


@dataclass(frozen=True)
class BackendSpec:
    name: str
    mode: str  # "stub" or "model"
    identifier: str | None = None

    def __post_init__(self):
        if self.name not in BACKEND_NAMES:
            raise ValueError(f"unknown backend {self.name!r}")
        if self.mode not in ("stub", "model"):
            raise ValueError(f"unknown mode {self.mode!r}")


def parse_backends(spec: str) -> dict[str, BackendSpec]:
    """Parse "seg=stub,depth=stub,..." into specs; unlisted backends
    default to stub mode."""
    chosen: dict[str, BackendSpec] = {}
    if spec:
        for part in spec.split(","):
            key, _, mode = part.partition("=")
            name = ALIASES.get(key.strip(), key.strip())
            mode, _, ident = (mode or "stub").partition(":")
            chosen[name] = BackendSpec(name, mode.strip() or "stub",
                                       ident or None)
    for name in BACKEND_NAMES:
        chosen.setdefault(name, BackendSpec(name, "stub"))
    return chosen


def require_stub_or_load(spec: BackendSpec) -> None:
    if spec.mode == "model":
        ident = spec.identifier or DEFAULT_MODEL_IDS[spec.name]
        raise BackendLoadError(
            f"backend {spec.name!r}: model mode needs the optional adapter "
            f"for {ident!r}; none is installed, use mode=stub"
        )


def content_rng(data: bytes, seed: int, label: str) -> np.random.Generator:
    return np.random.default_rng(
        [seed, zlib.crc32(data), zlib.crc32(label.encode())]
    )


def pair_rng(seed: int, pair_id: int, label: str) -> np.random.Generator:
    return np.random.default_rng([seed, pair_id, zlib.crc32(label.encode())])


def synth_generated(gray: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Appearance-perturbed counterpart of an original image."""
    gain = rng.uniform(0.7, 1.3)
    bias = rng.uniform(-0.15, 0.15)
    noise = rng.normal(0.0, 0.02, size=gray.shape)
    return np.clip(gain * gray + bias + noise, 0.0, 1.0)


def stub_segmentation(h: int, w: int, rng: np.random.Generator,
                      row_shift: int = 0) -> np.ndarray:
    """Blocky sky/building/road layout with a few object patches."""
    labels = np.zeros((h, w), dtype=np.uint8)
    horizon = h // 3
    mid = 2 * h // 3
    labels[:horizon] = 10   # sky
    labels[horizon:mid] = 2  # building
    labels[mid:] = 0         # road
    for _ in range(3):
        cls = int(rng.choice([13, 11, 8, 5]))  # car, person, vegetation, pole
        ph = int(rng.integers(3, max(4, h // 6)))
        pw = int(rng.integers(3, max(4, w // 6)))
        y = int(rng.integers(horizon, h - ph))
        x = int(rng.integers(0, w - pw))
        labels[y:y + ph, x:x + pw] = cls
    if row_shift:
        labels = np.roll(labels, row_shift, axis=0)
        labels[:row_shift] = 10
    return labels


def stub_depth(gray: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Positive relative depth: distance grows toward the top, modulated
    by image content and a smooth random bump."""
    h, w = gray.shape
    rows = np.linspace(8.0, 1.0, h)[:, None]
    bump = rng.uniform(0.0, 1.0) * np.sin(
        np.linspace(0, np.pi, w)[None, :] + rng.uniform(0, np.pi))
    return rows + 0.5 * gray + 0.3 * bump + 2.0


def stub_boxes(h: int, w: int, rng: np.random.Generator) -> list[dict]:
    boxes = []
    for _ in range(int(rng.integers(2, 5))):
        cls = str(rng.choice(STUB_DET_CLASSES))
        bw = float(rng.uniform(4, max(5.0, w / 4)))
        bh = float(rng.uniform(4, max(5.0, h / 4)))
        x1 = float(rng.uniform(0, w - bw - 1))
        y1 = float(rng.uniform(0, h - bh - 1))
        boxes.append({"cls": cls, "score": round(float(rng.uniform(0.3, 1.0)), 4),
                      "box": [x1, y1, x1 + bw, y1 + bh]})
    return boxes


def jitter_boxes(boxes: list[dict], h: int, w: int,
                 rng: np.random.Generator) -> list[dict]:
    """Detector-on-generated-image behaviour: small offsets, rare drops."""
    out = []
    for b in boxes:
        if rng.random() < 0.15:
            continue
        dx = float(rng.uniform(-1.5, 1.5))
        dy = float(rng.uniform(-1.5, 1.5))
        x1, y1, x2, y2 = b["box"]
        x1 = min(max(0.0, x1 + dx), w - 2.0)
        y1 = min(max(0.0, y1 + dy), h - 2.0)
        x2 = max(x1 + 1.0, min(float(w), x2 + dx))
        y2 = max(y1 + 1.0, min(float(h), y2 + dy))
        out.append({"cls": b["cls"], "score": round(float(rng.uniform(0.3, 1.0)), 4),
                    "box": [x1, y1, x2, y2]})
    return out


def _block_mean(gray: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    h, w = gray.shape
    bh, bw = h // out_h, w // out_w
    trimmed = gray[: out_h * bh, : out_w * bw]
    return trimmed.reshape(out_h, bh, out_w, bw).mean(axis=(1, 3))


def stub_embedding(gray: np.ndarray) -> np.ndarray:
    """Content embedding: pooled 4x4 intensities, L2-normalized."""
    pooled = _block_mean(gray, 4, 4).reshape(-1) + 1e-3
    return pooled / np.linalg.norm(pooled)


def stub_label_embeddings(seed: int) -> np.ndarray:
    """Text embeddings for the 5 weather + 3 time labels."""
    rng = np.random.default_rng([seed, zlib.crc32(b"label_embs")])
    embs = rng.standard_normal((8, EMBED_DIM))
    return embs / np.linalg.norm(embs, axis=1, keepdims=True)


def stub_features(gray: np.ndarray) -> tuple[list[np.ndarray], int]:
    """Two pyramid layers of content-derived channels, unit-normalized
    along channels as the perceptual-distance core expects."""
    h, w = gray.shape
    zero_sites = 0
    layers = []
    for out_hw, chans in (((h // 8, w // 8), 4), ((h // 16, w // 16), 8)):
        base = _block_mean(gray, *out_hw)
        stack = [base]
        for k in range(1, chans):
            stack.append(np.roll(base, k, axis=k % 2) ** (1.0 + 0.25 * k))
        raw = np.stack(stack)
        normed, zeros = normalize_lpips_features(raw)
        zero_sites += zeros
        layers.append(normed.astype(np.float32))
    return layers, zero_sites


def stub_caption(rng: np.random.Generator) -> str:
    adj = rng.choice(_CAPTION_ADJ)
    obj = rng.choice(_CAPTION_OBJ)
    bg = rng.choice(_CAPTION_BG)
    obj2 = rng.choice(_CAPTION_OBJ)
    return (f"A {adj} street with {obj} near {bg}. "
            f"Further along, {obj2} line the roadway.")
