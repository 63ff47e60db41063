"""Structure-preservation metrics over paired projector outputs.

The original-side projection of each pair is treated as pseudo ground
truth and the generated-side projection is compared against it:
per-image semantic IoU, pixel-pooled depth RMSE, masked edge L1, and
greedy one-to-one detection matching for a macro object F1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import MetricError, ValidationError
from .tensorio import DETECTION_CLASSES, IGNORE_LABEL, NUM_CLASSES, Box, DetectionSet


def box_iou(a: Box | tuple, b: Box | tuple) -> float:
    """Intersection over union of two boxes; 0 when disjoint."""
    ax1, ay1, ax2, ay2 = a.coords() if isinstance(a, Box) else a
    bx1, by1, bx2, by2 = b.coords() if isinstance(b, Box) else b
    area_a = (ax2 - ax1) * (ay2 - ay1)
    area_b = (bx2 - bx1) * (by2 - by1)
    if area_a <= 0 or area_b <= 0:
        raise ValidationError("degenerate box (zero area)")
    iw = min(ax2, bx2) - max(ax1, bx1)
    ih = min(ay2, by2) - max(ay1, by1)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (area_a + area_b - inter)


@dataclass
class ImageMiou:
    """Per-image IoU table. mean is None when the valid class set is empty."""

    per_class: dict[int, float]
    mean: float | None

    @property
    def valid_classes(self) -> list[int]:
        return sorted(self.per_class)


def image_miou(src: np.ndarray, gen: np.ndarray) -> ImageMiou:
    """Per-class IoU over the valid class set of one pair.

    A class is valid when its union over both maps is non-empty. The
    ignore label (255) is not a class: ignored pixels never count toward
    intersections but a (c, 255) pixel still belongs to c's union.
    """
    src = np.asarray(src)
    gen = np.asarray(gen)
    if src.shape != gen.shape:
        raise ValidationError(f"label map shapes differ: {src.shape} vs {gen.shape}")
    per_class: dict[int, float] = {}
    # Confusion counts over 20 bins (19 classes + collapsed ignore).
    s = np.where(src == IGNORE_LABEL, NUM_CLASSES, src).astype(np.int64)
    g = np.where(gen == IGNORE_LABEL, NUM_CLASSES, gen).astype(np.int64)
    joint = np.bincount((s * (NUM_CLASSES + 1) + g).ravel(),
                        minlength=(NUM_CLASSES + 1) ** 2)
    conf = joint.reshape(NUM_CLASSES + 1, NUM_CLASSES + 1)
    inter = np.diag(conf)[:NUM_CLASSES]
    src_count = conf.sum(axis=1)[:NUM_CLASSES]
    gen_count = conf.sum(axis=0)[:NUM_CLASSES]
    union = src_count + gen_count - inter
    for c in range(NUM_CLASSES):
        if union[c] > 0:
            per_class[c] = float(inter[c]) / float(union[c])
    mean = sum(per_class.values()) / len(per_class) if per_class else None
    return ImageMiou(per_class=per_class, mean=mean)


def dataset_miou(image_means: list[float]) -> float:
    """Arithmetic mean of image means; excluded images are not passed in."""
    if not image_means:
        raise MetricError("dataset mIoU undefined: no images with a valid class set")
    return float(sum(image_means) / len(image_means))


def depth_valid_mask(src: np.ndarray, gen: np.ndarray,
                     valid: np.ndarray | None = None) -> np.ndarray:
    """Pixels finite and > 0 in both maps, intersected with `valid`."""
    mask = np.isfinite(src) & np.isfinite(gen) & (src > 0) & (gen > 0)
    if valid is not None:
        mask &= np.asarray(valid).astype(bool)
    return mask


def depth_pair_terms(src: np.ndarray, gen: np.ndarray,
                     valid: np.ndarray | None = None) -> tuple[float, int]:
    """Squared-error sum and valid-pixel count for one pair."""
    src = np.asarray(src, dtype=np.float64)
    gen = np.asarray(gen, dtype=np.float64)
    if src.shape != gen.shape:
        raise ValidationError(f"depth shapes differ: {src.shape} vs {gen.shape}")
    mask = depth_valid_mask(src, gen, valid)
    diff = (src - gen)[mask]
    return float(np.sum(diff * diff)), int(mask.sum())


def depth_rmse(pairs: list[tuple]) -> float:
    """Pixel-pooled RMSE over (src, gen[, valid]) pairs.

    Pooled over all valid pixels of all pairs (a double sum), not a mean
    of per-image RMSEs.
    """
    sse = 0.0
    count = 0
    for pair in pairs:
        src, gen = pair[0], pair[1]
        valid = pair[2] if len(pair) > 2 else None
        s, c = depth_pair_terms(src, gen, valid)
        sse += s
        count += c
    if count == 0:
        raise MetricError("depth RMSE undefined: no valid depth pixels")
    return float(np.sqrt(sse / count))


def edge_l1_terms(src_edges: np.ndarray, gen_edges: np.ndarray,
                  mask: np.ndarray) -> tuple[float, int]:
    """Masked absolute-difference sum and mask pixel count for one pair."""
    src_edges = np.asarray(src_edges, dtype=np.float64)
    gen_edges = np.asarray(gen_edges, dtype=np.float64)
    mask = np.asarray(mask, dtype=np.float64)
    if not (src_edges.shape == gen_edges.shape == mask.shape):
        raise ValidationError(
            f"edge/mask shapes differ: {src_edges.shape}, {gen_edges.shape}, {mask.shape}"
        )
    diff = float(np.sum(mask * np.abs(src_edges - gen_edges)))
    return diff, int(np.sum(mask))


def masked_edge_l1(src_edges: np.ndarray, gen_edges: np.ndarray,
                   mask: np.ndarray) -> float:
    """Masked L1 for one pair; in [0, 1] since edges are binary."""
    diff, count = edge_l1_terms(src_edges, gen_edges, mask)
    if count == 0:
        raise MetricError("masked edge L1 undefined: empty mask")
    return diff / count


def masked_edge_l1_dataset(triples: list[tuple]) -> float:
    """Dataset L1 pooled over mask pixels, like depth RMSE."""
    diff = 0.0
    count = 0
    for src_edges, gen_edges, mask in triples:
        d, c = edge_l1_terms(src_edges, gen_edges, mask)
        diff += d
        count += c
    if count == 0:
        raise MetricError("masked edge L1 undefined: empty mask over whole dataset")
    return diff / count


@dataclass
class ClassCounts:
    """TP/FP/FN accumulators per detection class."""

    tp: dict[str, int] = field(default_factory=dict)
    fp: dict[str, int] = field(default_factory=dict)
    fn: dict[str, int] = field(default_factory=dict)

    def add(self, cls: str, tp: int = 0, fp: int = 0, fn: int = 0) -> None:
        self.tp[cls] = self.tp.get(cls, 0) + tp
        self.fp[cls] = self.fp.get(cls, 0) + fp
        self.fn[cls] = self.fn.get(cls, 0) + fn

    def merge(self, other: "ClassCounts") -> None:
        for cls in set(other.tp) | set(other.fp) | set(other.fn):
            self.add(cls, other.tp.get(cls, 0), other.fp.get(cls, 0),
                     other.fn.get(cls, 0))

    def f1(self, cls: str) -> float | None:
        tp = self.tp.get(cls, 0)
        denom = 2 * tp + self.fp.get(cls, 0) + self.fn.get(cls, 0)
        if denom == 0:
            return None
        return 2.0 * tp / denom


def match_boxes(src: DetectionSet, gen: DetectionSet,
                iou_thresh: float = 0.5) -> ClassCounts:
    """Greedy one-to-one matching per class in descending IoU order.

    Candidate pairs need IoU >= iou_thresh; ties break on (src index,
    gen index). Unmatched generated boxes are FP, unmatched source boxes
    are FN. Cross-class pairs never match.
    """
    counts = ClassCounts()
    classes = {b.cls for b in src.boxes} | {b.cls for b in gen.boxes}
    for cls in sorted(classes):
        src_idx = [i for i, b in enumerate(src.boxes) if b.cls == cls]
        gen_idx = [j for j, b in enumerate(gen.boxes) if b.cls == cls]
        candidates = []
        for si_rank, si in enumerate(src_idx):
            for gi_rank, gi in enumerate(gen_idx):
                iou = box_iou(src.boxes[si], gen.boxes[gi])
                if iou >= iou_thresh:
                    candidates.append((-iou, si_rank, gi_rank))
        candidates.sort()
        src_used = set()
        gen_used = set()
        tp = 0
        for _, si_rank, gi_rank in candidates:
            if si_rank in src_used or gi_rank in gen_used:
                continue
            src_used.add(si_rank)
            gen_used.add(gi_rank)
            tp += 1
        counts.add(cls, tp=tp, fp=len(gen_idx) - tp, fn=len(src_idx) - tp)
    return counts


def object_f1(counts: ClassCounts,
              classes: tuple[str, ...] = DETECTION_CLASSES) -> float:
    """Macro F1 over target classes; all-empty classes are excluded."""
    scores = []
    for cls in classes:
        f1 = counts.f1(cls)
        if f1 is not None:
            scores.append(f1)
    if not scores:
        raise MetricError("object F1 undefined: no class has any detection")
    return float(sum(scores) / len(scores))
